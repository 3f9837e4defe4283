"""No body force."""
# Import future modules
from __future__ import annotations

# Import third-party modules
import numpy as np

# Import local modules
from porous_bingham.forcing import BaseForcing


class Forcing(BaseForcing):
    def evaluate(self, x, y):
        return np.zeros_like(x, dtype=float), np.zeros_like(y, dtype=float)
