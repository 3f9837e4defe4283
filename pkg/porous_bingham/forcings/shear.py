"""Force ``(sin(2 pi y), 0)``, driving opposite flows in the two halves of the unit box."""
# Import future modules
from __future__ import annotations

# Import third-party modules
import numpy as np

# Import local modules
from porous_bingham.forcing import BaseForcing


class Forcing(BaseForcing):
    def evaluate(self, x, y):
        return np.sin(2.0 * np.pi * np.asarray(y, dtype=float)), 0.0
