"""Constant pressure-gradient-like force along the first axis."""
# Import future modules
from __future__ import annotations

# Import local modules
from porous_bingham.forcing import BaseForcing


class Forcing(BaseForcing):
    def evaluate(self, x, y):
        return 1.0, 0.0
