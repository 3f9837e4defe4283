"""Divergence-free vortex with zero normal component on the unit box.

It is the rotated gradient of ``sin(pi x)^2 sin(pi y)^2``.
"""
# Import future modules
from __future__ import annotations

# Import third-party modules
import numpy as np

# Import local modules
from porous_bingham.forcing import BaseForcing


class Forcing(BaseForcing):
    def evaluate(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        fx = np.pi * np.sin(np.pi * x) ** 2 * np.sin(2.0 * np.pi * y)
        fy = -np.pi * np.sin(2.0 * np.pi * x) * np.sin(np.pi * y) ** 2
        return fx, fy
