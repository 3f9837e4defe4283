# Import third-party modules
import numpy as np

# Import local modules
from porous_bingham.forcing import BaseForcing


class Forcing(BaseForcing):
    def evaluate(self, x, y):
        return np.asarray(x, dtype=float), np.asarray(y, dtype=float)
