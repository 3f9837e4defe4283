"""Two-scale homogenization toolkit for Bingham flow in doubly perforated media."""
# Import local modules
from porous_bingham.__version__ import __version__


__all__ = ["__version__"]
