# Import built-in modules
from pathlib import Path


PACKAGE_NAME = "porous_bingham"
THIS_ROOT = Path(__file__).parent.parent
