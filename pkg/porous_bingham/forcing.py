"""Body-force plugins.

A forcing is a class deriving from :class:`BaseForcing` that evaluates the
force density at arbitrary points. Forcings are shipped as Python files in
``porous_bingham/forcings`` and can be added from any directory listed in
``POROUS_BINGHAM_FORCINGS``; gridded forcings are read from CSV tables.

Example:
    >>> from porous_bingham.forcing import load_forcing
    >>> forcing_class = load_forcing('porous_bingham/forcings/uniform.py')
    >>> forcing = forcing_class(scale=2.0)
    >>> tuple(float(v) for v in forcing(0.5, 0.5))
    (2.0, 0.0)
"""
# Import future modules
from __future__ import annotations

# Import built-in modules
from abc import ABC
from abc import abstractmethod
import importlib.machinery
import importlib.util
import logging
from pathlib import Path
from typing import Callable
from typing import Tuple
from typing import Union

# Import third-party modules
import numpy as np
from scipy.interpolate import RegularGridInterpolator

# Import local modules
from porous_bingham.exceptions import IOFailure
from porous_bingham.exceptions import ShapeMismatch
from porous_bingham.fields import StaggeredGrid
from porous_bingham.fields import VectorField
from porous_bingham.filesystem import get_forcings


ForcingLike = Union["BaseForcing", VectorField, Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]]


class BaseForcing(ABC):
    """Abstract base class for body forces.

    Attributes:
        scale: Multiplier applied to both components
        logger: Logger instance for the forcing
    """

    def __init__(self, scale: float = 1.0, logger: logging.Logger | None = None) -> None:
        self.scale = float(scale)
        if logger is None:
            logger = logging.getLogger(self.__class__.__name__)
        self.logger = logger

    @abstractmethod
    def evaluate(self, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Force components at the points ``(x, y)`` (arrays of equal shape), before scaling."""
        raise NotImplementedError("Forcing must implement evaluate()")

    def __call__(self, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        fx, fy = self.evaluate(x, y)
        shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
        return (
            self.scale * np.broadcast_to(np.asarray(fx, dtype=float), shape),
            self.scale * np.broadcast_to(np.asarray(fy, dtype=float), shape),
        )

    def sample(self, grid: StaggeredGrid) -> VectorField:
        """Place the x component on x-faces and the y component on y-faces."""
        return sample_forcing(self, grid)


def sample_forcing(f: ForcingLike, grid: StaggeredGrid) -> VectorField:
    """Face field of a forcing on ``grid``; a VectorField is checked and passed through.

    Raises:
        ShapeMismatch: If a given VectorField does not live on ``grid``'s layout.
    """
    if isinstance(f, VectorField):
        for axis in range(2):
            if f.components[axis].shape != grid.face_shape(axis):
                raise ShapeMismatch(f"forcing component {axis} has shape {f.components[axis].shape}")
        return f
    comps = []
    for axis in range(2):
        x, y = grid.face_centers(axis)
        comps.append(np.array(f(x, y)[axis], dtype=float))
    return VectorField(grid, (comps[0], comps[1]))


class GriddedForcing(BaseForcing):
    """Forcing read from a CSV table ``x,y,fx,fy`` on a regular grid, linearly interpolated.

    Points outside the table are extrapolated linearly.
    """

    def __init__(self, path: str | Path, scale: float = 1.0, logger: logging.Logger | None = None) -> None:
        super().__init__(scale, logger)
        self.path = Path(path)
        try:
            table = np.loadtxt(self.path, delimiter=",", comments="#", ndmin=2)
        except (OSError, ValueError) as e:
            raise IOFailure(f"cannot read gridded forcing {self.path}: {e}") from e
        if table.shape[1] != 4:
            raise IOFailure(f"gridded forcing {self.path} needs four columns x,y,fx,fy, got {table.shape[1]}")
        xs = np.unique(table[:, 0])
        ys = np.unique(table[:, 1])
        if xs.size * ys.size != table.shape[0]:
            raise IOFailure(f"gridded forcing {self.path} is not a complete regular grid")
        order = np.lexsort((table[:, 1], table[:, 0]))
        values = table[order, 2:].reshape(xs.size, ys.size, 2)
        self._interpolators = [
            RegularGridInterpolator((xs, ys), values[..., c], bounds_error=False, fill_value=None) for c in range(2)
        ]
        self.logger.debug("Loaded gridded forcing %s on a %dx%d grid", self.path, xs.size, ys.size)

    def evaluate(self, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        points = np.stack([x.ravel(), y.ravel()], axis=1)
        return tuple(interp(points).reshape(x.shape) for interp in self._interpolators)


def load_forcing(pyfile: str | Path) -> type[BaseForcing]:
    """Load a forcing class from a Python file.

    The first class in the file that derives from :class:`BaseForcing` is
    returned.

    Args:
        pyfile: Path to the Python file containing the forcing class

    Returns:
        type[BaseForcing]: The forcing class

    Raises:
        AttributeError: If no forcing class is found in the file
        ImportError: If there is an error loading the file

    Example:
        >>> forcing_class = load_forcing('porous_bingham/forcings/shear.py')
        >>> forcing = forcing_class()
    """
    pyfile = str(pyfile)
    name = Path(pyfile).stem
    loader = importlib.machinery.SourceFileLoader(name, pyfile)
    spec = importlib.util.spec_from_loader(loader.name, loader)
    if spec is None:
        raise ImportError(f"Failed to create module spec for {pyfile}")

    module = importlib.util.module_from_spec(spec)
    loader.exec_module(module)

    forcing_class = None
    for _, obj in module.__dict__.items():
        if isinstance(obj, type) and issubclass(obj, BaseForcing) and obj not in (BaseForcing, GriddedForcing):
            forcing_class = obj
            break

    if forcing_class is None:
        raise AttributeError(
            f"No forcing class found in {pyfile}. "
            "Make sure the module defines a class that inherits from BaseForcing.",
        )
    return forcing_class


def resolve_forcing(spec: str, scale: float = 1.0, extra_path: str | Path | None = None) -> BaseForcing:
    """Instantiate a forcing from a preset name, a ``.py`` plugin file or a ``.csv`` table.

    Raises:
        KeyError: If ``spec`` is neither a file nor a known preset.
    """
    logger = logging.getLogger(__name__)
    path = Path(spec)
    if path.suffix == ".csv":
        return GriddedForcing(path, scale)
    if path.suffix == ".py" and path.is_file():
        return load_forcing(path)(scale=scale)
    forcings = get_forcings(str(extra_path) if extra_path else None)
    if spec not in forcings:
        raise KeyError(f"unknown forcing {spec!r}; available: {sorted(forcings)}")
    logger.debug("Using forcing %s from %s", spec, forcings[spec])
    return load_forcing(forcings[spec])(scale=scale)
