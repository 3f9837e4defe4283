"""Exception hierarchy for porous-bingham.

Every error raised by the package derives from :class:`PorousBinghamError`, so
callers (the CLI in particular) can catch the whole family in one place.

Example:
    >>> from porous_bingham.exceptions import GeometryError
    >>> try:
    ...     raise GeometryError("obstacle outside cell")
    ... except PorousBinghamError as e:
    ...     print(e)
    obstacle outside cell
"""
# Import future modules
from __future__ import annotations

# Import built-in modules
from typing import Sequence


class PorousBinghamError(Exception):
    """Base class for all porous-bingham errors."""


class GeometryError(PorousBinghamError, ValueError):
    """A cell geometry or domain violates one of its invariants."""


class ResolutionTooCoarse(GeometryError):
    """An obstacle edge does not land on a grid line."""


class DomainNotCovered(GeometryError):
    """The macroscopic box is not an integer number of epsilon cells."""


class DisconnectedFluid(GeometryError):
    """The fluid part of a mask has more than one connected component."""


class ShapeMismatch(PorousBinghamError, ValueError):
    """Array shapes do not match the grid layout."""


class GridNotNested(PorousBinghamError, ValueError):
    """A field grid does not subdivide the periodicity lattice."""


class MissingMultiplier(PorousBinghamError, ValueError):
    """Rigid cells exist but no multiplier was supplied to report their stress."""


class NegativeYield(PorousBinghamError, ValueError):
    """The yield stress is negative."""


class InadmissibleProbe(PorousBinghamError, ValueError):
    """A probe field is nonzero on closed faces or is not divergence free."""


class StrategyDisagreement(PorousBinghamError):
    """The two cell-problem strategies disagree beyond tolerance."""


class SingularK(PorousBinghamError, ValueError):
    """The permeability matrix is not symmetric positive definite."""


class IOFailure(PorousBinghamError, OSError):
    """Reading or writing a result file failed."""


class NonConvergence(PorousBinghamError):
    """An iterative solver stopped before reaching its tolerance.

    Attributes:
        iterations: Number of iterations performed
        residual: Last residual value
        history: Residual history, one entry per iteration
    """

    def __init__(
        self,
        message: str,
        iterations: int = 0,
        residual: float = float("nan"),
        history: Sequence[float] | None = None,
    ) -> None:
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.history = list(history or [])


class NoBracket(PorousBinghamError):
    """Bisection could not bracket a rigid/flowing transition.

    Attributes:
        lower: Largest value known to be rigid
        upper: Smallest value known to flow, or inf when none was found
    """

    def __init__(self, message: str, lower: float, upper: float) -> None:
        super().__init__(message)
        self.lower = lower
        self.upper = upper
