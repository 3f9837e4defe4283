"""NOX sessions that run the study commands on the shipped geometry."""
# Import future modules
from __future__ import annotations

# Import third-party modules
import nox
from nox_actions.utils import THIS_ROOT


def _results(name: str) -> str:
    return (THIS_ROOT / "results" / name).as_posix()


def properties(session: nox.Session) -> None:
    """Run every property suite and write the report under ``results/properties``."""
    session.install("-e", ".")
    session.run("porous-bingham", "properties", "--output", _results("properties"), *session.posargs)


def converge(session: nox.Session) -> None:
    """Run the Newtonian convergence study, e.g. ``nox -s converge -- --g 0.1``."""
    session.install("-e", ".")
    session.run(
        "porous-bingham",
        "converge",
        "--epsilons", "0.5", "0.25", "0.125",
        "--output", _results("converge"),
        *session.posargs,
    )
