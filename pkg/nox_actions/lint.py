# Import third-party modules
import nox
from nox_actions.utils import PACKAGE_NAME


SOURCES = (PACKAGE_NAME, "tests", "nox_actions")


def lint(session: nox.Session) -> None:
    session.install("isort", "ruff")
    session.run("isort", "--check-only", *SOURCES)
    session.run("ruff", "check", *SOURCES)


def lint_fix(session: nox.Session) -> None:
    session.install("isort", "ruff", "autoflake")
    session.run("ruff", "check", "--fix", *SOURCES)
    session.run("isort", *SOURCES)
    session.run("autoflake", "--in-place", "--recursive", "--remove-all-unused-imports", *SOURCES)
