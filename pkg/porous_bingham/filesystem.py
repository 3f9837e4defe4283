"""Filesystem utilities for forcing plugins and geometry files.

Forcing plugins are discovered in the shipped ``forcings`` directory, in every
directory listed in the ``POROUS_BINGHAM_FORCINGS`` environment variable and
in an optional extra directory. Geometry files ship in ``geometries``.

Example:
    >>> from porous_bingham.filesystem import get_forcings
    >>> forcings = get_forcings()
    >>> sorted(forcings)[:2]
    ['shear', 'swirl']
"""
# Import future modules
from __future__ import annotations

# Import built-in modules
from functools import lru_cache
import glob
import logging
import os
from pathlib import Path
from typing import Dict


FORCINGS_ENV = "POROUS_BINGHAM_FORCINGS"


def get_default_forcing_path() -> Path:
    """Get the directory of the shipped forcing plugins.

    Returns:
        Path: Absolute path to the default forcings directory.
    """
    return Path(os.path.dirname(__file__)) / "forcings"


def get_geometry_path() -> Path:
    """Directory of the shipped geometry files."""
    return Path(os.path.dirname(__file__)) / "geometries"


def get_forcing_paths(extra_path: str | Path | None = None) -> list[str]:
    """Get all forcing directories, the shipped one first.

    Args:
        extra_path: Additional directory to search last

    Returns:
        List[str]: Directories where forcing plugins can be found.
    """
    logger = logging.getLogger(__name__)
    paths = []

    env_paths = os.getenv(FORCINGS_ENV, "")
    if env_paths:
        paths.extend(p for p in env_paths.split(os.pathsep) if p)
        logger.info("Added forcing paths from environment: %s", paths)

    default_path = str(get_default_forcing_path())
    paths.insert(0, default_path)
    logger.debug("Added default forcing path: %s", default_path)

    if extra_path:
        extra_path_str = str(extra_path)
        if extra_path_str not in paths:
            paths.append(extra_path_str)
            logger.info("Added extra forcing path: %s", extra_path_str)

    return paths


@lru_cache
def get_forcings(extra_path: str | Path | None = None) -> Dict[str, str]:
    """Map forcing names to the plugin files that define them.

    Earlier directories win when two define the same name.

    Args:
        extra_path: Additional directory to include

    Returns:
        Dict[str, str]: Forcing names and absolute file paths.
    """
    logger = logging.getLogger(__name__)
    forcings: Dict[str, str] = {}
    for path in get_forcing_paths(extra_path):
        if not os.path.isdir(path):
            logger.warning("Forcing path not found or not a directory: %s", path)
            continue
        for forcing_path in sorted(glob.glob(os.path.join(path, "*.py"))):
            name = os.path.basename(forcing_path)[: -len(".py")]
            if name != "__init__" and name not in forcings:
                forcings[name] = forcing_path
                logger.debug("Found forcing: %s at %s", name, forcing_path)
    logger.info("Found %d forcings: %s", len(forcings), list(forcings))
    return forcings


def get_geometries() -> Dict[str, str]:
    """Shipped geometry names and their JSON files."""
    return {Path(p).stem: p for p in sorted(glob.glob(str(get_geometry_path() / "*.json")))}


def resolve_geometry_file(name: str) -> Path:
    """Path of a geometry given as a file path or a shipped geometry name.

    Raises:
        FileNotFoundError: If neither exists.
    """
    path = Path(name)
    if path.is_file():
        return path
    geometries = get_geometries()
    if name in geometries:
        return Path(geometries[name])
    raise FileNotFoundError(f"geometry {name!r} is neither a file nor one of {sorted(geometries)}")
