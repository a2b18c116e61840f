"""Deterministic emulator for sliced name-based networking."""

from importlib import resources
from pathlib import Path

__version__ = "0.1.0"


def fixture_path(name: str) -> Path:
    """Absolute path of a bundled topology or scenario file."""
    return Path(str(resources.files(__name__) / "fixtures" / name))
