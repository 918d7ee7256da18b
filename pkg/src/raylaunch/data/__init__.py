"""Bundled synthetic campus scenarios and trace."""

from importlib import resources
from pathlib import Path


def data_path(name: str) -> Path:
    p = Path(str(resources.files(__name__).joinpath(name)))
    if not p.exists():
        raise FileNotFoundError(f"no bundled data file {name!r}")
    return p
