"""Access to packaged data tables (tap profiles, cluster tables, curves)."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

__all__ = ["data_path", "data_text"]


def data_path(name: str) -> Path:
    """Filesystem path of a packaged data file.

    ``name`` may also be an absolute or relative path to a user file, in
    which case it is returned unchanged when it exists on disk.
    """
    p = Path(name)
    if p.exists():
        return p
    packaged = resources.files("mimolink").joinpath("data", name)
    with resources.as_file(packaged) as fp:
        if not fp.exists():
            raise FileNotFoundError(f"no packaged data file named {name!r}")
        return Path(fp)


def data_text(name: str) -> str:
    return data_path(name).read_text(encoding="utf-8")
