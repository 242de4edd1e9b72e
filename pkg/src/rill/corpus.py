"""Bundled example programs, addressable by name."""

from __future__ import annotations

from importlib import resources
from pathlib import Path


def _root():
    return resources.files(__package__) / "corpus"


def names() -> list[str]:
    """Names of the bundled programs, without the .mrv extension."""
    return sorted(
        p.name[: -len(".mrv")] for p in _root().iterdir() if p.name.endswith(".mrv")
    )


def source(name: str) -> str:
    f = _root() / f"{name}.mrv"
    if not f.is_file():
        raise KeyError(f"no bundled program named {name!r}; see `rill corpus`")
    return f.read_text(encoding="utf-8")


def path(name: str) -> Path:
    """Filesystem path of a bundled program (the package is installed flat)."""
    f = _root() / f"{name}.mrv"
    if not f.is_file():
        raise KeyError(f"no bundled program named {name!r}; see `rill corpus`")
    return Path(str(f))


def device_table(name: str) -> Path:
    f = _root() / f"{name}.json"
    if not f.is_file():
        raise KeyError(f"no bundled device table named {name!r}")
    return Path(str(f))
