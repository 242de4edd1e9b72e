"""Shared fixtures: corpus access and one solver config for the session.

The solver config is session-scoped on purpose: obligation scripts are
cached by exact text, so every test after the first pays only for scripts
nobody has discharged yet.
"""

from __future__ import annotations

from pathlib import Path

import pytest

from rill import checks, parser, smt
from rill.cli import CORPUS_DIR


@pytest.fixture(scope="session")
def solver_config() -> smt.SolverConfig:
    return smt.SolverConfig(command=smt.discover_solver(None))


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    return CORPUS_DIR


@pytest.fixture(scope="session")
def load_program(corpus_dir):
    """Parse and statically check a bundled program by file name."""

    def _load(name: str):
        if not name.endswith(".mrv"):
            name += ".mrv"
        program = parser.parse((corpus_dir / name).read_text(encoding="utf-8"))
        checks.check_program(program)
        return program

    return _load
