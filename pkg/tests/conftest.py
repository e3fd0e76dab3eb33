import shutil
from pathlib import Path

import pytest

from relse.ir import load_program
from relse.solver import SmtSolver, solver_command

ROOT = Path(__file__).resolve().parents[1]
CORPUS = ROOT / "corpus"


def corpus_program(name: str):
    return load_program(CORPUS / name)


def pytest_collection_modifyitems(config, items):
    if shutil.which(solver_command()[0]) is None:
        skip = pytest.mark.skip(reason="no SMT solver on PATH")
        for item in items:
            if "solver" in item.fixturenames:
                item.add_marker(skip)


@pytest.fixture(scope="session")
def solver():
    with SmtSolver(verify_models=True) as s:
        yield s


@pytest.fixture
def fresh(solver):
    """The shared session, with every frame and declaration dropped."""
    solver.reset()
    return solver


# one line per acceptance criterion, printed after the run
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
