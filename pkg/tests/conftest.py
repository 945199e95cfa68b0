import pytest

from resq.agent import Variant
from resq.desk import build_desk_data, run_desk

SEEDS = (0, 1, 2)
_lines: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    """Record one summary line per acceptance criterion."""
    def record(number, name, passed, detail):
        _lines.append(f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {name}: {detail}")
        print(_lines[-1])
    return record


def pytest_terminal_summary(terminalreporter):
    if _lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def desk():
    return build_desk_data()


@pytest.fixture(scope="session")
def dueling_runs(desk):
    return [run_desk(desk, Variant.DUELING, s, with_phase2=True) for s in SEEDS]


@pytest.fixture(scope="session")
def dqn_runs(desk):
    return [run_desk(desk, Variant.DQN, s) for s in SEEDS]


@pytest.fixture(scope="session")
def double_run(desk):
    return run_desk(desk, Variant.DOUBLE, SEEDS[0])
