import numpy as np
import pytest

import switchstab
from switchstab.direct_method import ScreeningOptions, screen_contingency
from switchstab.dynamics import post_switching
from switchstab.equilibria import closest_uep_method
from switchstab.powerflow import operating_point

STRESSED_LOAD_MW = 279.5

_acceptance_lines: list[str] = []


def record(criterion: str, ok: bool, detail: str = "") -> None:
    """Collect one acceptance line; they are echoed in the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}" + (f" :: {detail}" if detail else "")
    _acceptance_lines.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def wscc_case():
    return switchstab.wscc9(STRESSED_LOAD_MW)


@pytest.fixture(scope="session")
def wscc_op(wscc_case):
    return operating_point(wscc_case)


@pytest.fixture(scope="session")
def wscc_base_op():
    return operating_point(switchstab.wscc9())


@pytest.fixture(scope="session")
def wscc_events():
    return switchstab.wscc9_contingencies()


@pytest.fixture(scope="session")
def wscc_verdicts(wscc_op, wscc_events):
    opts = ScreeningOptions(tds_fallback=True)
    return [screen_contingency(wscc_op, e, opts, i) for i, e in enumerate(wscc_events)]


@pytest.fixture(scope="session")
def wscc_closest(wscc_op, wscc_events):
    return [closest_uep_method(wscc_op, e) for e in wscc_events]


@pytest.fixture(scope="session")
def post_net(wscc_op, wscc_events):
    """Post-switching reduced network for each WSCC contingency."""
    return [post_switching(wscc_op, e)[1] for e in wscc_events]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
