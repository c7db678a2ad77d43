import dataclasses

import numpy as np
import pytest

from qnpchain import tasks


@pytest.fixture(scope="session")
def task1():
    return tasks.default_spec("I")


@pytest.fixture(scope="session")
def task1_linear():
    return tasks.default_spec("I", kerr=0.0)


@pytest.fixture(scope="session")
def task2():
    return tasks.default_spec("II")


def weakly_squeezed_linear_chain(G: float = 0.05):
    """Single source mode feeding a linear processor mode, lightly squeezed."""
    base = tasks.task_spec("IV", 0.5, detuning=(-1.0,), kerr=0.0, gamma_h=1.0)
    lab = dataclasses.replace(base.labels["7"], squeeze=(G,))
    return base.replace(labels={**base.labels, "7": lab})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    # one line per acceptance criterion, collected by test_acceptance
    import sys
    mod = sys.modules.get("test_acceptance")
    report = getattr(mod, "REPORT", None)
    if not report:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(report):
        terminalreporter.write_line(report[k])
