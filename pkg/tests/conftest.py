import pytest

from tendersim.adversary import load_scenario
from tendersim.harness import run_config


@pytest.fixture(scope="session")
def legacy_run():
    return run_config(load_scenario("agreement_violation"))


@pytest.fixture(scope="session")
def corrected_run():
    return run_config(load_scenario("agreement_violation", unlock_rule="corrected"))


@pytest.fixture(scope="session")
def livelock_run():
    return run_config(load_scenario("livelock"))


@pytest.fixture(scope="session")
def fairness_original():
    return run_config(load_scenario("fairness_violation"))


@pytest.fixture(scope="session")
def fairness_filtered():
    return run_config(load_scenario("fairness_violation", mechanism="MODULABLE_F1FILTER"))


def pytest_terminal_summary(terminalreporter):
    from oracles import ACCEPTANCE_LINES
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
