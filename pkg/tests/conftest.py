import pathlib

import pytest

from planlearn import explain as ex
from planlearn import policy as pl
from planlearn.scenario import load_scenario, validate_scenario

FIXTURE = pathlib.Path(__file__).resolve().parent.parent / "robot.json"


@pytest.fixture(scope="session")
def scenario():
    s = load_scenario(str(FIXTURE))
    assert validate_scenario(s) == []
    return s


@pytest.fixture(scope="session")
def proof(scenario):
    return ex.prove(ex.default_goal(scenario), scenario)


@pytest.fixture(scope="session")
def graph(proof, scenario):
    return ex.generalize(proof, scenario)


@pytest.fixture(scope="session")
def diagram(graph, scenario):
    return ex.to_influence_diagram(graph, scenario)


@pytest.fixture(scope="session")
def tree(diagram):
    return pl.compile_tree(diagram)


@pytest.fixture(scope="session")
def solved(tree):
    return pl.rollback(tree)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Replay the acceptance verdict lines outside output capture."""
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.VERDICTS:
            terminalreporter.write_line(line)
