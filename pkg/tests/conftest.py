import numpy as np
import pytest

from gridmor.network import assemble_second_order, network_from_dict, synth_network


def two_node_dict(**overrides):
    d = {
        "n": 2,
        "omega_R": 2,
        "nodes": [{"J": 1, "D": 4, "B": 0.5}, {"J": 2, "D": 6, "B": -0.5}],
        "couplings": [{"i": 1, "j": 2, "K": 1, "gamma": 0}],
    }
    d.update(overrides)
    return d


@pytest.fixture
def two_node():
    return assemble_second_order(network_from_dict(two_node_dict()))


@pytest.fixture(scope="session")
def ring10():
    return assemble_second_order(synth_network(10, "ring", 1))


@pytest.fixture(scope="session")
def ring6():
    return assemble_second_order(synth_network(6, "ring", 2))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one result line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d} {title}: {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
