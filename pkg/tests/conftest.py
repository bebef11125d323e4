import numpy as np
import pytest

from wptsec.codec import PvkFrame
from wptsec.node import NodeConfig
from wptsec.rf_link import RfParams

BENCH_KEY = bytes.fromhex("3f9a1c7e52d40b86e17c2a5f90d3b648")


@pytest.fixture
def rf():
    return RfParams()


@pytest.fixture
def quiet_rf():
    return RfParams(noise_sigma_db=0.0)


def make_node(node_id="n1", key=BENCH_KEY, **kw):
    chip_rate = kw.pop("chip_rate", 40e3)
    return NodeConfig(node_id=node_id, key=PvkFrame(key, chip_rate), **kw)


@pytest.fixture
def node():
    return make_node()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_acceptance = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
