"""Shared fixtures: one nominal Monte Carlo run reused across modules."""

import pytest

from tesjitter.config import RunConfig
from tesjitter.pipeline import analyze_batch
from tesjitter.pulse_sim import simulate_batch

N_NOMINAL = 100_000


@pytest.fixture(scope="session")
def nominal_cfg():
    return RunConfig()


@pytest.fixture(scope="session")
def nominal_batch(nominal_cfg):
    c = nominal_cfg
    return simulate_batch(c.source, c.shape, c.device, c.digitizer, N_NOMINAL)


@pytest.fixture(scope="session")
def nominal_result(nominal_cfg, nominal_batch):
    return analyze_batch(nominal_batch, nominal_cfg.analysis, nominal_cfg.device.photon_energy)


VERDICTS = pytest.StashKey[dict]()


@pytest.fixture
def verdict(request):
    """Record one pass/fail line for an acceptance criterion, then assert it."""
    store = request.config.stash.setdefault(VERDICTS, {})

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        store[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(VERDICTS, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for number in sorted(store):
            terminalreporter.write_line(store[number])
