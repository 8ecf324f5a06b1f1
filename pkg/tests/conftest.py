import time

import numpy as np
import pytest

from cavcool.dynamics import SimOptions, simulate_transit
from cavcool.params import CavityConfig, ParticleConfig, derive_cavity, particle_properties

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config.addinivalue_line("markers", "slow: takes more than a few seconds")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "outcome": "passed", "duration": 0.0})
    entry["duration"] += report.duration
    if report.failed:
        entry["outcome"] = "failed"
    elif report.skipped and entry["outcome"] == "passed":
        entry["outcome"] = "skipped"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        label = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[e["outcome"]]
        terminalreporter.write_line(f"criterion {number:2d}  {label}  {e['title']}  ({e['duration']:.2f} s)")


@pytest.fixture(scope="session")
def red_cavity():
    return derive_cavity(CavityConfig().with_detuning_in_kappa(-1.0))


@pytest.fixture(scope="session")
def silicon(red_cavity):
    return particle_properties(ParticleConfig.from_index(3.47, radius=150e-9), red_cavity)


@pytest.fixture(scope="session")
def fig3_trace(red_cavity, silicon):
    return simulate_transit(red_cavity, silicon, 2.3 * red_cavity.kappa, 0.23, 0.7, entry_phase=2.0)


@pytest.fixture(scope="session", autouse=True)
def warm_jit():
    """Load the compiled integrator once so timings exclude JIT start-up."""
    cav = derive_cavity(CavityConfig())
    pd = particle_properties(ParticleConfig(), cav)
    t0 = time.perf_counter()
    simulate_transit(cav, pd, 0.0, 0.2, 30.0, options=SimOptions(sample_rate=1e6))
    return time.perf_counter() - t0


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
