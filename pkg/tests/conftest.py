"""Shared scenarios and full-horizon runs.

The long closed-loop runs are session fixtures, so the unit tests and the
acceptance suite simulate each scenario once.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from platoon_eso.analysis import run_bounds
from platoon_eso.scenario import build_scenario, load_config
from platoon_eso.simulation import run

# acceptance verdict lines, printed again in the terminal summary
ACCEPTANCE_LINES: list[str] = []
# wall-clock seconds of the session runs, keyed by fixture name
RUN_SECONDS: dict[str, float] = {}


def _timed(name, fn, *args):
    start = time.perf_counter()
    out = fn(*args)
    RUN_SECONDS[name] = time.perf_counter() - start
    return out


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def equilibrium_config(n: int = 8) -> dict:
    """Resistance-free followers at exact spacing behind a cruising leader, no disturbance, b_hat = b."""
    cfg = dict(load_config("default"))
    mass, tau = 1600.0, 0.3
    cfg.update(
        name="equilibrium",
        leader={"tau0": 0.3, "segments": []},
        vehicles={"mass": mass, "drag": 0.0, "rolling": 0.0, "tau": tau},
        disturbance={"lam1": 0.0, "lam2": 0.0, "lam3": 0.0, "lam4": 0.0},
        model_bounds={"m": [1500.0, 2000.0], "c": [0.0, 0.4], "mu": [0.0, 0.05], "tau": [0.2, 0.4]},
        trigger={"threshold": 100.0},
        platoon={"n": n, "spacing": 8.0,
                 "initial": {"leader": {"p": 80.0, "v": 10.0, "a": 0.0},
                             "p": [80.0 - 8.0 * (i + 1) for i in range(n)], "v": 10.0, "a": 0.0}},
    )
    cfg["gains"] = dict(cfg["gains"], b_hat=1.0 / (mass * tau))
    return cfg


@pytest.fixture(scope="session")
def default_scenario():
    return build_scenario("default")


@pytest.fixture(scope="session")
def dsc_trace(default_scenario):
    return _timed("dsc", run, default_scenario)


@pytest.fixture(scope="session")
def baseline_trace(default_scenario):
    return _timed("baseline", run, default_scenario, "baseline")


@pytest.fixture(scope="session")
def eps001_scenario():
    return build_scenario("eps001")


@pytest.fixture(scope="session")
def eps001_trace(eps001_scenario):
    return _timed("eps001", run, eps001_scenario)


@pytest.fixture(scope="session")
def verified_scenario():
    return build_scenario("verified")


@pytest.fixture(scope="session")
def verified_trace(verified_scenario):
    return run(verified_scenario)


@pytest.fixture(scope="session")
def equilibrium_trace():
    return run(build_scenario(equilibrium_config()))


@pytest.fixture(scope="session")
def bounds_of():
    cache = {}

    def get(scenario):
        key = id(scenario)
        if key not in cache:
            cache[key] = run_bounds(scenario)
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
