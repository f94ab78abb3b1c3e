from __future__ import annotations

import numpy as np
import pytest

from edac.consensus import AlgorithmParams
from edac.fileio import load_scenario
from edac.signals import Constant
from edac.sim import GainConfig, Scenario
from edac.topology import TimedTopology
from edac.trigger import TriggerParams


def make_scenario(
    n=2,
    edges=((1, 2),),
    changes=(),
    signals=None,
    gamma=1.0,
    mu1=1.0,
    mu2=0.01,
    f_bar=0.1,
    delta=1.0,
    alpha=0.01,
    beta=100.0,
    sigma=5.0,
    nu=5.0,
    c0=10.0,
    c_hat0=10.0,
    z0=0.0,
    dt=1e-3,
    horizon=0.1,
    seed=0,
    record_every=1,
    name="test",
):
    """Small scenario with sensible defaults for unit tests."""
    if signals is None:
        signals = tuple(Constant(5.0) for _ in range(n))
    return Scenario(
        topology=TimedTopology(n, edges, changes),
        signals=tuple(signals),
        params=AlgorithmParams(gamma, mu1, mu2),
        trigger=tuple(TriggerParams(f_bar, delta, alpha, beta) for _ in range(n)),
        gains=GainConfig(sigma, nu, c0, c_hat0),
        z0=tuple(z0) if isinstance(z0, (list, tuple, np.ndarray)) else z0,
        dt=dt,
        horizon=horizon,
        seed=seed,
        record_every=record_every,
        name=name,
    )


@pytest.fixture
def paper_scenario():
    return load_scenario("paper_sec4")


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def report(number: int, passed: bool, text: str) -> None:
    ACCEPTANCE[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {text}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
