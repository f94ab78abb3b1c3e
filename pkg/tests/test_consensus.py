from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edac.consensus import (
    AgentState,
    AlgorithmParams,
    EdgeGain,
    GainInitError,
    MissingGainError,
    control_input,
    control_inputs_vec,
    disagreement_terms,
    mu,
    step_agent,
    step_gain,
    step_gains_vec,
    validate_gain_init,
)


def gain(edge=(1, 2), c=2.0, c_hat=1.0, sigma=1.0, nu=1.0):
    return EdgeGain(edge, c, c_hat, sigma, nu)


def test_mu_schedule():
    p = AlgorithmParams(1.0, 1.0, 0.01)
    assert mu(p, 0.0) == 1.0
    vals = [mu(p, t) for t in (0.0, 10.0, 100.0, 1000.0, 5000.0)]
    assert all(a > b > 0 for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        AlgorithmParams(1.0, 2.0, 0.0)


def test_control_input_examples():
    gains = {(1, 2): gain(c=2.0)}
    assert control_input(1, [1.0, 0.0], gains, [0, 1], 1.0) == -1.0
    assert control_input(1, [0.3, 0.3], gains, [0, 1], 1.0) == 0.0
    u1 = control_input(1, [0.7, -0.2], gains, [0, 1], 0.5)
    u2 = control_input(2, [0.7, -0.2], gains, [1, 0], 0.5)
    assert u1 == -u2


def test_control_input_missing_gain():
    with pytest.raises(MissingGainError):
        control_input(1, [1.0, 0.0], {}, [0, 1], 1.0)


def test_step_agent_examples():
    s = step_agent(AgentState(1, 1.0, 1.0, 1.0), 0.0, 0.0, 1.0, 0.1)
    assert s.z == pytest.approx(0.9) and s.x == pytest.approx(0.9)
    s = step_agent(AgentState(1, 0.0, 3.0, 3.0), 4.2, 0.0, 1.0, 0.1)
    assert s.z == 0.0 and s.x == 4.2
    s = step_agent(AgentState(1, 2.0, 0.0, 0.0), 0.0, 1.0, 1.0, 0.5)
    assert s.z == 1.5


def test_step_gain_examples():
    g = step_gain(gain(c=2.0, c_hat=1.0), 2.0, 0.0, 1.0, 2.0, 0.1)
    assert g.c == pytest.approx(2.0) and g.c_hat == pytest.approx(1.1)
    g0 = gain(c=3.0, c_hat=3.0)
    assert step_gain(g0, 0.4, 0.4, 1.0, 1.0, 0.1) == g0
    g = step_gain(gain(c=3.0, c_hat=1.0, sigma=5.0, nu=5.0), 1.0, -1.0, 0.0, 1.0, 0.01)
    assert g.c == pytest.approx(2.9) and g.c_hat == pytest.approx(1.1)


def test_validate_gain_init():
    validate_gain_init(70.0, 50.0)
    validate_gain_init(1.0, 1.0)
    with pytest.raises(GainInitError):
        validate_gain_init(0.5, 0.5)
    with pytest.raises(GainInitError):
        validate_gain_init(2.0, 3.0)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-10, 10), min_size=4, max_size=4),
    st.lists(st.floats(1, 80), min_size=4, max_size=4),
    st.lists(st.booleans(), min_size=4, max_size=4),
    st.floats(1e-3, 2),
)
def test_vector_kernels_match_scalar(xh, cs, on, mu_t):
    # 4-cycle; vectorized inputs and gain steps agree with the scalar reference
    edges = [(1, 2), (2, 3), (3, 4), (1, 4)]
    src = np.array([i - 1 for i, _ in edges])
    dst = np.array([j - 1 for _, j in edges])
    x_hat = np.array(xh)
    c = np.array(cs)
    c_hat = np.minimum(c, 1.0 + 0.5 * (c - 1.0))
    active = np.array(on, dtype=float)
    adj = np.zeros((4, 4), dtype=int)
    for (i, j), a in zip(edges, on):
        adj[i - 1, j - 1] = adj[j - 1, i - 1] = int(a)
    gains = {e: EdgeGain(e, c[k], c_hat[k], 5.0, 5.0) for k, e in enumerate(edges)}

    diff, ad, direct = disagreement_terms(x_hat, src, dst, mu_t)
    u = control_inputs_vec(diff, ad, active, c, src, dst, 4, mu_t)
    for i in range(1, 5):
        assert u[i - 1] == pytest.approx(control_input(i, x_hat, gains, adj[i - 1], mu_t), abs=1e-12)
    assert math.fsum(u) == pytest.approx(0.0, abs=1e-9)

    dt = 1e-3
    c_new, ch_new = step_gains_vec(c, c_hat, active * direct, np.full(4, 5.0), np.full(4, 5.0), dt)
    for k, (i, j) in enumerate(edges):
        g = step_gain(gains[(i, j)], x_hat[i - 1], x_hat[j - 1], active[k], mu_t, dt)
        assert c_new[k] == pytest.approx(g.c, abs=1e-12)
        assert ch_new[k] == pytest.approx(g.c_hat, abs=1e-12)
