"""Dynamic event-triggered broadcasting.

Each agent carries a triggering function ``f`` that decays at rate
``delta - min(eta, 0)`` and fires a broadcast once it reaches zero, after
which it is restored to ``f_bar`` and the measurement error is cleared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .consensus import EdgeGain, _gain_for

__all__ = [
    "TriggerParams",
    "TriggerState",
    "measurement_error",
    "eta",
    "step_trigger",
    "check_and_fire",
    "eta_vec",
]


@dataclass(frozen=True)
class TriggerParams:
    f_bar: float
    delta: float
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not (self.f_bar > 0 and math.isfinite(self.f_bar)):
            raise ValueError(f"f_bar must be finite and > 0, got {self.f_bar}")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be finite and > 0, got {self.delta}")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not (self.beta >= 1 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be finite and >= 1, got {self.beta}")


@dataclass(frozen=True)
class TriggerState:
    params: TriggerParams
    f: float
    e: float = 0.0
    last_event_time: float = 0.0
    event_count: int = 0

    @property
    def f_bar(self) -> float:
        return self.params.f_bar


def measurement_error(x_hat: float, x: float) -> float:
    return x_hat - x


def eta(
    i: int,
    x_hat: Sequence[float],
    gains: Mapping[tuple[int, int], EdgeGain],
    adjacency_row: Sequence[int],
    e_i: float,
    alpha: float,
    beta: float,
    mu_t: float,
) -> float:
    """Internal triggering variable of agent ``i`` (1-based).

    Broadcast disagreement (weighted by ``alpha``) minus the measurement-error
    cost ``beta * sum_j c_ij |e_i|``. Isolated agents get 0.
    """
    if not mu_t > 0:
        raise ValueError(f"mu_t must be > 0, got {mu_t}")
    benefit = cost = 0.0
    for j0, a in enumerate(adjacency_row):
        if not a:
            continue
        g = _gain_for(gains, i, j0 + 1)
        ad = abs(x_hat[i - 1] - x_hat[j0])
        benefit += a * ad * ad / (ad + mu_t)
        cost += a * g.c
    return alpha * benefit - beta * cost * abs(e_i)


def step_trigger(state: TriggerState, eta_i: float, dt: float) -> TriggerState:
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    return replace(state, f=state.f + dt * (min(eta_i, 0.0) - state.params.delta))


def check_and_fire(state: TriggerState, x_current: float, t: float) -> tuple[TriggerState, bool, float | None]:
    """Fire when ``f <= 0``: reset ``f`` to ``f_bar`` and ``e`` to zero.

    Returns the new state, whether it fired, and the value to broadcast.
    """
    if state.f > 0:
        return state, False, None
    fired = replace(
        state,
        f=state.params.f_bar,
        e=0.0,
        last_event_time=t,
        event_count=state.event_count + 1,
    )
    return fired, True, x_current


def eta_vec(
    direct: np.ndarray,
    active: np.ndarray,
    c: np.ndarray,
    src: np.ndarray,
    dst: np.ndarray,
    abs_e: np.ndarray,
    alpha: np.ndarray,
    beta: np.ndarray,
    n: int,
) -> np.ndarray:
    """Vectorized internal triggering variable for all agents.

    ``direct`` is the per-edge ``|d|^2 / (|d| + mu)`` term (not yet masked).
    """
    d = active * direct
    ac = active * c
    benefit = np.bincount(src, weights=d, minlength=n) + np.bincount(dst, weights=d, minlength=n)
    cost = np.bincount(src, weights=ac, minlength=n) + np.bincount(dst, weights=ac, minlength=n)
    return alpha * benefit - beta * cost * abs_e
