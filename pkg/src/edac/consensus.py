"""Dynamic average consensus estimator with robust adaptive input and
composite adaptive gain law, stepped by explicit forward Euler.

The scalar functions here define the per-agent and per-edge updates. The
``*_vec`` kernels apply the same arithmetic to whole edge lists at once and
are what the simulation engine calls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .topology import Edge

__all__ = [
    "GainInitError",
    "MissingGainError",
    "AlgorithmParams",
    "AgentState",
    "EdgeGain",
    "mu",
    "control_input",
    "step_agent",
    "step_gain",
    "validate_gain_init",
    "disagreement_terms",
    "control_inputs_vec",
    "step_gains_vec",
]


class GainInitError(ValueError):
    """Initial gains violate ``c0 >= c_hat0 >= 1``."""


class MissingGainError(KeyError):
    """A present edge has no gain record."""


@dataclass(frozen=True)
class AlgorithmParams:
    gamma: float
    mu1: float
    mu2: float

    def __post_init__(self) -> None:
        for name in ("gamma", "mu1", "mu2"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be finite and > 0, got {v}")


@dataclass(frozen=True)
class AgentState:
    agent_id: int
    z: float
    x: float
    x_hat: float


@dataclass(frozen=True)
class EdgeGain:
    """Adaptive gain shared by both endpoints of an undirected edge."""

    edge: Edge
    c: float
    c_hat: float
    sigma: float
    nu: float

    def __post_init__(self) -> None:
        if not self.sigma > 0 or not self.nu > 0:
            raise ValueError(f"edge {self.edge}: sigma and nu must be > 0")


def mu(params: AlgorithmParams, t: float) -> float:
    """Vanishing smoothing level ``mu1 * exp(-mu2 * t)``."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    return params.mu1 * math.exp(-params.mu2 * t)


def _gain_for(gains: Mapping[Edge, EdgeGain], i: int, j: int) -> EdgeGain:
    key = (i, j) if i < j else (j, i)
    try:
        return gains[key]
    except KeyError:
        raise MissingGainError(f"no gain record for present edge {key}") from None


def control_input(
    i: int,
    x_hat: Sequence[float],
    gains: Mapping[Edge, EdgeGain],
    adjacency_row: Sequence[int],
    mu_t: float,
) -> float:
    """Robust adaptive input of agent ``i`` (1-based) from broadcast values.

    Each neighbour contributes ``-c_ij * d / (|d| + mu)`` with
    ``d = x_hat_i - x_hat_j``, so its magnitude stays below ``c_ij``.
    """
    if not mu_t > 0:
        raise ValueError(f"mu_t must be > 0, got {mu_t}")
    u = 0.0
    xi = x_hat[i - 1]
    for j0, a in enumerate(adjacency_row):
        if not a:
            continue
        g = _gain_for(gains, i, j0 + 1)
        d = xi - x_hat[j0]
        u -= a * g.c * d / (abs(d) + mu_t)
    return u


def step_agent(state: AgentState, r_next: float, u: float, gamma: float, dt: float) -> AgentState:
    """One Euler step of the internal state; the estimate is ``z + r``."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    z = state.z + dt * (-gamma * state.z + u)
    return replace(state, z=z, x=z + r_next)


def step_gain(gain: EdgeGain, x_hat_i: float, x_hat_j: float, a_ij: float, mu_t: float, dt: float) -> EdgeGain:
    """One Euler step of the composite adaptive law.

    Both ``c`` and ``c_hat`` are advanced from their pre-step values.
    """
    if not dt > 0 or not mu_t > 0:
        raise ValueError("dt and mu_t must be > 0")
    ad = abs(x_hat_i - x_hat_j)
    direct = a_ij * ad * ad / (ad + mu_t)
    gap = gain.c - gain.c_hat
    return replace(
        gain,
        c=gain.c + dt * (direct - gain.sigma * gap),
        c_hat=gain.c_hat + dt * gain.nu * gap,
    )


def validate_gain_init(c0: float, c_hat0: float, edge: Edge | None = None) -> None:
    """Raise :class:`GainInitError` unless ``c0 >= c_hat0 >= 1``."""
    if not (c0 >= c_hat0 >= 1.0):
        where = f"edge {edge}: " if edge is not None else ""
        raise GainInitError(f"{where}need c0 >= c_hat0 >= 1, got c0={c0}, c_hat0={c_hat0}")


# -- vectorized kernels -------------------------------------------------------


def disagreement_terms(x_hat: np.ndarray, src: np.ndarray, dst: np.ndarray, mu_t: float):
    """Per-edge broadcast difference, its magnitude and ``|d|^2 / (|d| + mu)``."""
    diff = x_hat[src] - x_hat[dst]
    ad = np.abs(diff)
    return diff, ad, ad * ad / (ad + mu_t)


def control_inputs_vec(
    diff: np.ndarray,
    ad: np.ndarray,
    active: np.ndarray,
    c: np.ndarray,
    src: np.ndarray,
    dst: np.ndarray,
    n: int,
    mu_t: float,
) -> np.ndarray:
    w = active * c * diff / (ad + mu_t)
    return np.bincount(dst, weights=w, minlength=n) - np.bincount(src, weights=w, minlength=n)


def step_gains_vec(
    c: np.ndarray,
    c_hat: np.ndarray,
    direct: np.ndarray,
    sigma: np.ndarray,
    nu: np.ndarray,
    dt: float,
) -> tuple[np.ndarray, np.ndarray]:
    gap = c - c_hat
    return c + dt * (direct - sigma * gap), c_hat + dt * nu * gap
