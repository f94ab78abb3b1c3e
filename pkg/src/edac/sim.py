"""Deterministic fixed-step execution of event-triggered dynamic average
consensus over a time-varying graph.

Per step ``k`` (time ``t_k = k * dt``) the engine reads a snapshot of the
broadcasts, gains and measurement errors, then

1. computes every agent's input and advances ``z`` (``x = z + r`` at ``t_{k+1}``),
2. advances every edge gain,
3. evaluates ``eta`` on the snapshot, integrates ``f`` and fires agents with
   ``f <= 0``; fired broadcasts are seen by neighbours from step ``k + 1``,
4. applies topology changes due at ``t_{k+1}`` and records the row.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .consensus import (
    AlgorithmParams,
    control_inputs_vec,
    disagreement_terms,
    step_gains_vec,
    validate_gain_init,
)
from .signals import ReferenceSignal, evaluate_all
from .topology import Edge, TimedTopology, adjacency_from_edges, components
from .trigger import TriggerParams, eta_vec

__all__ = [
    "Uniform",
    "GainConfig",
    "Scenario",
    "ResolvedScenario",
    "SimulationError",
    "Trace",
    "Engine",
    "run",
    "resolve",
    "step_count",
    "PRNG_ID",
]

logger = logging.getLogger(__name__)

PRNG_ID = "numpy.random.PCG64"
SIGNAL_CHUNK = 8192


class SimulationError(RuntimeError):
    """Non-finite state encountered; carries the last good time."""

    def __init__(self, message: str, last_good_time: float) -> None:
        super().__init__(f"{message} (last good time {last_good_time:.12g} s)")
        self.last_good_time = last_good_time


@dataclass(frozen=True)
class Uniform:
    """Seeded uniform draw from ``[low, high]``."""

    low: float
    high: float

    def __post_init__(self) -> None:
        if not self.low <= self.high:
            raise ValueError(f"uniform range needs low <= high, got [{self.low}, {self.high}]")


Spec = Union[float, Uniform]


@dataclass(frozen=True)
class GainConfig:
    sigma: float
    nu: float
    c0: Spec | dict[Edge, float]
    c_hat0: Spec | dict[Edge, float]

    def __post_init__(self) -> None:
        if not (self.sigma > 0 and self.nu > 0):
            raise ValueError("sigma and nu must be > 0")


@dataclass(frozen=True)
class Scenario:
    topology: TimedTopology
    signals: tuple[ReferenceSignal, ...]
    params: AlgorithmParams
    trigger: tuple[TriggerParams, ...]
    gains: GainConfig
    z0: Spec | tuple[float, ...]
    dt: float = 1e-4
    horizon: float = 12.0
    seed: int = 0
    record_every: int = 10
    name: str = "scenario"

    def __post_init__(self) -> None:
        n = self.topology.n
        if len(self.signals) != n:
            raise ValueError(f"expected {n} signals, got {len(self.signals)}")
        if len(self.trigger) != n:
            raise ValueError(f"expected {n} trigger parameter sets, got {len(self.trigger)}")
        if isinstance(self.z0, tuple) and len(self.z0) != n:
            raise ValueError(f"expected {n} initial states, got {len(self.z0)}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be finite and > 0, got {self.dt}")
        if not self.horizon >= self.dt:
            raise ValueError(f"horizon {self.horizon} must be >= dt {self.dt}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    @property
    def n(self) -> int:
        return self.topology.n

    @property
    def edges(self) -> list[Edge]:
        return self.topology.all_edges


@dataclass(frozen=True)
class ResolvedScenario:
    """A scenario with every random draw made."""

    scenario: Scenario
    z0: np.ndarray
    c0: np.ndarray
    c_hat0: np.ndarray
    sigma: np.ndarray
    nu: np.ndarray


def _resolve_edge_spec(spec, edges: list[Edge], rng: np.random.Generator, label: str) -> np.ndarray:
    if isinstance(spec, Uniform):
        return rng.uniform(spec.low, spec.high, size=len(edges))
    if isinstance(spec, dict):
        missing = [e for e in edges if e not in spec]
        if missing:
            raise ValueError(f"{label}: no value for edges {missing}")
        return np.array([float(spec[e]) for e in edges])
    return np.full(len(edges), float(spec))


def resolve(scenario: Scenario) -> ResolvedScenario:
    """Make the seeded draws: ``z0`` first, then ``c0``, then ``c_hat0``."""
    rng = np.random.Generator(np.random.PCG64(scenario.seed))
    n, edges = scenario.n, scenario.edges
    if isinstance(scenario.z0, Uniform):
        z0 = rng.uniform(scenario.z0.low, scenario.z0.high, size=n)
    elif isinstance(scenario.z0, tuple):
        z0 = np.array(scenario.z0, dtype=float)
    else:
        z0 = np.full(n, float(scenario.z0))
    g = scenario.gains
    c0 = _resolve_edge_spec(g.c0, edges, rng, "c0")
    c_hat0 = _resolve_edge_spec(g.c_hat0, edges, rng, "c_hat0")
    for e, a, b in zip(edges, c0, c_hat0):
        validate_gain_init(float(a), float(b), e)
    return ResolvedScenario(
        scenario=scenario,
        z0=z0,
        c0=c0,
        c_hat0=c_hat0,
        sigma=np.full(len(edges), float(g.sigma)),
        nu=np.full(len(edges), float(g.nu)),
    )


def step_count(horizon: float, dt: float) -> int:
    """``ceil(horizon / dt)`` that ignores float noise in the ratio."""
    ratio = horizon / dt
    nearest = round(ratio)
    if abs(ratio - nearest) <= 1e-9 * max(1.0, ratio):
        return int(nearest)
    return int(math.ceil(ratio))


def _due_step(t: float, dt: float) -> int:
    # first step index whose time k*dt reaches t
    return step_count(t, dt) if t > 0 else 0


@dataclass
class Trace:
    """Recorded run: sampled series on a shared time axis plus exact events."""

    n: int
    edges: list[Edge]
    dt: float
    record_every: int
    steps: np.ndarray
    times: np.ndarray
    z: np.ndarray
    x: np.ndarray
    x_hat: np.ndarray
    e: np.ndarray
    f: np.ndarray
    x_tilde: np.ndarray
    c: np.ndarray
    c_hat: np.ndarray
    event_agent: np.ndarray
    event_step: np.ndarray
    event_time: np.ndarray
    event_f_before: np.ndarray
    changes: list[dict]
    suprema: dict
    meta: dict = field(default_factory=dict)
    scenario: Scenario | None = None

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def events_of(self, agent: int) -> np.ndarray:
        """Event steps of a 1-based agent, ascending."""
        return self.event_step[self.event_agent == agent]


class Engine:
    """Single-owner simulation state for one scenario."""

    def __init__(self, scenario: Scenario | ResolvedScenario) -> None:
        rs = scenario if isinstance(scenario, ResolvedScenario) else resolve(scenario)
        sc = rs.scenario
        self.resolved = rs
        self.scenario = sc
        self.n = sc.n
        self.dt = sc.dt
        self.n_steps = step_count(sc.horizon, sc.dt)
        self.edges = sc.edges
        m = len(self.edges)
        self.src = np.array([i - 1 for i, _ in self.edges], dtype=np.intp)
        self.dst = np.array([j - 1 for _, j in self.edges], dtype=np.intp)
        self._edge_index = {e: k for k, e in enumerate(self.edges)}

        self.gamma = sc.params.gamma
        self.mu1, self.mu2 = sc.params.mu1, sc.params.mu2
        self.f_bar = np.array([p.f_bar for p in sc.trigger])
        self.delta = np.array([p.delta for p in sc.trigger])
        self.alpha = np.array([p.alpha for p in sc.trigger])
        self.beta = np.array([p.beta for p in sc.trigger])
        self.sigma, self.nu = rs.sigma.copy(), rs.nu.copy()

        self.active = np.array([1.0 if e in sc.topology.base_edges else 0.0 for e in self.edges])
        if m == 0:
            self.active = np.zeros(0)
        self._pending = [(_due_step(ch.time, sc.dt), ch) for ch in sc.topology.changes]
        self.change_log: list[dict] = []

        self.k = 0
        self._r_chunk_start = -1
        self._r_chunk = np.empty((0, self.n))
        r0 = self.reference(0)
        self.z = rs.z0.astype(float).copy()
        self.x = self.z + r0
        self.c = rs.c0.astype(float).copy()
        self.c_hat = rs.c_hat0.astype(float).copy()
        self._apply_due_changes()
        self._update_components()
        if len(self._comp_sizes) > 1:
            warnings.warn(
                f"initial graph is disconnected ({len(self._comp_sizes)} components); "
                "consensus runs per component",
                stacklevel=2,
            )

        # every agent broadcasts at t = 0
        self.x_hat = self.x.copy()
        self.e = np.zeros(self.n)
        self.f = self.f_bar.copy()
        # f is kept as f_bar - dt * (delta * m + S) with m steps since the last
        # reset and S the accumulated -min(eta, 0). Same Euler recursion, but
        # free of the drift that repeated subtraction of dt * delta builds up.
        self._since = np.zeros(self.n)
        self._excess = np.zeros(self.n)
        self.ev_agent: list[int] = list(range(1, self.n + 1))
        self.ev_step: list[int] = [0] * self.n
        self.ev_f_before: list[float] = self.f_bar.tolist()

        self.c_max = self.c.copy()
        self.e_max = np.zeros(self.n)
        self.a_max = self.active.copy()
        self.eta_min = np.full(self.n, np.inf)

        self._rows: dict[str, list[np.ndarray]] = {k: [] for k in ("z", "x", "x_hat", "e", "f", "x_tilde", "c", "c_hat")}
        self._row_steps: list[int] = []
        self._record()

    # -- helpers ---------------------------------------------------------------

    def time(self, k: int | None = None) -> float:
        return (self.k if k is None else k) * self.dt

    def reference(self, k: int) -> np.ndarray:
        """Reference values at step ``k``, evaluated in vectorized chunks."""
        start = self._r_chunk_start
        if start < 0 or not (start <= k < start + len(self._r_chunk)):
            start = k
            ks = np.arange(start, min(start + SIGNAL_CHUNK, self.n_steps + 1))
            self._r_chunk = evaluate_all(self.scenario.signals, ks * self.dt)
            self._r_chunk_start = start
        return self._r_chunk[k - start]

    def _apply_due_changes(self) -> None:
        while self._pending and self._pending[0][0] <= self.k:
            _, ch = self._pending.pop(0)
            idx = self._edge_index[ch.edge]
            self.active[idx] = 1.0 if ch.action == "add" else 0.0
            self.change_log.append(
                {"step": self.k, "time": self.time(), "edge": list(ch.edge), "action": ch.action}
            )
            self._components_dirty = True
            logger.info("t=%.6g: %s edge %s", self.time(), ch.action, ch.edge)

    def _update_components(self) -> None:
        on = [e for e, a in zip(self.edges, self.active) if a]
        comps = components(adjacency_from_edges(self.n, on))
        self.component_of = np.empty(self.n, dtype=np.intp)
        for ci, comp in enumerate(comps):
            self.component_of[np.array(comp) - 1] = ci
        self._comp_sizes = np.array([len(c) for c in comps], dtype=float)
        self.components = comps
        self._components_dirty = False

    def x_tilde(self) -> np.ndarray:
        r = self.reference(self.k)
        avg = np.bincount(self.component_of, weights=r) / self._comp_sizes
        return self.x - avg[self.component_of]

    def _record(self) -> None:
        self._row_steps.append(self.k)
        rows = self._rows
        rows["z"].append(self.z.copy())
        rows["x"].append(self.x.copy())
        rows["x_hat"].append(self.x_hat.copy())
        rows["e"].append(self.e.copy())
        rows["f"].append(self.f.copy())
        rows["x_tilde"].append(self.x_tilde())
        rows["c"].append(self.c.copy())
        rows["c_hat"].append(self.c_hat.copy())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {
            "z": self.z.copy(),
            "x": self.x.copy(),
            "x_hat": self.x_hat.copy(),
            "e": self.e.copy(),
            "f": self.f.copy(),
            "c": self.c.copy(),
            "c_hat": self.c_hat.copy(),
            "active": self.active.copy(),
        }

    @property
    def done(self) -> bool:
        return self.k >= self.n_steps

    # -- stepping --------------------------------------------------------------

    def step(self) -> None:
        dt, n, k = self.dt, self.n, self.k
        t = k * dt
        mu_t = self.mu1 * math.exp(-self.mu2 * t)
        x_hat, c, e, active = self.x_hat, self.c, self.e, self.active

        diff, ad, direct = disagreement_terms(x_hat, self.src, self.dst, mu_t)
        u = control_inputs_vec(diff, ad, active, c, self.src, self.dst, n, mu_t)
        z_new = self.z + dt * (-self.gamma * self.z + u)
        x_new = z_new + self.reference(k + 1)

        c_new, c_hat_new = step_gains_vec(c, self.c_hat, active * direct, self.sigma, self.nu, dt)

        eta = eta_vec(direct, active, c, self.src, self.dst, np.abs(e), self.alpha, self.beta, n)
        since = self._since + 1.0
        excess = self._excess - np.minimum(eta, 0.0)
        f_new = self.f_bar - dt * (self.delta * since + excess)
        e_new = x_hat - x_new

        if not math.isfinite(float(z_new.sum() + c_new.sum() + c_hat_new.sum() + f_new.sum())):
            raise SimulationError(f"non-finite state at step {k + 1}", last_good_time=t)

        np.maximum(self.e_max, np.abs(e_new), out=self.e_max)
        np.maximum(self.c_max, c_new, out=self.c_max)
        np.minimum(self.eta_min, eta, out=self.eta_min)

        fired = np.flatnonzero(f_new <= 0.0)
        x_hat_new = x_hat
        if fired.size:
            x_hat_new = x_hat.copy()
            x_hat_new[fired] = x_new[fired]
            self.ev_agent.extend((fired + 1).tolist())
            self.ev_step.extend([k + 1] * fired.size)
            self.ev_f_before.extend(f_new[fired].tolist())
            e_new[fired] = 0.0
            f_new[fired] = self.f_bar[fired]
            since[fired] = 0.0
            excess[fired] = 0.0

        self.z, self.x, self.x_hat, self.e, self.f = z_new, x_new, x_hat_new, e_new, f_new
        self.c, self.c_hat = c_new, c_hat_new
        self._since, self._excess = since, excess
        self.k = k + 1

        if self._pending and self._pending[0][0] <= self.k:
            self._apply_due_changes()
            np.maximum(self.a_max, self.active, out=self.a_max)
            self._update_components()
        if self.k % self.scenario.record_every == 0 or self.k == self.n_steps:
            self._record()

    def run(self) -> Trace:
        while self.k < self.n_steps:
            self.step()
        return self.trace()

    def trace(self) -> Trace:
        steps = np.array(self._row_steps, dtype=np.int64)
        rows = {k: np.array(v).reshape(len(steps), -1) for k, v in self._rows.items()}
        ev_agent = np.array(self.ev_agent, dtype=np.int64)
        ev_step = np.array(self.ev_step, dtype=np.int64)
        order = np.lexsort((ev_agent, ev_step))
        rs = self.resolved
        return Trace(
            n=self.n,
            edges=list(self.edges),
            dt=self.dt,
            record_every=self.scenario.record_every,
            steps=steps,
            times=steps * self.dt,
            event_agent=ev_agent[order],
            event_step=ev_step[order],
            event_time=ev_step[order] * self.dt,
            event_f_before=np.array(self.ev_f_before)[order],
            changes=list(self.change_log),
            suprema={
                "c_max": self.c_max.tolist(),
                "e_max": self.e_max.tolist(),
                "a_max": self.a_max.tolist(),
                "eta_min": [float(v) if math.isfinite(v) else None for v in self.eta_min],
            },
            meta={
                "prng": PRNG_ID,
                "seed": self.scenario.seed,
                "n_steps": self.n_steps,
                "draws": {"z0": rs.z0.tolist(), "c0": rs.c0.tolist(), "c_hat0": rs.c_hat0.tolist()},
            },
            scenario=self.scenario,
            **rows,
        )


def run(scenario: Scenario | ResolvedScenario) -> Trace:
    """Execute a scenario to its horizon and return the recorded trace."""
    return Engine(scenario).run()
