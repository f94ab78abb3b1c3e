"""Verification layer over recorded traces.

Checks are evaluated per constant-topology segment and, inside a segment,
per connected component. The triggering function jumps up at every reset,
so the Lyapunov checks work with the reset-compensated value
``V(t) - theta1 * sum(f_bar - f_before)`` accumulated over the resets since
the segment start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .signals import bound_estimate, evaluate_all
from .sim import Trace
from .topology import Edge, adjacency_from_edges, components, lambda2, laplacian

__all__ = [
    "Segment",
    "LyapunovParams",
    "IntervalStats",
    "CheckResult",
    "segments",
    "estimation_error",
    "lyapunov_params",
    "lyapunov_value",
    "dissipation_check",
    "integral_check",
    "interval_stats",
    "gain_checks",
    "trigger_range_check",
    "convergence_check",
    "verify",
    "DEFAULT_WINDOWS",
]

GAIN_TOL = 1e-9
DEFAULT_WINDOWS = ((5.0, 6.0, False), (11.0, 12.0, True))  # (start, end, end inclusive)


@dataclass(frozen=True)
class Segment:
    """Steps ``[start, end)`` over which the graph is constant."""

    start: int
    end: int
    edges: frozenset[Edge]
    components: tuple[tuple[int, ...], ...]

    def rows(self, trace: Trace, *, include_end: bool = True) -> np.ndarray:
        hi = trace.steps <= self.end if include_end else trace.steps < self.end
        return np.flatnonzero((trace.steps >= self.start) & hi)


def segments(trace: Trace) -> list[Segment]:
    sc = trace.scenario
    current = set(sc.topology.base_edges)
    by_step: dict[int, list[dict]] = {}
    for ch in trace.changes:
        by_step.setdefault(int(ch["step"]), []).append(ch)
    n_steps = int(trace.steps[-1])
    cuts = sorted(by_step)
    if 0 in by_step:
        for ch in by_step[0]:
            _toggle(current, ch)
    out = []
    bounds = [0] + [s for s in cuts if s > 0] + [n_steps]
    for a, b in zip(bounds, bounds[1:]):
        comps = components(adjacency_from_edges(trace.n, current))
        out.append(Segment(a, b, frozenset(current), tuple(tuple(c) for c in comps)))
        for ch in by_step.get(b, []):
            _toggle(current, ch)
    return out


def _toggle(current: set, ch: dict) -> None:
    e = tuple(sorted(ch["edge"]))
    if ch["action"] == "remove":
        current.discard(e)
    else:
        current.add(e)


def _references(trace: Trace, rows: np.ndarray | None = None) -> np.ndarray:
    times = trace.times if rows is None else trace.times[rows]
    return evaluate_all(trace.scenario.signals, times)


def _component_average(r: np.ndarray, comps: Sequence[Sequence[int]], n: int) -> np.ndarray:
    avg = np.empty((r.shape[0], n))
    for comp in comps:
        idx = np.asarray(comp) - 1
        avg[:, idx] = r[:, idx].mean(axis=1, keepdims=True)
    return avg


def estimation_error(trace: Trace) -> np.ndarray:
    """``x_i - mean(r_j over i's component)`` at every recorded row.

    The component is the one in force at the row's time, so rows at or after a
    split are measured against the per-subgroup averages.
    """
    r = _references(trace)
    out = np.empty_like(trace.x)
    segs = segments(trace)
    for k, seg in enumerate(segs):
        rows = seg.rows(trace, include_end=k == len(segs) - 1)
        out[rows] = trace.x[rows] - _component_average(r[rows], seg.components, trace.n)
    return out


# -- Lyapunov machinery ------------------------------------------------------


@dataclass(frozen=True)
class LyapunovParams:
    agents: tuple[int, ...]
    lambda2: float
    eps1: float
    eps2: float
    eps_bar: float
    theta1: float
    theta2: float
    mu_bar1: float


def lyapunov_params(trace: Trace, agents: Sequence[int], edges: Iterable[Edge]) -> LyapunovParams:
    """Minimal admissible ``theta1``, ``theta2`` for one connected component."""
    sc = trace.scenario
    agents = tuple(sorted(agents))
    local = {a: k for k, a in enumerate(agents)}
    sub = [(local[i] + 1, local[j] + 1) for i, j in edges if i in local and j in local]
    lam2 = lambda2(laplacian(adjacency_from_edges(len(agents), sub)))
    b = bound_estimate([sc.signals[a - 1] for a in agents], trace.horizon, trace.dt)
    m = len(agents)
    eps_bar = 0.0 if m == 1 else math.sqrt(m) / lam2 * (sc.params.gamma * b.eps1 + b.eps2)
    return LyapunovParams(
        agents=agents,
        lambda2=lam2,
        eps1=b.eps1,
        eps2=b.eps2,
        eps_bar=eps_bar,
        theta1=1.0 + 2.0 * eps_bar,
        theta2=2.0 + 6.0 * eps_bar,
        mu_bar1=eps_bar * m * m * sc.params.mu1,
    )


def lyapunov_value(
    lp: LyapunovParams,
    agents: Sequence[int],
    x_tilde: np.ndarray,
    f: np.ndarray,
    c: np.ndarray,
    c_hat: np.ndarray,
    sigma: np.ndarray,
    nu: np.ndarray,
) -> tuple[float, float, float, float]:
    """``(V, V1, V2, V3)`` for one component.

    ``x_tilde`` and ``f`` are indexed like ``agents``; the gain arrays hold the
    component's edges, each undirected edge once (so ``1/4`` over ordered pairs
    becomes ``1/2``).
    """
    if tuple(sorted(agents)) != lp.agents:
        raise ValueError(f"parameters belong to component {lp.agents}, not {tuple(sorted(agents))}")
    x_tilde, f = np.asarray(x_tilde, float), np.asarray(f, float)
    c, c_hat = np.asarray(c, float), np.asarray(c_hat, float)
    v1 = 0.5 * float(np.sum(x_tilde**2))
    v2 = lp.theta1 * float(np.sum(f))
    v3 = 0.5 * float(np.sum((c - lp.theta2) ** 2 + np.asarray(sigma) / np.asarray(nu) * (c_hat - lp.theta2) ** 2))
    return v1 + v2 + v3, v1, v2, v3


@dataclass
class _SegmentSeries:
    lp: LyapunovParams
    rows: np.ndarray
    times: np.ndarray
    V: np.ndarray
    Vc: np.ndarray
    xt_sq: np.ndarray
    n_resets: int


def _segment_series(trace: Trace, seg: Segment, comp: Sequence[int]) -> _SegmentSeries:
    sc = trace.scenario
    rows = seg.rows(trace)
    idx = np.asarray(comp) - 1
    edge_idx = [k for k, e in enumerate(trace.edges) if e in seg.edges and e[0] in comp and e[1] in comp]
    lp = lyapunov_params(trace, comp, seg.edges)
    r = _references(trace, rows)[:, idx]
    xt = trace.x[rows][:, idx] - r.mean(axis=1, keepdims=True)
    ratio = sc.gains.sigma / sc.gains.nu
    c = trace.c[rows][:, edge_idx]
    ch = trace.c_hat[rows][:, edge_idx]
    v1 = 0.5 * np.sum(xt**2, axis=1)
    v2 = lp.theta1 * np.sum(trace.f[rows][:, idx], axis=1)
    v3 = 0.5 * np.sum((c - lp.theta2) ** 2 + ratio * (ch - lp.theta2) ** 2, axis=1)
    V = v1 + v2 + v3

    # cumulative reset jumps of V2 in (start row, row]
    f_bar = np.array([p.f_bar for p in sc.trigger])
    in_comp = np.isin(trace.event_agent, np.asarray(comp))
    sel = in_comp & (trace.event_step > trace.steps[rows[0]]) & (trace.event_step <= trace.steps[rows[-1]])
    jumps = lp.theta1 * (f_bar[trace.event_agent[sel] - 1] - trace.event_f_before[sel])
    cum = np.concatenate([[0.0], np.cumsum(jumps)])
    pos = np.searchsorted(trace.event_step[sel], trace.steps[rows], side="right")
    Vc = V - cum[pos]
    return _SegmentSeries(lp, rows, trace.times[rows], V, Vc, np.sum(xt**2, axis=1), int(sel.sum()))


@dataclass
class CheckResult:
    name: str
    status: str  # "pass" | "fail" | "not evaluable"
    margin: float = math.nan
    detail: str = ""
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status != "fail"

    def line(self) -> str:
        margin = "" if math.isnan(self.margin) else f" margin={self.margin + 0.0:.6g}"
        detail = f" ({self.detail})" if self.detail else ""
        return f"[{self.status.upper():>13}] {self.name}{margin}{detail}"


def _iter_components(trace: Trace):
    for seg in segments(trace):
        for comp in seg.components:
            rows = seg.rows(trace)
            if len(rows) >= 2:
                yield seg, comp


def dissipation_check(trace: Trace) -> CheckResult:
    """Finite-difference form of ``dV/dt <= -gamma |x~|^2 + mu_bar1 exp(-mu2 t)``.

    Reset jumps are removed from the difference; every reset must also have
    fired from ``f <= 0``.
    """
    sc = trace.scenario
    gamma, mu2 = sc.params.gamma, sc.params.mu2
    worst = math.inf
    violations = []
    bad_resets = int(np.sum(trace.event_f_before[trace.event_step > 0] > 0))
    for seg, comp in _iter_components(trace):
        s = _segment_series(trace, seg, comp)
        h = np.diff(s.times)
        tol = 1e-3 * max(1.0, s.V[0]) * (1.0 + h)
        lhs = np.diff(s.Vc) / h
        rhs = -gamma * s.xt_sq[:-1] + s.lp.mu_bar1 * np.exp(-mu2 * s.times[:-1])
        margin = rhs + tol - lhs
        worst = min(worst, float(margin.min()))
        for k in np.flatnonzero(margin < 0):
            violations.append((comp, float(s.times[k]), float(margin[k])))
    status = "pass" if not violations and bad_resets == 0 else "fail"
    detail = f"{len(violations)} violations, {bad_resets} resets from f > 0"
    return CheckResult("lyapunov dissipation (pointwise)", status, worst, detail, violations)


def integral_check(trace: Trace) -> CheckResult:
    """``V(t) + gamma * int |x~|^2 <= V(t0) + mu_bar1/mu2 (e^{-mu2 t0} - e^{-mu2 t})``
    on every segment, with trapezoidal quadrature and reset compensation."""
    sc = trace.scenario
    gamma, mu2 = sc.params.gamma, sc.params.mu2
    worst = math.inf
    violations = []
    for seg, comp in _iter_components(trace):
        s = _segment_series(trace, seg, comp)
        t0 = s.times[0]
        integral = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(s.times) * (s.xt_sq[1:] + s.xt_sq[:-1]))])
        lhs = s.Vc + gamma * integral
        rhs = s.V[0] + s.lp.mu_bar1 / mu2 * (math.exp(-mu2 * t0) - np.exp(-mu2 * s.times))
        tol = 1e-3 * max(1.0, s.V[0])
        margin = rhs + tol - lhs
        worst = min(worst, float(margin.min()))
        if margin.min() < 0:
            k = int(np.argmin(margin))
            violations.append((comp, float(s.times[k]), float(margin[k])))
    status = "pass" if not violations else "fail"
    return CheckResult("lyapunov integral bound", status, worst, f"{len(violations)} violating components", violations)


# -- triggering statistics ---------------------------------------------------


@dataclass
class IntervalStats:
    agent: np.ndarray
    low: np.ndarray
    min: np.ndarray  # nan when fewer than two events
    total: np.ndarray
    eta_bar: np.ndarray
    c_bar: np.ndarray  # per edge
    e_bar: np.ndarray

    def rows(self):
        for k in range(len(self.agent)):
            yield int(self.agent[k]), float(self.low[k]), float(self.min[k]), int(self.total[k])


def interval_stats(trace: Trace) -> IntervalStats:
    """Per-agent lower bound ``f_bar / (eta_bar + delta)``, observed minimum gap
    and event total.

    ``eta_bar = beta * sum_j a_ij c_bar_ij e_bar`` with the run suprema of the
    gains and of ``|e|`` (exact per-step suprema when the trace carries them)
    and the maximal adjacency over the run.
    """
    sc = trace.scenario
    sup = trace.suprema or {}
    c_bar = np.asarray(sup.get("c_max") or trace.c.max(axis=0), float)
    e_bar = np.asarray(sup.get("e_max") or np.abs(trace.e).max(axis=0), float)
    a_max = np.asarray(sup.get("a_max") or np.ones(len(trace.edges)), float)
    n = trace.n
    weighted = np.zeros(n)
    for k, (i, j) in enumerate(trace.edges):
        weighted[i - 1] += a_max[k] * c_bar[k]
        weighted[j - 1] += a_max[k] * c_bar[k]
    beta = np.array([p.beta for p in sc.trigger])
    delta = np.array([p.delta for p in sc.trigger])
    f_bar = np.array([p.f_bar for p in sc.trigger])
    eta_bar = beta * weighted * e_bar
    low = f_bar / (eta_bar + delta)
    mins = np.full(n, np.nan)
    totals = np.zeros(n, dtype=np.int64)
    for a in range(1, n + 1):
        st = trace.events_of(a)
        totals[a - 1] = len(st)
        if len(st) >= 2:
            mins[a - 1] = np.diff(st).min() * trace.dt
    return IntervalStats(np.arange(1, n + 1), low, mins, totals, eta_bar, c_bar, e_bar)


def interval_check(trace: Trace, stats: IntervalStats | None = None) -> CheckResult:
    stats = stats or interval_stats(trace)
    ok = ~np.isnan(stats.min)
    if not ok.any():
        return CheckResult("inter-event lower bound", "not evaluable", detail="no agent has two events")
    margin = stats.min[ok] - (stats.low[ok] - trace.dt)
    status = "pass" if margin.min() >= 0 else "fail"
    bad = [int(a) for a in stats.agent[ok][margin < 0]]
    return CheckResult("inter-event lower bound", status, float(margin.min()), f"violating agents {bad}" if bad else "")


def trigger_range_check(trace: Trace, stats: IntervalStats | None = None) -> CheckResult:
    """``-dt (eta_bar + delta) <= f <= f_bar`` everywhere and exact restores."""
    stats = stats or interval_stats(trace)
    sc = trace.scenario
    f_bar = np.array([p.f_bar for p in sc.trigger])
    delta = np.array([p.delta for p in sc.trigger])
    floor = -trace.dt * (stats.eta_bar + delta)
    problems = []
    over = trace.f - f_bar
    if over.max() > 0:
        problems.append(f"f above f_bar by {over.max():.3g}")
    pre = trace.event_step > 0
    agents = trace.event_agent[pre] - 1
    fb = trace.event_f_before[pre]
    under = fb - floor[agents]
    margin = min(float(-over.max()), float(under.min()) if under.size else math.inf)
    if under.size and under.min() < 0:
        problems.append(f"pre-reset f below floor by {-under.min():.3g}")
    # rows that coincide with an event must show the exact restored value
    row_of = {int(s): k for k, s in enumerate(trace.steps)}
    not_restored = 0
    for a, s in zip(trace.event_agent, trace.event_step):
        k = row_of.get(int(s))
        if k is not None and trace.f[k, a - 1] != f_bar[a - 1]:
            not_restored += 1
    if not_restored:
        problems.append(f"{not_restored} resets not restoring f_bar exactly")
    return CheckResult("trigger function range", "fail" if problems else "pass", margin, "; ".join(problems))


def gain_checks(trace: Trace, final_gap: float = 0.01) -> list[CheckResult]:
    order = float((trace.c - trace.c_hat).min()) if trace.c.size else math.inf
    floor = float(trace.c_hat.min()) - 1.0 if trace.c.size else math.inf
    mono = float(np.diff(trace.c_hat, axis=0).min()) if trace.c.shape[0] > 1 and trace.c.size else math.inf
    gap = float(np.abs(trace.c[-1] - trace.c_hat[-1]).max()) if trace.c.size else 0.0
    return [
        CheckResult("gain ordering c >= c_hat", "pass" if order >= -GAIN_TOL else "fail", order + GAIN_TOL),
        CheckResult("compensation gain c_hat >= 1", "pass" if floor >= -GAIN_TOL else "fail", floor + GAIN_TOL),
        CheckResult("c_hat nondecreasing", "pass" if mono >= -GAIN_TOL else "fail", mono + GAIN_TOL),
        CheckResult("final |c - c_hat|", "pass" if gap < final_gap else "fail", final_gap - gap),
    ]


def convergence_check(
    trace: Trace,
    windows: Sequence[tuple[float, float, bool]] = DEFAULT_WINDOWS,
    threshold: float = 0.1,
) -> list[CheckResult]:
    """``max_i |x~_i| < threshold`` on each time window."""
    xt = estimation_error(trace)
    half = 0.5 * trace.dt
    out = []
    for a, b, closed in windows:
        name = f"estimation error < {threshold:g} on [{a:g}, {b:g}{']' if closed else ')'}"
        if trace.horizon + half < b:
            out.append(CheckResult(name, "not evaluable", detail=f"trace ends at {trace.horizon:g} s"))
            continue
        t = trace.times
        sel = (t >= a - half) & ((t <= b + half) if closed else (t < b - half))
        if not sel.any():
            out.append(CheckResult(name, "not evaluable", detail="no recorded samples in window"))
            continue
        worst = float(np.abs(xt[sel]).max())
        out.append(CheckResult(name, "pass" if worst < threshold else "fail", threshold - worst, f"max |x~| = {worst:.6g}"))
    return out


def verify(trace: Trace, windows=DEFAULT_WINDOWS, threshold: float = 0.1) -> list[CheckResult]:
    """Run every check; the run is accepted iff no result has status ``fail``."""
    stats = interval_stats(trace)
    results = convergence_check(trace, windows, threshold)
    results.append(interval_check(trace, stats))
    results.append(trigger_range_check(trace, stats))
    results.extend(gain_checks(trace))
    results.append(dissipation_check(trace))
    results.append(integral_check(trace))
    return results
