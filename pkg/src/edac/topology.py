"""Time-varying undirected communication graphs and their spectral quantities.

Agents are numbered ``1..n`` in the public API (as in scenario files) and
``0..n-1`` in every matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "TopologyError",
    "TopologyChange",
    "TimedTopology",
    "SpectralSummary",
    "graph_at",
    "laplacian",
    "jacobi_eigh",
    "lambda2",
    "laplacian_pseudoinverse",
    "components",
    "spectral_summary",
]

Edge = tuple[int, int]

JACOBI_TOL = 1e-12
ZERO_EIG_TOL = 1e-9


class TopologyError(ValueError):
    """Raised for malformed graphs or inconsistent change schedules."""


def _norm_edge(edge: Sequence[int]) -> Edge:
    i, j = int(edge[0]), int(edge[1])
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class TopologyChange:
    time: float
    edge: Edge
    action: str  # "add" | "remove"

    def __post_init__(self) -> None:
        if self.action not in ("add", "remove"):
            raise TopologyError(f"unknown change action {self.action!r}")
        if self.time < 0 or not math.isfinite(self.time):
            raise TopologyError(f"change time must be finite and >= 0, got {self.time}")
        object.__setattr__(self, "edge", _norm_edge(self.edge))


@dataclass(frozen=True)
class TimedTopology:
    """Undirected 0/1 graph on agents ``1..n`` with a schedule of link changes.

    Construction validates the whole schedule by replaying it, so any graph
    returned by :func:`graph_at` is well defined.
    """

    n: int
    base_edges: frozenset[Edge]
    changes: tuple[TopologyChange, ...] = ()

    def __init__(
        self,
        n: int,
        base_edges: Iterable[Sequence[int]],
        changes: Iterable[TopologyChange | tuple] = (),
    ) -> None:
        if n < 1:
            raise TopologyError(f"agent count must be >= 1, got {n}")
        edges = frozenset(_norm_edge(e) for e in base_edges)
        chs = [c if isinstance(c, TopologyChange) else TopologyChange(*c) for c in changes]
        chs.sort(key=lambda c: (c.time, c.edge))
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "base_edges", edges)
        object.__setattr__(self, "changes", tuple(chs))
        for e in list(edges) + [c.edge for c in chs]:
            self._check_edge(e)
        # replay once so bad schedules fail at construction
        current = set(edges)
        for c in chs:
            _apply(current, c)

    def _check_edge(self, edge: Edge) -> None:
        i, j = edge
        if i == j:
            raise TopologyError(f"self-loop on agent {i}")
        if not (1 <= i <= self.n and 1 <= j <= self.n):
            raise TopologyError(f"edge {edge} has an endpoint outside [1, {self.n}]")

    @property
    def all_edges(self) -> list[Edge]:
        """Every edge that is present at some time, sorted."""
        return sorted(set(self.base_edges) | {c.edge for c in self.changes})

    def edges_at(self, t: float) -> set[Edge]:
        if t < 0:
            raise TopologyError(f"t must be >= 0, got {t}")
        current = set(self.base_edges)
        for c in self.changes:
            if c.time > t:
                break
            _apply(current, c)
        return current

    def change_times(self) -> list[float]:
        return sorted({c.time for c in self.changes})


def _apply(current: set[Edge], change: TopologyChange) -> None:
    if change.action == "remove":
        if change.edge not in current:
            raise TopologyError(f"t={change.time}: cannot remove absent edge {change.edge}")
        current.remove(change.edge)
    else:
        if change.edge in current:
            raise TopologyError(f"t={change.time}: cannot add present edge {change.edge}")
        current.add(change.edge)


def adjacency_from_edges(n: int, edges: Iterable[Edge]) -> np.ndarray:
    adj = np.zeros((n, n), dtype=np.int64)
    for i, j in edges:
        adj[i - 1, j - 1] = adj[j - 1, i - 1] = 1
    return adj


def graph_at(topology: TimedTopology, t: float) -> np.ndarray:
    """Adjacency matrix with every change scheduled at or before ``t`` applied."""
    return adjacency_from_edges(topology.n, topology.edges_at(t))


def laplacian(adjacency: np.ndarray) -> np.ndarray:
    adj = np.asarray(adjacency)
    # row sums are exact in integer arithmetic, cast afterwards
    lap = np.diag(adj.sum(axis=1)) - adj
    return lap.astype(float)


def _check_symmetric(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12):
        raise ValueError("matrix is not symmetric")
    return a


def jacobi_eigh(a: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues ascending and
    eigenvectors in the columns, like :func:`numpy.linalg.eigh`. Sweeps stop
    once the off-diagonal Frobenius norm drops below ``tol``.
    """
    a = _check_symmetric(a).copy()
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                # Rutishauser's stable form of the rotation angle
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise ArithmeticError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def lambda2(lap: np.ndarray) -> float:
    """Algebraic connectivity: second-smallest Laplacian eigenvalue.

    Zero for disconnected graphs. A single agent has no second eigenvalue and
    yields 0.0.
    """
    lap = _check_symmetric(lap)
    if lap.shape[0] < 2:
        return 0.0
    w, _ = jacobi_eigh(lap)
    val = float(w[1])
    return 0.0 if abs(val) < ZERO_EIG_TOL else val


def laplacian_pseudoinverse(lap: np.ndarray) -> np.ndarray:
    """Moore-Penrose inverse through the eigen-decomposition."""
    lap = _check_symmetric(lap)
    if lap.size == 0:
        return lap.copy()
    w, v = jacobi_eigh(lap)
    inv = np.array([0.0 if abs(x) < ZERO_EIG_TOL else 1.0 / x for x in w])
    return (v * inv) @ v.T


def components(adjacency: np.ndarray) -> list[list[int]]:
    """Connected components as sorted lists of 1-based agent ids."""
    adj = np.asarray(adjacency)
    n = adj.shape[0]
    seen = [False] * n
    parts: list[list[int]] = []
    for start in range(n):
        if seen[start]:
            continue
        seen[start] = True
        stack, comp = [start], []
        while stack:
            i = stack.pop()
            comp.append(i + 1)
            for j in np.flatnonzero(adj[i]):
                if not seen[j]:
                    seen[j] = True
                    stack.append(int(j))
        parts.append(sorted(comp))
    parts.sort(key=lambda c: c[0])
    return parts


@dataclass(frozen=True)
class SpectralSummary:
    laplacian: np.ndarray
    lambda2: float
    pseudoinverse: np.ndarray
    components: list[list[int]] = field(default_factory=list)

    @property
    def connected(self) -> bool:
        return len(self.components) == 1


def spectral_summary(adjacency: np.ndarray) -> SpectralSummary:
    lap = laplacian(adjacency)
    return SpectralSummary(
        laplacian=lap,
        lambda2=lambda2(lap),
        pseudoinverse=laplacian_pseudoinverse(lap),
        components=components(adjacency),
    )


def averaging_projector(n: int) -> np.ndarray:
    """``I - (1/n) 1 1^T``, the projector onto the disagreement subspace."""
    return np.eye(n) - np.full((n, n), 1.0 / n)
