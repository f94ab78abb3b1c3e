"""Reference signals, their derivatives, group averages and uniform bounds."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

__all__ = [
    "Sinusoid",
    "Constant",
    "PiecewiseLinear",
    "ReferenceSignal",
    "SignalBounds",
    "group_average",
    "bound_estimate",
    "evaluate_all",
]

EPS_FLOOR = 1e-12
PWL_INFLATION = 1.05


def _scalar_in_scalar_out(fn):
    @functools.wraps(fn)
    def wrapper(self, t):
        out = fn(self, t)
        return float(out) if np.ndim(t) == 0 else out

    return wrapper


@dataclass(frozen=True)
class Sinusoid:
    """``amplitude * sin(frequency * t)`` or the cosine counterpart."""

    amplitude: float
    frequency: float
    phase: str = "sin"

    def __post_init__(self) -> None:
        if self.phase not in ("sin", "cos"):
            raise ValueError(f"phase must be 'sin' or 'cos', got {self.phase!r}")

    @_scalar_in_scalar_out
    def eval(self, t):
        fn = np.sin if self.phase == "sin" else np.cos
        return self.amplitude * fn(self.frequency * np.asarray(t, dtype=float))

    @_scalar_in_scalar_out
    def eval_derivative(self, t):
        t = np.asarray(t, dtype=float)
        ab = self.amplitude * self.frequency
        if self.phase == "sin":
            return ab * np.cos(self.frequency * t)
        return -ab * np.sin(self.frequency * t)


@dataclass(frozen=True)
class Constant:
    value: float

    @_scalar_in_scalar_out
    def eval(self, t):
        return np.full(np.shape(t), float(self.value))

    @_scalar_in_scalar_out
    def eval_derivative(self, t):
        return np.zeros(np.shape(t))


@dataclass(frozen=True)
class PiecewiseLinear:
    """Linear interpolation through ``(time, value)`` knots.

    The derivative at a knot is the slope of the segment to its right; at the
    last knot it is the slope of the final segment.
    """

    knots: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        knots = tuple((float(a), float(b)) for a, b in self.knots)
        if len(knots) < 2:
            raise ValueError("piecewise-linear signal needs at least two knots")
        times = [k[0] for k in knots]
        if times[0] != 0.0:
            raise ValueError("first knot must be at t = 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("knot times must be strictly increasing")
        object.__setattr__(self, "knots", knots)

    @property
    def end(self) -> float:
        return self.knots[-1][0]

    def _check(self, t: np.ndarray) -> None:
        if np.any(t < 0) or np.any(t > self.end):
            raise ValueError(f"t outside piecewise-linear domain [0, {self.end}]")

    @_scalar_in_scalar_out
    def eval(self, t):
        t = np.asarray(t, dtype=float)
        self._check(t)
        xs, ys = zip(*self.knots)
        return np.interp(t, xs, ys)

    @_scalar_in_scalar_out
    def eval_derivative(self, t):
        t = np.asarray(t, dtype=float)
        self._check(t)
        xs = np.array([k[0] for k in self.knots])
        ys = np.array([k[1] for k in self.knots])
        slopes = np.diff(ys) / np.diff(xs)
        seg = np.clip(np.searchsorted(xs, t, side="right") - 1, 0, len(slopes) - 1)
        return slopes[seg]


ReferenceSignal = Union[Sinusoid, Constant, PiecewiseLinear]


@dataclass(frozen=True)
class SignalBounds:
    eps1: float
    eps2: float


def group_average(signals: Sequence[ReferenceSignal], agent_set: Sequence[int], t: float) -> float:
    """Mean of the signals of ``agent_set`` (1-based ids) at time ``t``."""
    if len(agent_set) == 0:
        raise ValueError("agent_set must be nonempty")
    return math.fsum(float(signals[i - 1].eval(t)) for i in agent_set) / len(agent_set)


def evaluate_all(signals: Sequence[ReferenceSignal], times: np.ndarray) -> np.ndarray:
    """Values of every signal on a time grid, shape ``(len(times), n)``."""
    times = np.asarray(times, dtype=float)
    return np.stack([np.asarray(s.eval(times), dtype=float) for s in signals], axis=-1)


def bound_estimate(signals: Sequence[ReferenceSignal], horizon: float, dt: float = 1e-4) -> SignalBounds:
    """Uniform bounds on ``|r_i|`` and ``|dr_i/dt|`` over ``[0, horizon]``.

    Closed-form kinds give exact bounds. Piecewise-linear signals are sampled
    at ``dt`` resolution (plus every knot) and inflated by 5%.
    """
    eps1 = eps2 = 0.0
    for s in signals:
        if isinstance(s, Sinusoid):
            b1, b2 = abs(s.amplitude), abs(s.amplitude * s.frequency)
        elif isinstance(s, Constant):
            b1, b2 = abs(s.value), 0.0
        elif isinstance(s, PiecewiseLinear):
            if horizon > s.end:
                raise ValueError(f"piecewise-linear signal ends at {s.end} < horizon {horizon}")
            grid = np.arange(0.0, horizon + dt / 2, dt)
            grid = np.union1d(np.clip(grid, 0.0, horizon), [k[0] for k in s.knots if k[0] <= horizon])
            b1 = PWL_INFLATION * float(np.max(np.abs(s.eval(grid))))
            b2 = PWL_INFLATION * float(np.max(np.abs(s.eval_derivative(grid))))
        else:
            raise TypeError(f"unsupported signal kind {type(s).__name__}")
        eps1, eps2 = max(eps1, b1), max(eps2, b2)
    return SignalBounds(max(eps1, EPS_FLOOR), max(eps2, EPS_FLOOR))
