"""Scenario files (YAML) and trace directories (CSV + JSON header)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .consensus import AlgorithmParams
from .signals import Constant, PiecewiseLinear, Sinusoid
from .sim import PRNG_ID, GainConfig, Scenario, Trace, Uniform
from .topology import TimedTopology, TopologyChange, TopologyError
from .trigger import TriggerParams

__all__ = [
    "ScenarioFileError",
    "parse_scenario",
    "load_scenario",
    "scenario_to_dict",
    "dump_scenario",
    "bundled_scenarios",
    "write_trace",
    "read_trace",
]

FLOAT_FMT = "%.12g"
TRACE_FORMAT = 1


@dataclass(frozen=True)
class Problem:
    path: str
    line: int | None
    message: str

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line else ""
        return f"{where}{self.path or '<root>'}: {self.message}"


class ScenarioFileError(ValueError):
    def __init__(self, problems: list[Problem], source: str = "<scenario>") -> None:
        self.problems = problems
        self.source = source
        super().__init__(f"{source}: invalid scenario\n" + "\n".join(f"  {p}" for p in problems))


# -- parsing -------------------------------------------------------------------


def _line_map(node, path=(), out=None) -> dict[tuple, int]:
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            out[path + (k.value,)] = k.start_mark.line + 1
            _line_map(v, path + (k.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, path + (i,), out)
    return out


class _Reader:
    """Typed access into the raw document that accumulates located problems."""

    def __init__(self, lines: dict[tuple, int]) -> None:
        self.lines = lines
        self.problems: list[Problem] = []

    def fail(self, path: tuple, message: str) -> None:
        line = None
        for k in range(len(path), -1, -1):
            line = self.lines.get(path[:k])
            if line is not None:
                break
        self.problems.append(Problem(".".join(str(p) for p in path), line, message))

    def mapping(self, value, path, allowed: set[str], required: set[str] = frozenset()) -> dict:
        if not isinstance(value, dict):
            self.fail(path, f"expected a mapping, got {type(value).__name__}")
            return {}
        for k in value:
            if k not in allowed:
                self.fail(path + (k,), f"unknown key {k!r}")
        for k in sorted(required - set(value)):
            self.fail(path, f"missing key {k!r}")
        return value

    def number(self, value, path, *, integer: bool = False, default=None):
        if value is None:
            if default is None:
                self.fail(path, "missing value")
            return default
        if isinstance(value, bool):
            self.fail(path, "expected a number, got a boolean")
            return default
        if isinstance(value, str):
            # YAML 1.1 reads exponent forms like 1e-4 as strings
            try:
                value = float(value)
            except ValueError:
                self.fail(path, f"expected a number, got {value!r}")
                return default
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            self.fail(path, f"expected a finite number, got {value!r}")
            return default
        if integer:
            if float(value) != int(value):
                self.fail(path, f"expected an integer, got {value!r}")
                return default
            return int(value)
        return float(value)

    def edge(self, value, path):
        if not (isinstance(value, (list, tuple)) and len(value) == 2):
            self.fail(path, f"expected an edge [i, j], got {value!r}")
            return None
        i, j = (self.number(v, path + (k,), integer=True) for k, v in enumerate(value))
        if i is None or j is None:
            return None
        return (i, j) if i < j else (j, i)

    def spec(self, value, path):
        """Scalar or ``{uniform: [low, high]}``."""
        if isinstance(value, dict):
            self.mapping(value, path, {"uniform"}, {"uniform"})
            rng = value.get("uniform")
            if not (isinstance(rng, (list, tuple)) and len(rng) == 2):
                self.fail(path + ("uniform",), "expected [low, high]")
                return None
            lo, hi = (self.number(v, path + ("uniform", k)) for k, v in enumerate(rng))
            if lo is None or hi is None:
                return None
            if lo > hi:
                self.fail(path + ("uniform",), f"low {lo} > high {hi}")
                return None
            return Uniform(lo, hi)
        return self.number(value, path)


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    """Parse and validate a YAML scenario document."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ScenarioFileError([Problem("", line, f"YAML syntax error: {getattr(exc, 'problem', exc)}")], source) from None
    lines = _line_map(node) if node is not None else {}
    return scenario_from_dict(data, source=source, lines=lines)


def load_scenario(path_or_name: str | Path) -> Scenario:
    """Read a scenario file, or a bundled scenario by name."""
    p = Path(path_or_name)
    if p.is_file():
        return parse_scenario(p.read_text(), source=str(p))
    bundled = bundled_scenarios()
    if str(path_or_name) in bundled:
        return parse_scenario(bundled[str(path_or_name)], source=f"bundled:{path_or_name}")
    raise FileNotFoundError(f"no scenario file or bundled scenario named {str(path_or_name)!r}")


def bundled_scenarios() -> dict[str, str]:
    root = resources.files("edac") / "scenarios"
    return {f.name[:-5]: f.read_text() for f in root.iterdir() if f.name.endswith(".yaml")}


_TOP = {"name", "agents", "topology", "signals", "algorithm", "trigger", "gains", "sim"}


def scenario_from_dict(data: Any, source: str = "<scenario>", lines: dict | None = None) -> Scenario:
    rd = _Reader(lines or {})
    doc = rd.mapping(data, (), _TOP, _TOP - {"name"})
    if rd.problems and not doc:
        raise ScenarioFileError(rd.problems, source)

    agents = rd.mapping(doc.get("agents"), ("agents",), {"count", "z0"}, {"count"})
    n = rd.number(agents.get("count"), ("agents", "count"), integer=True, default=0)
    if n is not None and n < 1:
        rd.fail(("agents", "count"), "must be >= 1")
        n = 0
    z0_raw = agents.get("z0", 0.0)
    if isinstance(z0_raw, list):
        z0 = tuple(rd.number(v, ("agents", "z0", k), default=0.0) for k, v in enumerate(z0_raw))
        if len(z0) != n:
            rd.fail(("agents", "z0"), f"expected {n} values, got {len(z0)}")
    else:
        z0 = rd.spec(z0_raw, ("agents", "z0"))

    topo = rd.mapping(doc.get("topology"), ("topology",), {"edges", "changes"}, {"edges"})
    edges = [rd.edge(e, ("topology", "edges", k)) for k, e in enumerate(topo.get("edges") or [])]
    changes = []
    for k, ch in enumerate(topo.get("changes") or []):
        path = ("topology", "changes", k)
        ch = rd.mapping(ch, path, {"time", "edge", "action"}, {"time", "edge", "action"})
        t = rd.number(ch.get("time"), path + ("time",))
        e = rd.edge(ch.get("edge"), path + ("edge",))
        action = ch.get("action")
        if action not in ("add", "remove"):
            rd.fail(path + ("action",), f"expected 'add' or 'remove', got {action!r}")
        elif t is not None and e is not None:
            changes.append(TopologyChange(t, e, action))
    topology = None
    if not rd.problems:
        try:
            topology = TimedTopology(n, [e for e in edges if e], changes)
        except TopologyError as exc:
            rd.fail(("topology",), str(exc))

    signals = _signals(rd, doc.get("signals"), n)

    alg = rd.mapping(doc.get("algorithm"), ("algorithm",), {"gamma", "mu1", "mu2"}, {"gamma", "mu1", "mu2"})
    params = None
    vals = [rd.number(alg.get(k), ("algorithm", k)) for k in ("gamma", "mu1", "mu2")]
    if None not in vals:
        try:
            params = AlgorithmParams(*vals)
        except ValueError as exc:
            rd.fail(("algorithm",), str(exc))

    trigger = _trigger(rd, doc.get("trigger"), n)

    g = rd.mapping(doc.get("gains"), ("gains",), {"sigma", "nu", "c0", "c_hat0"}, {"sigma", "nu", "c0", "c_hat0"})
    gains = None
    sigma = rd.number(g.get("sigma"), ("gains", "sigma"))
    nu = rd.number(g.get("nu"), ("gains", "nu"))
    c0 = _edge_spec(rd, g.get("c0"), ("gains", "c0"))
    c_hat0 = _edge_spec(rd, g.get("c_hat0"), ("gains", "c_hat0"))
    if None not in (sigma, nu, c0, c_hat0):
        try:
            gains = GainConfig(sigma, nu, c0, c_hat0)
        except ValueError as exc:
            rd.fail(("gains",), str(exc))

    s = rd.mapping(doc.get("sim"), ("sim",), {"dt", "horizon", "seed", "record_every"}, {"dt", "horizon"})
    dt = rd.number(s.get("dt"), ("sim", "dt"))
    horizon = rd.number(s.get("horizon"), ("sim", "horizon"))
    seed = rd.number(s.get("seed"), ("sim", "seed"), integer=True, default=0)
    record_every = rd.number(s.get("record_every"), ("sim", "record_every"), integer=True, default=10)
    name = doc.get("name", "scenario")
    if not isinstance(name, str):
        rd.fail(("name",), "expected a string")

    if rd.problems:
        raise ScenarioFileError(rd.problems, source)
    try:
        return Scenario(
            topology=topology,
            signals=tuple(signals),
            params=params,
            trigger=tuple(trigger),
            gains=gains,
            z0=z0,
            dt=dt,
            horizon=horizon,
            seed=seed,
            record_every=record_every,
            name=name,
        )
    except ValueError as exc:
        raise ScenarioFileError([Problem("", None, str(exc))], source) from None


def _signal(rd: _Reader, raw, path):
    kind = raw.get("kind") if isinstance(raw, dict) else None
    if kind in ("sin", "cos"):
        rd.mapping(raw, path, {"kind", "amplitude", "frequency"}, {"kind", "amplitude", "frequency"})
        a = rd.number(raw.get("amplitude"), path + ("amplitude",))
        b = rd.number(raw.get("frequency"), path + ("frequency",))
        return Sinusoid(a, b, kind) if None not in (a, b) else None
    if kind == "constant":
        rd.mapping(raw, path, {"kind", "value"}, {"kind", "value"})
        v = rd.number(raw.get("value"), path + ("value",))
        return Constant(v) if v is not None else None
    if kind == "piecewise_linear":
        rd.mapping(raw, path, {"kind", "knots"}, {"kind", "knots"})
        knots = []
        for k, kn in enumerate(raw.get("knots") or []):
            if not (isinstance(kn, list) and len(kn) == 2):
                rd.fail(path + ("knots", k), "expected [time, value]")
                continue
            knots.append(tuple(rd.number(v, path + ("knots", k, q)) for q, v in enumerate(kn)))
        try:
            return PiecewiseLinear(tuple(knots))
        except (ValueError, TypeError) as exc:
            rd.fail(path + ("knots",), str(exc))
            return None
    rd.fail(path + ("kind",), f"expected one of sin, cos, constant, piecewise_linear; got {kind!r}")
    return None


def _signals(rd: _Reader, raw, n: int) -> list:
    if isinstance(raw, dict):
        # one mapping shared by every agent
        sig = _signal(rd, raw, ("signals",))
        return [sig] * n
    if not isinstance(raw, list):
        rd.fail(("signals",), "expected a list of per-agent signals or a single signal mapping")
        return []
    if len(raw) != n:
        rd.fail(("signals",), f"expected {n} signals, got {len(raw)}")
    return [_signal(rd, s, ("signals", k)) for k, s in enumerate(raw)]


_TRIG = ("f_bar", "delta", "alpha", "beta")


def _trigger_one(rd: _Reader, raw, path):
    raw = rd.mapping(raw, path, set(_TRIG), set(_TRIG))
    vals = [rd.number(raw.get(k), path + (k,)) for k in _TRIG]
    if None in vals:
        return None
    try:
        return TriggerParams(*vals)
    except ValueError as exc:
        rd.fail(path, str(exc))
        return None


def _trigger(rd: _Reader, raw, n: int) -> list:
    if isinstance(raw, list):
        if len(raw) != n:
            rd.fail(("trigger",), f"expected {n} per-agent entries, got {len(raw)}")
        return [_trigger_one(rd, t, ("trigger", k)) for k, t in enumerate(raw)]
    return [_trigger_one(rd, raw, ("trigger",))] * n


def _edge_spec(rd: _Reader, raw, path):
    if isinstance(raw, dict) and "per_edge" in raw:
        rd.mapping(raw, path, {"per_edge"})
        out = {}
        for k, item in enumerate(raw["per_edge"] or []):
            item = rd.mapping(item, path + ("per_edge", k), {"edge", "value"}, {"edge", "value"})
            e = rd.edge(item.get("edge"), path + ("per_edge", k, "edge"))
            v = rd.number(item.get("value"), path + ("per_edge", k, "value"))
            if e is not None and v is not None:
                out[e] = v
        return out
    return rd.spec(raw, path)


# -- serialization -------------------------------------------------------------


def _spec_out(spec):
    if isinstance(spec, Uniform):
        return {"uniform": [spec.low, spec.high]}
    if isinstance(spec, dict):
        return {"per_edge": [{"edge": list(e), "value": v} for e, v in sorted(spec.items())]}
    return float(spec)


def _signal_out(s) -> dict:
    if isinstance(s, Sinusoid):
        return {"kind": s.phase, "amplitude": s.amplitude, "frequency": s.frequency}
    if isinstance(s, Constant):
        return {"kind": "constant", "value": s.value}
    return {"kind": "piecewise_linear", "knots": [list(k) for k in s.knots]}


def scenario_to_dict(sc: Scenario) -> dict:
    z0 = list(sc.z0) if isinstance(sc.z0, tuple) else _spec_out(sc.z0)
    trig = [{"f_bar": p.f_bar, "delta": p.delta, "alpha": p.alpha, "beta": p.beta} for p in sc.trigger]
    return {
        "name": sc.name,
        "agents": {"count": sc.n, "z0": z0},
        "topology": {
            "edges": [list(e) for e in sorted(sc.topology.base_edges)],
            "changes": [{"time": c.time, "edge": list(c.edge), "action": c.action} for c in sc.topology.changes],
        },
        "signals": [_signal_out(s) for s in sc.signals],
        "algorithm": {"gamma": sc.params.gamma, "mu1": sc.params.mu1, "mu2": sc.params.mu2},
        "trigger": trig[0] if all(t == trig[0] for t in trig) else trig,
        "gains": {
            "sigma": sc.gains.sigma,
            "nu": sc.gains.nu,
            "c0": _spec_out(sc.gains.c0),
            "c_hat0": _spec_out(sc.gains.c_hat0),
        },
        "sim": {"dt": sc.dt, "horizon": sc.horizon, "seed": sc.seed, "record_every": sc.record_every},
    }


def dump_scenario(sc: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(sc), sort_keys=False, default_flow_style=None)


# -- traces --------------------------------------------------------------------


def _write_csv(path: Path, header: list[str], cols: list[np.ndarray], fmts: list[str]) -> None:
    table = np.column_stack(cols) if cols else np.empty((0, 0))
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        if len(table):
            np.savetxt(fh, table, fmt=fmts, delimiter=",")


def write_trace(trace: Trace, out_dir: str | Path) -> Path:
    """Write ``agents.csv``, ``gains.csv``, ``events.csv`` and ``meta.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = trace.n

    header = ["step", "time"]
    cols = [trace.steps, trace.times]
    for i in range(n):
        for name, arr in (("z", trace.z), ("x", trace.x), ("xhat", trace.x_hat), ("e", trace.e), ("f", trace.f), ("xtilde", trace.x_tilde)):
            header.append(f"{name}_{i + 1}")
            cols.append(arr[:, i])
    _write_csv(out / "agents.csv", header, cols, ["%d"] + [FLOAT_FMT] * (len(cols) - 1))

    header = ["step", "time"]
    cols = [trace.steps, trace.times]
    for k, (i, j) in enumerate(trace.edges):
        header += [f"c_{i}-{j}", f"chat_{i}-{j}"]
        cols += [trace.c[:, k], trace.c_hat[:, k]]
    _write_csv(out / "gains.csv", header, cols, ["%d"] + [FLOAT_FMT] * (len(cols) - 1))

    _write_csv(
        out / "events.csv",
        ["agent", "step", "time", "f_before"],
        [trace.event_agent, trace.event_step, trace.event_time, trace.event_f_before],
        ["%d", "%d", FLOAT_FMT, FLOAT_FMT],
    )

    meta = {
        "format": TRACE_FORMAT,
        "n": n,
        "edges": [list(e) for e in trace.edges],
        "dt": trace.dt,
        "record_every": trace.record_every,
        "prng": trace.meta.get("prng", PRNG_ID),
        "seed": trace.meta.get("seed"),
        "n_steps": trace.meta.get("n_steps"),
        "draws": trace.meta.get("draws"),
        "suprema": trace.suprema,
        "changes": trace.changes,
        "scenario": scenario_to_dict(trace.scenario) if trace.scenario else None,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out


def _read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        body = np.loadtxt(fh, delimiter=",", ndmin=2)
    if body.size == 0:
        body = np.empty((0, len(header)))
    return header, body


def read_trace(trace_dir: str | Path) -> Trace:
    d = Path(trace_dir)
    if not (d / "meta.json").is_file():
        raise FileNotFoundError(f"{d}: no meta.json (not a trace directory)")
    if not (d / "events.csv").is_file():
        raise FileNotFoundError(f"{d}: missing event log events.csv")
    meta = json.loads((d / "meta.json").read_text())
    n = int(meta["n"])
    edges = [tuple(e) for e in meta["edges"]]

    _, a = _read_csv(d / "agents.csv")
    steps = a[:, 0].astype(np.int64)
    per = a[:, 2:].reshape(len(steps), n, 6)
    _, g = _read_csv(d / "gains.csv")
    gg = g[:, 2:].reshape(len(steps), len(edges), 2)
    _, ev = _read_csv(d / "events.csv")

    scenario = scenario_from_dict(meta["scenario"], source=str(d / "meta.json")) if meta.get("scenario") else None
    return Trace(
        n=n,
        edges=edges,
        dt=float(meta["dt"]),
        record_every=int(meta["record_every"]),
        steps=steps,
        times=a[:, 1],
        z=per[:, :, 0],
        x=per[:, :, 1],
        x_hat=per[:, :, 2],
        e=per[:, :, 3],
        f=per[:, :, 4],
        x_tilde=per[:, :, 5],
        c=gg[:, :, 0],
        c_hat=gg[:, :, 1],
        event_agent=ev[:, 0].astype(np.int64),
        event_step=ev[:, 1].astype(np.int64),
        event_time=ev[:, 2],
        event_f_before=ev[:, 3],
        changes=meta["changes"],
        suprema=meta["suprema"],
        meta={k: meta.get(k) for k in ("prng", "seed", "n_steps", "draws")},
        scenario=scenario,
    )
