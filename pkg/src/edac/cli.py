"""Command-line entry point: ``edac run | stats | verify | export-plots``.

Exit codes: 0 success, 1 usage or parse error, 2 numerical abort,
3 verification failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .fileio import ScenarioFileError, load_scenario, read_trace, write_trace
from .signals import evaluate_all
from .sim import Engine, SimulationError

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("edac")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with 2, which means numerical abort here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _window(text: str) -> tuple[float, float, bool]:
    """``a:b`` for ``[a, b)`` or ``a:b]`` for ``[a, b]``."""
    closed = text.endswith("]")
    try:
        a, b = text.rstrip("]").split(":")
        return float(a), float(b), closed
    except ValueError:
        raise argparse.ArgumentTypeError(f"window must look like 5:6 or 11:12], got {text!r}") from None


def cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except (ScenarioFileError, FileNotFoundError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.record_every is not None:
        overrides["record_every"] = args.record_every
    if args.horizon is not None:
        overrides["horizon"] = args.horizon
    try:
        scenario = dataclasses.replace(scenario, **overrides)
        engine = Engine(scenario)
    except ValueError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_USAGE
    log.info("running %s: %d steps of %g s", scenario.name, engine.n_steps, scenario.dt)
    try:
        trace = engine.run()
    except SimulationError as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out = write_trace(trace, args.out)
    print(f"wrote trace to {out} ({len(trace.steps)} rows, {len(trace.event_step)} events)")
    return EXIT_OK


def _load(path) -> "analysis.Trace | None":
    try:
        return read_trace(path)
    except (FileNotFoundError, ScenarioFileError) as exc:
        print(exc, file=sys.stderr)
        return None


def format_stats(stats: analysis.IntervalStats, edges) -> str:
    def fmt(v):
        return "n/a" if math.isnan(v) else f"{v * 1e4:.1f}"

    lines = [
        f"{'agent':>5} {'low[1e-4 s]':>12} {'min[1e-4 s]':>12} {'total':>7} {'eta_bar':>12} {'e_bar':>10}",
    ]
    for k, (a, low, mn, tot) in enumerate(stats.rows()):
        lines.append(f"{a:>5} {fmt(low):>12} {fmt(mn):>12} {tot:>7} {stats.eta_bar[k]:>12.6g} {stats.e_bar[k]:>10.6g}")
    lines.append("gain suprema c_bar: " + ", ".join(f"{i}-{j}={c:.6g}" for (i, j), c in zip(edges, stats.c_bar)))
    return "\n".join(lines)


def cmd_stats(args) -> int:
    trace = _load(args.trace)
    if trace is None:
        return EXIT_USAGE
    stats = analysis.interval_stats(trace)
    print(format_stats(stats, trace.edges))
    return EXIT_OK


def cmd_verify(args) -> int:
    trace = _load(args.trace)
    if trace is None:
        return EXIT_USAGE
    windows = args.window or analysis.DEFAULT_WINDOWS
    results = analysis.verify(trace, windows=windows, threshold=args.threshold)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_VERIFY


def _csv(path: Path, header: list[str], cols) -> None:
    table = np.column_stack(cols)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, table, fmt="%.12g", delimiter=",")


def cmd_export_plots(args) -> int:
    trace = _load(args.trace)
    if trace is None:
        return EXIT_USAGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t, n = trace.times, trace.n
    r = evaluate_all(trace.scenario.signals, t)

    # group averages as seen by each final subgroup (whole-graph average before a split)
    segs = analysis.segments(trace)
    groups = segs[-1].components
    rbar = np.empty((len(t), len(groups)))
    for k, seg in enumerate(segs):
        rows = seg.rows(trace, include_end=k == len(segs) - 1)
        for g, grp in enumerate(groups):
            comp = next(c for c in seg.components if grp[0] in c)
            rbar[rows, g] = r[rows][:, np.asarray(comp) - 1].mean(axis=1)
    gnames = [f"rbar_{g + 1}" for g in range(len(groups))]
    agents = [f"{i + 1}" for i in range(n)]

    _csv(out / "fig3_references.csv", ["time"] + [f"r_{a}" for a in agents] + gnames, [t, r, rbar])
    _csv(out / "fig4_estimates.csv", ["time"] + [f"x_{a}" for a in agents] + gnames, [t, trace.x, rbar])
    _csv(out / "fig5_errors.csv", ["time"] + [f"xtilde_{a}" for a in agents], [t, analysis.estimation_error(trace)])
    gh = []
    for i, j in trace.edges:
        gh += [f"c_{i}-{j}", f"chat_{i}-{j}"]
    gains = np.empty((len(t), 2 * len(trace.edges)))
    gains[:, 0::2], gains[:, 1::2] = trace.c, trace.c_hat
    _csv(out / "fig6_gains.csv", ["time"] + gh, [t, gains])

    changed = sorted({a for ch in trace.changes for a in ch["edge"]}) or list(range(1, n + 1))
    sel = t >= trace.horizon - 1.0
    _csv(
        out / "fig7_trigger.csv",
        ["time"] + [f"f_{a}" for a in changed],
        [t[sel], trace.f[sel][:, np.asarray(changed) - 1]],
    )
    (out / "groups.txt").write_text(
        "\n".join(f"{name}: agents {list(g)}" for name, g in zip(gnames, groups)) + "\n"
    )
    print(f"wrote figure data to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="edac", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="simulate a scenario and write a trace directory")
    r.add_argument("--scenario", required=True, help="scenario file or bundled name (paper_sec4, two_agent_oracle, quiescent)")
    r.add_argument("--out", required=True, help="output trace directory")
    r.add_argument("--seed", type=int)
    r.add_argument("--record-every", type=int)
    r.add_argument("--horizon", type=float)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("stats", help="per-agent inter-event statistics")
    s.add_argument("trace")
    s.set_defaults(func=cmd_stats)

    v = sub.add_parser("verify", help="run every convergence, triggering and Lyapunov check")
    v.add_argument("trace")
    v.add_argument("--threshold", type=float, default=0.1)
    v.add_argument("--window", type=_window, action="append", help="a:b for [a,b), a:b] for [a,b]; repeatable")
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("export-plots", help="write per-figure CSV files")
    e.add_argument("trace")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_export_plots)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
