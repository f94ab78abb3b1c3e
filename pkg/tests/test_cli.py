from __future__ import annotations

import json

import numpy as np
import pytest

from edac import analysis
from edac.cli import main
from edac.fileio import (
    ScenarioFileError,
    bundled_scenarios,
    dump_scenario,
    load_scenario,
    parse_scenario,
    read_trace,
    write_trace,
)
from edac.sim import resolve, run

GOOD = """\
name: tiny
agents: {count: 2, z0: [0.5, -0.5]}
topology: {edges: [[1, 2]]}
signals:
  - {kind: sin, amplitude: 1.0, frequency: 2.0}
  - {kind: piecewise_linear, knots: [[0, 0], [1, 1]]}
algorithm: {gamma: 1.0, mu1: 1.0, mu2: 0.1}
trigger: {f_bar: 0.02, delta: 1.0, alpha: 0.5, beta: 2.0}
gains: {sigma: 2.0, nu: 1.0, c0: {uniform: [3, 4]}, c_hat0: 2.0}
sim: {dt: 1e-3, horizon: 0.2, seed: 3, record_every: 5}
"""


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.yaml"
    p.write_text(GOOD)
    return p


def test_bundled_scenarios_load():
    names = set(bundled_scenarios())
    assert {"paper_sec4", "two_agent_oracle", "quiescent"} <= names
    for name in names:
        load_scenario(name)


def test_paper_scenario_contents(paper_scenario):
    sc = paper_scenario
    assert sc.n == 8 and sc.dt == 1e-4 and sc.horizon == 12.0
    assert [(c.time, c.edge, c.action) for c in sc.topology.changes] == [
        (6.0, (2, 7), "remove"),
        (6.0, (4, 5), "remove"),
    ]
    p = sc.trigger[0]
    assert (p.f_bar, p.delta, p.alpha, p.beta) == (10.0, 1.0, 0.01, 100.0)
    assert (sc.params.gamma, sc.params.mu1, sc.params.mu2) == (1.0, 1.0, 0.01)


def test_round_trip_is_identity(tiny):
    sc = load_scenario(tiny)
    again = parse_scenario(dump_scenario(sc))
    assert again == sc
    a, b = resolve(sc), resolve(again)
    np.testing.assert_array_equal(a.c0, b.c0)
    np.testing.assert_array_equal(a.z0, b.z0)
    for name in bundled_scenarios():
        sc = load_scenario(name)
        assert parse_scenario(dump_scenario(sc)) == sc


def test_malformed_file_reports_lines(tmp_path):
    bad = GOOD.replace("gamma: 1.0", "gamma: fast").replace("name: tiny", "name: tiny\ncolour: red")
    with pytest.raises(ScenarioFileError) as info:
        parse_scenario(bad)
    text = str(info.value)
    assert "line 2" in text and "colour" in text
    assert "algorithm.gamma" in text and "line 8" in text


def test_yaml_syntax_error_has_line():
    with pytest.raises(ScenarioFileError) as info:
        parse_scenario("agents: [1, 2\nsim: {}\n")
    assert "line" in str(info.value)


def test_trace_round_trip(tiny, tmp_path):
    tr = run(load_scenario(tiny))
    out = write_trace(tr, tmp_path / "tr")
    assert {p.name for p in out.iterdir()} == {"agents.csv", "gains.csv", "events.csv", "meta.json"}
    back = read_trace(out)
    np.testing.assert_allclose(back.x, tr.x, rtol=1e-11, atol=1e-12)
    np.testing.assert_array_equal(back.event_step, tr.event_step)
    assert back.scenario == tr.scenario
    meta = json.loads((out / "meta.json").read_text())
    assert meta["prng"] == "numpy.random.PCG64" and meta["seed"] == 3
    # checks give the same verdicts on the reloaded trace
    assert [r.status for r in analysis.verify(back)] == [r.status for r in analysis.verify(tr)]


def test_run_stats_verify_export(tiny, tmp_path, capsys):
    out = tmp_path / "trace"
    assert main(["run", "--scenario", str(tiny), "--out", str(out)]) == 0
    assert main(["stats", str(out)]) == 0
    table = capsys.readouterr().out
    assert len([ln for ln in table.splitlines() if ln.strip()[:1].isdigit()]) == 2
    assert main(["verify", str(out), "--window", "0.1:0.2]"]) in (0, 3)
    assert main(["export-plots", str(out), "--out", str(tmp_path / "figs")]) == 0
    names = {p.name for p in (tmp_path / "figs").iterdir()}
    assert {"fig3_references.csv", "fig4_estimates.csv", "fig5_errors.csv", "fig6_gains.csv", "fig7_trigger.csv"} <= names


def test_stats_reports_na_for_single_event(tmp_path, capsys):
    out = tmp_path / "q"
    assert main(["run", "--scenario", "quiescent", "--out", str(out), "--horizon", "0.05"]) == 0
    capsys.readouterr()
    assert main(["stats", str(out)]) == 0
    assert "n/a" in capsys.readouterr().out


def test_quiescent_totals(tmp_path, capsys):
    out = tmp_path / "q"
    assert main(["run", "--scenario", "quiescent", "--out", str(out)]) == 0
    tr = read_trace(out)
    # floor(horizon * delta / f_bar) + 1 events per agent
    assert analysis.interval_stats(tr).total.tolist() == [11, 11, 11, 11]
    assert main(["verify", str(out), "--window", "0.5:1]"]) == 0


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("agents: {count: 2}\nbogus: 1\n")
    assert main(["run", "--scenario", str(bad), "--out", str(tmp_path / "x")]) == 1
    assert "line 2" in capsys.readouterr().err
    assert main(["run", "--scenario", "no_such_thing", "--out", str(tmp_path / "x")]) == 1
    assert main(["stats", str(tmp_path / "missing")]) == 1
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 1

    nan = tmp_path / "nan.yaml"
    # finite references whose difference overflows
    text = GOOD.replace("{kind: sin, amplitude: 1.0, frequency: 2.0}", "{kind: constant, value: 1.7e308}")
    nan.write_text(text.replace("{kind: piecewise_linear, knots: [[0, 0], [1, 1]]}", "{kind: constant, value: -1.7e308}"))
    with pytest.warns(RuntimeWarning):
        assert main(["run", "--scenario", str(nan), "--out", str(tmp_path / "n")]) == 2
    assert "simulation aborted" in capsys.readouterr().err


def test_verify_failure_exit_code(tiny, tmp_path):
    out = tmp_path / "t"
    main(["run", "--scenario", str(tiny), "--out", str(out)])
    # an impossible threshold makes the window check fail
    assert main(["verify", str(out), "--threshold", "1e-12", "--window", "0.1:0.2]"]) == 3
