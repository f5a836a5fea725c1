import csv
import json
from pathlib import Path

import numpy as np
import pytest

from relaydiff.cli import main
from relaydiff.experiments import cli_main
from relaydiff.scenario import ConfigError, load_scenario, load_series, save_series
from relaydiff.solver import run

CONFIGS = Path(__file__).parents[1] / "src" / "relaydiff" / "configs"
GOLDEN = Path(__file__).parent / "data" / "golden_thm1"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_simulate_bundled_config(tmp_path, capsys):
    assert main(["simulate", str(CONFIGS / "small.yaml"), "--out", str(tmp_path)]) == 0
    for f in ("series.csv", "events.jsonl", "fronts.csv", "certificates.json", "summary.json", "meta.json"):
        assert (tmp_path / f).exists(), f
    rows = list(csv.reader(open(tmp_path / "series.csv")))
    assert rows[0] == ["t", "v", "w", "U_bar", "n_fronts", "leftmost_front"]
    assert float(rows[-1][0]) == 5.0
    for line in (tmp_path / "events.jsonl").read_text().splitlines():
        assert {"kind", "t", "position", "U_ratio"} <= set(json.loads(line))
    prof = sorted(tmp_path.glob("profile_*.csv"))
    assert len(prof) == 3
    assert next(csv.reader(open(prof[0]))) == ["x", "u", "r"]
    assert json.loads((tmp_path / "summary.json").read_text())["monitor_violations"] == []


def test_simulate_with_config_flag(tmp_path):
    assert cli_main(["simulate", "--config", str(CONFIGS / "small.yaml"), "--out", str(tmp_path)]) == 0


def test_full_precision_output(tmp_path):
    main(["simulate", str(CONFIGS / "small.yaml"), "--out", str(tmp_path)])
    rows = list(csv.reader(open(tmp_path / "series.csv")))[1:]
    w = [r[2] for r in rows if r[2] not in ("0", "0.23999999999999999")]
    assert any(len(v.lstrip("-").replace(".", "").lstrip("0")) >= 15 for v in w)


def test_golden_series_is_reproduced(tmp_path):
    assert main(["simulate", str(GOLDEN / "scenario.yaml"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "series.csv").read_text() == (GOLDEN / "series" / "series.csv").read_text()


def test_verify_golden(tmp_path):
    rc = main(["verify", "thm1", str(GOLDEN / "series"), str(GOLDEN / "plan.json"), "--out", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["status"] == "pass" and rep["checks"][0]["min_count"] >= 1


def test_verify_refused_scenario(tmp_path):
    cfg = write(tmp_path, "u.yaml", "D: 1.0e-3\ngrid: {n: 100}\ninitial: {u0_kind: uniform, eps: 1.0e-3, v0: 0.1}\n"
                                    "run: {T: 1.0}\n")
    assert main(["simulate", cfg, "--out", str(tmp_path / "s")]) == 0
    rc = main(["verify", "thm1", str(tmp_path / "s"), str(GOLDEN / "plan.json"), "--out", str(tmp_path / "r")])
    assert rc == 1
    assert json.loads((tmp_path / "r" / "report.json").read_text())["status"] == "refused"


def test_verify_plan_kind_mismatch(tmp_path):
    rc = main(["verify", "thm2", str(GOLDEN / "series"), str(GOLDEN / "plan.json"), "--out", str(tmp_path)])
    assert rc == 2


def test_sequences(tmp_path):
    assert main(["sequences", "thm1", "--N", "2", "--out", str(tmp_path / "a")]) == 0
    plan = json.loads((tmp_path / "a" / "plan.json").read_text())
    assert plan["kind"] == "thm1" and len(plan["x"]) == 3
    assert main(["sequences", "thm2", "--N", "2", "--out", str(tmp_path / "b")]) == 0
    assert json.loads((tmp_path / "b" / "plan.json").read_text())["mu"] == 0.25
    assert main(["sequences", "thm1", "--N", "9", "--out", str(tmp_path / "c")]) == 1
    assert json.loads((tmp_path / "c" / "report.json").read_text())["status"] == "infeasible"


def test_kernels(tmp_path):
    assert main(["kernels", str(CONFIGS / "kernels.yaml"), "--out", str(tmp_path), "--seed", "3"]) == 0
    rows = list(csv.reader(open(tmp_path / "kernels.csv")))
    assert rows[0] == ["x", "tau", "psi", "phi", "Phi_tail", "Psi_tail", "abs_diff"]
    assert len(rows) == 1 + 101 * 5
    assert json.loads((tmp_path / "kernel_bounds.json").read_text())["violations"] == []


def test_asymptotics(tmp_path):
    cfg = write(tmp_path, "a.yaml", "D_list: [1.0e-4]\nT: 20.0\nn_fronts: 2\ngrid_n: 1500\n")
    assert main(["asymptotics", cfg, "--out", str(tmp_path / "o")]) == 0
    rows = list(csv.reader(open(tmp_path / "o" / "asymptotics.csv")))
    assert rows[0] == ["D", "n", "t_n", "q_n", "y_hat_n"] and len(rows) == 3
    assert json.loads((tmp_path / "o" / "report.json").read_text())["ordering_ok"]


@pytest.mark.parametrize("argv", [["simulate", "x.yaml", "--bogus"], [], ["frobnicate"], ["sequences", "thm3"]])
def test_usage_errors_exit_2(argv):
    assert main(argv) == 2


@pytest.mark.parametrize("text, line, fragment", [
    ("D: 1.0e-4\ninitial:\n  v0: 0.1\n  colour: 3\nrun: {T: 1}\n", 4, "unknown key 'colour'"),
    ("D: 1.0e-4\nrun:\n  T: abc\n", 3, "'run.T' must be a number"),
    ("D: 1.0e-4\nrun: {T: 1\n", 3, "YAML syntax error"),
    ("D: -1.0\nrun: {T: 1}\n", 1, "'D' must be positive"),
    ("D: 1.0e-4\ninitial: {w0: 0.4}\nrun: {T: 1}\n", 2, "exceeds"),
    ("D: 1.0e-4\ninitial: {u0_kind: spiky}\nrun: {T: 1}\n", 2, "u0_kind"),
    ("D: 1.0e-4\ninitial: {r0: {fronts: [0.2, 0.1]}}\nrun: {T: 1}\n", 2, "invalid r0"),
    ("D: 1.0e-4\ndomain: {lo: 0.3, hi: 0.2}\nrun: {T: 1}\n", 2, "threshold domain"),
    ("D: 1.0e-4\n", 1, "run.T"),
])
def test_malformed_config_is_line_anchored(tmp_path, capsys, text, line, fragment):
    path = write(tmp_path, "bad.yaml", text)
    assert main(["simulate", path, "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert f"bad.yaml:{line}:" in err and fragment in err


def test_missing_config_file(tmp_path, capsys):
    assert main(["simulate", str(tmp_path / "nope.yaml")]) == 2
    assert main(["kernels"]) == 2


def test_scientific_notation_without_dot(tmp_path):
    sc = load_scenario(write(tmp_path, "s.yaml", "D: 1e-4\nrun: {T: 1}\n"))
    assert sc.params.D == 1e-4


def test_custom_density_file(tmp_path):
    x = np.linspace(0.05, 0.25, 101)
    np.savetxt(tmp_path / "u0.csv", np.column_stack((x, np.full_like(x, 5.0))), delimiter=",")
    sc = load_scenario(write(tmp_path, "c.yaml", "D: 1.0e-4\ngrid: {n: 50}\n"
                                                 "initial: {u0_kind: custom-file, u0_file: u0.csv}\nrun: {T: 1}\n"))
    assert np.allclose(sc.data.u0, 5.0)
    with pytest.raises(ConfigError, match="mass"):
        np.savetxt(tmp_path / "u0.csv", np.column_stack((x, np.full_like(x, 2.0))), delimiter=",")
        load_scenario(str(tmp_path / "c.yaml"))


def test_series_archive_round_trip(tmp_path):
    sc = load_scenario(CONFIGS / "small.yaml")
    s = run(sc.params, sc.data, sc.stop, grid=sc.grid, cadence=sc.cadence, probes=sc.probes)
    save_series(tmp_path, s)
    back = load_series(tmp_path)
    assert len(back.records) == len(s.records) and len(back.events) == len(s.events)
    for a, b in zip(s.records, back.records):
        assert (a.t, a.v, a.w, a.U_bar, a.cfg, a.P) == (b.t, b.v, b.w, b.U_bar, b.cfg, b.P)
        assert np.array_equal(a.probes, b.probes)
    assert np.array_equal(back.grid.faces, s.grid.faces) and back.params == s.params
    assert np.array_equal(back.initial.u0, s.initial.u0)
    with pytest.raises(ConfigError):
        load_series(tmp_path / "missing")
