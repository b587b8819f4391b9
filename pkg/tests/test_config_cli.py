import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from crossimpact import cli
from crossimpact._exceptions import ConfigParse
from crossimpact.config import (canonical_json, load_config, load_preset, parse_config,
                                preset_names, run_scenario)

BASE = {
    "description": "test liquidation",
    "market": {"Lambda": [[0.03, 0.0], [0.0, 0.03]], "X0": [10.0, 0.0], "varrho": 4.0},
    "kernel": {"kind": "factorized_exp", "C": [[0.06, 0.05], [0.05, 0.06]], "rho_decay": 0.5},
    "grid": {"n": 30, "T": 10.0},
}
OU = {"kind": "ou", "beta": [0.9, 0.3], "I0": [0.5, 0.5],
      "noise_scale": [[0.2, 0.0], [0.0, 0.2]]}


def write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def with_(**sections):
    d = json.loads(json.dumps(BASE))
    d.update(sections)
    return d


def run(argv, capsys=None):
    code = cli.main(argv)
    out = capsys.readouterr().out if capsys is not None else None
    return code, out


class TestParse:
    def test_round_trip_canonical(self):
        cfg = parse_config(with_(signal=OU))
        again = parse_config(json.loads(canonical_json(cfg)))
        assert canonical_json(again) == canonical_json(cfg)
        assert again == cfg

    @pytest.mark.parametrize("data", [
        {"market": BASE["market"], "kernel": BASE["kernel"]},
        with_(grid={"n": 1, "T": 10.0}),
        with_(grid={"n": 10, "T": -1.0}),
        with_(extra=1),
        with_(market={"Lambda": [[0.03]], "X0": [1.0, 0.0]}),
        with_(kernel={"kind": "warp"}),
        with_(run={"method": "newton"}),
        with_(run={"seeds": [1, 2]}),
        with_(market={**BASE["market"], "gamma": -1.0}),
        with_(kernel={"kind": "factorized_exp", "C": [[1.0]], "rho_decay": 0.5}),
    ])
    def test_schema_errors(self, data):
        with pytest.raises(ConfigParse):
            parse_config(data)

    def test_seeds_select_trailing(self):
        cfg = parse_config(with_(signal=OU, run={"seeds": [1, 2]}))
        assert cfg.run.method == "trailing" and cfg.run.seeds == (1, 2)

    def test_replace(self):
        cfg = parse_config(BASE).replace(**{"grid.n": 12, "market.gamma": 0.5})
        assert cfg.grid.n == 12 and cfg.market.gamma == 0.5
        with pytest.raises(ConfigParse):
            parse_config(BASE).replace(**{"grid.m.x": 1})

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigParse):
            load_config(p)


class TestPresets:
    def test_names(self):
        assert preset_names() == ["fig1", "fig2", "fig3", "fig4", "fig5", "zero"]

    @pytest.mark.parametrize("name", ["fig1", "fig2", "fig3", "fig4", "fig5", "zero"])
    def test_loadable(self, name):
        description, scenarios = load_preset(name)
        assert description and scenarios
        for cfg in scenarios.values():
            assert cfg.grid.T == 10.0

    def test_fig5_parameters(self):
        _, sc = load_preset("fig5")
        m = sc["exp"].market
        np.testing.assert_array_equal(m.Sigma, np.diag([0.04, 0.05]))
        assert m.gamma == 5.0 and m.varrho == 0.0
        np.testing.assert_array_equal(m.X0, [7.5, -7.5])
        s = sc["exp"].signal
        np.testing.assert_array_equal(s.I0, [0.01, -0.01])
        np.testing.assert_array_equal(s.beta, [0.05, 0.3])
        assert sc["markowitz"].kernel.kind.value == "zero"

    def test_unknown(self):
        with pytest.raises(ConfigParse):
            load_preset("fig9")


class TestSolveCommand:
    def test_outputs_and_report_config(self, tmp_path, capsys):
        cfg = write(tmp_path, with_(signal=OU))
        out = tmp_path / "out"
        code, text = run(["solve", cfg, "--out-dir", str(out)], capsys)
        assert code == cli.EXIT_OK
        assert json.loads(text)["foc_residual"] < 1e-10
        report = json.loads((out / "report.json").read_text())
        assert set(report) >= {"version", "config", "method", "seed", "objective",
                               "foc_residual", "admissibility", "timing"}
        # the echoed configuration parses back to the same canonical text
        original = load_config(cfg)
        assert canonical_json(parse_config(report["config"])) == canonical_json(original)
        rows = list(csv.reader((out / "trajectories.csv").open()))
        assert rows[0] == ["t", "u_1", "u_2", "X_1", "X_2", "D_1", "D_2", "I_1", "I_2"]
        assert len(rows) == 32
        assert b"\r\n" not in (out / "trajectories.csv").read_bytes()

    def test_seeded_runs_are_byte_identical(self, tmp_path, capsys):
        cfg = write(tmp_path, with_(signal=OU))
        for d in ("a", "b"):
            code, _ = run(["solve", cfg, "--seed", "3", "--seed", "5", "--out-dir",
                           str(tmp_path / d)], capsys)
            assert code == 0
        for s in (3, 5):
            a = (tmp_path / "a" / f"seed_{s}" / "trajectories.csv").read_bytes()
            b = (tmp_path / "b" / f"seed_{s}" / "trajectories.csv").read_bytes()
            assert a == b
        assert (tmp_path / "a" / "seed_3" / "trajectories.csv").read_bytes() != \
            (tmp_path / "a" / "seed_5" / "trajectories.csv").read_bytes()
        summary = json.loads((tmp_path / "a" / "summary.json").read_text())
        assert summary["seeds"] == [3, 5] and summary["objective_stderr"] is not None

    @pytest.mark.parametrize("method", ["trailing", "resolvent"])
    def test_methods(self, tmp_path, capsys, method):
        cfg = write(tmp_path, with_(signal=OU))
        code, _ = run(["solve", cfg, "--method", method, "--out-dir", str(tmp_path / "o")],
                      capsys)
        assert code == 0
        assert json.loads((tmp_path / "o" / "report.json").read_text())["method"] == method

    def test_dump_matrices(self, tmp_path, capsys):
        cfg = write(tmp_path, BASE)
        code, _ = run(["solve", cfg, "--dump-matrices", "--out-dir", str(tmp_path / "o")], capsys)
        assert code == 0
        D = np.load(tmp_path / "o" / "D.npy")
        assert D.shape == (62, 62)
        assert (tmp_path / "o" / "kernel_lower.npy").exists()

    def test_inadmissible_exit(self, tmp_path, capsys):
        cfg = write(tmp_path, with_(kernel={"kind": "permanent", "C": [[-1.0, 0.0], [0.0, -1.0]]}))
        code, _ = run(["solve", cfg, "--out-dir", str(tmp_path / "o")], capsys)
        assert code == cli.EXIT_INADMISSIBLE
        code, _ = run(["solve", cfg, "--force-inadmissible", "--out-dir", str(tmp_path / "o")],
                      capsys)
        assert code == cli.EXIT_OK
        report = json.loads((tmp_path / "o" / "report.json").read_text())
        assert report["admissibility"]["passed"] is False

    def test_missing_file(self, tmp_path, capsys):
        code, _ = run(["solve", str(tmp_path / "nope.json")], capsys)
        assert code == cli.EXIT_IO

    def test_config_error_exit(self, tmp_path, capsys):
        code, _ = run(["solve", write(tmp_path, with_(grid={"n": 1, "T": 1.0}))], capsys)
        assert code == cli.EXIT_CONFIG

    def test_default_out_dir_from_env(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("CROSSIMPACT_OUT_DIR", str(tmp_path / "env"))
        code, _ = run(["solve", write(tmp_path, BASE)], capsys)
        assert code == 0 and (tmp_path / "env" / "report.json").exists()


class TestAuditCommand:
    def test_pass(self, tmp_path, capsys):
        code, text = run(["audit", write(tmp_path, BASE)], capsys)
        assert code == cli.EXIT_OK
        d = json.loads(text)
        assert d["passed"] and d["structural_verdict"] == "Admissible"

    def test_negative_permanent(self, tmp_path, capsys):
        cfg = write(tmp_path, with_(kernel={"kind": "permanent", "C": [[-1.0, 0.0], [0.0, -1.0]]}))
        code, text = run(["audit", cfg, "--out-dir", str(tmp_path / "o")], capsys)
        assert code == cli.EXIT_AUDIT
        d = json.loads(text)
        assert d["grid_verdict"] == "FailedPSD"
        assert d["witness"]["transient_cost"] < 0
        assert json.loads((tmp_path / "o" / "audit.json").read_text()) == d

    def test_nonsymmetric(self, tmp_path, capsys):
        cfg = write(tmp_path, with_(kernel={"kind": "factorized_exp", "C": [[0.06, 0.05], [0.0, 0.06]],
                                            "rho_decay": 0.5}))
        code, text = run(["audit", cfg], capsys)
        assert code != 0
        assert "symmetry" in json.loads(text)["structural_reason"]


class TestPresetCommand:
    def test_list(self, capsys):
        code, text = run(["preset", "--list"], capsys)
        assert code == 0
        assert [line.split(":")[0] for line in text.splitlines()] == preset_names()

    def test_show(self, capsys):
        code, text = run(["preset", "fig2", "--scenario", "exp", "--show"], capsys)
        assert code == 0
        assert parse_config(json.loads(text)).kernel.kind.value == "factorized_exp"

    def test_unknown_scenario(self, capsys):
        code, _ = run(["preset", "fig2", "--scenario", "nope", "--show"], capsys)
        assert code == cli.EXIT_CONFIG

    def test_zero_preset_is_all_zero(self, tmp_path, capsys):
        code, _ = run(["preset", "zero", "--n", "20", "--out-dir", str(tmp_path)], capsys)
        assert code == 0
        files = list((tmp_path / "zero").rglob("trajectories.csv"))
        assert files
        for f in files:
            data = np.loadtxt(f, delimiter=",", skiprows=1)
            assert not data[:, 1:].any()

    def test_fig2_second_asset_changes_sign(self, tmp_path, capsys):
        code, _ = run(["preset", "fig2", "--scenario", "exp", "--n", "100", "--out-dir",
                       str(tmp_path)], capsys)
        assert code == 0
        f = tmp_path / "fig2" / "exp" / "trajectories.csv"
        with f.open() as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(f, delimiter=",", skiprows=1)
        u2 = data[:-1, header.index("u_2")]
        signs = np.sign(u2[np.abs(u2) > 1e-9])
        assert np.count_nonzero(np.diff(signs)) >= 2


class TestSweepCommand:
    def test_sweep(self, tmp_path, capsys):
        cfg = write(tmp_path, BASE)
        code, text = run(["sweep", cfg, "--param", "market.varrho", "--values", "1", "4",
                          "--out-dir", str(tmp_path / "s")], capsys)
        assert code == 0
        rows = json.loads(text)
        assert [r["value"] for r in rows] == [1, 4]
        sweep = json.loads((tmp_path / "s" / "sweep.json").read_text())
        assert sweep["param"] == "market.varrho" and len(sweep["runs"]) == 2

    def test_bad_values(self, tmp_path, capsys):
        code, _ = run(["sweep", write(tmp_path, BASE), "--param", "market.varrho", "--values",
                       "{x"], capsys)
        assert code == cli.EXIT_CONFIG


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "crossimpact", "preset", "--list"],
                         capture_output=True, text=True, cwd=tmp_path)
    assert res.returncode == 0 and "fig1" in res.stdout


def test_run_scenario_direct(tmp_path):
    summary = run_scenario(parse_config(BASE), tmp_path)
    assert summary["passed"] and summary["foc_residual"] < 1e-10
