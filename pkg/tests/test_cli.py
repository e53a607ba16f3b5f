import json

import pytest

from rwre.cli import main


def write_config(path, model, experiment=None, seeds=None):
    payload = {"model": model}
    if experiment is not None:
        payload["experiment"] = experiment
    if seeds is not None:
        payload["seeds"] = seeds
    path.write_text(json.dumps(payload))
    return str(path)


@pytest.fixture
def small_hitting_config(tmp_path):
    return write_config(
        tmp_path / "cfg.json",
        {"type": "constant", "p": 0.75},
        {"kind": "clt_hitting", "n": 300, "replicas": 400, "ks_threshold": 0.1},
        {"master": 7},
    )


class TestSimulate:
    def test_writes_all_artifacts(self, tmp_path, small_hitting_config):
        out = tmp_path / "run"
        assert main(["simulate", "--config", small_hitting_config, "--out", str(out)]) == 0
        for name in ("manifest.json", "report.json", "samples.csv", "cdf.csv"):
            assert (out / name).exists()
        lines = (out / "samples.csv").read_text().splitlines()
        assert lines[0] == "replica,value,standardized"
        assert len(lines) == 401
        cdf_lines = (out / "cdf.csv").read_text().splitlines()
        assert cdf_lines[0] == "x,ecdf,phi,diff"
        assert len(cdf_lines) == 401
        report = json.loads((out / "report.json").read_text())
        assert set(report) == {
            "kind", "scale", "replicas", "centering", "ks_distance", "threshold",
            "verdict", "centering_value", "scale_value", "window_mu", "window_sigma2",
            "summary", "cdf_errors", "sample_stats", "ks_distribution", "seeds",
        }

    def test_manifest_digests_stable_across_reruns(self, tmp_path, small_hitting_config):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["simulate", "--config", small_hitting_config, "--out", str(out)]) == 0
            outs.append(out)
        m1 = json.loads((outs[0] / "manifest.json").read_text())
        m2 = json.loads((outs[1] / "manifest.json").read_text())
        assert m1["outputs"] == m2["outputs"]
        assert (outs[0] / "samples.csv").read_bytes() == (outs[1] / "samples.csv").read_bytes()
        assert (outs[0] / "report.json").read_bytes() == (outs[1] / "report.json").read_bytes()

    def test_worker_counts_do_not_change_samples(self, tmp_path):
        cfg = write_config(
            tmp_path / "cfg.json",
            {"type": "iid_discrete", "atoms": [[0.8, 0.5], [0.6, 0.5]]},
            {"kind": "clt_hitting", "n": 200, "replicas": 2100},
            {"master": 99},
        )
        blobs = []
        for workers in ("1", "4"):
            out = tmp_path / f"w{workers}"
            assert main(["simulate", "--config", cfg, "--out", str(out), "--workers", workers]) == 0
            blobs.append((out / "samples.csv").read_bytes())
        assert blobs[0] == blobs[1]


class TestErrors:
    def test_malformed_probability_names_field(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "bad.json", {"type": "constant", "p": 1.2})
        assert main(["analyze", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "model.p" in capsys.readouterr().err

    def test_unknown_experiment_field(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "bad.json", {"type": "constant", "p": 0.75}, {"n_steps": 5}
        )
        assert main(["analyze", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "n_steps" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert main(["analyze", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "o")]) == 2

    def test_eligibility_exit_code(self, tmp_path):
        cfg = write_config(
            tmp_path / "rec.json", {"type": "constant", "p": 0.5},
            {"kind": "clt_hitting", "n": 200, "replicas": 200},
        )
        assert main(["clt-hitting", "--config", cfg, "--out", str(tmp_path / "o")]) == 3

    def test_guard_breach_exit_code(self, tmp_path):
        cfg = write_config(
            tmp_path / "g.json", {"type": "constant", "p": 0.75},
            {"kind": "clt_hitting", "n": 300, "replicas": 200, "left_guard": 1},
        )
        assert main(["clt-hitting", "--config", cfg, "--out", str(tmp_path / "o")]) == 5

    def test_numerical_error_exit_code(self, tmp_path):
        # a tolerance far below machine precision exhausts the window before
        # the site series can converge
        cfg = write_config(
            tmp_path / "t.json",
            {"type": "iid_discrete", "atoms": [[0.8, 0.5], [0.6, 0.5]]},
            {"replicas": 200, "tol": 1e-300},
        )
        assert main(["oracle-check", "--config", cfg, "--out", str(tmp_path / "o")]) == 4


class TestSeedPrecedence:
    def test_flag_beats_everything(self, tmp_path, monkeypatch):
        cfg = write_config(
            tmp_path / "c.json", {"type": "constant", "p": 0.75},
            {"kind": "clt_hitting", "n": 200, "replicas": 150}, {"master": 1},
        )
        monkeypatch.setenv("RWRE_SEED", "2")
        out = tmp_path / "r"
        assert main(["simulate", "--config", cfg, "--out", str(out), "--seed", "3"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["master_seed"] == 3

    def test_env_beats_config(self, tmp_path, monkeypatch):
        cfg = write_config(
            tmp_path / "c.json", {"type": "constant", "p": 0.75},
            {"kind": "clt_hitting", "n": 200, "replicas": 150}, {"master": 1},
        )
        monkeypatch.setenv("RWRE_SEED", "2")
        out = tmp_path / "r"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        assert json.loads((out / "manifest.json").read_text())["config"]["master_seed"] == 2

    def test_default_seed(self, tmp_path, monkeypatch):
        monkeypatch.delenv("RWRE_SEED", raising=False)
        cfg = write_config(
            tmp_path / "c.json", {"type": "constant", "p": 0.75},
            {"kind": "clt_hitting", "n": 200, "replicas": 150},
        )
        out = tmp_path / "r"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        assert json.loads((out / "manifest.json").read_text())["config"]["master_seed"] == 0xC0FFEE


class TestSubcommands:
    def test_clt_position_with_centering_flag(self, tmp_path):
        cfg = write_config(
            tmp_path / "c.json",
            {"type": "quasi_periodic", "alpha": 0.6180339887498949, "omega0": 0.0,
             "coeffs": [0.7, 0.1]},
            {"kind": "clt_position", "t": 400, "replicas": 300, "ks_threshold": 0.12},
        )
        out = tmp_path / "r"
        code = main(["clt-position", "--config", cfg, "--out", str(out),
                     "--centering", "implicit"])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["centering"] == "implicit"
        assert 0.0 <= report["ks_distance"] <= 1.0
        assert report["verdict"] in ("pass", "fail")

    def test_analyze_report_schema(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", {"type": "constant", "p": 0.75})
        out = tmp_path / "r"
        assert main(["analyze", "--config", cfg, "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["classification"]["regime"] == "transient_right"
        assert report["growth_rates"]["log_convex"] is True
        assert report["eligible"] is True
        assert report["summary"]["mu"] == pytest.approx(2.0, abs=1e-9)

    def test_analyze_recurrent_still_works(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", {"type": "constant", "p": 0.5})
        out = tmp_path / "r"
        assert main(["analyze", "--config", cfg, "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["eligible"] is False

    def test_lln_and_diagnostics(self, tmp_path):
        lln_cfg = write_config(
            tmp_path / "lln.json", {"type": "constant", "p": 0.75},
            {"kind": "lln", "n": 5000, "t": 5000, "replicas": 100, "lln_rel_tol": 0.08},
        )
        out1 = tmp_path / "lln"
        assert main(["lln", "--config", lln_cfg, "--out", str(out1)]) == 0
        rep = json.loads((out1 / "report.json").read_text())
        assert rep["verdict"] is True
        diag_cfg = write_config(
            tmp_path / "diag.json", {"type": "constant", "p": 0.75},
            {"kind": "diagnostics", "replicas": 100,
             "t_grid": [100, 1000], "n_grid": [10, 100], "x_grid": [0.0, 1.0]},
        )
        out2 = tmp_path / "diag"
        assert main(["diagnostics", "--config", diag_cfg, "--out", str(out2)]) == 0
        rep = json.loads((out2 / "report.json").read_text())
        assert rep["explicit_decreasing"] is True
        assert rep["ergodicity"]["epsilon"] == [0.0, 0.0]

    def test_oracle_check_constant(self, tmp_path):
        cfg = write_config(
            tmp_path / "c.json", {"type": "constant", "p": 0.75},
            {"replicas": 200_000},
        )
        out = tmp_path / "r"
        assert main(["oracle-check", "--config", cfg, "--out", str(out)]) == 0
        rep = json.loads((out / "report.json").read_text())
        assert rep["max_mu_gap"] <= 1e-8
        assert rep["max_sigma2_gap"] <= 1e-7
        table = rep["sigma2_table"]
        assert table["closed_form_printed"] == pytest.approx(5.0, rel=1e-9)
        assert table["closed_form_corrected"] == pytest.approx(6.0, rel=1e-9)
        assert table["mismatch_flagged"] is True
        assert rep["forcing_audit"]["swapped_form_inconsistent"] is True

    def test_oracle_check_recurrent_clean_report(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", {"type": "constant", "p": 0.5})
        out = tmp_path / "r"
        assert main(["oracle-check", "--config", cfg, "--out", str(out)]) == 3
        rep = json.loads((out / "report.json").read_text())
        assert rep["eligible"] is False
        assert rep["regime"] == "recurrent"


class TestManifest:
    def test_contents(self, tmp_path, small_hitting_config):
        out = tmp_path / "r"
        assert main(["simulate", "--config", small_hitting_config, "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["tool"]["name"] == "rwre"
        assert manifest["config"]["model"] == {"type": "constant", "p": 0.75}
        assert "env_seed" in manifest["config"] and "walk_seed" in manifest["config"]
        assert set(manifest["outputs"]) == {"report.json", "samples.csv", "cdf.csv"}
        for digest in manifest["outputs"].values():
            assert len(digest["sha256"]) == 64
