import csv
import json
import shutil
import subprocess

import numpy as np
import pytest

from g0reg import g0dist
from g0reg.cli import main
from g0reg.raster import Raster, synthetic_distribution_scene, synthetic_regression_scene


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def _write_csv(path, cols):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(cols))
        w.writerows(zip(*cols.values()))


def _regression_csv(path, seed, n=300, beta=(1.0, 1.0), alpha=-5.0, looks=4.0, inflate=None):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, n)
    mu = np.exp(beta[0] + beta[1] * x)
    z = rng.gamma(looks, 1 / looks, n) / (rng.gamma(-alpha, 1.0, n) / (mu * (-alpha - 1)))
    if inflate is not None:
        z[inflate] *= 20.0
    _write_csv(path, {"x": x, "z": z})


class TestSimulate:
    def test_sample(self, tmp_path):
        out = tmp_path / "s.csv"
        assert main(["simulate", "--alpha", "-3", "--mu", "1", "--looks", "4", "--n", "1000", "--seed", "7", "--out", str(out)]) == 0
        header, data = _read_csv(out)
        assert header == ["z"] and data.shape == (1000, 1)
        z = data[:, 0]
        assert abs(z.mean() - 1.0) < 4 * z.std() / np.sqrt(z.size)

    def test_deterministic(self, tmp_path):
        args = ["simulate", "--alpha", "-3", "--gamma", "2", "--n", "50", "--seed", "1", "--out"]
        main(args + [str(tmp_path / "a.csv")])
        main(args + [str(tmp_path / "b.csv")])
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_design(self, tmp_path):
        _write_csv(tmp_path / "d.csv", {"x": np.linspace(0, 1, 40)})
        out = tmp_path / "z.csv"
        assert main(["simulate", "--alpha", "-4", "--design", str(tmp_path / "d.csv"), "--beta", "0.5,1", "--out", str(out)]) == 0
        header, data = _read_csv(out)
        assert header == ["x", "z"] and data.shape == (40, 2)

    @pytest.mark.parametrize(
        "extra", [["--alpha", "-0.5", "--mu", "1"], ["--alpha", "-3"], ["--alpha", "-3", "--mu", "1", "--gamma", "2"]]
    )
    def test_usage_errors(self, tmp_path, extra, capsys):
        assert main(["simulate", *extra, "--out", str(tmp_path / "x.csv")]) == 1
        assert "error" in capsys.readouterr().err


class TestFit:
    def test_coverage(self, tmp_path, capsys):
        hits = np.zeros(3)
        for seed in range(100):
            path = tmp_path / "d.csv"
            _regression_csv(path, seed)
            assert main(["fit", "--data", str(path), "--formula", "z ~ x", "--looks", "4"]) == 0
            res = json.loads(capsys.readouterr().out)
            for j, (ci, truth) in enumerate(zip(res["ci95"], [1.0, 1.0, -5.0])):
                hits[j] += ci["lo"] < truth < ci["hi"]
        assert np.all(hits >= 90), hits

    def test_payload(self, tmp_path):
        _regression_csv(tmp_path / "d.csv", 0)
        out = tmp_path / "fit.json"
        assert main(["fit", "--data", str(tmp_path / "d.csv"), "--formula", "z ~ x", "--out", str(out)]) == 0
        res = json.loads(out.read_text())
        assert res["param_names"] == ["(Intercept)", "x", "alpha", "L"]
        assert res["looks_mode"] == "free"
        assert res["convergence"]["converged"] is True
        assert [w["name"] for w in res["wald"]] == res["param_names"]

    def test_intercept_only(self, tmp_path, capsys):
        _write_csv(tmp_path / "d.csv", {"z": g0dist.sample(g0dist.unit_mean(-4.0, 2.0), 400, seed=3)})
        assert main(["fit", "--data", str(tmp_path / "d.csv"), "--formula", "z ~", "--looks", "2"]) == 0
        assert json.loads(capsys.readouterr().out)["param_names"] == ["(Intercept)", "alpha"]

    def test_missing_column(self, tmp_path, capsys):
        _regression_csv(tmp_path / "d.csv", 0)
        assert main(["fit", "--data", str(tmp_path / "d.csv"), "--formula", "z ~ w"]) == 1
        assert "'w'" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["fit", "--data", str(tmp_path / "none.csv"), "--formula", "z ~ x"]) == 1

    def test_bad_looks(self, tmp_path):
        _regression_csv(tmp_path / "d.csv", 0)
        assert main(["fit", "--data", str(tmp_path / "d.csv"), "--formula", "z ~ x", "--looks", "many"]) == 1

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as info:
            main(["fit", "--bogus"])
        assert info.value.code == 1


class TestDiagnose:
    def test_outputs(self, tmp_path):
        _regression_csv(tmp_path / "d.csv", 4, n=100)
        prefix = str(tmp_path / "r")
        assert main(["diagnose", "--data", str(tmp_path / "d.csv"), "--formula", "z ~ x", "--looks", "4", "--envelope-nu", "5", "--out", prefix]) == 0
        rep = json.loads((tmp_path / "r_report.json").read_text())
        assert rep["envelope"]["replicates"] + rep["envelope"]["dropped"] == 5
        header, obs = (tmp_path / "r_obs.csv").read_text().splitlines()[0], (tmp_path / "r_obs.csv").read_text().splitlines()[1:]
        assert header == "index,z,mu_hat,r,d_dev,sr,h,gl,cook,dffits,flags"
        assert len(obs) == 100
        assert (tmp_path / "r_envelope.csv").exists()

    def test_well_specified_few_flags(self, tmp_path):
        _regression_csv(tmp_path / "d.csv", 5, n=200)
        prefix = str(tmp_path / "r")
        main(["diagnose", "--data", str(tmp_path / "d.csv"), "--formula", "z ~ x", "--looks", "4", "--envelope-nu", "0", "--out", prefix])
        flags = json.loads((tmp_path / "r_report.json").read_text())["flags"]
        assert sum(bool(f) for f in flags) < 0.1 * 200
        assert not (tmp_path / "r_envelope.csv").exists()

    def test_contaminated_point_flagged(self, tmp_path):
        _regression_csv(tmp_path / "d.csv", 6, n=100, inflate=42)
        prefix = str(tmp_path / "r")
        main(["diagnose", "--data", str(tmp_path / "d.csv"), "--formula", "z ~ x", "--looks", "4", "--envelope-nu", "0", "--out", prefix])
        flags = json.loads((tmp_path / "r_report.json").read_text())["flags"]
        assert {"cook", "dffits"} <= set(flags[42])


class TestMaps:
    def test_dist_defaults(self, tmp_path):
        synthetic_distribution_scene(12, 10, seed=2).write(tmp_path / "s.json")
        assert main(["maps", "--raster", str(tmp_path / "s.json"), "--out", str(tmp_path / "m")]) == 0
        meta = json.loads((tmp_path / "m.json").read_text())
        assert meta["window"] == 7
        assert meta["layers"] == ["alpha", "gamma", "mu", "converged", "extreme"]

    def test_regress_adequacy(self, tmp_path):
        synthetic_regression_scene(16, 16, seed=3).write(tmp_path / "s.json")
        argv = ["maps", "--raster", str(tmp_path / "s.json"), "--mode", "regress", "--response", "VV", "--predictor", "HV", "--stride", "2", "--out", str(tmp_path / "m")]
        assert main(argv) == 0
        summary = json.loads((tmp_path / "m_adequacy.json").read_text())
        assert summary["window"] == 11
        assert 0 <= summary["p_value"] <= 1
        assert main(["adequacy", "--maps", str(tmp_path / "m.json"), "--out", str(tmp_path / "a.json")]) == 0
        assert json.loads((tmp_path / "a.json").read_text())["p_value"] == pytest.approx(summary["p_value"])

    def test_unknown_channel(self, tmp_path, capsys):
        synthetic_distribution_scene(8, 8, seed=2).write(tmp_path / "s.json")
        assert main(["maps", "--raster", str(tmp_path / "s.json"), "--channel", "XX", "--out", str(tmp_path / "m")]) == 1
        assert "XX" in capsys.readouterr().err

    def test_mostly_masked(self, tmp_path):
        Raster(8, 8, ["HH"], np.full((1, 8, 8), 0.5), 4.0).write(tmp_path / "s.json")
        assert main(["maps", "--raster", str(tmp_path / "s.json"), "--window", "3", "--out", str(tmp_path / "m")]) == 2

    def test_missing_raster(self, tmp_path):
        assert main(["maps", "--raster", str(tmp_path / "none.json"), "--out", str(tmp_path / "m")]) == 1


class TestMc:
    def test_tiny_and_deterministic(self, tmp_path):
        argv = ["mc", "--ns", "30", "--reps", "5", "--seed", "2", "--out"]
        assert main(argv + [str(tmp_path / "a.csv")]) == 0
        assert main(argv + [str(tmp_path / "b.csv")]) == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        lines = (tmp_path / "a.csv").read_text().splitlines()
        assert lines[0] == "alpha,looks,n,beta,param,abias,rmse,aic,aicc,bic,conv_rate"
        assert len(lines) == 1 + 4

    def test_config_file(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"ns": [25], "replications": 2, "betas": [[0.2, 0.3]]}))
        assert main(["mc", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o.csv")]) == 0

    def test_bad_config(self, tmp_path):
        assert main(["mc", "--alphas", "-0.5", "--reps", "1", "--out", str(tmp_path / "o.csv")]) == 1


class TestAdequacy:
    def test_ratios_file(self, tmp_path):
        _write_csv(tmp_path / "r.csv", {"ratio": g0dist.sample(g0dist.unit_mean(-3.0, 2.0), 500, seed=1)})
        out = tmp_path / "a.json"
        assert main(["adequacy", "--ratios", str(tmp_path / "r.csv"), "--looks", "2", "--alpha0", "-3", "--out", str(out)]) == 0
        res = json.loads(out.read_text())
        assert res["alpha0"] == -3.0 and res["n"] == 500

    def test_needs_one_source(self, tmp_path):
        assert main(["adequacy", "--looks", "2"]) == 1

    def test_degenerate(self, tmp_path):
        _write_csv(tmp_path / "r.csv", {"ratio": np.ones(10)})
        assert main(["adequacy", "--ratios", str(tmp_path / "r.csv"), "--looks", "2"]) == 1


@pytest.mark.skipif(shutil.which("g0reg") is None, reason="console script not installed")
def test_console_script(tmp_path):
    res = subprocess.run(["g0reg", "simulate", "--alpha", "-0.5", "--mu", "1", "--out", str(tmp_path / "x.csv")], capture_output=True, text=True)
    assert res.returncode == 1
