import filecmp
import json
from pathlib import Path

import numpy as np
import pytest

from lincomb import combiner
from lincomb.cli import main
from lincomb.config import ConfigError, RunConfig, parse_range

SMALL = ["-s", "grid.cost_exponents=-1:2:3", "-s", "grid.gamma_exponents=-3,-1"]  # K = 6


@pytest.fixture
def toy(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(10, 2))
    t = [1, 2] * 5
    X[np.array(t) == 2] += 1.5
    data = tmp_path / "toy.csv"
    data.write_text("".join(f"{a:.4f},{b:.4f},{c}\n" for (a, b), c in zip(X, t)))
    cfg = tmp_path / "toy.ini"
    cfg.write_text(
        "[data]\npath = toy.csv\npositive = 2\nnegative = 1\n\n"
        "[folds]\nk = 10\nseed = 0\n\n"
        "[output]\ndir = out\n"
    )
    return cfg


def run(*args):
    return main([str(a) for a in args])


def read_csv_rows(path):
    return [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]


class TestPipelineCommands:
    def test_loo_grid(self, toy):
        assert run("grid", "-c", toy, *SMALL) == 0
        out = toy.parent / "out"
        rows = read_csv_rows(out / "scores.csv")
        assert rows[0] == "id,target,1,2,3,4,5,6"
        assert len(rows) == 1 + 10
        models = read_csv_rows(out / "models.csv")
        assert models[0] == "model,C,g,cv_accuracy,score_variance"
        assert len(models) == 1 + 6
        assert models[1].startswith("1,0.5,0.125,")

    def test_stage_and_hash_in_every_file(self, toy):
        assert run("run", "-c", toy, *SMALL) == 0
        h = RunConfig.load(str(toy), SMALL[1::2]).hash
        out = toy.parent / "out"
        for f in sorted(out.iterdir()):
            text = f.read_text()
            if f.suffix == ".json":
                d = json.loads(text)
                assert d["config_hash"] == h and d["stage"] in ("combine", "evaluate")
            else:
                assert f"# config_hash={h}" in text and "# stage=" in text

    def test_cap_one_over_k(self, toy):
        assert run("grid", "-c", toy, *SMALL) == 0
        assert run("combine", "-c", toy, *SMALL, "-s", "combine.cap=1/6") == 0
        w = json.loads((toy.parent / "out" / "weights.json").read_text())["weights"]
        np.testing.assert_allclose(w, np.full(6, 1 / 6), rtol=0, atol=1e-12)

    def test_unit_weights_reproduce_single_model(self, toy):
        assert run("run", "-c", toy, *SMALL) == 0
        out = toy.parent / "out"
        met = json.loads((out / "metrics.json").read_text())
        k = met["max_accuracy_model"]
        wrep = json.loads((out / "weights.json").read_text())
        wrep["weights"] = [1.0 if i == k - 1 else 0.0 for i in range(6)]
        (out / "unit.json").write_text(json.dumps(wrep))
        assert run("evaluate", "-c", toy, *SMALL, "--weights", out / "unit.json") == 0
        met = json.loads((out / "metrics.json").read_text())
        assert met["combined"] == met["max_accuracy"]
        assert (out / "roc_combined.csv").read_text().split("# classifier")[1].split("\n", 1)[1] == \
            (out / "roc_max_accuracy.csv").read_text().split("# classifier")[1].split("\n", 1)[1]

    @pytest.mark.parametrize("extra", [
        ["-s", "combine.formulation=qp", "-s", "combine.qp_iterations=2000"],
        ["-s", "combine.formulation=bootstrap_lp", "-s", "combine.D=12"],
        ["-s", "combine.score_kind=two_p_minus_one"],
        ["-s", "combine.score_kind=clipped", "-s", "combine.cap=0.5"],
    ])
    def test_other_formulations(self, toy, extra):
        assert run("run", "-c", toy, *SMALL, "-s", "folds.k=5", *extra) == 0
        w = json.loads((toy.parent / "out" / "weights.json").read_text())
        assert abs(sum(w["weights"]) - 1) <= 1e-6
        assert min(w["weights"]) >= -1e-9

    def test_byte_identical_reruns(self, toy, tmp_path):
        assert run("run", "-c", toy, *SMALL, "-o", tmp_path / "r1") == 0
        assert run("run", "-c", toy, *SMALL, "-o", tmp_path / "r2") == 0
        names = sorted(p.name for p in (tmp_path / "r1").iterdir())
        match, mismatch, errors = filecmp.cmpfiles(tmp_path / "r1", tmp_path / "r2", names, shallow=False)
        assert not mismatch and not errors and len(match) == len(names) == 8


class TestExitCodes:
    def test_missing_config(self, tmp_path):
        assert run("grid", "-c", tmp_path / "nope.ini") == 2

    def test_unknown_setting(self, toy):
        assert run("grid", "-c", toy, "-s", "grid.colour=red") == 2

    def test_infeasible_cap_is_config_error(self, toy):
        assert run("combine", "-c", toy, *SMALL, "-s", "combine.cap=0.1") == 2

    def test_missing_data(self, toy, tmp_path):
        assert run("grid", "-c", toy, "--data", tmp_path / "absent.csv") == 3

    def test_unknown_label(self, toy, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("1,2,1\n2,3,2\n3,4,3\n")
        assert run("grid", "-c", toy, "--data", bad) == 3

    def test_instance_never_out_of_bag(self, toy):
        args = ("-s", "combine.formulation=bootstrap_lp", "-s", "combine.D=1", "-s", "folds.k=5")
        assert run("run", "-c", toy, *SMALL, *args) == 3

    def test_combine_before_grid(self, toy):
        assert run("combine", "-c", toy, *SMALL) == 3

    def test_solver_error(self, toy, monkeypatch):
        assert run("grid", "-c", toy, *SMALL) == 0

        class Broken:
            status = "infeasible"

        monkeypatch.setattr(combiner, "solve_lp", lambda p: Broken())
        assert run("combine", "-c", toy, *SMALL) == 4


class TestBvlabCommand:
    def test_point(self, capsys):
        assert run("bvlab", "point", "--p", "0.8", "--q", "0.7") == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["expected_loss_ind"] == pytest.approx(0.38, abs=1e-12)
        assert rep["bias"] == 0 and rep["stage"] == "bvlab-point"

    def test_point_coupled_with_trials(self, capsys):
        assert run("bvlab", "point", "--p", "0.7", "--a", "0.9", "--b", "0.2", "--trials", "20000") == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["mc_estimates"]["expected_loss_dep"] == pytest.approx(rep["expected_loss_dep"], abs=0.02)

    def test_point_needs_channel(self):
        assert run("bvlab", "point", "--p", "0.7") == 2

    def test_curve(self, tmp_path):
        f = tmp_path / "curve.csv"
        assert run("bvlab", "-o", f, "curve", "--step", "0.05") == 0
        rows = read_csv_rows(f)
        assert rows[0] == "be,error"
        pts = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
        assert pts[0, 0] == 0.0 and pts[-1, 0] == 0.5 and pts[-1, 1] == 0.5
        assert np.max(pts[:, 1] - 2 * pts[:, 0]) <= 0

    def test_onenn(self, capsys):
        assert run("bvlab", "onenn", "--p", "0.5", "--empirical", "2000") == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["expected_loss_dep"] == 0.0
        assert rep["expected_loss_ind"] == 0.5
        assert rep["empirical"]["max_training_error"] == 0.0


class TestConfig:
    def test_parse_range(self):
        assert parse_range("-2:1:10") == list(range(-2, 11))
        assert parse_range("-17:2:5") == list(range(-17, 6, 2))
        assert parse_range("1,3") == [1, 3]
        with pytest.raises(ConfigError):
            parse_range("1:0:3")

    def test_default_grid_is_156(self):
        cfg = RunConfig.load(None, ["data.path=x.csv"])
        assert len(cfg.grid()) == 156
        assert cfg.margin == 0.5
        assert RunConfig.load(None, ["combine.formulation=qp"]).margin == 1.0

    def test_hash_ignores_output_dir(self):
        a = RunConfig.load(None, ["data.path=/a/heart.dat", "output.dir=x"])
        b = RunConfig.load(None, ["data.path=/b/heart.dat", "output.dir=y"])
        c = RunConfig.load(None, ["data.path=/a/heart.dat", "folds.seed=1"])
        assert a.hash == b.hash != c.hash

    def test_bad_values(self):
        for ov in ("folds.k=1", "combine.formulation=svm", "combine.penalty_C=0", "grid.standardize=maybe"):
            with pytest.raises(ConfigError):
                RunConfig.load(None, [ov])


class TestShippedConfigs:
    def test_heart_grid_and_cap(self, pipelines, tmp_path):
        r = pipelines.run("heart")
        rows = read_csv_rows(r["out"] / "scores.csv")
        assert len(rows[0].split(",")) == 2 + 156
        assert len(rows) == 1 + 270
        cfg = Path(__file__).resolve().parents[1] / "configs" / "heart.ini"
        assert run("combine", "-c", cfg, "-o", tmp_path, "--scores", r["out"] / "scores.csv",
                   "-s", "combine.cap=1/156") == 0
        w = json.loads((tmp_path / "weights.json").read_text())["weights"]
        np.testing.assert_allclose(w, np.full(156, 1 / 156), rtol=0, atol=1e-12)
