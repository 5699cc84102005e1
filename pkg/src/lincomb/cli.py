"""Command-line driver: ``grid``, ``combine``, ``evaluate``, ``run`` and ``bvlab``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver error.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .base_learners import RAW, GridTrainingError, ModelGrid, OofScoreMatrix, grid_oof_scores
from .bvlab import (PointWorld, analytic_decomposition, curve_csv, dependent_decomposition,
                    empirical_1nn_check, monte_carlo_decomposition, one_nn_curve)
from .combiner import (CombinerError, CombinerWeights, build_lp_bootstrap, build_lp_single,
                       combined_scores, solve_weights_lp, solve_weights_qp)
from .config import ConfigError, RunConfig
from .dataspace import DataError, bootstrap_plan, load_dataset, stratified_kfold
from .evalkit import (accuracy, calibration_mae, isotonic_fit, reliability_csv, roc_auc,
                      score_variance, to_binary)
from .lp_core import LpError

log = logging.getLogger("lincomb")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4

SCORES_FILE = "scores.csv"
BOOT_FILE = "scores_bootstrap.csv"
MODELS_FILE = "models.csv"
WEIGHTS_FILE = "weights.json"
METRICS_FILE = "metrics.json"


def _write(path, text):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _meta(cfg: RunConfig, stage: str) -> dict:
    return {"stage": stage, "config_hash": cfg.hash}


def _load(cfg: RunConfig):
    return load_dataset(cfg.data_path, cfg.schema())


def _accuracies(scores, targets) -> np.ndarray:
    pred = np.where(scores >= 0, 1, -1)
    return (pred == targets[:, None]).mean(0)


# -- grid -------------------------------------------------------------------

def cmd_grid(cfg: RunConfig) -> dict:
    ds = _load(cfg)
    grid = cfg.grid()
    plan = stratified_kfold(ds, cfg.k, cfg.fold_seed)
    m = grid_oof_scores(ds, grid, plan, tol=cfg.smo_tol, max_iter=cfg.smo_max_iter,
                        standardize=cfg.standardize)
    out = cfg.out_dir
    meta = _meta(cfg, "grid")
    meta.update(dataset=ds.id, n=ds.n, k_models=len(grid), folds=cfg.k, fold_seed=cfg.fold_seed)
    _write(os.path.join(out, SCORES_FILE), m.to_csv(meta))

    acc = _accuracies(m.scores, ds.targets)
    buf = io.StringIO()
    for key, val in _meta(cfg, "grid").items():
        buf.write(f"# {key}={val}\n")
    buf.write("model,C,g,cv_accuracy,score_variance\n")
    for num, c, g in grid.models():
        var = score_variance(ds.targets, m.scores[:, num - 1])
        buf.write(f"{num},{float(c)!r},{float(g)!r},{float(acc[num - 1])!r},{float(var)!r}\n")
    _write(os.path.join(out, MODELS_FILE), buf.getvalue())

    if cfg.formulation == "bootstrap_lp":
        bplan = bootstrap_plan(ds, cfg.D, cfg.bootstrap_seed)
        bm = grid_oof_scores(ds, grid, bplan, tol=cfg.smo_tol, max_iter=cfg.smo_max_iter,
                             standardize=cfg.standardize)
        _write(os.path.join(out, BOOT_FILE), bootstrap_csv(bm, _meta(cfg, "grid")))

    best = int(np.argmax(acc))
    log.info("grid: %d models, best model %d with CV accuracy %.4f", len(grid), best + 1, acc[best])
    return {"k_models": len(grid), "best_model": best + 1, "best_accuracy": float(acc[best]),
            "n": ds.n}


def bootstrap_csv(m: OofScoreMatrix, meta: dict) -> str:
    """Long format: one row per valid (replicate, instance) cell."""
    buf = io.StringIO()
    for key, val in meta.items():
        buf.write(f"# {key}={val}\n")
    buf.write(f"# replicates={m.scores.shape[0]}\n")
    buf.write("replicate,id,target," + ",".join(str(k) for k in m.model_numbers) + "\n")
    D, N, _ = m.scores.shape
    for d in range(D):
        for i in range(N):
            if m.mask[d, i]:
                row = ",".join(repr(float(v)) for v in m.scores[d, i])
                buf.write(f"{d},{m.ids[i]},{int(m.targets[i])},{row}\n")
    return buf.getvalue()


def read_bootstrap_csv(text: str, n_ids: list[str]):
    D = None
    rows = []
    header = None
    for ln in text.splitlines():
        if ln.startswith("#"):
            key, _, val = ln[1:].strip().partition("=")
            if key == "replicates":
                D = int(val)
            continue
        if not ln.strip():
            continue
        if header is None:
            header = ln.split(",")
            continue
        rows.append(ln.split(","))
    if D is None or header is None:
        raise DataError("bootstrap score file lacks a header")
    K = len(header) - 3
    index = {s: i for i, s in enumerate(n_ids)}
    S = np.full((D, len(n_ids), K), np.nan)
    mask = np.zeros((D, len(n_ids)), dtype=bool)
    for r in rows:
        d, i = int(r[0]), index[r[1]]
        S[d, i] = [float(v) for v in r[3:]]
        mask[d, i] = True
    return S, mask


# -- combine ----------------------------------------------------------------

def _read_scores(cfg: RunConfig, path=None) -> OofScoreMatrix:
    path = path or os.path.join(cfg.out_dir, SCORES_FILE)
    if not os.path.isfile(path):
        raise DataError(f"score matrix not found: {path} (run `lincomb grid` first)")
    with open(path) as fh:
        return OofScoreMatrix.from_csv(fh.read())


def solve_configured(cfg: RunConfig, m: OofScoreMatrix, boot=None) -> CombinerWeights:
    z = m.with_kind(cfg.score_kind).scores
    f = cfg.formulation
    if f == "single_lp":
        w, _ = solve_weights_lp(build_lp_single(z, m.targets, cfg.cap, cfg.margin, cfg.sum_to_one))
    elif f == "bootstrap_lp":
        if boot is None:
            raise DataError("bootstrap_lp needs bootstrap out-of-bag scores")
        S, mask = boot
        if cfg.score_kind == "clipped":
            S = np.clip(S, -1.0, 1.0)
        elif cfg.score_kind != RAW:
            raise ConfigError("bootstrap_lp supports raw or clipped scores")
        w, _ = solve_weights_lp(build_lp_bootstrap(S, mask, m.targets, cfg.cap, cfg.margin,
                                                   cfg.sum_to_one))
    else:
        w, _ = solve_weights_qp(z, m.targets, cfg.penalty_C, cfg.margin, cfg.qp_iterations)
    return w


def cmd_combine(cfg: RunConfig, scores_path=None) -> dict:
    m = _read_scores(cfg, scores_path)
    grid = cfg.grid()
    if len(grid) != m.k:
        raise DataError(f"score matrix has {m.k} models but the grid defines {len(grid)}")
    boot = None
    if cfg.formulation == "bootstrap_lp":
        bpath = os.path.join(cfg.out_dir, BOOT_FILE)
        if not os.path.isfile(bpath):
            raise DataError(f"bootstrap scores not found: {bpath}")
        with open(bpath) as fh:
            boot = read_bootstrap_csv(fh.read(), list(m.ids))
    try:
        w = solve_configured(cfg, m, boot)
    except (LpError, CombinerError) as e:
        raise CombinerError(f"{cfg.formulation} (margin={cfg.margin}, cap={cfg.cap}): {e}") from e
    except ValueError as e:
        if isinstance(e, (ConfigError, DataError)):
            raise
        raise DataError(f"{cfg.formulation}: {e}") from e

    acc = _accuracies(m.scores, m.targets)
    best = int(np.argmax(acc))
    models = []
    for num, c, g in grid.models():
        models.append({"model": num, "C": c, "g": g, "cv_accuracy": float(acc[num - 1]),
                       "weight": float(w.weights[num - 1])})
    report = {
        **_meta(cfg, "combine"),
        "formulation": w.formulation, "margin": w.margin, "cap": w.cap,
        "penalty_C": w.penalty_C, "sum_to_one": w.sum_to_one, "score_kind": cfg.score_kind,
        "objective_value": w.objective_value, "nonzero_count": w.nonzero_count,
        "nonzero_models": [k for k, _ in w.nonzero()],
        "max_accuracy_model": best + 1, "max_accuracy": float(acc[best]),
        "max_accuracy_model_weight": float(w.weights[best]),
        "weights": [float(v) for v in w.weights],
        "models": models,
    }
    _write(os.path.join(cfg.out_dir, WEIGHTS_FILE), _dump_json(report))
    log.info("combine: %d of %d weights nonzero: %s", w.nonzero_count, w.k,
             ", ".join(f"#{k}={v:.4f}" for k, v in w.nonzero()))
    if w.weights[best] <= 1e-6:
        log.info("combine: the max-accuracy model #%d received zero weight", best + 1)
    return report


# -- evaluate ---------------------------------------------------------------

def _metrics(targets, scores) -> tuple[dict, object, object]:
    y01 = to_binary(targets)
    roc = roc_auc(targets, scores)
    iso = isotonic_fit(scores, y01)
    pred = np.where(scores >= 0, 1, -1)
    return ({"accuracy": accuracy(targets, pred), "auc": roc.auc,
             "calibration_mae": calibration_mae(iso, scores, y01)}, roc, iso)


def cmd_evaluate(cfg: RunConfig, scores_path=None, weights_path=None) -> dict:
    m = _read_scores(cfg, scores_path)
    weights_path = weights_path or os.path.join(cfg.out_dir, WEIGHTS_FILE)
    if not os.path.isfile(weights_path):
        raise DataError(f"weights not found: {weights_path} (run `lincomb combine` first)")
    with open(weights_path) as fh:
        wrep = json.load(fh)
    w = np.asarray(wrep["weights"], dtype=float)
    if w.size != m.k:
        raise DataError(f"{w.size} weights for a {m.k}-model score matrix")
    z = m.with_kind(wrep.get("score_kind", RAW)).scores
    comb = combined_scores(w, z)
    acc = _accuracies(m.scores, m.targets)
    best = int(np.argmax(acc))
    single = m.scores[:, best]

    out = cfg.out_dir
    res = {**_meta(cfg, "evaluate"), "max_accuracy_model": best + 1,
           "calibration_target": "binary labels"}
    y01 = to_binary(m.targets)
    for name, s in (("combined", comb), ("max_accuracy", single)):
        met, roc, iso = _metrics(m.targets, s)
        res[name] = met
        meta = _meta(cfg, "evaluate")
        meta["classifier"] = name
        _write(os.path.join(out, f"roc_{name}.csv"), roc.to_csv(meta))
        _write(os.path.join(out, f"reliability_{name}.csv"), reliability_csv(iso, s, y01, meta))
    _write(os.path.join(out, METRICS_FILE), _dump_json(res))
    log.info("evaluate: combined AUC %.5f, max-accuracy AUC %.5f", res["combined"]["auc"],
             res["max_accuracy"]["auc"])
    return res


def cmd_run(cfg: RunConfig) -> dict:
    g = cmd_grid(cfg)
    c = cmd_combine(cfg)
    e = cmd_evaluate(cfg)
    return {"grid": g, "combine": c, "evaluate": e}


# -- bvlab ------------------------------------------------------------------

def cmd_bvlab(args) -> dict | str:
    sub = args.bv_command
    meta = {"stage": f"bvlab-{sub}"}
    if sub == "curve":
        n = int(round(0.5 / args.step))
        grid = [i * args.step for i in range(n)] + [0.5]
        pts = one_nn_curve(grid)
        gap = max(e - 2 * b for b, e in pts)
        log.info("curve: max(error - 2 BE) = %.3g", gap)
        return curve_csv(pts, meta)
    if sub == "point":
        if args.a is not None or args.b is not None:
            if args.a is None or args.b is None:
                raise ConfigError("--a and --b go together")
            world = PointWorld.coupled(args.p, args.a, args.b)
        else:
            if args.q is None:
                raise ConfigError("give --q, or --a and --b")
            world = PointWorld.independent(args.p, args.q)
        if args.trials:
            rep = monte_carlo_decomposition(world, args.trials, args.seed)
        elif world.is_coupled:
            rep = dependent_decomposition(world)
        else:
            rep = analytic_decomposition(world)
        return {**meta, "p_true": args.p, **rep.to_dict()}
    if sub == "onenn":
        world = PointWorld.one_nn(args.p)
        rep = (monte_carlo_decomposition(world, args.trials, args.seed) if args.trials
               else dependent_decomposition(world))
        res = {**meta, "p_true": args.p, **rep.to_dict()}
        if args.empirical:
            res["empirical"] = empirical_1nn_check(args.p, args.empirical, args.seed)
        return res
    raise ConfigError(f"unknown bvlab command {sub!r}")


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lincomb", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("-c", "--config", help="INI run configuration")
        sp.add_argument("-s", "--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a configuration value (repeatable)")
        sp.add_argument("-o", "--out", help="output directory (overrides output.dir)")
        sp.add_argument("--data", help="dataset path (overrides data.path)")
        return sp

    with_config(sub.add_parser("grid", help="out-of-sample scores for every grid model"))
    sp = with_config(sub.add_parser("combine", help="solve for combination weights"))
    sp.add_argument("--scores", help="score matrix CSV (default: <out>/scores.csv)")
    sp = with_config(sub.add_parser("evaluate", help="accuracy, AUC, calibration"))
    sp.add_argument("--scores")
    sp.add_argument("--weights")
    with_config(sub.add_parser("run", help="grid, combine and evaluate"))

    bv = sub.add_parser("bvlab", help="bias-variance laboratory")
    bv.add_argument("-o", "--out", help="write the report to this file instead of stdout")
    bvs = bv.add_subparsers(dest="bv_command", required=True)
    c = bvs.add_parser("curve", help="1NN out-of-sample error against Bayes error")
    c.add_argument("--step", type=float, default=0.01)
    pt = bvs.add_parser("point", help="decomposition at one point")
    pt.add_argument("--p", type=float, required=True, help="P(t=+1)")
    pt.add_argument("--q", type=float, help="P(y=+1), independent prediction")
    pt.add_argument("--a", type=float, help="P(y=+1 | t=+1), coupled prediction")
    pt.add_argument("--b", type=float, help="P(y=+1 | t=-1), coupled prediction")
    pt.add_argument("--trials", type=int, default=0, help="also run a Monte Carlo estimate")
    pt.add_argument("--seed", type=int, default=0)
    nn = bvs.add_parser("onenn", help="1NN training and test error at one point")
    nn.add_argument("--p", type=float, required=True)
    nn.add_argument("--trials", type=int, default=0)
    nn.add_argument("--empirical", type=int, default=0,
                    help="trials of the empirical 1NN check on synthetic 1-D data")
    nn.add_argument("--seed", type=int, default=0)
    return p


def _config_from_args(args) -> RunConfig:
    overrides = list(args.set)
    if args.out:
        overrides.append(f"output.dir={os.path.abspath(args.out)}")
    if args.data:
        overrides.append(f"data.path={os.path.abspath(args.data)}")
    cfg = RunConfig.load(args.config, overrides)
    if not cfg.get("data", "path"):
        raise ConfigError("data.path is not set")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "bvlab":
            res = cmd_bvlab(args)
            text = res if isinstance(res, str) else _dump_json(res)
            if args.out:
                _write(args.out, text)
            else:
                sys.stdout.write(text)
            return EXIT_OK
        cfg = _config_from_args(args)
        if args.command == "grid":
            res = cmd_grid(cfg)
        elif args.command == "combine":
            res = cmd_combine(cfg, args.scores)
        elif args.command == "evaluate":
            res = cmd_evaluate(cfg, args.scores, args.weights)
        else:
            res = cmd_run(cfg)
        log.debug("%s", res)
        return EXIT_OK
    except ConfigError as e:
        log.error("config error: %s", e)
        return EXIT_CONFIG
    except (DataError, GridTrainingError) as e:
        log.error("data error: %s", e)
        return EXIT_DATA
    except (CombinerError, LpError) as e:
        log.error("solver error: %s", e)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
