"""RBF soft-margin SVM (SMO), model grids, out-of-sample score matrices, k-NN."""

from __future__ import annotations

import io
import logging
import os
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._smo import smo_solve
from .dataspace import BootstrapPlan, DataError, FoldPlan, LabeledDataset, SingleClassError

log = logging.getLogger(__name__)

RAW, CLIPPED, TWO_P_MINUS_ONE = "raw", "clipped", "two_p_minus_one"
SCORE_KINDS = (RAW, CLIPPED, TWO_P_MINUS_ONE)


class ConvergenceWarning(UserWarning):
    pass


class GridTrainingError(RuntimeError):
    def __init__(self, split, model, cause):
        super().__init__(f"training failed at split {split}, model {model}: {cause}")
        self.split = split
        self.model = model


@dataclass(frozen=True, eq=False)
class SvmModel:
    support_vectors: np.ndarray
    alphas_times_targets: np.ndarray
    bias: float
    gamma: float
    cost: float
    scaler_mean: np.ndarray
    scaler_std: np.ndarray
    alphas: np.ndarray = field(repr=False, default=None)
    converged: bool = True
    iterations: int = 0

    @property
    def n_features(self) -> int:
        return self.scaler_mean.size

    def scale(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.scaler_mean) / self.scaler_std

    def decision_scores(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        if self.support_vectors.shape[0] == 0:
            return np.full(X.shape[0], self.bias)
        Z = self.scale(X)
        K = rbf_kernel(Z, self.support_vectors, self.gamma)
        return K @ self.alphas_times_targets + self.bias

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_scores(X) >= 0, 1, -1)


def decision_score(model: SvmModel, x) -> float:
    """Kernel expansion plus bias at a single point; label is +1 iff >= 0."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {x.size}")
    return float(model.decision_scores(x[None, :])[0])


def sq_distances(A, B) -> np.ndarray:
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def rbf_kernel(A, B, gamma) -> np.ndarray:
    return np.exp(-gamma * sq_distances(A, B))


def fit_scaler(X, standardize=True):
    X = np.asarray(X, dtype=float)
    if not standardize:
        return np.zeros(X.shape[1]), np.ones(X.shape[1])
    mean = X.mean(0)
    std = X.std(0)
    std[std == 0] = 1.0
    return mean, std


def _fit_from_kernel(K, y, cost, tol, max_iter):
    alpha, rho, iters, conv = smo_solve(K, y.astype(float), float(cost), float(tol), int(max_iter))
    return alpha, rho, iters, conv


def _build_model(Z, y, alpha, rho, gamma, cost, mean, std, iters, conv, sv_tol=0.0):
    sv = alpha > sv_tol
    return SvmModel(Z[sv].copy(), (alpha * y)[sv].copy(), -float(rho), float(gamma), float(cost),
                    mean, std, alpha, bool(conv), int(iters))


def train_svm(train: LabeledDataset, cost: float, gamma: float, tol: float = 1e-3,
              max_passes: int = 10_000_000, standardize: bool = True) -> SvmModel:
    """Train an RBF C-SVC with SMO.

    ``max_passes`` caps SMO iterations. When it is hit the best-so-far model
    is returned with ``converged=False`` and a :class:`ConvergenceWarning`.
    """
    train.require_both_classes()
    if cost <= 0 or gamma <= 0:
        raise ValueError("cost and gamma must be positive")
    mean, std = fit_scaler(train.features, standardize)
    Z = (train.features - mean) / std
    y = train.targets.astype(float)
    K = rbf_kernel(Z, Z, gamma)
    alpha, rho, iters, conv = _fit_from_kernel(K, y, cost, tol, max_passes)
    if not conv:
        warnings.warn(f"SMO stopped after {iters} iterations without meeting tol={tol}",
                      ConvergenceWarning, stacklevel=2)
    return _build_model(Z, y, alpha, rho, gamma, cost, mean, std, iters, conv)


def knn_predict(train: LabeledDataset, x, k: int = 1) -> int:
    """Majority label of the ``k`` nearest training points (Euclidean).

    Distance ties keep training order; a vote tie goes to +1.
    """
    if train.n == 0:
        raise DataError("empty training set")
    if not 1 <= k <= train.n:
        raise ValueError(f"k={k} out of range [1, {train.n}]")
    x = np.asarray(x, dtype=float).ravel()
    d = ((train.features - x) ** 2).sum(1)
    nearest = np.argsort(d, kind="stable")[:k]
    return 1 if train.targets[nearest].sum() >= 0 else -1


# -- grids ------------------------------------------------------------------

@dataclass(frozen=True)
class ModelGrid:
    """Cost x gamma grid. Models are numbered 1..K with cost varying fastest.

    With the default grid, model 13 is (C=2^10, g=2^-17), model 26 is
    (C=2^10, g=2^-16) and model 156 is (C=2^10, g=2^-6).
    """

    cost_values: tuple[float, ...]
    gamma_values: tuple[float, ...]

    @classmethod
    def from_exponents(cls, cost_exp: Sequence[float], gamma_exp: Sequence[float], base: float = 2.0):
        return cls(tuple(float(base) ** e for e in cost_exp), tuple(float(base) ** e for e in gamma_exp))

    @classmethod
    def default(cls):
        return cls.from_exponents(range(-2, 11), range(-17, -5))

    def __len__(self):
        return len(self.cost_values) * len(self.gamma_values)

    def models(self):
        """Yield (number, cost, gamma) in numbering order."""
        n = 1
        for g in self.gamma_values:
            for c in self.cost_values:
                yield n, c, g
                n += 1

    def params(self, number: int):
        if not 1 <= number <= len(self):
            raise IndexError(number)
        gi, ci = divmod(number - 1, len(self.cost_values))
        return self.cost_values[ci], self.gamma_values[gi]


@dataclass(frozen=True, eq=False)
class OofScoreMatrix:
    """N x K out-of-sample scores; column k-1 belongs to grid model k.

    For bootstrap plans ``scores`` is D x N x K and ``mask`` flags valid
    (out-of-bag) cells; in-bag cells hold NaN.
    """

    scores: np.ndarray
    targets: np.ndarray
    kind: str = RAW
    ids: tuple[str, ...] = ()
    model_numbers: tuple[int, ...] = ()
    mask: np.ndarray | None = None
    provenance: object = None
    train_sets: tuple = ()

    def __post_init__(self):
        if self.kind not in SCORE_KINDS:
            raise ValueError(f"unknown score kind {self.kind!r}")
        s = np.asarray(self.scores, dtype=float)
        t = np.asarray(self.targets, dtype=int)
        n = s.shape[-2]
        if t.size != n:
            raise ValueError("targets length must match score rows")
        if self.kind != RAW:
            vals = s[np.isfinite(s)]
            if vals.size and (vals.min() < -1 - 1e-12 or vals.max() > 1 + 1e-12):
                raise ValueError(f"{self.kind} scores must lie in [-1, 1]")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "targets", t)
        if not self.ids:
            object.__setattr__(self, "ids", tuple(str(i) for i in range(n)))
        if not self.model_numbers:
            object.__setattr__(self, "model_numbers", tuple(range(1, s.shape[-1] + 1)))

    @property
    def n(self) -> int:
        return self.scores.shape[-2]

    @property
    def k(self) -> int:
        return self.scores.shape[-1]

    def check_out_of_sample(self):
        """Every scored (instance, split) pair was excluded from that split's training set."""
        if not self.train_sets:
            return
        if self.scores.ndim == 2:
            for test, train in self.train_sets:
                if np.intersect1d(test, train).size:
                    raise AssertionError("an instance was scored by a model trained on it")
        else:
            for d, train in enumerate(self.train_sets):
                valid = np.nonzero(self.mask[d])[0]
                if np.intersect1d(valid, train).size:
                    raise AssertionError(f"replicate {d}: in-bag instance scored")

    def with_kind(self, kind: str) -> "OofScoreMatrix":
        """Return a copy with scores transformed to ``kind``.

        ``clipped`` truncates to [-1, 1]; ``two_p_minus_one`` maps each column
        through an isotonic fit of P(t=+1 | score) to ``2P - 1``.
        """
        if kind == self.kind:
            return self
        if self.kind != RAW:
            raise ValueError("only raw scores can be converted")
        if kind == CLIPPED:
            s = np.clip(self.scores, -1.0, 1.0)
        elif kind == TWO_P_MINUS_ONE:
            from .evalkit import isotonic_fit
            if self.scores.ndim != 2:
                raise ValueError("isotonic conversion applies to 2-D score matrices")
            y01 = (self.targets > 0).astype(float)
            s = np.empty_like(self.scores)
            for c in range(self.k):
                iso = isotonic_fit(self.scores[:, c], y01)
                s[:, c] = 2.0 * iso.predict(self.scores[:, c]) - 1.0
        else:
            raise ValueError(f"unknown score kind {kind!r}")
        return OofScoreMatrix(s, self.targets, kind, self.ids, self.model_numbers, self.mask,
                              self.provenance, self.train_sets)

    def to_csv(self, meta: dict | None = None) -> str:
        """Header ``id,target,<model numbers>``; ``#`` lines carry metadata."""
        if self.scores.ndim != 2:
            raise ValueError("CSV export supports 2-D score matrices only")
        buf = io.StringIO()
        for key, val in (meta or {}).items():
            buf.write(f"# {key}={val}\n")
        buf.write(f"# kind={self.kind}\n")
        buf.write("id,target," + ",".join(str(m) for m in self.model_numbers) + "\n")
        for i in range(self.n):
            row = ",".join(repr(float(v)) for v in self.scores[i])
            buf.write(f"{self.ids[i]},{int(self.targets[i])},{row}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "OofScoreMatrix":
        kind = RAW
        rows = []
        header = None
        for ln in text.splitlines():
            if not ln.strip():
                continue
            if ln.startswith("#"):
                key, _, val = ln[1:].strip().partition("=")
                if key == "kind":
                    kind = val.strip()
                continue
            cells = ln.split(",")
            if header is None:
                header = cells
                continue
            rows.append(cells)
        if header is None or len(header) < 3:
            raise DataError("score matrix needs id, target and at least one model column")
        ids = tuple(r[0] for r in rows)
        try:
            targets = np.array([int(float(r[1])) for r in rows])
            scores = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(len(rows), len(header) - 2)
        except ValueError as e:
            raise DataError(f"malformed score matrix: {e}") from None
        if not np.all(np.isin(targets, (-1, 1))):
            raise DataError("score matrix targets must be -1 or +1")
        models = tuple(int(h) for h in header[2:])
        return cls(scores, targets, kind, ids, models)


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("LINCOMB_WORKERS", "1")))
    except ValueError:
        return 1


def _split_task(X, y, train_idx, score_idx, grid: ModelGrid, tol, max_iter, standardize):
    """Train every grid model on one split; return (len(score_idx), K) scores."""
    mean, std = fit_scaler(X[train_idx], standardize)
    Ztr = (X[train_idx] - mean) / std
    Zte = (X[score_idx] - mean) / std
    ytr = y[train_idx].astype(float)
    D2 = sq_distances(Ztr, Ztr)
    D2te = sq_distances(Zte, Ztr)
    out = np.empty((len(score_idx), len(grid)))
    notconv = []
    for num, c, g in grid.models():
        K = np.exp(-g * D2)
        alpha, rho, iters, conv = _fit_from_kernel(K, ytr, c, tol, max_iter)
        if not conv:
            notconv.append(num)
        coef = alpha * ytr
        sv = alpha > 0
        out[:, num - 1] = np.exp(-g * D2te[:, sv]) @ coef[sv] - rho
    return out, notconv


def grid_oof_scores(ds: LabeledDataset, grid: ModelGrid, plan: FoldPlan | BootstrapPlan,
                    tol: float = 1e-3, max_iter: int = 10_000_000, standardize: bool = True,
                    workers: int | None = None) -> OofScoreMatrix:
    """Out-of-sample decision scores of every grid model.

    Cells are independent; with ``workers > 1`` (or ``LINCOMB_WORKERS``) they
    run in a process pool and are assembled positionally.
    """
    X, y = ds.features, ds.targets
    if isinstance(plan, FoldPlan):
        splits = [(tr, te) for tr, te in plan.splits()]
    elif isinstance(plan, BootstrapPlan):
        splits = [(tr, oob) for tr, oob in plan.splits()]
    else:
        raise TypeError("plan must be a FoldPlan or BootstrapPlan")
    if plan_n(plan) != ds.n:
        raise ValueError("plan was built for a different dataset size")

    for s, (tr, _) in enumerate(splits):
        if np.unique(y[tr]).size < 2:
            raise GridTrainingError(s, None, SingleClassError("training split has a single class"))

    workers = workers or _worker_count()
    args = [(X, y, tr, te, grid, tol, max_iter, standardize) for tr, te in splits]
    if workers > 1:
        from joblib import Parallel, delayed
        results = Parallel(n_jobs=workers)(delayed(_split_task)(*a) for a in args)
    else:
        results = [_split_task(*a) for a in args]

    for s, (_, nc) in enumerate(results):
        if nc:
            log.warning("split %d: models %s hit the SMO iteration cap", s, nc)

    ids = tuple(str(i) for i in range(ds.n))
    if isinstance(plan, FoldPlan):
        S = np.full((ds.n, len(grid)), np.nan)
        for (tr, te), (out, _) in zip(splits, results):
            S[te] = out
        m = OofScoreMatrix(S, y, RAW, ids, provenance=plan,
                           train_sets=tuple((te, tr) for tr, te in splits))
    else:
        S = np.full((plan.D, ds.n, len(grid)), np.nan)
        mask = np.zeros((plan.D, ds.n), dtype=bool)
        for d, ((tr, oob), (out, _)) in enumerate(zip(splits, results)):
            S[d, oob] = out
            mask[d, oob] = True
        m = OofScoreMatrix(S, y, RAW, ids, mask=mask, provenance=plan,
                           train_sets=tuple(tr for tr, _ in splits))
    m.check_out_of_sample()
    return m


def plan_n(plan) -> int:
    if isinstance(plan, FoldPlan):
        return plan.assignments.size
    return plan.replicates[0].size
