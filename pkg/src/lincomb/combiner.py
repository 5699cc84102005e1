"""Weights for a linear combination of classifier scores.

Three formulations over out-of-sample scores ``z`` (rows are instances,
columns are base models) and targets ``t`` in {-1, +1}:

* ``single_lp``: minimize ``sum_i xi_i`` s.t. ``t_i z_i.w >= margin - xi_i``,
  ``xi >= 0``, ``w >= 0``, ``sum w = 1`` (optionally ``w <= cap``).
* ``bootstrap_lp``: the same with one slack per valid (instance, replicate)
  cell of a stack of bootstrap out-of-bag score matrices.
* ``qp``: minimize ``1/2 |w|^2 + C sum_i max(0, margin - t_i z_i.w)`` over the
  probability simplex, by projected subgradient descent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .lp_core import EQ, GE, LpProblem, LpSolution, project_simplex, solve_lp

log = logging.getLogger(__name__)

LP_MARGIN = 0.5
QP_MARGIN = 1.0
NONZERO_TOL = 1e-6
SLACK_TOL = 1e-7


class CombinerError(RuntimeError):
    """The weight problem could not be solved."""


@dataclass(frozen=True)
class CombinerWeights:
    weights: np.ndarray
    formulation: str
    margin: float
    objective_value: float
    cap: float | None = None
    penalty_C: float | None = None
    sum_to_one: bool = True

    @property
    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.weights > NONZERO_TOL))

    @property
    def k(self) -> int:
        return self.weights.size

    def nonzero(self) -> list[tuple[int, float]]:
        """(1-based model number, weight) for every weight above the threshold."""
        return [(int(k) + 1, float(self.weights[k])) for k in np.nonzero(self.weights > NONZERO_TOL)[0]]


@dataclass(frozen=True)
class SlackVector:
    xi: np.ndarray


def _check_inputs(scores, targets):
    z = np.asarray(scores, dtype=float)
    t = np.asarray(targets, dtype=float).ravel()
    if z.ndim != 2:
        raise ValueError("scores must be an N x K matrix")
    if z.shape[1] == 0:
        raise ValueError("need at least one base model (K = 0)")
    if z.shape[0] != t.size:
        raise ValueError(f"{z.shape[0]} score rows but {t.size} targets")
    if not np.all(np.isin(t, (-1.0, 1.0))):
        raise ValueError("targets must be -1 or +1")
    if not np.all(np.isfinite(z)):
        raise ValueError("scores contain non-finite values")
    return z, t


def _check_cap(cap, K, sum_to_one):
    if cap is None:
        return
    if cap <= 0:
        raise ValueError("cap must be positive")
    if sum_to_one and cap * K < 1.0 - 1e-12:
        raise ValueError(f"cap {cap} < 1/K = {1.0 / K}: no weight vector can sum to one")


class CombinerLp(LpProblem):
    """An :class:`LpProblem` over ``(w_1..w_K, xi_1..xi_M)`` plus the data
    needed to read its solution back.

    ``signed_rows[m]`` is ``t_i * z_i`` for slack ``m``; ``cells[m]`` is the
    (instance, replicate) pair it belongs to.
    """

    def __init__(self, signed_rows, cells, formulation, margin, cap, sum_to_one):
        M, K = signed_rows.shape
        V = K + M
        A = np.zeros((M + int(sum_to_one), V))
        A[:M, :K] = signed_rows
        A[np.arange(M), K + np.arange(M)] = 1.0
        relations = [GE] * M
        rhs = [margin] * M
        if sum_to_one:
            A[M, :K] = 1.0
            relations.append(EQ)
            rhs.append(1.0)
        c = np.concatenate([np.zeros(K), np.ones(M)])
        upper = np.inf if cap is None else cap
        bounds = [(0.0, upper)] * K + [(0.0, np.inf)] * M
        super().__init__(c, A, relations, rhs, bounds)
        self.signed_rows = signed_rows
        self.cells = cells
        self.n_models = K
        self.formulation = formulation
        self.margin = margin
        self.cap = cap
        self.sum_to_one = sum_to_one


def build_lp_single(scores, targets, cap: float | None = None, margin: float = LP_MARGIN,
                    sum_to_one: bool = True) -> CombinerLp:
    """One margin constraint and one slack per instance."""
    z, t = _check_inputs(scores, targets)
    _check_cap(cap, z.shape[1], sum_to_one)
    cells = [(i, 0) for i in range(z.shape[0])]
    return CombinerLp(t[:, None] * z, cells, "single_lp", margin, cap, sum_to_one)


def build_lp_bootstrap(score_tensors, masks, targets, cap: float | None = None,
                       margin: float = LP_MARGIN, sum_to_one: bool = True) -> CombinerLp:
    """One slack per valid (instance, replicate) cell.

    Parameters
    ----------
    score_tensors : array, shape (D, N, K)
        Out-of-bag scores per replicate; invalid cells are ignored.
    masks : bool array, shape (D, N)
        True where instance ``i`` was out of bag in replicate ``d``.
    """
    S = np.asarray(score_tensors, dtype=float)
    if S.ndim != 3:
        raise ValueError("score_tensors must have shape (D, N, K)")
    D, N, K = S.shape
    mask = np.asarray(masks, dtype=bool)
    if mask.shape != (D, N):
        raise ValueError(f"masks must have shape {(D, N)}")
    t = np.asarray(targets, dtype=float).ravel()
    if t.size != N:
        raise ValueError(f"{N} score rows but {t.size} targets")
    if K == 0:
        raise ValueError("need at least one base model (K = 0)")
    if not np.all(np.isin(t, (-1.0, 1.0))):
        raise ValueError("targets must be -1 or +1")
    never = np.nonzero(~mask.any(0))[0]
    if never.size:
        raise ValueError(f"instances never out of bag: {never.tolist()}")
    _check_cap(cap, K, sum_to_one)
    cells = [(i, d) for i in range(N) for d in range(D) if mask[d, i]]
    rows = np.array([t[i] * S[d, i] for i, d in cells])
    if not np.all(np.isfinite(rows)):
        raise ValueError("valid score cells contain non-finite values")
    return CombinerLp(rows, cells, "bootstrap_lp", margin, cap, sum_to_one)


def hinge_slacks(signed_rows, w, margin) -> np.ndarray:
    return np.maximum(0.0, margin - signed_rows @ w)


def solve_weights_lp(problem: CombinerLp) -> tuple[CombinerWeights, SlackVector]:
    sol: LpSolution = solve_lp(problem)
    if sol.status != "optimal":
        raise CombinerError(f"{problem.formulation}: LP {sol.status} (should not happen with slacks)")
    K = problem.n_models
    w = sol.x[:K].copy()
    xi = sol.x[K:].copy()
    implied = hinge_slacks(problem.signed_rows, w, problem.margin)
    scale = 1.0 + float(np.abs(problem.signed_rows).max(initial=0.0))
    gap = float(np.abs(implied - xi).max(initial=0.0))
    if gap > SLACK_TOL * scale:
        raise CombinerError(f"LP slacks disagree with hinge slacks by {gap:.3g}")
    cw = CombinerWeights(w, problem.formulation, problem.margin, float(implied.sum()),
                         cap=problem.cap, sum_to_one=problem.sum_to_one)
    return cw, SlackVector(xi)


@njit(cache=True)
def _project_simplex_nb(v):
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = 0
    for r in range(u.size):
        if u[r] - css[r] / (r + 1.0) > 0:
            rho = r
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


@njit(cache=True)
def _qp_f(R, w, C, margin):
    gap = margin - R @ w
    return 0.5 * (w @ w) + C * np.maximum(gap, 0.0).sum()


@njit(cache=True)
def _qp_descent(R, C, margin, iterations):
    """Projected subgradient from the uniform point with step 1/iter.

    Returns the best of the iterates and the running averages (the averages
    are scored every 100 steps).
    """
    K = R.shape[1]
    w = np.full(K, 1.0 / K)
    avg = w.copy()
    best_w = w.copy()
    best_f = np.inf
    for it in range(1, iterations + 1):
        gap = margin - R @ w
        fw = 0.5 * (w @ w)
        g = w.copy()
        for i in range(gap.size):
            if gap[i] > 0:
                fw += C * gap[i]
                g -= C * R[i]
        if fw < best_f:
            best_f = fw
            best_w = w.copy()
        w = _project_simplex_nb(w - g / it)
        avg += (w - avg) / (it + 1)
        if it % 100 == 0:
            fa = _qp_f(R, avg, C, margin)
            if fa < best_f:
                best_f = fa
                best_w = avg.copy()
    fw = _qp_f(R, w, C, margin)
    if fw < best_f:
        best_f = fw
        best_w = w.copy()
    s = best_w.sum()
    if s > 0:
        best_w = best_w / s
    return best_w, best_f


def qp_objective(w, signed_rows, penalty_C, margin=QP_MARGIN) -> float:
    return 0.5 * float(w @ w) + penalty_C * float(hinge_slacks(signed_rows, w, margin).sum())


def solve_weights_qp(scores, targets, penalty_C: float, margin: float = QP_MARGIN,
                     iterations: int = 100_000) -> tuple[CombinerWeights, SlackVector]:
    """Quadratic-penalty weights by projected subgradient descent.

    Steps are ``1/iter`` (the squared-norm term is 1-strongly convex) and a
    running average of the iterates is kept. The returned point is the best
    among the iterates, the averages, the uniform start and the K vertices.
    """
    z, t = _check_inputs(scores, targets)
    if penalty_C <= 0:
        raise ValueError("penalty_C must be positive")
    R = t[:, None] * z
    K = R.shape[1]

    def f(w):
        return qp_objective(w, R, penalty_C, margin)

    # vertices: f(e_k) = 1/2 + C * sum_i max(0, margin - R_ik)
    vert = 0.5 + penalty_C * np.maximum(0.0, margin - R).sum(0)
    kbest = int(np.argmin(vert))
    best_w, best_f = np.eye(K)[kbest], float(vert[kbest])

    w0, f0 = _qp_descent(R, float(penalty_C), float(margin), int(iterations))
    if f0 < best_f:
        best_w, best_f = w0, f0
    # rescore the winner in plain numpy so the reported value is reproducible
    best_f = f(best_w)

    xi = hinge_slacks(R, best_w, margin)
    cw = CombinerWeights(best_w, "qp", margin, best_f, penalty_C=penalty_C)
    return cw, SlackVector(xi)


def combine_predict(w: CombinerWeights | np.ndarray, score_row) -> tuple[float, int]:
    """Combined score ``z.w`` and its label (+1 when the score is >= 0)."""
    wv = w.weights if isinstance(w, CombinerWeights) else np.asarray(w, dtype=float)
    z = np.asarray(score_row, dtype=float).ravel()
    if z.size != wv.size:
        raise ValueError(f"score row has {z.size} entries, weights have {wv.size}")
    s = float(z @ wv)
    return s, 1 if s >= 0 else -1


def combined_scores(w: CombinerWeights | np.ndarray, scores) -> np.ndarray:
    wv = w.weights if isinstance(w, CombinerWeights) else np.asarray(w, dtype=float)
    z = np.asarray(scores, dtype=float)
    if z.shape[-1] != wv.size:
        raise ValueError(f"scores have {z.shape[-1]} columns, weights have {wv.size}")
    return z @ wv


def empirical_error(w, scores, targets, mask=None) -> float:
    """Mean 0-1 loss of ``sign(z.w)`` over valid cells, sign(0) counted as +1.

    ``scores`` may be N x K or D x N x K (then averaged over valid replicates
    per instance, then over instances).
    """
    s = combined_scores(w, scores)
    t = np.asarray(targets).ravel()
    pred = np.where(s >= 0, 1, -1)
    if s.ndim == 1:
        return float(np.mean(pred != t))
    m = np.ones(s.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    err = (pred != t[None, :]) & m
    per_i = err.sum(0) / np.maximum(m.sum(0), 1)
    return float(per_i.mean())
