"""Dense two-phase primal simplex and Euclidean projection onto the simplex.

The LP solver works on a full tableau. Problems are given in a general form
(``<=``, ``>=``, ``=`` rows, finite lower bounds, optional upper bounds) and
converted internally to ``min c'x, Ax = b, x >= 0, b >= 0``.

Pricing is Dantzig (most negative reduced cost) until an iteration budget of
``50 * (V + rows)`` is spent, then Bland's rule, which cannot cycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

FEAS_TOL = 1e-7
PIVOT_TOL = 1e-9

LE, GE, EQ = "<=", ">=", "="


class LpError(RuntimeError):
    """Numerical breakdown in the simplex solver."""


@dataclass(frozen=True)
class Constraint:
    coeffs: tuple[float, ...]
    relation: str
    rhs: float


@dataclass
class LpProblem:
    """``minimize objective @ x`` subject to rows and per-variable bounds.

    ``bounds`` defaults to ``(0, inf)`` for every variable.
    """

    objective: np.ndarray
    A: np.ndarray
    relations: list[str]
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __init__(self, objective, A=None, relations=None, rhs=None, bounds=None):
        self.objective = np.asarray(objective, dtype=float).ravel()
        V = self.objective.size
        if V < 1:
            raise ValueError("LP needs at least one variable")
        if A is None:
            A = np.zeros((0, V))
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        if self.A.size == 0:
            self.A = self.A.reshape(0, V)
        if self.A.shape[1] != V:
            raise ValueError(f"row length {self.A.shape[1]} != number of variables {V}")
        m = self.A.shape[0]
        self.relations = list(relations) if relations is not None else [LE] * m
        self.rhs = np.asarray(rhs if rhs is not None else np.zeros(m), dtype=float).ravel()
        if len(self.relations) != m or self.rhs.size != m:
            raise ValueError("relations/rhs length must match the number of rows")
        for rel in self.relations:
            if rel not in (LE, GE, EQ):
                raise ValueError(f"unknown relation {rel!r}")
        if bounds is None:
            bounds = [(0.0, math.inf)] * V
        if len(bounds) != V:
            raise ValueError("one (lower, upper) pair per variable required")
        self.lower = np.array([b[0] for b in bounds], dtype=float)
        self.upper = np.array([math.inf if b[1] is None else b[1] for b in bounds], dtype=float)
        if not np.all(np.isfinite(self.lower)):
            raise ValueError("all lower bounds must be finite")

    @classmethod
    def from_constraints(cls, objective, constraints: Sequence[Constraint], bounds=None):
        V = len(objective)
        A = np.array([c.coeffs for c in constraints], dtype=float).reshape(len(constraints), V)
        return cls(objective, A, [c.relation for c in constraints],
                   [c.rhs for c in constraints], bounds)

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def constraints(self) -> list[Constraint]:
        return [Constraint(tuple(self.A[r]), self.relations[r], float(self.rhs[r]))
                for r in range(self.n_rows)]

    def is_feasible(self, x, tol: float = FEAS_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lower - tol) or np.any(x > self.upper + tol):
            return False
        lhs = self.A @ x
        for v, rel, b in zip(lhs, self.relations, self.rhs):
            scale = 1.0 + abs(b)
            if rel == LE and v > b + tol * scale:
                return False
            if rel == GE and v < b - tol * scale:
                return False
            if rel == EQ and abs(v - b) > tol * scale:
                return False
        return True

    def dump(self) -> str:
        """Plain-text standard form, one constraint per line."""
        fmt = lambda v: repr(float(v))
        lines = ["minimize " + " ".join(fmt(c) for c in self.objective)]
        for r in range(self.n_rows):
            lines.append(" ".join(fmt(a) for a in self.A[r])
                         + f" {self.relations[r]} {fmt(self.rhs[r])}")
        for j in range(self.n_vars):
            lines.append(f"bound x{j} {fmt(self.lower[j])} {fmt(self.upper[j])}")
        return "\n".join(lines) + "\n"


@dataclass
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray
    objective_value: float
    iterations: int
    duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reduced_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@njit(cache=True)
def _pivot(T, r, j):
    # in-place Gauss-Jordan step on pivot (r, j)
    rows, cols = T.shape
    piv = T[r, j]
    for c in range(cols):
        T[r, c] /= piv
    for i in range(rows):
        if i == r:
            continue
        f = T[i, j]
        if f != 0.0:
            for c in range(cols):
                T[i, c] -= f * T[r, c]
            T[i, j] = 0.0
    T[r, j] = 1.0


class _Tableau:
    """Dense tableau for ``min c'x, Ax = b, x >= 0`` with a starting basis."""

    def __init__(self, A, b, basis, pivot_tol, bland_after):
        m, n = A.shape
        self.T = np.zeros((m + 1, n + 1))
        self.T[:m, :n] = A
        self.T[:m, n] = b
        self.basis = list(basis)
        self.m, self.n = m, n
        self.pivot_tol = pivot_tol
        self.bland_after = bland_after
        self.iterations = 0

    def set_objective(self, c):
        self.T[-1, :self.n] = c
        self.T[-1, self.n] = 0.0
        for r, j in enumerate(self.basis):
            if self.T[-1, j] != 0.0:
                self.T[-1] -= self.T[-1, j] * self.T[r]

    def pivot(self, r, j):
        _pivot(self.T, r, j)
        self.basis[r] = j

    def run(self, allowed, max_iter):
        """Iterate to optimality over columns flagged in ``allowed``.

        Returns "optimal" or "unbounded".
        """
        T = self.T
        steps = 0
        while True:
            if steps >= max_iter:
                raise LpError(f"iteration budget {max_iter} exhausted")
            d = T[-1, :self.n]
            cand = np.nonzero(allowed & (d < -self.pivot_tol))[0]
            if cand.size == 0:
                return "optimal"
            bland = self.iterations >= self.bland_after
            j = int(cand[0]) if bland else int(cand[np.argmin(d[cand])])
            col = T[:self.m, j]
            rows = np.nonzero(col > self.pivot_tol)[0]
            if rows.size == 0:
                return "unbounded"
            ratios = T[rows, self.n] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            if ties.size > 1:
                r = int(ties[np.argmin([self.basis[t] for t in ties])])
            else:
                r = int(ties[0])
            self.pivot(r, j)
            self.iterations += 1
            steps += 1


def solve_lp(p: LpProblem, feas_tol: float = FEAS_TOL, pivot_tol: float = PIVOT_TOL,
             max_iter: int | None = None) -> LpSolution:
    """Solve ``p`` with the two-phase tableau method.

    Parameters
    ----------
    p : LpProblem
    feas_tol : float
        Phase I objective above this value means infeasible.
    pivot_tol : float
        Entries at or below this magnitude are never pivoted on.
    max_iter : int, optional
        Per-phase iteration cap; exceeding it raises :class:`LpError`.

    Returns
    -------
    LpSolution
        ``duals`` holds one price per input row followed by one per finite
        upper bound, with the sign convention ``objective = duals @ rhs_ext +
        objective @ lower`` where ``rhs_ext`` are the row right-hand sides and
        upper bounds after shifting by the lower bounds.
    """
    V = p.n_vars
    lo, up = p.lower, p.upper
    # shift x = lo + x'
    A = p.A
    b = p.rhs - A @ lo
    rels = list(p.relations)
    ub_idx = np.nonzero(np.isfinite(up))[0]
    if ub_idx.size:
        U = np.zeros((ub_idx.size, V))
        U[np.arange(ub_idx.size), ub_idx] = 1.0
        A = np.vstack([A, U])
        b = np.concatenate([b, up[ub_idx] - lo[ub_idx]])
        rels += [LE] * ub_idx.size
    m = A.shape[0]
    c_const = float(p.objective @ lo)

    if m == 0:
        if np.any(p.objective < -pivot_tol):
            return LpSolution("unbounded", lo.copy(), -math.inf, 0)
        return LpSolution("optimal", lo.copy(), c_const, 0, np.zeros(0), p.objective.copy())

    # rows flipped so b >= 0; sign[r] records the flip for dual recovery
    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign
    rels = [({LE: GE, GE: LE}.get(r, r) if s < 0 else r) for r, s in zip(rels, sign)]

    n_slack = sum(1 for r in rels if r != EQ)
    # crash: a structural column with a single positive entry in a row that
    # would otherwise need an artificial can start basic in that row
    crash = {}
    nnz = np.count_nonzero(A, axis=0)
    for j in np.nonzero(nnz == 1)[0]:
        r = int(np.nonzero(A[:, j])[0][0])
        if rels[r] != LE and A[r, j] > 0 and r not in crash:
            crash[r] = int(j)
    need_art = [r for r in range(m) if rels[r] != LE and r not in crash]
    n_art = len(need_art)
    n_total = V + n_slack + n_art
    M = np.zeros((m, n_total))
    M[:, :V] = A
    basis = [-1] * m
    s = V
    for r in range(m):
        if rels[r] == LE:
            M[r, s] = 1.0
            basis[r] = s
            s += 1
        elif rels[r] == GE:
            M[r, s] = -1.0
            s += 1
    a0 = V + n_slack
    for k, r in enumerate(need_art):
        M[r, a0 + k] = 1.0
        basis[r] = a0 + k

    budget = max_iter if max_iter is not None else 100 * (n_total + m) + 1000
    for r, j in crash.items():
        basis[r] = j
    tab = _Tableau(M, b, basis, pivot_tol, bland_after=50 * (V + m))
    for r, j in crash.items():
        tab.T[r] /= M[r, j]
    all_cols = np.ones(n_total, dtype=bool)

    if n_art:
        c1 = np.zeros(n_total)
        c1[a0:] = 1.0
        tab.set_objective(c1)
        tab.run(all_cols, budget)
        if -tab.T[-1, -1] > feas_tol * max(1.0, float(np.abs(b).max())):
            return LpSolution("infeasible", np.full(V, np.nan), math.nan, tab.iterations)
        # drive remaining artificials out of the basis
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if tab.basis[r] >= a0:
                row = tab.T[r, :a0]
                nz = np.nonzero(np.abs(row) > pivot_tol)[0]
                if nz.size:
                    tab.pivot(r, int(nz[0]))
                else:
                    keep[r] = False
        if not keep.all():
            rows = np.concatenate([np.nonzero(keep)[0], [m]])
            tab.T = tab.T[rows]
            tab.basis = [tab.basis[r] for r in np.nonzero(keep)[0]]
            tab.m = len(tab.basis)
        allowed = np.zeros(n_total, dtype=bool)
        allowed[:a0] = True
    else:
        keep = np.ones(m, dtype=bool)
        allowed = all_cols

    c2 = np.zeros(n_total)
    c2[:V] = p.objective
    tab.set_objective(c2)
    status = tab.run(allowed, budget)
    if status == "unbounded":
        return LpSolution("unbounded", np.full(V, np.nan), -math.inf, tab.iterations)

    xs = np.zeros(n_total)
    for r, j in enumerate(tab.basis):
        xs[j] = tab.T[r, -1]
    x = lo + np.maximum(xs[:V], 0.0)
    obj = float(p.objective @ x)

    # dual prices from the optimal basis: B' y = c_B
    kept = np.nonzero(keep)[0]
    B = M[kept][:, tab.basis]
    cB = c2[tab.basis]
    try:
        y_kept = np.linalg.solve(B.T, cB)
    except np.linalg.LinAlgError:
        y_kept = np.linalg.lstsq(B.T, cB, rcond=None)[0]
    y = np.zeros(m)
    y[kept] = y_kept
    y *= sign
    reduced = tab.T[-1, :V].copy()
    return LpSolution("optimal", x, obj, tab.iterations, y, reduced)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{w : w >= 0, sum(w) = 1}``.

    Sort-and-threshold: find the largest ``rho`` with
    ``u_rho - (sum(u_1..u_rho) - 1) / rho > 0`` on ``u`` sorted descending.
    """
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("cannot project an empty vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    w = np.maximum(v - theta, 0.0)
    # absorb rounding so the sum is 1 to machine precision
    s = w.sum()
    if s != 1.0:
        k = int(np.argmax(w))
        w[k] += 1.0 - s
    return w
