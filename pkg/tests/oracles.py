"""Brute-force reference implementations used only by the tests."""

import itertools

import numpy as np


def simplex_grid(K, step=1e-3):
    """All points of the probability simplex whose coordinates are multiples of ``step``."""
    m = int(round(1 / step))
    if K == 1:
        return np.ones((1, 1))
    if K == 2:
        a = np.arange(m + 1)
        return np.stack([a, m - a], 1) / m
    if K == 3:
        i, j = np.triu_indices(m + 1)
        # i + (j - i) + (m - j) = m
        return np.stack([i, j - i, m - j], 1) / m
    raise ValueError("grid oracle supports K <= 3")


def lp_grid_oracle(signed_rows, margin=0.5, step=1e-3):
    """Minimize sum_i max(0, margin - r_i.w) over the gridded simplex.

    Returns (objective, argmin points).
    """
    R = np.asarray(signed_rows, dtype=float)
    W = simplex_grid(R.shape[1], step)
    obj = np.maximum(0.0, margin - W @ R.T).sum(1)
    best = obj.min()
    return float(best), W[obj <= best + 1e-12]


def lp_arrangement_oracle(signed_rows, margin=0.5):
    """Exact minimum of the hinge sum over the simplex.

    The objective is convex piecewise linear, so a minimizer sits where K-1
    of the hyperplanes {r_i.w = margin} and {w_k = 0} meet inside the simplex.
    """
    R = np.asarray(signed_rows, dtype=float)
    N, K = R.shape
    planes = [(R[i], margin) for i in range(N)] + [(np.eye(K)[k], 0.0) for k in range(K)]
    best = np.inf
    for combo in itertools.combinations(range(len(planes)), K - 1):
        A = np.vstack([np.ones(K)] + [planes[c][0] for c in combo])
        b = np.array([1.0] + [planes[c][1] for c in combo])
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        w = np.linalg.solve(A, b)
        if w.min() < -1e-12:
            continue
        best = min(best, float(np.maximum(0.0, margin - R @ w).sum()))
    return best


def pair_count_auc(labels, scores):
    labels = np.asarray(labels)
    s = np.asarray(scores, dtype=float)
    pos, neg = s[labels > 0], s[labels <= 0]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (pos.size * neg.size)


def brute_isotonic(y, groups=None):
    """Least-squares nondecreasing fit by trying every partition into consecutive blocks.

    Each block takes its mean; the best monotone candidate is the isotonic
    solution. ``groups`` (nondecreasing labels) forbids cuts inside a group,
    which is how tied scores are kept together.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    best, best_fit = np.inf, None
    for cuts in itertools.product((0, 1), repeat=n - 1):
        if groups is not None and any(c and groups[i] == groups[i + 1] for i, c in enumerate(cuts)):
            continue
        fit = np.empty(n)
        start = 0
        for i in range(n):
            if i == n - 1 or cuts[i]:
                fit[start:i + 1] = y[start:i + 1].mean()
                start = i + 1
        if np.any(np.diff(fit) < -1e-15):
            continue
        sse = float(((fit - y) ** 2).sum())
        if sse < best - 1e-15:
            best, best_fit = sse, fit
    return best_fit


def two_pass_variance(x):
    x = np.asarray(x, dtype=float)
    mean = sum(x) / len(x)
    return sum((v - mean) ** 2 for v in x) / (len(x) - 1)


def welford_variance(x):
    n, mean, m2 = 0, 0.0, 0.0
    for v in x:
        n += 1
        d = v - mean
        mean += d / n
        m2 += d * (v - mean)
    return m2 / (n - 1)
