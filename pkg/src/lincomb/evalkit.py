"""Classification metrics, ROC/AUC and isotonic (PAV) calibration."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np


def _as_pm1(labels) -> np.ndarray:
    y = np.asarray(labels).ravel()
    if not np.all(np.isin(y, (-1, 1))):
        raise ValueError("labels must be -1 or +1")
    return y.astype(int)


def to_binary(labels) -> np.ndarray:
    """Map {-1, +1} (or {0, 1}) labels to {0, 1} floats."""
    y = np.asarray(labels, dtype=float).ravel()
    if np.all(np.isin(y, (0.0, 1.0))):
        return y
    return (_as_pm1(y) > 0).astype(float)


def accuracy(labels, predictions) -> float:
    y = np.asarray(labels).ravel()
    p = np.asarray(predictions).ravel()
    if y.size == 0:
        raise ValueError("empty input")
    if y.size != p.size:
        raise ValueError("labels and predictions differ in length")
    return float(np.mean(y == p))


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def to_csv(self, meta: dict | None = None) -> str:
        buf = io.StringIO()
        for k, v in (meta or {}).items():
            buf.write(f"# {k}={v}\n")
        buf.write("threshold,false_positive_rate,true_positive_rate\n")
        for th, f, t in zip(self.thresholds, self.fpr, self.tpr):
            buf.write(f"{float(th)!r},{float(f)!r},{float(t)!r}\n")
        return buf.getvalue()


def roc_auc(labels, scores) -> RocCurve:
    """ROC staircase over distinct score thresholds, descending.

    Tied scores move together, so the trapezoidal area equals the
    Mann-Whitney statistic with ties counted one half.
    """
    y = _as_pm1(labels)
    s = np.asarray(scores, dtype=float).ravel()
    if s.size != y.size:
        raise ValueError("labels and scores differ in length")
    P = int((y > 0).sum())
    Nn = y.size - P
    if P == 0 or Nn == 0:
        raise ValueError("ROC needs both classes")
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    pos = (y[order] > 0).astype(float)
    # last index of each run of equal scores
    last = np.nonzero(np.diff(s_sorted) != 0)[0]
    last = np.concatenate([last, [s.size - 1]])
    tp = np.cumsum(pos)[last]
    fp = np.cumsum(1.0 - pos)[last]
    tpr = np.concatenate([[0.0], tp / P])
    fpr = np.concatenate([[0.0], fp / Nn])
    thresholds = np.concatenate([[np.inf], s_sorted[last]])
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(fpr, tpr, thresholds, auc)


def mann_whitney_auc(labels, scores) -> float:
    """Pair-count AUC: P(score_pos > score_neg) + 1/2 P(equal)."""
    y = _as_pm1(labels)
    s = np.asarray(scores, dtype=float).ravel()
    sp, sn = s[y > 0], s[y < 0]
    if sp.size == 0 or sn.size == 0:
        raise ValueError("AUC needs both classes")
    d = sp[:, None] - sn[None, :]
    return float(((d > 0).sum() + 0.5 * (d == 0).sum()) / d.size)


@dataclass(frozen=True)
class IsotonicModel:
    """Step function from score to P(t=+1).

    ``breakpoints`` are the distinct training scores, ascending; a score maps
    to the fitted value of the largest breakpoint not above it, and to the
    first fitted value below the range.
    """

    breakpoints: np.ndarray
    fitted: np.ndarray

    def predict(self, scores) -> np.ndarray:
        s = np.asarray(scores, dtype=float)
        idx = np.searchsorted(self.breakpoints, s, side="right") - 1
        idx = np.clip(idx, 0, self.fitted.size - 1)
        return np.clip(self.fitted[idx], 0.0, 1.0)


def pav(values, weights=None) -> np.ndarray:
    """Weighted least-squares nondecreasing fit by pool-adjacent-violators."""
    v = np.asarray(values, dtype=float).ravel()
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=float).ravel()
    means, wts, counts = [], [], []
    for x, wx in zip(v, w):
        means.append(x)
        wts.append(wx)
        counts.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, c2 = means.pop(), wts.pop(), counts.pop()
            m1, w1, c1 = means.pop(), wts.pop(), counts.pop()
            wsum = w1 + w2
            means.append((m1 * w1 + m2 * w2) / wsum)
            wts.append(wsum)
            counts.append(c1 + c2)
    return np.repeat(means, counts)


def isotonic_fit(scores, binary_targets) -> IsotonicModel:
    """Monotone least-squares fit of targets against scores; tied scores pooled."""
    s = np.asarray(scores, dtype=float).ravel()
    y = to_binary(binary_targets)
    if s.size == 0:
        raise ValueError("empty input")
    if s.size != y.size:
        raise ValueError("scores and targets differ in length")
    uniq, inv, counts = np.unique(s, return_inverse=True, return_counts=True)
    sums = np.bincount(inv, weights=y)
    fitted = pav(sums / counts, counts)
    return IsotonicModel(uniq, fitted)


def calibration_mae(model: IsotonicModel, scores, binary_targets) -> float:
    """Mean |predicted P(t=+1) - target| with targets in {0, 1}."""
    y = to_binary(binary_targets)
    if y.size == 0:
        raise ValueError("empty input")
    return float(np.mean(np.abs(model.predict(scores) - y)))


def reliability_csv(model: IsotonicModel, scores, binary_targets, meta: dict | None = None) -> str:
    """Per-instance (score, target, calibrated) rows sorted by score."""
    s = np.asarray(scores, dtype=float).ravel()
    y = to_binary(binary_targets)
    p = model.predict(s)
    order = np.argsort(s, kind="mergesort")
    buf = io.StringIO()
    for k, v in (meta or {}).items():
        buf.write(f"# {k}={v}\n")
    buf.write("score,target,calibrated\n")
    for i in order:
        buf.write(f"{float(s[i])!r},{int(y[i])},{float(p[i])!r}\n")
    return buf.getvalue()


def score_variance(labels_numeric, raw_scores) -> float:
    """Sample variance (ddof=1) of ``score - label``."""
    y = np.asarray(labels_numeric, dtype=float).ravel()
    s = np.asarray(raw_scores, dtype=float).ravel()
    if y.size != s.size:
        raise ValueError("labels and scores differ in length")
    if y.size < 2:
        raise ValueError("need at least two values")
    return float(np.var(s - y, ddof=1))
