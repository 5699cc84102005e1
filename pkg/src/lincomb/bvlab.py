"""Per-point bias-variance decomposition of the 0-1 loss.

A :class:`PointWorld` fixes ``p = P(t=+1)`` at one input point and the law of
the classifier's prediction ``y`` there: either independent of ``t`` with
``q = P(y=+1)``, or coupled to the (training) label via ``P(y=+1 | t)``.

Closed forms
------------
With ``BE = min(p, 1-p)``, Bayes prediction ``y*`` (+1 when ``p >= 0.5``),
majority prediction ``ym`` (+1 when ``q >= 0.5``), ``bias = [ym != y*]`` and
``var = P(y != ym)``::

    E L(t, y) = BE + bias (1-2BE) + var (1-2BE) - 2 var bias (1-2BE)

When ``y`` depends on ``t``::

    E L(t, y)_dep = BE - 2 BE P(y != y* | t != y*) + P(y != y*)
    optimism      = 2 BE (P(y != y* | t != y*) - P(y != y*))

and ``E L_ind - E L_dep = optimism``.
"""

from __future__ import annotations

import io
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .base_learners import knn_predict
from .dataspace import LabeledDataset


@dataclass(frozen=True)
class PointWorld:
    p_true: float
    q: float | None = None
    p_y_given_pos: float | None = None
    p_y_given_neg: float | None = None

    def __post_init__(self):
        vals = [self.p_true, self.q, self.p_y_given_pos, self.p_y_given_neg]
        for v in vals:
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"probability {v} outside [0, 1]")
        coupled = self.p_y_given_pos is not None or self.p_y_given_neg is not None
        if coupled and (self.p_y_given_pos is None or self.p_y_given_neg is None):
            raise ValueError("a coupled world needs both P(y=+1|t=+1) and P(y=+1|t=-1)")
        if coupled == (self.q is not None):
            raise ValueError("give either q (independent) or the conditional table (coupled)")

    @classmethod
    def independent(cls, p_true, q):
        return cls(p_true, q=q)

    @classmethod
    def coupled(cls, p_true, p_y_given_pos, p_y_given_neg):
        return cls(p_true, p_y_given_pos=p_y_given_pos, p_y_given_neg=p_y_given_neg)

    @classmethod
    def one_nn(cls, p_true):
        """The prediction at a training point equals its own label."""
        return cls.coupled(p_true, 1.0, 0.0)

    @property
    def is_coupled(self) -> bool:
        return self.q is None

    @property
    def marginal_q(self) -> float:
        if self.q is not None:
            return self.q
        p = self.p_true
        return p * self.p_y_given_pos + (1.0 - p) * self.p_y_given_neg

    @property
    def bayes_prediction(self) -> int:
        return 1 if self.p_true >= 0.5 else -1

    @property
    def bayes_error(self) -> float:
        return min(self.p_true, 1.0 - self.p_true)


@dataclass
class BvReport:
    bayes_error: float
    bias: int
    variance: float
    expected_loss_ind: float
    expected_loss_dep: float | None = None
    optimism: float | None = None
    direct_loss_ind: float | None = None
    direct_loss_dep: float | None = None
    mc_estimates: dict | None = None
    trials: int = 0
    seed: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def decomposed_loss(be, bias, var) -> float:
    return be + bias * (1 - 2 * be) + var * (1 - 2 * be) - 2 * var * bias * (1 - 2 * be)


def _components(world: PointWorld):
    q = world.marginal_q
    ym = 1 if q >= 0.5 else -1
    bias = int(ym != world.bayes_prediction)
    var = 1.0 - q if ym == 1 else q
    return world.bayes_error, bias, var


def _p_wrong(world: PointWorld) -> float:
    """P(y != y*) under the marginal law of y."""
    q = world.marginal_q
    return 1.0 - q if world.bayes_prediction == 1 else q


def analytic_decomposition(world: PointWorld, check: bool = True) -> BvReport:
    if world.is_coupled:
        raise ValueError("coupled world: use dependent_decomposition")
    be, bias, var = _components(world)
    loss = decomposed_loss(be, bias, var)
    p, q = world.p_true, world.q
    direct = q * (1.0 - p) + (1.0 - q) * p
    if check and abs(loss - direct) > 1e-12:
        raise AssertionError(f"decomposition {loss!r} != direct {direct!r}")
    return BvReport(be, bias, var, loss, direct_loss_ind=direct)


def dependent_decomposition(world: PointWorld, check: bool = True) -> BvReport:
    if not world.is_coupled:
        # an independent world is a coupled one with identical rows
        world = PointWorld.coupled(world.p_true, world.q, world.q)
    be, bias, var = _components(world)
    p = world.p_true
    a, b = world.p_y_given_pos, world.p_y_given_neg
    if world.bayes_prediction == 1:
        p_wrong_given_t_wrong = 1.0 - b  # t = -1 and y = -1
    else:
        p_wrong_given_t_wrong = a  # t = +1 and y = +1
    p_wrong = _p_wrong(world)
    dep = be - 2 * be * p_wrong_given_t_wrong + p_wrong
    ind = be - 2 * be * p_wrong + p_wrong
    optimism = 2 * be * (p_wrong_given_t_wrong - p_wrong)
    direct_dep = p * (1.0 - a) + (1.0 - p) * b
    q = world.marginal_q
    direct_ind = q * (1.0 - p) + (1.0 - q) * p
    if check:
        if abs((ind - dep) - optimism) > 1e-12:
            raise AssertionError("ind - dep != optimism")
        if abs(dep - direct_dep) > 1e-12:
            raise AssertionError(f"dependent loss {dep!r} != direct {direct_dep!r}")
    return BvReport(be, bias, var, ind, dep, optimism, direct_ind, direct_dep)


def _se(x: np.ndarray) -> float:
    return float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0


def monte_carlo_decomposition(world: PointWorld, trials: int, seed: int = 0,
                              chunk: int = 1_000_000) -> BvReport:
    """Simulate (training label, prediction, fresh test label) triples.

    The dependent loss scores ``y`` against the label it was coupled to; the
    independent loss scores it against a fresh draw of ``t``. Chunks use
    seeds spawned from ``seed`` so results do not depend on the chunk size
    beyond the stream layout fixed here.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    ss = np.random.SeedSequence(seed)
    n_chunks = -(-trials // chunk)
    rngs = [np.random.default_rng(s) for s in ss.spawn(n_chunks)]
    p = world.p_true
    ystar = world.bayes_prediction
    ind, dep, bayes, ypos = [], [], [], []
    left = trials
    for rng in rngs:
        n = min(chunk, left)
        left -= n
        t_train = np.where(rng.random(n) < p, 1, -1)
        t_test = np.where(rng.random(n) < p, 1, -1)
        u = rng.random(n)
        if world.is_coupled:
            py = np.where(t_train > 0, world.p_y_given_pos, world.p_y_given_neg)
        else:
            py = np.full(n, world.q)
        y = np.where(u < py, 1, -1)
        ind.append(y != t_test)
        dep.append(y != t_train)
        bayes.append(t_test != ystar)
        ypos.append(y > 0)
    ind = np.concatenate(ind).astype(float)
    dep = np.concatenate(dep).astype(float)
    bayes = np.concatenate(bayes).astype(float)
    ypos = np.concatenate(ypos)
    q_hat = float(ypos.mean())
    ym = 1 if q_hat >= 0.5 else -1
    off_mode = (np.where(ypos, 1, -1) != ym).astype(float)
    mc = {
        "bayes_error": float(bayes.mean()), "bayes_error_se": _se(bayes),
        "variance": float(off_mode.mean()), "variance_se": _se(off_mode),
        "bias": int(ym != ystar),
        "expected_loss_ind": float(ind.mean()), "expected_loss_ind_se": _se(ind),
        "expected_loss_dep": float(dep.mean()), "expected_loss_dep_se": _se(dep),
        "optimism": float((ind - dep).mean()), "optimism_se": _se(ind - dep),
    }
    analytic = dependent_decomposition(world)
    analytic.mc_estimates = mc
    analytic.trials = trials
    analytic.seed = seed
    return analytic


def one_nn_error(be: float) -> float:
    return 2.0 * be - 2.0 * be * be


def one_nn_curve(be_grid) -> list[tuple[float, float]]:
    """Out-of-sample 1NN error ``2 BE - 2 BE^2`` over a Bayes-error grid."""
    out = []
    for be in be_grid:
        be = float(be)
        if not 0.0 <= be <= 0.5:
            raise ValueError(f"Bayes error {be} outside [0, 0.5]")
        err = one_nn_error(be)
        if err > 2 * be + 1e-15:
            raise AssertionError("1NN error exceeds twice the Bayes error")
        if be == 0.5 and err != 0.5:
            raise AssertionError("1NN error must equal the Bayes error at 0.5")
        out.append((be, err))
    return out


def curve_csv(points, meta: dict | None = None) -> str:
    buf = io.StringIO()
    for k, v in (meta or {}).items():
        buf.write(f"# {k}={v}\n")
    buf.write("be,error\n")
    for be, err in points:
        buf.write(f"{float(be)!r},{float(err)!r}\n")
    return buf.getvalue()


def line_world_generator(n_points: int = 15, probe: float = 0.5,
                         background: Callable[[np.ndarray], np.ndarray] | None = None):
    """1-D datasets on a fixed jittered grid with a probe point at ``probe``.

    Returns ``gen(rng, p_true) -> (dataset, probe_index)``; the probe label is
    Bernoulli(p_true), other labels follow ``background(x)`` (default
    ``P(t=+1 | x) = x``). Coordinates are distinct so 1NN recalls each
    training label exactly.
    """
    bg = background or (lambda x: x)

    def gen(rng, p_true):
        x = (np.arange(n_points) + 0.5) / n_points
        x = x + rng.uniform(-0.2, 0.2, n_points) / n_points
        k = int(np.argmin(np.abs(x - probe)))
        x[k] = probe
        p = bg(x)
        p[k] = p_true
        t = np.where(rng.random(n_points) < p, 1, -1)
        return LabeledDataset(x[:, None], t, ("x",), "line"), k

    return gen


def empirical_1nn_check(p_true: float, trials: int = 20_000, seed: int = 0,
                        generator=None) -> dict:
    """Train 1NN on fresh datasets; score the probe point in and out of sample.

    Training error at the probe is its own label against the prediction; the
    test error uses an independent draw of the probe label.
    """
    gen = generator or line_world_generator()
    rng = np.random.default_rng(seed)
    train_err = np.empty(trials)
    test_err = np.empty(trials)
    for r in range(trials):
        ds, k = gen(rng, p_true)
        x0 = ds.features[k]
        y = knn_predict(ds, x0, 1)
        t_new = 1 if rng.random() < p_true else -1
        train_err[r] = y != ds.targets[k]
        test_err[r] = y != t_new
    be = min(p_true, 1 - p_true)
    expected = one_nn_error(be)
    se = _se(test_err)
    return {
        "p_true": p_true, "bayes_error": be, "trials": trials, "seed": seed,
        "training_error": float(train_err.mean()),
        "max_training_error": float(train_err.max()),
        "test_error": float(test_err.mean()), "test_error_se": se,
        "expected_test_error": expected,
        "within_3se": bool(abs(test_err.mean() - expected) <= 3 * se + 1e-12),
    }
