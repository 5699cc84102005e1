"""Dataset ingestion and out-of-sample evaluation plans."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Base class for ingestion and plan errors; ``code`` is stable."""

    code = "data_error"


class MissingFileError(DataError):
    code = "missing_file"


class UnknownLabelError(DataError):
    code = "unknown_label"


class NonNumericCellError(DataError):
    code = "non_numeric_cell"


class SingleClassError(DataError):
    code = "single_class"


class PlanError(DataError):
    code = "bad_plan"


@dataclass(frozen=True)
class ColumnSchema:
    """How to read a delimited file.

    ``label_column`` is a column index (negative counts from the end) or a
    header name. ``positive`` is the raw label value mapped to +1;
    ``negative`` the value mapped to -1. When ``negative`` is None every
    other label value is -1, unless ``labels`` lists the admissible values.
    """

    label_column: int | str = -1
    positive: str = "1"
    negative: str | None = None
    labels: tuple[str, ...] | None = None
    header: bool = False


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    targets: np.ndarray
    feature_names: tuple[str, ...]
    id: str = "dataset"

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        t = np.asarray(self.targets, dtype=int).ravel()
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError("features must be a non-empty N x F matrix")
        if t.size != X.shape[0]:
            raise DataError("one target per row required")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain missing or non-finite values")
        if not np.all(np.isin(t, (-1, 1))):
            raise DataError("targets must be -1 or +1")
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError("one feature name per column required")
        X.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", t)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=int)
        return LabeledDataset(self.features[idx], self.targets[idx], self.feature_names, self.id)

    def require_both_classes(self):
        if np.unique(self.targets).size < 2:
            raise SingleClassError(f"dataset {self.id!r} has a single class")


def _sniff_split(first_line: str):
    if "," in first_line:
        return lambda s: [c.strip() for c in s.split(",")]
    return str.split


def load_dataset(path, schema: ColumnSchema = ColumnSchema(), id: str | None = None) -> LabeledDataset:
    """Read a comma- or whitespace-delimited file into a LabeledDataset.

    Raises
    ------
    MissingFileError, UnknownLabelError, NonNumericCellError, SingleClassError
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MissingFileError(f"no such file: {path}")
    with open(path) as fh:
        lines = [(i + 1, ln.rstrip("\n")) for i, ln in enumerate(fh)]
    lines = [(i, ln) for i, ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise DataError(f"{path}: no data rows")
    split = _sniff_split(lines[0][1])

    header = None
    if schema.header:
        header = split(lines[0][1])
        lines = lines[1:]
    ncol = len(split(lines[0][1])) if lines else 0
    if isinstance(schema.label_column, str):
        if header is None or schema.label_column not in header:
            raise DataError(f"label column {schema.label_column!r} not in header")
        label_col = header.index(schema.label_column)
    else:
        label_col = schema.label_column % ncol
    if ncol < 2:
        raise DataError(f"{path}: need at least one feature and a label column")

    admissible = None
    if schema.labels is not None:
        admissible = set(schema.labels)
    elif schema.negative is not None:
        admissible = {schema.positive, schema.negative}

    rows, targets = [], []
    for lineno, ln in lines:
        cells = split(ln)
        if len(cells) != ncol:
            raise DataError(f"row {lineno}: expected {ncol} cells, got {len(cells)}")
        raw = cells[label_col]
        label = _normalise_label(raw)
        if admissible is not None and label not in {_normalise_label(a) for a in admissible}:
            raise UnknownLabelError(f"row {lineno}: unknown label value {raw!r}")
        targets.append(1 if label == _normalise_label(schema.positive) else -1)
        vals = []
        for j, c in enumerate(cells):
            if j == label_col:
                continue
            try:
                v = float(c)
            except ValueError:
                raise NonNumericCellError(f"row {lineno}, column {j}: non-numeric cell {c!r}") from None
            if not np.isfinite(v):
                raise NonNumericCellError(f"row {lineno}, column {j}: missing value {c!r}")
            vals.append(v)
        rows.append(vals)

    if header is not None:
        names = tuple(h for j, h in enumerate(header) if j != label_col)
    else:
        names = tuple(f"x{j}" for j in range(ncol - 1))
    ds = LabeledDataset(np.array(rows), np.array(targets), names,
                        id or os.path.splitext(os.path.basename(path))[0])
    ds.require_both_classes()
    return ds


def _normalise_label(s: str) -> str:
    # "2" and "2.0" name the same class
    try:
        f = float(s)
    except ValueError:
        return s.strip()
    return repr(int(f)) if f.is_integer() else repr(f)


@dataclass(frozen=True, eq=False)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.nonzero(self.assignments == fold)[0]

    def train_indices(self, fold: int) -> np.ndarray:
        return np.nonzero(self.assignments != fold)[0]

    def splits(self):
        for f in range(self.k):
            yield self.train_indices(f), self.test_indices(f)

    def to_json(self) -> str:
        return json.dumps({"kind": "kfold", "k": self.k, "seed": self.seed,
                           "assignments": self.assignments.tolist()})


@dataclass(frozen=True, eq=False)
class BootstrapPlan:
    D: int
    replicates: tuple[np.ndarray, ...]
    oob_sets: tuple[np.ndarray, ...]
    seed: int

    def splits(self):
        yield from zip(self.replicates, self.oob_sets)

    def to_json(self) -> str:
        return json.dumps({"kind": "bootstrap", "D": self.D, "seed": self.seed,
                           "replicates": [r.tolist() for r in self.replicates]})


def stratified_kfold(ds: LabeledDataset, k: int, seed: int = 0) -> FoldPlan:
    """Stratified fold assignment.

    Each class is shuffled and dealt round-robin; the dealing offset
    continues across classes so fold sizes stay within one of each other.
    """
    n = ds.n
    if not 2 <= k <= n:
        raise PlanError(f"k={k} out of range [2, {n}]")
    rng = np.random.default_rng(seed)
    assign = np.empty(n, dtype=int)
    offset = 0
    for cls in (-1, 1):
        idx = np.nonzero(ds.targets == cls)[0]
        idx = idx[rng.permutation(idx.size)]
        assign[idx] = (offset + np.arange(idx.size)) % k
        offset = (offset + idx.size) % k
    assign.setflags(write=False)
    return FoldPlan(k, assign, seed)


def loo_plan(ds: LabeledDataset) -> FoldPlan:
    assign = np.arange(ds.n)
    assign.setflags(write=False)
    return FoldPlan(ds.n, assign, 0)


def bootstrap_plan(ds: LabeledDataset, D: int, seed: int = 0, max_redraws: int = 1000) -> BootstrapPlan:
    """``D`` bootstrap replicates of size N with non-empty out-of-bag sets."""
    if D < 1:
        raise PlanError(f"D={D} must be >= 1")
    n = ds.n
    if n < 2:
        raise PlanError("degenerate dataset: N=1 leaves no out-of-bag instance")
    rng = np.random.default_rng(seed)
    reps, oobs = [], []
    for _ in range(D):
        for _attempt in range(max_redraws):
            r = np.sort(rng.integers(0, n, size=n))
            oob = np.setdiff1d(np.arange(n), r)
            if oob.size:
                break
        else:
            raise PlanError("could not draw a replicate with a non-empty out-of-bag set")
        r.setflags(write=False)
        oob.setflags(write=False)
        reps.append(r)
        oobs.append(oob)
    return BootstrapPlan(D, tuple(reps), tuple(oobs), seed)
