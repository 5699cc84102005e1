"""Run configuration: an INI file plus ``section.key=value`` overrides."""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass

import numpy as np

from .base_learners import ModelGrid, SCORE_KINDS
from .dataspace import ColumnSchema

FORMULATIONS = ("single_lp", "bootstrap_lp", "qp")

DEFAULTS = {
    "data": {"path": "", "label_column": "-1", "positive": "1", "negative": "",
             "header": "false", "id": ""},
    "folds": {"k": "5", "seed": "0"},
    "grid": {"cost_exponents": "-2:1:10", "gamma_exponents": "-17:1:-6", "base": "2",
             "standardize": "false", "tol": "1e-3", "max_iter": "10000000"},
    "combine": {"formulation": "single_lp", "margin": "", "cap": "", "penalty_C": "1.0",
                "sum_to_one": "true", "score_kind": "raw", "D": "30", "bootstrap_seed": "0",
                "qp_iterations": "100000"},
    "output": {"dir": "out"},
}


class ConfigError(ValueError):
    pass


def parse_range(text: str) -> list[float]:
    """``lo:step:hi`` (inclusive), ``lo:hi`` (step 1) or a comma list."""
    text = text.strip()
    if not text:
        raise ConfigError("empty exponent range")
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) == 2:
                lo, step, hi = parts[0], 1.0, parts[1]
            elif len(parts) == 3:
                lo, step, hi = parts
            else:
                raise ConfigError(f"bad range {text!r}")
            if step <= 0:
                raise ConfigError(f"range step must be positive: {text!r}")
            n = int(np.floor((hi - lo) / step + 1e-9)) + 1
            vals = [lo + i * step for i in range(max(n, 0))]
        else:
            vals = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"bad range {text!r}") from None
    if not vals:
        raise ConfigError(f"range {text!r} is empty")
    return [int(v) if float(v).is_integer() else v for v in vals]


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _opt_float(s: str) -> float | None:
    s = s.strip()
    if not s or s.lower() == "none":
        return None
    try:
        return float(eval_fraction(s))
    except ValueError:
        raise ConfigError(f"not a number: {s!r}") from None


def eval_fraction(s: str) -> float:
    """Accept ``0.25`` or ``1/4``."""
    if "/" in s:
        a, b = s.split("/", 1)
        return float(a) / float(b)
    return float(s)


@dataclass
class RunConfig:
    raw: dict
    base_dir: str = "."

    @classmethod
    def load(cls, path: str | None = None, overrides: list[str] = ()) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp.read_dict(DEFAULTS)
        base_dir = "."
        if path:
            if not os.path.isfile(path):
                raise ConfigError(f"config file not found: {path}")
            cp.read(path)
            base_dir = os.path.dirname(os.path.abspath(path))
        for ov in overrides:
            key, sep, val = ov.partition("=")
            section, dot, opt = key.partition(".")
            if not sep or not dot:
                raise ConfigError(f"override must look like section.key=value: {ov!r}")
            if section not in DEFAULTS or opt not in DEFAULTS[section]:
                raise ConfigError(f"unknown setting {key!r}")
            cp[section][opt] = val.strip()
        raw = {s: dict(cp[s]) for s in cp.sections()}
        for s in raw:
            if s not in DEFAULTS:
                raise ConfigError(f"unknown section [{s}]")
            for k in raw[s]:
                if k not in DEFAULTS[s]:
                    raise ConfigError(f"unknown setting {s}.{k}")
        cfg = cls(raw, base_dir)
        cfg.validate()
        return cfg

    def get(self, section, key) -> str:
        return self.raw[section][key]

    def resolve(self, p: str) -> str:
        return p if os.path.isabs(p) else os.path.normpath(os.path.join(self.base_dir, p))

    @property
    def data_path(self) -> str:
        return self.resolve(self.get("data", "path"))

    @property
    def out_dir(self) -> str:
        return self.resolve(self.get("output", "dir"))

    def schema(self) -> ColumnSchema:
        lc = self.get("data", "label_column")
        try:
            label_col: int | str = int(lc)
        except ValueError:
            label_col = lc
        neg = self.get("data", "negative") or None
        return ColumnSchema(label_col, self.get("data", "positive"), neg,
                            header=_bool(self.get("data", "header")))

    @property
    def k(self) -> int:
        return int(self.get("folds", "k"))

    @property
    def fold_seed(self) -> int:
        return int(self.get("folds", "seed"))

    def grid(self) -> ModelGrid:
        base = float(self.get("grid", "base"))
        return ModelGrid.from_exponents(parse_range(self.get("grid", "cost_exponents")),
                                        parse_range(self.get("grid", "gamma_exponents")), base)

    @property
    def standardize(self) -> bool:
        return _bool(self.get("grid", "standardize"))

    @property
    def smo_tol(self) -> float:
        return float(self.get("grid", "tol"))

    @property
    def smo_max_iter(self) -> int:
        return int(float(self.get("grid", "max_iter")))

    @property
    def formulation(self) -> str:
        return self.get("combine", "formulation")

    @property
    def margin(self) -> float:
        m = _opt_float(self.get("combine", "margin"))
        if m is None:
            return 1.0 if self.formulation == "qp" else 0.5
        return m

    @property
    def cap(self) -> float | None:
        return _opt_float(self.get("combine", "cap"))

    @property
    def penalty_C(self) -> float:
        return float(self.get("combine", "penalty_C"))

    @property
    def sum_to_one(self) -> bool:
        return _bool(self.get("combine", "sum_to_one"))

    @property
    def score_kind(self) -> str:
        return self.get("combine", "score_kind")

    @property
    def D(self) -> int:
        return int(self.get("combine", "D"))

    @property
    def bootstrap_seed(self) -> int:
        return int(self.get("combine", "bootstrap_seed"))

    @property
    def qp_iterations(self) -> int:
        return int(self.get("combine", "qp_iterations"))

    def validate(self):
        try:
            if self.k < 2:
                raise ConfigError("folds.k must be >= 2")
            if len(self.grid()) == 0:
                raise ConfigError("grid is empty")
            if self.formulation not in FORMULATIONS:
                raise ConfigError(f"combine.formulation must be one of {FORMULATIONS}")
            if self.score_kind not in SCORE_KINDS:
                raise ConfigError(f"combine.score_kind must be one of {SCORE_KINDS}")
            if self.penalty_C <= 0:
                raise ConfigError("combine.penalty_C must be positive")
            if self.D < 1:
                raise ConfigError("combine.D must be >= 1")
            cap, K = self.cap, len(self.grid())
            if cap is not None and (cap <= 0 or (self.sum_to_one and cap * K < 1.0 - 1e-12)):
                raise ConfigError(f"combine.cap={cap} leaves no feasible weights for K={K}")
            self.margin, self.cap, self.sum_to_one, self.standardize
            self.fold_seed, self.bootstrap_seed, self.smo_tol, self.smo_max_iter
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e)) from None

    def canonical(self) -> str:
        lines = []
        for s in sorted(self.raw):
            for k in sorted(self.raw[s]):
                v = self.raw[s][k]
                if (s, k) == ("data", "path"):
                    v = os.path.basename(v)
                if (s, k) == ("output", "dir"):
                    continue
                lines.append(f"{s}.{k}={v}")
        return "\n".join(lines)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]
