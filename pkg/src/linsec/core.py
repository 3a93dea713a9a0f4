"""Datasets, linear models and the discriminant function."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

__all__ = [
    "RegKind",
    "FeatureMeta",
    "Dataset",
    "FeatureCaps",
    "LinearModel",
    "discriminant",
    "decision_scores",
    "predict",
    "caps_from_training",
    "DimensionError",
]


class DimensionError(ValueError):
    """Raised when a vector's length does not match the model or dataset."""


class RegKind(str, Enum):
    """Regularizer tag carried by a trained model."""

    L2 = "l2"  # ½‖w‖₂², the standard SVM
    L1 = "l1"
    LINF = "linf"
    ELNET = "elnet"
    OCT = "oct"


# hyperparameters that are meaningful for each regularizer
HYPERPARAMS = {
    RegKind.L2: ("C",),
    RegKind.L1: ("C",),
    RegKind.LINF: ("C",),
    RegKind.ELNET: ("C", "lam"),
    RegKind.OCT: ("C", "rho"),
}


def _frozen(a, dtype=np.float64):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FeatureMeta:
    """Per-feature bounds and boolean flags."""

    lower: np.ndarray
    upper: np.ndarray
    boolean: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", _frozen(self.lower))
        object.__setattr__(self, "upper", _frozen(self.upper))
        object.__setattr__(self, "boolean", _frozen(self.boolean, dtype=bool))
        n = self.lower.shape[0]
        if self.upper.shape != (n,) or self.boolean.shape != (n,):
            raise DimensionError("feature metadata vectors must share one length")
        if np.any(self.lower > self.upper):
            raise ValueError("feature lower bound exceeds upper bound")

    @classmethod
    def unbounded(cls, d):
        return cls(np.full(d, -np.inf), np.full(d, np.inf), np.zeros(d, dtype=bool))

    @classmethod
    def infer(cls, samples):
        """Boolean iff a column only holds {0, 1}; count columns (non-negative
        integers) get [0, inf); anything else is unbounded."""
        samples = np.asarray(samples, dtype=np.float64)
        d = samples.shape[1]
        boolean = np.all((samples == 0.0) | (samples == 1.0), axis=0)
        counts = np.all((samples >= 0.0) & (samples == np.floor(samples)), axis=0)
        lower = np.where(counts, 0.0, -np.inf)
        upper = np.where(boolean, 1.0, np.inf)
        return cls(lower, upper, boolean)

    @property
    def d(self):
        return self.lower.shape[0]


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with ±1 labels (−1 legitimate, +1 malicious)."""

    samples: np.ndarray
    labels: np.ndarray
    meta: FeatureMeta = None
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = _frozen(self.samples)
        y = _frozen(self.labels)
        if X.ndim != 2:
            raise DimensionError("samples must be a 2-D matrix")
        m, d = X.shape
        if m < 1 or d < 1:
            raise ValueError(f"dataset must have m >= 1 and d >= 1, got {X.shape}")
        if y.shape != (m,):
            raise DimensionError(f"expected {m} labels, got shape {y.shape}")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be exactly -1 or +1")
        if not np.all(np.isfinite(X)):
            raise ValueError("samples must be finite")
        meta = self.meta if self.meta is not None else FeatureMeta.infer(X)
        if meta.d != d:
            raise DimensionError(f"feature metadata has {meta.d} entries, data has {d}")
        if np.any(X < meta.lower) or np.any(X > meta.upper):
            raise ValueError("sample values fall outside their feature bounds")
        flagged = X[:, meta.boolean]
        if not np.all((flagged == 0.0) | (flagged == 1.0)):
            raise ValueError("boolean features must only contain 0 or 1")
        object.__setattr__(self, "samples", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "meta", meta)

    @property
    def m(self):
        return self.samples.shape[0]

    @property
    def d(self):
        return self.samples.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.samples[idx], self.labels[idx], self.meta, dict(self.info))

    def class_counts(self):
        return int(np.sum(self.labels > 0)), int(np.sum(self.labels < 0))


@dataclass(frozen=True)
class FeatureCaps:
    """Per-feature maximum admissible value for increment-only attacks."""

    caps: np.ndarray

    def __post_init__(self):
        c = _frozen(self.caps)
        if c.ndim != 1:
            raise DimensionError("caps must be a vector")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise ValueError("caps must be finite and non-negative")
        object.__setattr__(self, "caps", c)


@dataclass(frozen=True)
class LinearModel:
    """g(x) = w·x + b with the regularizer it was trained under."""

    weights: np.ndarray
    bias: float
    regularizer: RegKind = RegKind.L2
    hyperparams: dict = field(default_factory=dict)

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 1 or w.size < 1:
            raise DimensionError("weights must be a non-empty vector")
        if not np.all(np.isfinite(w)) or not math.isfinite(self.bias):
            raise ValueError("weights and bias must be finite")
        reg = RegKind(self.regularizer)
        allowed = HYPERPARAMS[reg]
        hp = {k: float(v) for k, v in self.hyperparams.items() if v is not None}
        extra = set(hp) - set(allowed)
        if extra:
            raise ValueError(f"hyperparameters {sorted(extra)} are meaningless for {reg.value}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))
        object.__setattr__(self, "regularizer", reg)
        object.__setattr__(self, "hyperparams", hp)

    @property
    def d(self):
        return self.weights.size

    def scaled(self, c):
        return LinearModel(self.weights * c, self.bias * c, self.regularizer, self.hyperparams)

    def to_json(self):
        return json.dumps(
            {
                "weights": [float(v) for v in self.weights],
                "bias": self.bias,
                "regularizer": self.regularizer.value,
                "hyperparams": self.hyperparams,
                "feature_count": self.d,
            }
        )

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        weights = doc["weights"]
        if "feature_count" in doc and int(doc["feature_count"]) != len(weights):
            raise DimensionError(
                f"feature_count {doc['feature_count']} disagrees with {len(weights)} weights"
            )
        return cls(weights, doc["bias"], RegKind(doc["regularizer"]), doc.get("hyperparams", {}))

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text())


def _check_dim(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.d:
        raise DimensionError(f"input has {x.shape[-1]} features, model expects {model.d}")
    return x


def discriminant(model, x):
    """w·x + b, summed in index order (sequential, not pairwise)."""
    x = _check_dim(model, x)
    if x.ndim != 1:
        raise DimensionError("discriminant takes a single vector; use decision_scores")
    s = 0.0
    for wj, xj in zip(model.weights.tolist(), x.tolist()):
        s += wj * xj
    return s + model.bias


def decision_scores(model, X):
    """Vectorised g over the rows of ``X`` (BLAS summation order)."""
    X = _check_dim(model, np.atleast_2d(X))
    return X @ model.weights + model.bias


def predict(model, x):
    """+1 when g(x) >= 0, else −1. Ties go to the malicious class."""
    x = _check_dim(model, x)
    if x.ndim == 1:
        return 1 if discriminant(model, x) >= 0.0 else -1
    return np.where(decision_scores(model, x) >= 0.0, 1, -1)


def caps_from_training(data):
    if data is None or data.m < 1:
        raise ValueError("cannot derive caps from an empty dataset")
    return FeatureCaps(np.maximum(data.samples.max(axis=0), 0.0))
