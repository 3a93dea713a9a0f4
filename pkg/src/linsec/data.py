"""Loading, writing, generating and splitting datasets."""
from __future__ import annotations

import csv
import gzip
import logging
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .core import Dataset, FeatureMeta

__all__ = [
    "DataError",
    "SynthKind",
    "SynthSpec",
    "load_csv",
    "save_csv",
    "load_sparse",
    "save_sparse",
    "load_idx",
    "write_idx",
    "generate",
    "split",
]

log = logging.getLogger(__name__)


class DataError(ValueError):
    """Malformed input file or impossible request."""


def _labels(raw, where):
    out = []
    saw01 = False
    for v, loc in zip(raw, where):
        if v in (1.0, -1.0):
            out.append(v)
        elif v == 0.0:
            saw01 = True
            out.append(-1.0)
        else:
            raise DataError(f"{loc}: label {v!r} is not one of -1, +1, 0, 1")
    if saw01:
        log.warning("0/1 labels found; mapping 0 -> -1 (legitimate) and 1 -> +1 (malicious)")
    return np.array(out)


def _open(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rt", newline="")
    return open(path, newline="")


def load_csv(path, label_column=0, has_header=False, delimiter=","):
    """Dense rows; the label sits in ``label_column`` (negative indices count
    from the end). Row order is preserved."""
    rows, labels, where = [], [], []
    width = None
    with _open(path) as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        for lineno, row in enumerate(reader, start=1):
            if has_header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
                if not -width <= label_column < width:
                    raise DataError(f"{path}:{lineno}: no label column {label_column} in {width} fields")
            if len(row) != width:
                raise DataError(f"{path}:{lineno}: expected {width} fields, found {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            labels.append(vals.pop(label_column))
            rows.append(vals)
            where.append(f"{path}:{lineno}")
    if not rows:
        raise DataError(f"{path}: no data rows")
    if width < 2:
        raise DataError(f"{path}: rows need a label and at least one feature")
    return Dataset(np.array(rows), _labels(labels, where), info={"source": str(path)})


def save_csv(data, path, label_column=0, header=False):
    """Labels first (or last with label_column=-1); 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            names = [f"f{j + 1}" for j in range(data.d)]
            writer.writerow(["label", *names] if label_column == 0 else [*names, "label"])
        for x, y in zip(data.samples, data.labels):
            vals = [f"{v:.17g}" for v in x]
            lab = "+1" if y > 0 else "-1"
            writer.writerow([lab, *vals] if label_column == 0 else [*vals, lab])


def load_sparse(path, n_features=None):
    """``label idx:val ...`` lines with 1-based indices; absent entries are 0.

    d is the largest index seen unless ``n_features`` fixes it.
    """
    labels, where, entries = [], [], []
    max_idx = 0
    with _open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            loc = f"{path}:{lineno}"
            parts = line.split()
            try:
                labels.append(float(parts[0]))
            except ValueError:
                raise DataError(f"{loc}: bad label {parts[0]!r}") from None
            row = {}
            for tok in parts[1:]:
                idx, sep, val = tok.partition(":")
                try:
                    j = int(idx)
                    v = float(val)
                except ValueError:
                    raise DataError(f"{loc}: bad feature token {tok!r}") from None
                if not sep or j < 1:
                    raise DataError(f"{loc}: bad feature token {tok!r}")
                if j in row:
                    raise DataError(f"{loc}: duplicate index {j}")
                row[j] = v
                max_idx = max(max_idx, j)
            entries.append(row)
            where.append(loc)
    if not entries:
        raise DataError(f"{path}: no data rows")
    d = max_idx if n_features is None else int(n_features)
    if d < max_idx:
        raise DataError(f"{path}: index {max_idx} exceeds n_features={d}")
    if d < 1:
        raise DataError(f"{path}: no features")
    X = np.zeros((len(entries), d))
    for i, row in enumerate(entries):
        for j, v in row.items():
            X[i, j - 1] = v
    return Dataset(X, _labels(labels, where), info={"source": str(path)})


def save_sparse(data, path):
    with open(path, "w") as fh:
        for x, y in zip(data.samples, data.labels):
            toks = [f"{j + 1}:{v:.17g}" for j, v in enumerate(x) if v != 0.0]
            fh.write(" ".join(["+1" if y > 0 else "-1", *toks]) + "\n")


_IDX_UBYTE = 0x08


def _read_idx(path, ndim):
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise DataError(f"{path}: truncated header ({len(raw)} bytes)")
    zero, dtype, dims = struct.unpack(">HBB", raw[:4])
    if zero != 0 or dtype != _IDX_UBYTE or dims != ndim:
        raise DataError(
            f"{path}: bad magic (dtype 0x{dtype:02x}, {dims} dims); "
            f"expected unsigned bytes with {ndim} dims"
        )
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise DataError(f"{path}: truncated header ({len(raw)} bytes, need {head})")
    shape = struct.unpack(">" + "I" * ndim, raw[4:head])
    expected = int(np.prod(shape))
    actual = len(raw) - head
    if actual != expected:
        raise DataError(f"{path}: payload has {actual} bytes, expected {expected} for shape {shape}")
    return np.frombuffer(raw, dtype=np.uint8, offset=head).reshape(shape)


def write_idx(path, array):
    """Write a uint8 array as an IDX file (big-endian header)."""
    a = np.asarray(array, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">HBB", 0, _IDX_UBYTE, a.ndim))
        fh.write(struct.pack(">" + "I" * a.ndim, *a.shape))
        fh.write(a.tobytes())


def load_idx(images_path, labels_path, class_pos=9, class_neg=8, scale=1.0):
    """Two digit classes from IDX image/label files; ``class_pos`` becomes +1.

    Pixels are multiplied by ``scale`` (1 keeps 0-255, 1/255 gives [0, 1]).
    """
    images = _read_idx(images_path, 3)
    labels = _read_idx(labels_path, 1)
    if images.shape[0] != labels.shape[0]:
        raise DataError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    keep = (labels == class_pos) | (labels == class_neg)
    if not keep.any():
        raise DataError(f"no samples of digits {class_pos} or {class_neg}")
    X = images[keep].reshape(int(keep.sum()), -1).astype(np.float64) * float(scale)
    y = np.where(labels[keep] == class_pos, 1.0, -1.0)
    d = X.shape[1]
    top = 255.0 * float(scale)
    meta = FeatureMeta(np.zeros(d), np.full(d, top), np.zeros(d, dtype=bool))
    info = {"source": str(images_path), "scale": float(scale), "pixel_max": top,
            "class_pos": int(class_pos), "class_neg": int(class_neg)}
    return Dataset(X, y, meta, info)


class SynthKind(str, Enum):
    GAUSS2 = "gauss2"
    BOOLEAN_TEXT = "boolean_text"
    COUNTS = "counts"


@dataclass(frozen=True)
class SynthSpec:
    """Synthetic two-class data.

    gauss2: unit-variance Gaussians centred at ±separation/2 on every axis.
    boolean_text: Bernoulli term presence with class-specific rates; a
        fraction ``informative`` of the terms is spam- or ham-leaning.
    counts: Poisson keyword counts with class-specific rates.
    """

    seed: int = 0
    d: int = 20
    m_per_class: int = 100
    kind: SynthKind = SynthKind.GAUSS2
    separation: float = 2.0
    informative: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", SynthKind(self.kind))
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if self.m_per_class < 1:
            raise ValueError("m_per_class must be >= 1")
        if not self.separation > 0:
            raise ValueError("separation must be positive")
        if not 0.0 < self.informative <= 1.0:
            raise ValueError("informative fraction must lie in (0, 1]")


def _interleave(Xp, Xn):
    m = Xp.shape[0]
    X = np.empty((2 * m, Xp.shape[1]))
    X[0::2] = Xp
    X[1::2] = Xn
    y = np.tile([1.0, -1.0], m)
    return X, y


def generate(spec):
    rng = np.random.default_rng(spec.seed)
    d, m = spec.d, spec.m_per_class
    if spec.kind is SynthKind.GAUSS2:
        half = spec.separation / 2.0
        Xp = rng.normal(size=(m, d)) + half
        Xn = rng.normal(size=(m, d)) - half
        X, y = _interleave(Xp, Xn)
        meta = FeatureMeta.unbounded(d)
    elif spec.kind is SynthKind.BOOLEAN_TEXT:
        base = rng.uniform(0.05, 0.4, size=d)
        k = max(1, int(round(spec.informative * d)))
        which = rng.permutation(d)[:k]
        lift = np.zeros(d)
        # strength of each informative term; separation scales the shift
        lift[which] = rng.uniform(0.05, 0.25, size=k) * spec.separation / 2.0
        direction = np.zeros(d)
        direction[which] = np.where(rng.random(k) < 0.7, 1.0, -1.0)
        p_pos = np.clip(base + direction * lift, 0.01, 0.99)
        p_neg = np.clip(base - direction * lift, 0.01, 0.99)
        Xp = (rng.random((m, d)) < p_pos).astype(np.float64)
        Xn = (rng.random((m, d)) < p_neg).astype(np.float64)
        X, y = _interleave(Xp, Xn)
        meta = FeatureMeta(np.zeros(d), np.ones(d), np.ones(d, dtype=bool))
    else:
        base = rng.gamma(2.0, 1.0, size=d)
        factor = np.exp(rng.normal(0.0, 0.5 * spec.separation, size=d))
        Xp = rng.poisson(base * factor, size=(m, d)).astype(np.float64)
        Xn = rng.poisson(base, size=(m, d)).astype(np.float64)
        X, y = _interleave(Xp, Xn)
        meta = FeatureMeta(np.zeros(d), np.full(d, np.inf), np.zeros(d, dtype=bool))
    return Dataset(X, y, meta, {"source": f"synthetic:{spec.kind.value}", "seed": spec.seed})


def split(data, train_fraction=0.5, seed=0, stratified=True):
    """Seeded disjoint split; per class, round(fraction·n) samples go to train.

    Returns (train, test); test is None when it would be empty.
    """
    if not 0.0 < train_fraction <= 1.0:
        raise ValueError("train_fraction must lie in (0, 1]")
    pos, neg = data.class_counts()
    if pos == 0 or neg == 0:
        raise DataError("split needs both classes present")
    rng = np.random.default_rng(seed)
    if stratified:
        groups = [np.flatnonzero(data.labels > 0), np.flatnonzero(data.labels < 0)]
    else:
        groups = [np.arange(data.m)]
    tr, te = [], []
    for idx in groups:
        idx = idx[rng.permutation(idx.size)]
        k = int(round(train_fraction * idx.size))
        tr.append(idx[:k])
        te.append(idx[k:])
    tr = np.sort(np.concatenate(tr))
    te = np.sort(np.concatenate(te))
    train = data.subset(tr)
    if te.size == 0:
        log.warning("train_fraction=%g leaves an empty test set", train_fraction)
        return train, None
    return train, data.subset(te)


def subsample(data, per_class, seed):
    """``per_class`` random samples of each class (seeded)."""
    rng = np.random.default_rng(seed)
    out = []
    for cls in (1.0, -1.0):
        idx = np.flatnonzero(data.labels == cls)
        if idx.size < per_class:
            raise DataError(f"class {cls:+g} has {idx.size} samples, {per_class} requested")
        out.append(rng.choice(idx, per_class, replace=False))
    return data.subset(np.sort(np.concatenate(out)))
