"""Penalty values, subgradients, proximal maps and norm duality.

The five penalties combined with the hinge loss:

    l2     ½‖w‖₂²                       (standard SVM)
    l1     ‖w‖₁                         (1-norm SVM)
    linf   ‖w‖∞                         (infinity-norm SVM)
    elnet  (1-λ)‖w‖₁ + (λ/2)‖w‖₂²
    oct    (1-ρ)‖w‖₁ + ρ‖w‖∞            (octagonal)
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _kernels
from .core import RegKind

__all__ = [
    "NormKind",
    "RegularizerSpec",
    "reg_value",
    "reg_subgradient",
    "reg_prox",
    "norm",
    "dual_norm",
    "dual_kind",
]


class NormKind(str, Enum):
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"


_DUAL = {NormKind.L1: NormKind.LINF, NormKind.LINF: NormKind.L1, NormKind.L2: NormKind.L2}

_KERNEL_CODE = {
    RegKind.L2: _kernels.REG_L2SQ,
    RegKind.L1: _kernels.REG_L1,
    RegKind.LINF: _kernels.REG_LINF,
    RegKind.ELNET: _kernels.REG_ELNET,
    RegKind.OCT: _kernels.REG_OCT,
}


@dataclass(frozen=True)
class RegularizerSpec:
    """A penalty and its mixing parameter (λ for elnet, ρ for oct)."""

    kind: RegKind
    param: float | None = None

    def __post_init__(self):
        kind = RegKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind in (RegKind.ELNET, RegKind.OCT):
            if self.param is None or not 0.0 < float(self.param) < 1.0:
                raise ValueError(f"{kind.value} needs a mixing parameter strictly inside (0, 1)")
            object.__setattr__(self, "param", float(self.param))
        elif self.param is not None:
            raise ValueError(f"{kind.value} takes no mixing parameter")

    @classmethod
    def l2(cls):
        return cls(RegKind.L2)

    @classmethod
    def l1(cls):
        return cls(RegKind.L1)

    @classmethod
    def linf(cls):
        return cls(RegKind.LINF)

    @classmethod
    def elnet(cls, lam):
        return cls(RegKind.ELNET, lam)

    @classmethod
    def oct(cls, rho):
        return cls(RegKind.OCT, rho)

    @property
    def code(self):
        return _KERNEL_CODE[self.kind]

    @property
    def kernel_param(self):
        return 0.0 if self.param is None else self.param

    def hyperparams(self):
        if self.kind is RegKind.ELNET:
            return {"lam": self.param}
        if self.kind is RegKind.OCT:
            return {"rho": self.param}
        return {}

    @property
    def label(self):
        if self.param is None:
            return self.kind.value
        return f"{self.kind.value}({self.param:g})"


def _vec(w):
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1:
        raise ValueError("expected a vector")
    if not np.all(np.isfinite(w)):
        raise ValueError("regularizer input must be finite")
    return np.ascontiguousarray(w)


def reg_value(spec, w):
    return float(_kernels.reg_value(spec.code, spec.kernel_param, _vec(w)))


def reg_subgradient(spec, w):
    """A deterministic subgradient.

    0 is picked for |·| at zero coordinates; for ‖·‖∞ the whole unit mass goes
    to the first index attaining the maximum (nothing when w = 0).
    """
    w = _vec(w)
    sign = np.sign(w)
    linf = np.zeros_like(w)
    if w.size and np.any(w != 0.0):
        j = int(np.argmax(np.abs(w)))
        linf[j] = sign[j]
    kind = spec.kind
    if kind is RegKind.L2:
        return w.copy()
    if kind is RegKind.L1:
        return sign
    if kind is RegKind.LINF:
        return linf
    if kind is RegKind.ELNET:
        return (1.0 - spec.param) * sign + spec.param * w
    return (1.0 - spec.param) * sign + spec.param * linf


def reg_prox(spec, v, t):
    """argmin_u  t·reg(u) + ½‖u − v‖²."""
    if t < 0:
        raise ValueError("prox step must be non-negative")
    return _kernels.reg_prox(spec.code, spec.kernel_param, _vec(v), float(t))


def norm(kind, v):
    v = _vec(v)
    kind = NormKind(kind)
    if kind is NormKind.L1:
        return float(np.abs(v).sum())
    if kind is NormKind.L2:
        return float(np.sqrt(np.dot(v, v)))
    return float(np.abs(v).max()) if v.size else 0.0


def dual_kind(kind):
    return _DUAL[NormKind(kind)]


def dual_norm(kind, v):
    """‖v‖* = max over ‖u‖ ≤ 1 of v·u, i.e. l1 ↔ linf, l2 ↔ l2."""
    return norm(dual_kind(kind), v)
