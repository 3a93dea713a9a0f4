"""Perfect-knowledge evasion of linear classifiers.

Each attack minimises g(x) = w·x + b over x with cost(x − x0) <= d_max and the
declared application constraint. Because g is linear the problems have
closed-form or greedy exact solutions; ``attack_pgd`` and ``attack_bruteforce``
solve the same problems generically and serve as cross-checks.
"""
from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from . import _kernels
from .core import FeatureCaps, FeatureMeta

__all__ = [
    "CostNorm",
    "Box",
    "BooleanFlip",
    "IncrementOnly",
    "AttackSpec",
    "AttackResult",
    "InstanceTooLarge",
    "attack_dense_l2",
    "attack_sparse_l1",
    "attack_boolean",
    "attack_increment_only",
    "attack_pgd",
    "attack_bruteforce",
    "run_campaign",
    "campaign_records",
    "ATTACKS",
]

NO_DESCENT = "no descent direction"


class InstanceTooLarge(ValueError):
    pass


class CostNorm(str, Enum):
    L1 = "l1"
    L2 = "l2"


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=np.float64)
        hi = np.array(self.upper, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be vectors of equal length")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_meta(cls, meta: FeatureMeta):
        return cls(meta.lower, meta.upper)

    @classmethod
    def uniform(cls, d, lower, upper):
        return cls(np.full(d, float(lower)), np.full(d, float(upper)))


@dataclass(frozen=True)
class BooleanFlip:
    """Features are {0, 1}; each flip costs one unit."""


@dataclass(frozen=True)
class IncrementOnly:
    """Values may only grow, up to ``caps``; ``integral`` floors each
    per-feature increment (occurrence counts)."""

    caps: FeatureCaps
    integral: bool = False


@dataclass(frozen=True)
class AttackSpec:
    d_max: float
    cost: CostNorm = CostNorm.L1
    constraints: Box | BooleanFlip | IncrementOnly | None = None

    def __post_init__(self):
        if not (self.d_max >= 0 and math.isfinite(self.d_max)):
            raise ValueError("d_max must be a finite non-negative budget")
        object.__setattr__(self, "d_max", float(self.d_max))
        object.__setattr__(self, "cost", CostNorm(self.cost))

    def with_budget(self, d_max):
        return replace(self, d_max=float(d_max))


@dataclass(frozen=True)
class AttackResult:
    x_star: np.ndarray
    g_before: float
    g_after: float
    cost_used: float
    note: str = ""

    @property
    def evaded(self):
        return self.g_after < 0.0

    def record(self, index, budget=None):
        rec = {"index": int(index)}
        if budget is not None:
            rec["budget"] = float(budget)
        rec.update(
            g_before=self.g_before,
            g_after=self.g_after,
            cost_used=self.cost_used,
            evaded=self.evaded,
        )
        return rec


def _g(model, x):
    return float(np.dot(model.weights, x) + model.bias)


def _cost(kind, z):
    if kind is CostNorm.L1:
        return float(np.abs(z).sum())
    return float(np.sqrt(np.dot(z, z)))


def _prepare(model, x0, spec):
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (model.d,):
        raise ValueError(f"sample has shape {x0.shape}, model expects ({model.d},)")
    return x0


def _absolute_bounds(spec, x0):
    """Bounds on x implied by the constraint, checking x0 satisfies them."""
    c = spec.constraints
    d = x0.size
    if c is None:
        return np.full(d, -np.inf), np.full(d, np.inf)
    if isinstance(c, Box):
        if c.lower.size != d:
            raise ValueError("box bounds do not match the sample length")
        if np.any(x0 < c.lower) or np.any(x0 > c.upper):
            raise ValueError("initial sample lies outside the box constraint")
        return c.lower, c.upper
    if isinstance(c, IncrementOnly):
        caps = c.caps.caps
        if caps.size != d:
            raise ValueError("caps do not match the sample length")
        if np.any(x0 > caps):
            raise ValueError("initial sample exceeds the increment caps")
        return x0.copy(), caps
    if isinstance(c, BooleanFlip):
        _check_boolean(x0)
        return np.zeros(d), np.ones(d)
    raise TypeError(f"unknown constraint {c!r}")


def _check_boolean(x0):
    if not np.all((x0 == 0.0) | (x0 == 1.0)):
        raise ValueError("boolean attack requires a 0/1 sample")


def _finish(model, x0, x, spec, note=""):
    lo, hi = _absolute_bounds(spec, x0)
    x = np.minimum(np.maximum(x, lo), hi)
    return AttackResult(x, _g(model, x0), _g(model, x), _cost(spec.cost, x - x0), note)


def _l2_path(v, lo, hi, radius, t_max=np.inf):
    """z(t) = clip(t·v, lo, hi) at the smallest t <= t_max with ‖z(t)‖₂ = radius,
    or at t_max when the norm never gets there. lo <= 0 <= hi is assumed.

    ‖z(t)‖² is piecewise quadratic in t with breaks where coordinates
    saturate, so t is found exactly by walking the sorted break points.
    """
    nz = np.flatnonzero(v != 0.0)
    z = np.zeros_like(v)
    if nz.size == 0 or radius <= 0.0:
        return z
    vn = v[nz]
    limit = np.where(vn > 0, hi[nz], -lo[nz])
    brk = limit / np.abs(vn)
    order = np.argsort(brk, kind="stable")
    clipped_sq = 0.0
    free_sq = float(np.dot(vn, vn))
    free = np.ones(nz.size, dtype=bool)
    t = None
    r2 = radius * radius
    for k in order:
        tk = brk[k]
        if tk >= t_max:
            break
        if clipped_sq + tk * tk * free_sq >= r2:
            t = math.sqrt(max(r2 - clipped_sq, 0.0) / free_sq)
            break
        clipped_sq += limit[k] ** 2
        free_sq -= vn[k] ** 2
        free[k] = False
        if free_sq <= 0.0:
            break
    if t is None:
        if free.any():
            # remaining coordinates never saturate below t_max
            if math.isinf(t_max):
                t = math.sqrt(max(r2 - clipped_sq, 0.0) / free_sq)
            else:
                t = min(t_max, math.sqrt(max(r2 - clipped_sq, 0.0) / free_sq))
        else:
            t = 0.0
    zn = np.where(free, t * vn, np.sign(vn) * limit)
    z[nz] = zn
    return z


def attack_dense_l2(model, x0, spec):
    """Minimise g over the Euclidean ball of radius d_max (optionally ∩ box).

    Unconstrained: x* = x0 − d_max·w/‖w‖₂. With a box the minimiser is
    x0 + clip(−t·w) for the t that spends the whole budget (or the box corner
    when the budget cannot be spent).
    """
    x0 = _prepare(model, x0, spec)
    if spec.cost is not CostNorm.L2:
        raise ValueError("dense attack needs an l2 cost")
    if isinstance(spec.constraints, BooleanFlip):
        raise ValueError("dense attack does not support boolean flips")
    w = model.weights
    wn = float(np.sqrt(np.dot(w, w)))
    lo, hi = _absolute_bounds(spec, x0)
    if wn == 0.0:
        return _finish(model, x0, x0.copy(), spec, NO_DESCENT)
    if spec.constraints is None:
        x = x0 - spec.d_max * (w / wn)
    else:
        x = x0 + _l2_path(-w, lo - x0, hi - x0, spec.d_max)
    return _finish(model, x0, x, spec)


def _greedy_l1(w, lo_z, hi_z, budget, integral=False):
    """Spend ``budget`` on coordinates in decreasing |w_j| order (lower index
    first on ties), each moved against sign(w_j) until its bound."""
    z = np.zeros_like(w)
    order = np.argsort(-np.abs(w), kind="stable")
    left = budget
    for j in order:
        if w[j] == 0.0 or left <= 0.0:
            break
        room = -lo_z[j] if w[j] > 0 else hi_z[j]
        step = min(room, left)
        if integral:
            step = math.floor(step)
        if step <= 0.0:
            continue
        z[j] = -step if w[j] > 0 else step
        left -= step
    return z


def attack_sparse_l1(model, x0, spec):
    """Exact minimiser of g on the l1 ball ∩ box via greedy allocation."""
    x0 = _prepare(model, x0, spec)
    if spec.cost is not CostNorm.L1:
        raise ValueError("sparse attack needs an l1 cost")
    lo, hi = _absolute_bounds(spec, x0)
    w = model.weights
    if not np.any(w != 0.0):
        return _finish(model, x0, x0.copy(), spec, NO_DESCENT)
    integral = isinstance(spec.constraints, IncrementOnly) and spec.constraints.integral
    z = _greedy_l1(w, lo - x0, hi - x0, spec.d_max, integral)
    return _finish(model, x0, x0 + z, spec)


def attack_boolean(model, x0, spec):
    """Flip the floor(d_max) features with the largest decrease of g.

    Flipping j changes g by w_j(1 − 2x_j); only negative changes are taken.
    """
    x0 = _prepare(model, x0, spec)
    if not isinstance(spec.constraints, BooleanFlip):
        raise ValueError("boolean attack needs the BooleanFlip constraint")
    _check_boolean(x0)
    k = int(math.floor(spec.d_max + 1e-12))
    w = model.weights
    gain = -w * (1.0 - 2.0 * x0)
    order = np.argsort(-gain, kind="stable")
    x = x0.copy()
    for j in order[:k]:
        if gain[j] <= 0.0:
            break
        x[j] = 1.0 - x[j]
    note = "" if np.any(w != 0.0) else NO_DESCENT
    return AttackResult(x, _g(model, x0), _g(model, x), _cost(CostNorm.L1, x - x0), note)


def attack_increment_only(model, x0, spec):
    """Greedy l1 allocation over increments of features with w_j < 0, each
    capped at caps_j − x0_j."""
    x0 = _prepare(model, x0, spec)
    if not isinstance(spec.constraints, IncrementOnly):
        raise ValueError("increment-only attack needs the IncrementOnly constraint")
    if spec.cost is not CostNorm.L1:
        raise ValueError("increment-only attack needs an l1 cost")
    lo, hi = _absolute_bounds(spec, x0)
    w = model.weights
    neg = np.where(w < 0.0, w, 0.0)
    z = _greedy_l1(neg, lo - x0, hi - x0, spec.d_max, spec.constraints.integral)
    note = "" if np.any(neg != 0.0) else NO_DESCENT
    return _finish(model, x0, x0 + z, spec, note)


def _project_l1_box(v, lo, hi, radius, iters=200):
    """argmin ‖z − v‖ over ‖z‖₁ <= radius, lo <= z <= hi (lo <= 0 <= hi).

    z = clip(soft(v, θ), lo, hi) with θ >= 0 found by bisection on the
    non-increasing l1 mass; the feasible end of the bracket is returned.
    """
    def at(theta):
        return np.clip(np.sign(v) * np.maximum(np.abs(v) - theta, 0.0), lo, hi)

    z = at(0.0)
    if np.abs(z).sum() <= radius:
        return z
    a, b = 0.0, float(np.abs(v).max())
    for _ in range(iters):
        mid = 0.5 * (a + b)
        if np.abs(at(mid)).sum() > radius:
            a = mid
        else:
            b = mid
        if b - a <= 1e-15 * max(b, 1.0):
            break
    return at(b)


def _project(spec, v, lo_z, hi_z):
    if spec.cost is CostNorm.L2:
        return _l2_path(v, lo_z, hi_z, spec.d_max, t_max=1.0)
    return _project_l1_box(v, lo_z, hi_z, spec.d_max)


def attack_pgd(model, x0, spec, steps=100, step_size=None):
    """Projected gradient descent x <- Π(x − η·w), best iterate returned.

    The default step makes one iteration travel the budget (η‖w‖₂ = d_max).
    Projections onto the l2 or l1 ball intersected with box/increment bounds
    are exact.
    """
    x0 = _prepare(model, x0, spec)
    if isinstance(spec.constraints, BooleanFlip):
        raise ValueError("no projection for boolean flips; use attack_boolean")
    lo, hi = _absolute_bounds(spec, x0)
    w = model.weights
    wn = float(np.sqrt(np.dot(w, w)))
    if wn == 0.0 or steps <= 0 or spec.d_max == 0.0:
        return _finish(model, x0, x0.copy(), spec, NO_DESCENT if wn == 0.0 else "")
    eta = spec.d_max / wn if step_size is None else float(step_size)
    lo_z, hi_z = lo - x0, hi - x0
    z = np.zeros_like(x0)
    best_z, best_g = z, _g(model, x0)
    for _ in range(int(steps)):
        z_new = _project(spec, z - eta * w, lo_z, hi_z)
        g = _g(model, x0 + z_new)
        if g < best_g:
            best_z, best_g = z_new, g
        if np.array_equal(z_new, z):
            break
        z = z_new
    return _finish(model, x0, x0 + best_z, spec)


MAX_BOOL_D = 12
MAX_VERTEX_D = 8
MAX_GRID_D = 3


def _brute_l1_vertices(w, lo_z, hi_z, budget):
    """Enumerate candidate vertices of {‖z‖₁ <= budget} ∩ box: every
    coordinate at a bound or 0, except at most one that takes the leftover
    budget."""
    d = w.size
    options = []
    for j in range(d):
        opts = [0.0]
        for bound in (lo_z[j], hi_z[j]):
            if np.isfinite(bound) and bound != 0.0:
                opts.append(float(bound))
        options.append(opts)
    A = np.array(list(itertools.product(*options)), dtype=np.float64).reshape(-1, d)
    base_cost = np.abs(A).sum(axis=1)
    base_val = A @ w
    best_val = np.inf
    best = None
    ok = base_cost <= budget + 1e-12
    if ok.any():
        i = int(np.argmin(np.where(ok, base_val, np.inf)))
        best_val, best = base_val[i], A[i].copy()
    for j in range(d):
        rest = base_cost - np.abs(A[:, j])
        left = budget - rest
        for sgn in (-1.0, 1.0):
            val = sgn * left
            feas = (left >= 0.0) & (val >= lo_z[j]) & (val <= hi_z[j])
            if not feas.any():
                continue
            cand = base_val - w[j] * A[:, j] + w[j] * val
            cand = np.where(feas, cand, np.inf)
            i = int(np.argmin(cand))
            if cand[i] < best_val:
                best_val = cand[i]
                best = A[i].copy()
                best[j] = val[i]
    return best


def _brute_l2_grid(w, lo_z, hi_z, budget, resolution):
    d = w.size
    axes = []
    for j in range(d):
        a = max(lo_z[j], -budget)
        b = min(hi_z[j], budget)
        n = int(math.floor((b - a) / resolution + 1e-9)) + 1
        axes.append(np.unique(np.r_[a + resolution * np.arange(n), b, 0.0]))
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    feas = np.sqrt((mesh * mesh).sum(axis=1)) <= budget + 1e-12
    vals = np.where(feas, mesh @ w, np.inf)
    return mesh[int(np.argmin(vals))].copy()


def attack_bruteforce(model, x0, spec, grid_resolution=None):
    """Exhaustive reference solutions for small instances.

    Boolean flips: all subsets of at most floor(d_max) flips (d <= 12).
    l1 cost: every candidate vertex of the feasible polytope (d <= 8), exact.
    l2 cost: a grid of spacing ``grid_resolution`` over the ball ∩ box (d <= 3).
    """
    x0 = _prepare(model, x0, spec)
    d = x0.size
    w = model.weights
    if isinstance(spec.constraints, BooleanFlip):
        _check_boolean(x0)
        if d > MAX_BOOL_D:
            raise InstanceTooLarge(f"boolean brute force limited to d <= {MAX_BOOL_D}, got {d}")
        k = int(math.floor(spec.d_max + 1e-12))
        mask, _ = _kernels.min_boolean_flips(w, x0, k)
        x = x0.copy()
        for j in range(d):
            if (mask >> j) & 1:
                x[j] = 1.0 - x[j]
        return AttackResult(x, _g(model, x0), _g(model, x), _cost(CostNorm.L1, x - x0))
    lo, hi = _absolute_bounds(spec, x0)
    if spec.d_max == 0.0:
        return _finish(model, x0, x0.copy(), spec)
    if spec.cost is CostNorm.L1:
        if d > MAX_VERTEX_D:
            raise InstanceTooLarge(f"l1 vertex enumeration limited to d <= {MAX_VERTEX_D}, got {d}")
        integral = isinstance(spec.constraints, IncrementOnly) and spec.constraints.integral
        lo_z, hi_z = lo - x0, hi - x0
        if integral:
            lo_z, hi_z = np.ceil(lo_z), np.floor(hi_z)
            return _finish(model, x0, x0 + _brute_integer(w, lo_z, hi_z, math.floor(spec.d_max)), spec)
        return _finish(model, x0, x0 + _brute_l1_vertices(w, lo_z, hi_z, spec.d_max), spec)
    if d > MAX_GRID_D:
        raise InstanceTooLarge(f"l2 grid search limited to d <= {MAX_GRID_D}, got {d}")
    res = grid_resolution if grid_resolution is not None else spec.d_max / 100.0
    return _finish(model, x0, x0 + _brute_l2_grid(w, lo - x0, hi - x0, spec.d_max, res), spec)


def _brute_integer(w, lo_z, hi_z, budget):
    """All integer moves with l1 size <= budget inside the box."""
    ranges = [np.arange(max(lo_z[j], -budget), min(hi_z[j], budget) + 1) for j in range(w.size)]
    mesh = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, w.size)
    feas = np.abs(mesh).sum(axis=1) <= budget
    vals = np.where(feas, mesh @ w, np.inf)
    return mesh[int(np.argmin(vals))].astype(np.float64)


def run_campaign(model, X, attack_op, spec, threads=1):
    """Attack every row of ``X``; results keep row order."""
    X = np.asarray(X, dtype=np.float64)

    def one(i):
        return attack_op(model, X[i], spec)

    if threads > 1 and X.shape[0] > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(X.shape[0])))
    return [one(i) for i in range(X.shape[0])]


def campaign_records(triples):
    """JSON lines for (budget, sample index, AttackResult) triples."""
    return "".join(json.dumps(r.record(i, budget)) + "\n" for budget, i, r in triples)


for _fn, _kind in (
    (attack_dense_l2, "dense_l2"),
    (attack_sparse_l1, "sparse_l1"),
    (attack_boolean, "boolean"),
    (attack_increment_only, "increment_only"),
    (attack_pgd, "pgd"),
    (attack_bruteforce, "bruteforce"),
):
    _fn.kind = _kind

ATTACKS = {f.kind: f for f in (
    attack_dense_l2, attack_sparse_l1, attack_boolean,
    attack_increment_only, attack_pgd, attack_bruteforce,
)}
