"""Hinge-loss training under the five penalties, model selection, and the
worst-case (robust) hinge loss."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import Dataset, LinearModel, RegKind, decision_scores
from .metrics import evenness, roc_auc, sparsity
from .regularizers import NormKind, RegularizerSpec, norm, reg_value

__all__ = [
    "TrainingError",
    "SolverSettings",
    "TrainConfig",
    "TrainResult",
    "SelectionConfig",
    "RobustCheckSpec",
    "hinge_loss",
    "objective",
    "fit",
    "train",
    "default_grid",
    "stratified_folds",
    "cross_validate",
    "worst_case_hinge",
]

log = logging.getLogger(__name__)

SOLVERS = {
    "primal_dual": _kernels.primal_dual_solve,
    "subgradient": _kernels.subgradient_solve,
}


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class SolverSettings:
    """Iterative solver knobs.

    ``primal_dual`` (default) checks a duality-gap certificate every
    ``window`` iterations and stops once the gap is within ``tol`` relative to
    the objective. ``subgradient`` stops when the best objective has improved
    by less than ``tol`` (relative) over the last ``window`` iterations.
    ``seed`` is carried for reproducibility records; both solvers are
    deterministic from w = 0, b = 0.
    """

    max_iters: int = 20000
    step0: float = 1.0
    tol: float = 1e-4
    seed: int = 0
    window: int = 50
    method: str = "primal_dual"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.step0 > 0:
            raise ValueError("step0 must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.method not in SOLVERS:
            raise ValueError(f"unknown solver {self.method!r}; choose from {sorted(SOLVERS)}")


@dataclass(frozen=True)
class TrainConfig:
    C: float
    spec: RegularizerSpec
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")

    def hyperparams(self):
        return {"C": float(self.C), **self.spec.hyperparams()}

    def to_dict(self):
        return {"regularizer": self.spec.kind.value, **self.hyperparams()}


@dataclass(frozen=True)
class TrainResult:
    model: LinearModel
    objective: float
    converged: bool
    iters: int

    def report(self):
        w = self.model.weights
        return {
            "objective": self.objective,
            "converged": self.converged,
            "iters": self.iters,
            "S": sparsity(w),
            "E": evenness(w) if np.any(w != 0.0) else None,
        }


@dataclass(frozen=True)
class SelectionConfig:
    """Grid search maximising AUC + alpha*E + beta*S over k folds."""

    grid: tuple
    alpha: float = 0.1
    beta: float = 0.1
    folds: int = 5
    repetitions: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(self.grid))
        if not self.grid:
            raise ValueError("selection grid must not be empty")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.folds < 2:
            raise ValueError("need at least 2 folds")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


@dataclass(frozen=True)
class RobustCheckSpec:
    """Budget ``c`` on the summed dual-norm size of training perturbations;
    ``norm`` is the primal norm whose dual measures each perturbation."""

    c: float
    norm: NormKind = NormKind.L2

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("uncertainty budget c must be positive")
        object.__setattr__(self, "norm", NormKind(self.norm))


def _check(model, data):
    if model.d != data.d:
        raise ValueError(f"model has {model.d} weights but data has {data.d} features")


def _slacks(model, data):
    _check(model, data)
    return 1.0 - data.labels * decision_scores(model, data.samples)


def hinge_loss(model, data):
    """Sum over samples of (1 − y·g(x))₊."""
    return float(np.maximum(_slacks(model, data), 0.0).sum())


def objective(model, data, cfg):
    if model.regularizer is not cfg.spec.kind:
        raise ValueError(
            f"model regularizer {model.regularizer.value} does not match config {cfg.spec.kind.value}"
        )
    return reg_value(cfg.spec, model.weights) + cfg.C * hinge_loss(model, data)


def fit(data, cfg):
    """Minimise reg(w) + C·hinge over (w, b), starting from w = 0, b = 0.

    The returned model is the best iterate seen. ``converged`` is False when
    ``max_iters`` ran out before the stopping rule fired.
    """
    pos, neg = data.class_counts()
    if pos == 0 or neg == 0:
        raise TrainingError("training data must contain both classes")
    s = cfg.solver
    solve = SOLVERS[s.method]
    X = np.ascontiguousarray(data.samples)
    y = np.ascontiguousarray(data.labels)
    w, b, obj, iters, converged = solve(
        X, y, float(cfg.C), cfg.spec.code, cfg.spec.kernel_param,
        int(s.max_iters), float(s.step0), float(s.tol), int(s.window),
    )
    model = LinearModel(w, b, cfg.spec.kind, cfg.hyperparams())
    if not converged:
        log.info("solver stopped at max_iters=%d without meeting tol=%g", s.max_iters, s.tol)
    return TrainResult(model, float(obj), bool(converged), int(iters))


def train(data, cfg):
    return fit(data, cfg).model


DEFAULT_C = tuple(10.0 ** k for k in range(-3, 4))
DEFAULT_MIX = (0.1, 0.3, 0.5, 0.7, 0.9)


def default_grid(kinds=tuple(RegKind), Cs=DEFAULT_C, mix=DEFAULT_MIX, solver=None):
    solver = solver or SolverSettings()
    grid = []
    for kind in kinds:
        kind = RegKind(kind)
        params = mix if kind in (RegKind.ELNET, RegKind.OCT) else (None,)
        for p in params:
            for C in Cs:
                grid.append(TrainConfig(C, RegularizerSpec(kind, p), solver))
    return grid


def stratified_folds(labels, k, seed):
    """Seeded shuffle within each class, then deal indices round-robin."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    offset = 0
    for cls in (1.0, -1.0):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.size)]
        for n, i in enumerate(idx):
            folds[(n + offset) % k].append(int(i))
        offset += idx.size
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


def _fold_score(data, cfg, train_idx, val_idx):
    model = train(data.subset(train_idx), cfg)
    w = model.weights
    val = data.subset(val_idx)
    pos, neg = val.class_counts()
    auc = roc_auc(decision_scores(model, val.samples), val.labels) if pos and neg else None
    # evenness is undefined for w = 0; such a fold earns no evenness credit
    e = evenness(w) if np.any(w != 0.0) else 0.0
    return auc, e, sparsity(w)


def cross_validate(data, sel, threads=1):
    """Pick the grid entry with the best mean AUC + alpha*E + beta*S.

    Ties go to higher S, then lower C, then earlier grid position.
    Returns (chosen TrainConfig, diagnostics dict).
    """
    if sel.folds > data.m / 2:
        raise ValueError(f"{sel.folds} folds is too many for {data.m} samples")
    splits = []
    for r in range(sel.repetitions):
        folds = stratified_folds(data.labels, sel.folds, sel.seed + r)
        for f in range(sel.folds):
            val_idx = folds[f]
            train_idx = np.sort(np.concatenate([folds[g] for g in range(sel.folds) if g != f]))
            splits.append((train_idx, val_idx))

    jobs = [(c, s) for c in range(len(sel.grid)) for s in range(len(splits))]

    def run(job):
        c, s = job
        return _fold_score(data, sel.grid[c], *splits[s])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, jobs))
    else:
        outcomes = [run(j) for j in jobs]

    rows = []
    any_valid = False
    for c, cfg in enumerate(sel.grid):
        res = outcomes[c * len(splits):(c + 1) * len(splits)]
        aucs = [a for a, _, _ in res if a is not None]
        any_valid = any_valid or bool(aucs)
        auc = float(np.mean(aucs)) if aucs else float("nan")
        e = float(np.mean([r[1] for r in res]))
        s = float(np.mean([r[2] for r in res]))
        rows.append(
            {
                "index": c,
                **cfg.to_dict(),
                "auc": auc,
                "E": e,
                "S": s,
                "score": auc + sel.alpha * e + sel.beta * s,
                "valid_folds": len(aucs),
            }
        )
    if not any_valid:
        raise TrainingError("every validation fold held a single class")

    scored = [r for r in rows if r["valid_folds"] > 0]
    best = min(scored, key=lambda r: (-r["score"], -r["S"], r["C"], r["index"]))
    return sel.grid[best["index"]], {"candidates": rows, "selected": best["index"]}


def worst_case_hinge(model, data, chk):
    """max over perturbations with sum_i ‖u_i‖* <= c of
    sum_i (1 − y_i(w·(x_i − u_i) + b))₊.

    The objective is convex in the per-sample budgets, so the maximum sits at
    a vertex of the budget simplex: the whole budget goes to one sample and
    raises its slack by c·‖w‖. When some slack is already non-negative this
    gives hinge + c‖w‖; otherwise the best single sample is the one with the
    largest slack, and spending nothing is also allowed.
    """
    slack = _slacks(model, data)
    hinge = float(np.maximum(slack, 0.0).sum())
    gain = chk.c * norm(chk.norm, model.weights)
    if gain == 0.0:
        return hinge
    if np.any(slack >= 0.0):
        return hinge + gain
    return max(hinge, float(slack.max()) + gain)
