"""Weight sparsity/evenness, ROC areas and security evaluation curves."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

__all__ = [
    "ZERO_TOL",
    "threshold_weights",
    "sparsity",
    "evenness",
    "roc_curve",
    "roc_auc",
    "auc_at_fpr",
    "SecurityCurve",
    "security_curve",
]

# weights at or below this magnitude count as exact zeros
ZERO_TOL = 1e-8


def threshold_weights(w, tol=ZERO_TOL):
    w = np.array(w, dtype=np.float64)
    w[np.abs(w) <= tol] = 0.0
    return w


def sparsity(w, tol=ZERO_TOL):
    """Fraction of weights that are exactly zero once |w_j| <= tol is snapped."""
    w = threshold_weights(w, tol)
    if w.size == 0:
        raise ValueError("sparsity of an empty weight vector is undefined")
    return float(np.count_nonzero(w == 0.0)) / w.size


def evenness(w):
    """‖w‖₁ / (d·‖w‖∞), in [1/d, 1]."""
    w = np.asarray(w, dtype=np.float64)
    if w.size == 0:
        raise ValueError("evenness of an empty weight vector is undefined")
    a = np.abs(w)
    top = a.max()
    if top == 0.0:
        raise ValueError("evenness is undefined for an all-zero weight vector")
    # ratio first, so one non-zero weight gives exactly 1/d
    return float(a.sum() / top / w.size)


def _binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    pos = labels > 0
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC analysis needs both classes present")
    return scores, pos, n_pos, n_neg


def roc_curve(scores, labels):
    """(fpr, tpr) with one point per distinct score, starting at (0, 0).

    Higher scores mean "more malicious"; tied scores enter together.
    """
    scores, pos, n_pos, n_neg = _binary(scores, labels)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    p = pos[order]
    tp = np.cumsum(p)
    fp = np.cumsum(~p)
    last = np.r_[np.flatnonzero(np.diff(s) != 0.0), s.size - 1]
    tpr = np.r_[0.0, tp[last] / n_pos]
    fpr = np.r_[0.0, fp[last] / n_neg]
    return fpr, tpr


def roc_auc(scores, labels):
    """P(score⁺ > score⁻) + ½ P(score⁺ = score⁻) via mid-ranks."""
    scores, pos, n_pos, n_neg = _binary(scores, labels)
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_at_fpr(scores, labels, fpr_cap=0.1, normalize=True):
    """Trapezoidal ROC area over FPR in [0, fpr_cap], divided by fpr_cap
    when ``normalize`` (so a perfect ranking scores 1)."""
    if not 0.0 < fpr_cap <= 1.0:
        raise ValueError("fpr_cap must lie in (0, 1]")
    fpr, tpr = roc_curve(scores, labels)
    area = 0.0
    for i in range(1, fpr.size):
        f0, f1 = fpr[i - 1], fpr[i]
        t0, t1 = tpr[i - 1], tpr[i]
        if f0 >= fpr_cap:
            break
        if f1 <= fpr_cap:
            area += (f1 - f0) * (t0 + t1) / 2.0
        else:
            t_cap = t0 + (t1 - t0) * (fpr_cap - f0) / (f1 - f0)
            area += (fpr_cap - f0) * (t0 + t_cap) / 2.0
            break
    return float(area / fpr_cap) if normalize else float(area)


@dataclass(frozen=True)
class SecurityCurve:
    budgets: tuple
    auc10: tuple
    S: float
    E: float
    attack_kind: str
    fpr_cap: float = 0.1
    records: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        b = tuple(float(v) for v in self.budgets)
        a = tuple(float(v) for v in self.auc10)
        if len(b) != len(a):
            raise ValueError("budgets and auc10 differ in length")
        if any(b1 <= b0 for b0, b1 in zip(b, b[1:])):
            raise ValueError("budgets must be strictly increasing")
        if any(not 0.0 <= v <= 1.0 for v in a):
            raise ValueError("auc10 values must lie in [0, 1]")
        object.__setattr__(self, "budgets", b)
        object.__setattr__(self, "auc10", a)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["budget", "auc10"])
        for b, a in zip(self.budgets, self.auc10):
            writer.writerow([repr(b), repr(a)])
        return buf.getvalue()

    def sidecar(self):
        return {"S": self.S, "E": self.E, "attack": self.attack_kind, "fpr_cap": self.fpr_cap}

    def save(self, csv_path, json_path=None):
        csv_path = Path(csv_path)
        csv_path.write_text(self.to_csv())
        json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
        json_path.write_text(json.dumps(self.sidecar(), sort_keys=True) + "\n")

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return [float(r["budget"]) for r in rows], [float(r["auc10"]) for r in rows]


def security_curve(model, test_data, attack_op, spec_template, budgets, fpr_cap=0.1,
                   threads=1, keep_records=False):
    """AUC at ``fpr_cap`` against increasing attack budgets.

    Every malicious test sample is attacked with ``attack_op(model, x0, spec)``
    where spec is ``spec_template`` with ``d_max`` set to the budget; benign
    samples keep their clean scores. Budget 0 means no attack.
    """
    from .attacks import run_campaign
    from .core import decision_scores

    w = model.weights
    if not np.any(w != 0.0):
        raise ValueError("security curves need a model with at least one non-zero weight")
    budgets = [float(b) for b in budgets]
    clean = decision_scores(model, test_data.samples)
    mal = np.flatnonzero(test_data.labels > 0)
    aucs = []
    records = []
    for budget in budgets:
        scores = clean.copy()
        if budget > 0:
            results = run_campaign(model, test_data.samples[mal], attack_op,
                                   spec_template.with_budget(budget), threads=threads)
            scores[mal] = [r.g_after for r in results]
            if keep_records:
                records.extend(
                    (budget, int(i), r) for i, r in zip(mal, results)
                )
        aucs.append(auc_at_fpr(scores, test_data.labels, fpr_cap))
    kind = getattr(attack_op, "kind", getattr(attack_op, "__name__", "attack"))
    return SecurityCurve(tuple(budgets), tuple(aucs), sparsity(w), evenness(w), kind,
                         fpr_cap, tuple(records))
