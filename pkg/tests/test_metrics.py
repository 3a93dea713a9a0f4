import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from linsec import AttackSpec, BooleanFlip, attack_boolean, auc_at_fpr, evenness, roc_auc, sparsity
from linsec.metrics import SecurityCurve, roc_curve, security_curve, threshold_weights

from conftest import make_data, make_model

nonzero_vectors = arrays(np.float64, st.integers(1, 20), elements=st.floats(-1e3, 1e3)).filter(
    lambda w: np.abs(w).max() > 1e-6
)


def test_sparsity_examples():
    assert sparsity([0, 0, 1, 2]) == 0.5
    assert sparsity([0, 0, 0]) == 1.0
    assert sparsity([1, -2, 3]) == 0.0
    assert sparsity([1e-9, -1e-8, 1.0]) == pytest.approx(2 / 3)  # near-zeros are snapped
    with pytest.raises(ValueError):
        sparsity([])


def test_threshold_weights():
    np.testing.assert_array_equal(threshold_weights([1e-9, 0.5, -2e-8]), [0.0, 0.5, -2e-8])


def test_evenness_examples():
    assert evenness([1, 1, 1, 1]) == 1.0
    assert evenness([0, 0, 0, 2]) == 0.25
    assert evenness([2, 1, 1, 0]) == 0.5
    with pytest.raises(ValueError):
        evenness([0, 0])


@given(w=nonzero_vectors, c=st.floats(1e-3, 1e3), neg=st.booleans(), seed=st.integers(0, 1000))
@settings(max_examples=100, deadline=None)
def test_evenness_range_scale_and_permutation(w, c, neg, seed):
    d = w.size
    e = evenness(w)
    assert 1.0 / d - 1e-12 <= e <= 1.0 + 1e-12
    c = -c if neg else c
    assert evenness(c * w) == pytest.approx(e, rel=1e-12)
    perm = np.random.default_rng(seed).permutation(d)
    assert evenness(w[perm]) == pytest.approx(e, rel=1e-12)
    assert sparsity(w[perm]) == sparsity(w)
    assert sparsity(w) + np.count_nonzero(threshold_weights(w)) / d == pytest.approx(1.0)


def test_roc_auc_examples():
    assert roc_auc([3, 2, 1, 0], [1, 1, -1, -1]) == 1.0
    assert roc_auc([1, 1, 1, 1], [1, -1, 1, -1]) == 0.5
    # pairs (2 vs 1) and (0 vs 1): one win, one loss
    s, y = np.array([2.0, 0, 1]), np.array([1.0, 1, -1])
    assert roc_auc(s, y) == _pairwise_auc(s, y) == 0.5
    with pytest.raises(ValueError):
        roc_auc([1, 2], [1, 1])


def _pairwise_auc(s, y):
    pos, neg = s[y > 0], s[y < 0]
    wins = sum((p > n) + 0.5 * (p == n) for p, n in itertools.product(pos, neg))
    return wins / (pos.size * neg.size)


def test_roc_auc_matches_pair_enumeration(rng):
    for _ in range(100):
        m = int(rng.integers(2, 30))
        s = rng.integers(0, 5, size=m).astype(float)  # many ties
        y = np.where(rng.random(m) < 0.5, 1.0, -1.0)
        y[0], y[1] = 1.0, -1.0
        assert roc_auc(s, y) == pytest.approx(_pairwise_auc(s, y), abs=1e-12)


def test_roc_curve_groups_ties():
    fpr, tpr = roc_curve([1, 1, 0], [1, -1, -1])
    np.testing.assert_allclose(fpr, [0, 0.5, 1])
    np.testing.assert_allclose(tpr, [0, 1, 1])


def test_auc_at_fpr_full_range_equals_auc(rng):
    for _ in range(200):
        m = int(rng.integers(2, 60))
        s = np.round(rng.normal(size=m), 1)
        y = np.where(rng.random(m) < 0.5, 1.0, -1.0)
        y[0], y[1] = 1.0, -1.0
        assert abs(auc_at_fpr(s, y, 1.0) - roc_auc(s, y)) <= 1e-12


def test_auc_at_fpr_perfect_and_chance(rng):
    assert auc_at_fpr([3, 2, 1, 0], [1, 1, -1, -1]) == 1.0
    # chance ROC is tpr = fpr: area fpr_cap^2 / 2, normalized fpr_cap / 2
    m = 100_000
    s = rng.random(m)
    y = np.where(rng.random(m) < 0.5, 1.0, -1.0)
    assert auc_at_fpr(s, y, 0.1) == pytest.approx(0.05, abs=0.01)
    assert auc_at_fpr(s, y, 0.1, normalize=False) == pytest.approx(0.005, abs=0.001)


def test_auc_at_fpr_interpolates_at_cap():
    # negatives at scores 3 and 0, positive at 1: roc (0,0) -> (0.5,0) -> (0.5,1) -> (1,1)
    assert auc_at_fpr([3, 1, 0], [-1, 1, -1], 0.5) == 0.0
    assert auc_at_fpr([3, 1, 0], [-1, 1, -1], 0.75) == pytest.approx(0.25 / 0.75)


def test_security_curve_contract():
    with pytest.raises(ValueError):
        SecurityCurve((0, 0), (1, 1), 0, 1, "x")
    with pytest.raises(ValueError):
        SecurityCurve((0, 1), (1.2, 1), 0, 1, "x")
    with pytest.raises(ValueError):
        SecurityCurve((0, 1), (1,), 0, 1, "x")


def _boolean_problem(rng, d=15, m=60):
    X = (rng.random((m, d)) < 0.4).astype(float)
    y = np.where(np.arange(m) % 2 == 0, 1.0, -1.0)
    X[y > 0, : d // 2] = np.maximum(X[y > 0, : d // 2], (rng.random((m // 2, d // 2)) < 0.5))
    return make_data(X, y)


def test_security_curve_budget_zero_and_monotone(rng, tmp_path):
    data = _boolean_problem(rng)
    model = make_model(rng.normal(size=15) + 0.5, -1.0)
    curve = security_curve(model, data, attack_boolean, AttackSpec(1, "l1", BooleanFlip()),
                           range(0, 8), keep_records=True)
    clean = auc_at_fpr(model.weights @ data.samples.T + model.bias, data.labels)
    assert curve.auc10[0] == clean
    assert all(b <= a + 1e-12 for a, b in zip(curve.auc10, curve.auc10[1:]))
    assert curve.S == sparsity(model.weights) and curve.E == evenness(model.weights)
    n_mal = int((data.labels > 0).sum())
    assert len(curve.records) == 7 * n_mal
    curve.save(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "budget,auc10"
    budgets, aucs = SecurityCurve.read_csv(tmp_path / "c.csv")
    assert budgets == list(curve.budgets) and aucs == list(curve.auc10)
    assert set(__import__("json").loads((tmp_path / "c.json").read_text())) >= {"S", "E", "attack"}


def test_security_curve_rejects_zero_model(rng):
    data = _boolean_problem(rng)
    with pytest.raises(ValueError):
        security_curve(make_model(np.zeros(15)), data, attack_boolean,
                       AttackSpec(1, "l1", BooleanFlip()), [0, 1])
