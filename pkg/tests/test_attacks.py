import itertools
import json

import numpy as np
import pytest

from linsec import (
    AttackSpec,
    BooleanFlip,
    Box,
    FeatureCaps,
    IncrementOnly,
    attack_boolean,
    attack_bruteforce,
    attack_dense_l2,
    attack_increment_only,
    attack_pgd,
    attack_sparse_l1,
)
from linsec.attacks import NO_DESCENT, InstanceTooLarge, campaign_records, run_campaign

from conftest import make_model

# --- documented examples ------------------------------------------------------


def test_dense_l2_closed_form_example():
    r = attack_dense_l2(make_model([3, 4]), np.array([1.0, 1.0]), AttackSpec(1, "l2"))
    np.testing.assert_allclose(r.x_star, [0.4, 0.2], atol=1e-15)
    assert r.g_before == 7.0 and r.g_after == pytest.approx(2.0, abs=1e-12)
    pgd = attack_pgd(make_model([3, 4]), np.array([1.0, 1.0]), AttackSpec(1, "l2"))
    np.testing.assert_allclose(pgd.x_star, r.x_star, atol=1e-6)


def test_dense_l2_vanishing_budget():
    x0 = np.array([1.0, 1.0])
    r = attack_dense_l2(make_model([3, 4]), x0, AttackSpec(1e-12, "l2"))
    np.testing.assert_allclose(r.x_star, x0, atol=1e-11)


def test_dense_l2_box_example_against_grid():
    model = make_model([1, 0])
    spec = AttackSpec(2, "l2", Box([-1, -1], [np.inf, np.inf]))
    r = attack_dense_l2(model, np.zeros(2), spec)
    np.testing.assert_allclose(r.x_star, [-1, 0], atol=1e-12)
    assert r.g_before - r.g_after == pytest.approx(1.0)
    # dense grid over the disk ∩ box
    g = np.arange(-1, 2.0001, 0.01)
    P = np.array(list(itertools.product(g, g)))
    P = P[np.hypot(P[:, 0], P[:, 1]) <= 2 + 1e-12]
    assert r.g_after <= (P @ model.weights).min() + 1e-12


def test_zero_weights_flagged():
    x0 = np.array([1.0, 2.0])
    zero = make_model([0, 0])
    for attack, spec in [
        (attack_dense_l2, AttackSpec(1, "l2")),
        (attack_sparse_l1, AttackSpec(1, "l1")),
        (attack_pgd, AttackSpec(1, "l2")),
    ]:
        r = attack_dense_l2(zero, x0, spec) if attack is attack_dense_l2 else attack(zero, x0, spec)
        np.testing.assert_array_equal(r.x_star, x0)
        assert r.note == NO_DESCENT


def test_sparse_l1_box_example():
    model = make_model([0.5, -0.3, 0.2])
    r = attack_sparse_l1(model, np.array([1.0, 0, 1]), AttackSpec(1, "l1", Box.uniform(3, 0, 1)))
    np.testing.assert_array_equal(r.x_star, [0, 0, 1])
    assert r.g_before == pytest.approx(0.7) and r.g_after == pytest.approx(0.2)


def test_sparse_l1_unbounded_and_saturation():
    model = make_model([0.5, -2.0, 0.2])
    r = attack_sparse_l1(model, np.zeros(3), AttackSpec(1, "l1"))
    np.testing.assert_array_equal(r.x_star, [0, 1, 0])
    assert r.g_before - r.g_after == pytest.approx(2.0)  # d_max·‖w‖∞
    r = attack_sparse_l1(model, np.zeros(3), AttackSpec(100, "l1", Box.uniform(3, -1, 1)))
    np.testing.assert_array_equal(r.x_star, [-1, 1, -1])


def test_sparse_ties_broken_by_lower_index():
    r = attack_sparse_l1(make_model([1.0, 1.0]), np.zeros(2), AttackSpec(1, "l1"))
    np.testing.assert_array_equal(r.x_star, [-1, 0])


def test_boolean_examples():
    model = make_model([0.5, -0.3, 0.2])
    x0 = np.array([1.0, 0, 1])
    r = attack_boolean(model, x0, AttackSpec(1, "l1", BooleanFlip()))
    np.testing.assert_array_equal(r.x_star, [0, 0, 1])
    assert r.g_after == pytest.approx(0.2)
    r = attack_boolean(model, x0, AttackSpec(5, "l1", BooleanFlip()))
    np.testing.assert_array_equal(r.x_star, [0, 1, 0])  # every beneficial flip
    r = attack_boolean(make_model([-1.0, 1.0]), np.array([0.0, 1]), AttackSpec(3, "l1", BooleanFlip()))
    np.testing.assert_array_equal(r.x_star, [1, 0])
    r = attack_boolean(make_model([1.0, -1.0]), np.array([0.0, 1]), AttackSpec(3, "l1", BooleanFlip()))
    np.testing.assert_array_equal(r.x_star, [0, 1])  # nothing helps


def test_boolean_rejects_non_boolean():
    with pytest.raises(ValueError):
        attack_boolean(make_model([1.0]), np.array([0.5]), AttackSpec(1, "l1", BooleanFlip()))


def test_increment_only_examples():
    caps = FeatureCaps([5.0, 4.0])
    spec = AttackSpec(2, "l1", IncrementOnly(caps))
    r = attack_increment_only(make_model([0.5, -0.3]), np.array([1.0, 0.0]), spec)
    np.testing.assert_allclose(r.x_star, [1, 2])
    assert r.g_before - r.g_after == pytest.approx(0.6)
    r = attack_increment_only(make_model([0.5, 0.3]), np.array([1.0, 0.0]), spec)
    np.testing.assert_array_equal(r.x_star, [1, 0])
    big = AttackSpec(1e6, "l1", IncrementOnly(caps))
    np.testing.assert_array_equal(attack_increment_only(make_model([0.5, -0.3]), np.array([1.0, 0]), big).x_star, [1, 4])


def test_increment_only_integral_and_errors():
    caps = FeatureCaps([5.0, 4.0])
    r = attack_increment_only(make_model([-0.5, -0.3]), np.array([0.0, 0.0]),
                              AttackSpec(2.7, "l1", IncrementOnly(caps, integral=True)))
    np.testing.assert_array_equal(r.x_star, [2, 0])
    with pytest.raises(ValueError):
        attack_increment_only(make_model([-1.0, 1.0]), np.array([6.0, 0]),
                              AttackSpec(1, "l1", IncrementOnly(caps)))


def test_pgd_zero_steps_returns_x0():
    x0 = np.array([1.0, 2.0])
    r = attack_pgd(make_model([1, 1]), x0, AttackSpec(1, "l2"), steps=0)
    np.testing.assert_array_equal(r.x_star, x0)


def test_bruteforce_limits_and_zero_budget():
    with pytest.raises(InstanceTooLarge):
        attack_bruteforce(make_model(np.ones(13)), np.zeros(13), AttackSpec(1, "l1", BooleanFlip()))
    with pytest.raises(InstanceTooLarge):
        attack_bruteforce(make_model(np.ones(9)), np.zeros(9), AttackSpec(1, "l1"))
    with pytest.raises(InstanceTooLarge):
        attack_bruteforce(make_model(np.ones(4)), np.zeros(4), AttackSpec(1, "l2"))
    x0 = np.array([1.0, 0, 1])
    r = attack_bruteforce(make_model([1, -1, 1]), x0, AttackSpec(0, "l1", BooleanFlip()))
    np.testing.assert_array_equal(r.x_star, x0)


def test_spec_validation():
    with pytest.raises(ValueError):
        AttackSpec(-1)
    with pytest.raises(ValueError):
        AttackSpec(np.inf)
    with pytest.raises(ValueError):
        Box([1.0], [0.0])


# --- oracle equivalence --------------------------------------------------------


def _random_model(rng, d):
    w = rng.normal(size=d)
    w[rng.random(d) < 0.15] = 0.0
    return make_model(w, rng.normal())


def test_boolean_matches_exhaustive(rng):
    for _ in range(200):
        d = int(rng.integers(1, 13))
        model = _random_model(rng, d)
        x0 = (rng.random(d) < 0.5).astype(float)
        spec = AttackSpec(int(rng.integers(0, 4)), "l1", BooleanFlip())
        assert attack_boolean(model, x0, spec).g_after == attack_bruteforce(model, x0, spec).g_after


def test_boolean_full_budget_reaches_hypercube_minimum(rng):
    for _ in range(20):
        d = int(rng.integers(1, 11))
        model = _random_model(rng, d)
        x0 = (rng.random(d) < 0.5).astype(float)
        cube = np.array(list(itertools.product((0.0, 1.0), repeat=d)))
        r = attack_boolean(model, x0, AttackSpec(d, "l1", BooleanFlip()))
        assert r.g_after == pytest.approx((cube @ model.weights).min() + model.bias, abs=1e-12)


def _random_box(rng, d):
    lo = -rng.exponential(1.0, size=d)
    hi = rng.exponential(1.0, size=d)
    lo[rng.random(d) < 0.2] = -np.inf
    hi[rng.random(d) < 0.2] = np.inf
    return lo, hi


def test_sparse_l1_matches_vertex_enumeration(rng):
    for _ in range(200):
        d = int(rng.integers(1, 7))
        model = _random_model(rng, d)
        lo, hi = _random_box(rng, d)
        x0 = np.zeros(d)
        spec = AttackSpec(float(rng.exponential(2.0)), "l1", Box(lo, hi))
        shift = rng.normal(size=d)
        x0 = x0 + shift
        spec = AttackSpec(spec.d_max, "l1", Box(lo + shift, hi + shift))
        a = attack_sparse_l1(model, x0, spec).g_after
        b = attack_bruteforce(model, x0, spec).g_after
        assert abs(a - b) <= 1e-6


def test_increment_only_matches_vertex_enumeration(rng):
    for _ in range(200):
        d = int(rng.integers(1, 7))
        model = _random_model(rng, d)
        caps = FeatureCaps(rng.exponential(2.0, size=d))
        x0 = caps.caps * rng.random(d)
        spec = AttackSpec(float(rng.exponential(2.0)), "l1", IncrementOnly(caps))
        a = attack_increment_only(model, x0, spec).g_after
        b = attack_bruteforce(model, x0, spec).g_after
        assert abs(a - b) <= 1e-6


def test_integral_increments_match_integer_enumeration(rng):
    for _ in range(100):
        d = int(rng.integers(1, 5))
        model = _random_model(rng, d)
        caps = FeatureCaps(rng.integers(0, 5, size=d).astype(float))
        x0 = np.floor(caps.caps * rng.random(d))
        spec = AttackSpec(float(rng.uniform(0, 6)), "l1", IncrementOnly(caps, integral=True))
        a = attack_increment_only(model, x0, spec)
        b = attack_bruteforce(model, x0, spec)
        assert a.g_after == pytest.approx(b.g_after, abs=1e-9)
        assert np.all(a.x_star == np.round(a.x_star))


def test_pgd_l2_matches_closed_form(rng):
    for _ in range(100):
        model = _random_model(rng, 10)
        x0 = rng.normal(size=10)
        spec = AttackSpec(float(rng.exponential(2.0)), "l2")
        assert abs(attack_pgd(model, x0, spec).g_after - attack_dense_l2(model, x0, spec).g_after) <= 1e-4


def test_pgd_l1_box_matches_greedy(rng):
    for _ in range(100):
        d = int(rng.integers(1, 10))
        model = _random_model(rng, d)
        lo, hi = _random_box(rng, d)
        spec = AttackSpec(float(rng.exponential(2.0)), "l1", Box(lo, hi))
        a = attack_pgd(model, np.zeros(d), spec, steps=500).g_after
        b = attack_sparse_l1(model, np.zeros(d), spec).g_after
        assert abs(a - b) <= 1e-4


def test_dense_l2_box_beats_random_feasible_points(rng):
    for _ in range(20):
        d = int(rng.integers(2, 6))
        model = _random_model(rng, d)
        lo, hi = -rng.exponential(0.5, size=d), rng.exponential(0.5, size=d)
        budget = float(rng.exponential(1.0))
        spec = AttackSpec(budget, "l2", Box(lo, hi))
        r = attack_dense_l2(model, np.zeros(d), spec)
        Z = lo + rng.random((1000, d)) * (hi - lo)
        n = np.linalg.norm(Z, axis=1)
        Z = Z * np.minimum(1.0, budget / np.maximum(n, 1e-300))[:, None]
        assert r.g_after <= (Z @ model.weights + model.bias).min() + 1e-12
        pgd = attack_pgd(model, np.zeros(d), spec)
        assert abs(pgd.g_after - r.g_after) <= 1e-6


def test_dense_l2_box_matches_grid_in_2d(rng):
    for _ in range(30):
        model = _random_model(rng, 2)
        lo, hi = -rng.uniform(0.1, 1.5, size=2), rng.uniform(0.1, 1.5, size=2)
        spec = AttackSpec(float(rng.uniform(0.2, 2)), "l2", Box(lo, hi))
        r = attack_dense_l2(model, np.zeros(2), spec)
        b = attack_bruteforce(model, np.zeros(2), spec, grid_resolution=spec.d_max / 400)
        assert r.g_after <= b.g_after + 1e-12
        assert b.g_after - r.g_after <= 2 * spec.d_max / 400 * np.abs(model.weights).sum()


# --- invariants ----------------------------------------------------------------


def _feasible(result, x0, spec, tol):
    z = result.x_star - x0
    cost = np.abs(z).sum() if spec.cost.value == "l1" else np.linalg.norm(z)
    assert cost <= spec.d_max + tol
    assert result.cost_used <= spec.d_max + 1e-9
    c = spec.constraints
    if isinstance(c, Box):
        assert np.all(result.x_star >= c.lower) and np.all(result.x_star <= c.upper)
    if isinstance(c, IncrementOnly):
        assert np.all(result.x_star >= x0) and np.all(result.x_star <= c.caps.caps)
    if isinstance(c, BooleanFlip):
        assert set(np.unique(result.x_star)) <= {0.0, 1.0}


def _cases(rng, d):
    lo, hi = _random_box(rng, d)
    caps = FeatureCaps(rng.exponential(2.0, size=d))
    return [
        (attack_dense_l2, AttackSpec(1, "l2"), np.zeros(d)),
        (attack_dense_l2, AttackSpec(1, "l2", Box(lo, hi)), np.zeros(d)),
        (attack_sparse_l1, AttackSpec(1, "l1", Box(lo, hi)), np.zeros(d)),
        (attack_boolean, AttackSpec(1, "l1", BooleanFlip()), (rng.random(d) < 0.5).astype(float)),
        (attack_increment_only, AttackSpec(1, "l1", IncrementOnly(caps)), caps.caps * rng.random(d)),
        (attack_pgd, AttackSpec(1, "l2", Box(lo, hi)), np.zeros(d)),
        (attack_pgd, AttackSpec(1, "l1", Box(lo, hi)), np.zeros(d)),
    ]


def test_feasibility_and_budget_monotonicity(rng):
    budgets = [0.0, 0.3, 1.0, 2.0, 3.5, 8.0]
    for _ in range(40):
        d = int(rng.integers(1, 9))
        model = _random_model(rng, d)
        for attack, spec, x0 in _cases(rng, d):
            prev = np.inf
            for b in budgets:
                s = spec.with_budget(b)
                r = attack(model, x0, s)
                _feasible(r, x0, s, 1e-9)
                assert r.g_after <= r.g_before + 1e-12
                assert r.g_after <= prev + 1e-9
                prev = r.g_after


def test_unconstrained_drop_is_dual_norm(rng):
    for _ in range(100):
        d = int(rng.integers(1, 20))
        model = _random_model(rng, d)
        if not np.any(model.weights):
            continue
        x0 = rng.normal(size=d)
        budget = float(rng.exponential(2.0))
        r2 = attack_dense_l2(model, x0, AttackSpec(budget, "l2"))
        r1 = attack_sparse_l1(model, x0, AttackSpec(budget, "l1"))
        w = model.weights
        assert r2.g_before - r2.g_after == pytest.approx(budget * np.linalg.norm(w), rel=1e-10)
        assert r1.g_before - r1.g_after == pytest.approx(budget * np.abs(w).max(), rel=1e-10)


def test_campaign_records(rng):
    model = _random_model(rng, 5)
    X = (rng.random((6, 5)) < 0.5).astype(float)
    spec = AttackSpec(2, "l1", BooleanFlip())
    serial = run_campaign(model, X, attack_boolean, spec)
    threaded = run_campaign(model, X, attack_boolean, spec, threads=3)
    assert [r.g_after for r in serial] == [r.g_after for r in threaded]
    lines = campaign_records([(2.0, i, r) for i, r in enumerate(serial)]).splitlines()
    rec = json.loads(lines[3])
    assert set(rec) == {"index", "budget", "g_before", "g_after", "cost_used", "evaded"}
    assert rec["index"] == 3 and rec["evaded"] == (rec["g_after"] < 0)
