import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macfl.core import corruption_budget, count_incorrect, hausdorff
from macfl.estimators import balanced_kmedians_line, geometric_median
from macfl.robustness import (
    CATALOGUE,
    Corruption,
    adversary_search,
    apply_corruption,
    candidate_pool,
    evaluate_prediction,
    named_instance,
    sweep,
    switch_lemma_check,
)


def test_apply_corruption_examples():
    X = np.array([[0.0], [0.0], [1.0]])
    assert np.array_equal(apply_corruption(X, Corruption((), np.zeros((0, 1)))), X)
    assert apply_corruption(X, Corruption((2,), [[100.0]])).ravel().tolist() == [0, 0, 100]
    with pytest.raises(ValueError):
        apply_corruption(X, Corruption((0, 1), [[5.0], [5.0]]), delta=1 / 3)
    with pytest.raises(IndexError):
        apply_corruption(X, Corruption((3,), [[1.0]]))
    with pytest.raises(ValueError):
        Corruption((1, 1), [[0.0], [0.0]])


def test_candidate_pool_contents():
    X = np.array([[0.0], [0.0], [10.0]])
    pool = candidate_pool(X).ravel()
    assert {0.0, 10.0, -5.0, 15.0, 5 + 1e7, 5 - 1e7}.issubset(set(pool.tolist()))
    assert len(candidate_pool(np.zeros((3, 2)) + [[0, 0], [1, 0], [0, 1]], 3)) == 3 + 9 + 8


def test_adversary_spec_example():
    rep = adversary_search([0, 0, 10], 1 / 3, target="1med", objective="distance")
    assert rep.rho_observed == 10
    assert rep.rho_theory == 20
    assert rep.rho_observed <= rep.rho_theory


def test_adversary_zero_budget():
    rep = adversary_search([0, 3, 4], 0.0)
    assert rep.rho_observed == 0 and rep.gamma_observed == 1
    assert rep.witness.indices == ()


def test_adversary_rejects_oversized_exhaustive():
    with pytest.raises(ValueError):
        adversary_search(np.arange(13.0), 0.1)
    with pytest.raises(ValueError):
        adversary_search(np.arange(10.0), 0.4)


def test_witness_reproduces_report():
    X = np.array([0.0, 1, 2, 7, 8])
    rep = adversary_search(X, 0.2, objective="approx")
    Xp = apply_corruption(X, rep.witness, 0.2)
    again = evaluate_prediction(X, Xp, 0.2, "1med")
    assert again.gamma_observed == pytest.approx(rep.gamma_observed)
    assert again.rho_observed == pytest.approx(hausdorff([[np.median(X)]], [[np.sort(Xp[:, 0])[2]]]))


def test_randomized_mode_is_seeded():
    X = np.random.default_rng(0).normal(size=(30, 1))
    a = adversary_search(X, 0.1, mode="randomized", budget=200, seed=5)
    b = adversary_search(X, 0.1, mode="randomized", budget=200, seed=5)
    assert a.to_json() == b.to_json()
    full = sweep(X[:10], 0.2)
    part = adversary_search(X[:10], 0.2, mode="randomized", budget=300, seed=1)
    assert part.rho_observed <= full.report.rho_observed + 1e-12


def test_report_json_fields():
    rep = adversary_search([0, 0, 10], 1 / 3)
    obj = json.loads(json.dumps(rep.to_json()))
    assert set(obj) == {"rho_observed", "rho_theory", "gamma_observed", "gamma_theory", "witness_indices", "witness_points"}


def test_cor_tight_gamma():
    inst = named_instance("cor-tight", n=100, delta=0.1)
    rep = evaluate_prediction(inst.X, inst.Xp, 0.1, "1med")
    assert rep.gamma_observed == pytest.approx(59 / 41, abs=1e-12)
    assert rep.gamma_theory == pytest.approx(1.5)


def test_cor_tight_against_adversary_on_small_n():
    # n=10, delta=0.2: 4 zeros and 6 ones; the adversary finds the same move
    inst = named_instance("cor-tight", n=10, delta=0.2)
    assert inst.X.ravel().tolist() == [0] * 4 + [1] * 6
    rep = adversary_search(inst.X, 0.2, objective="approx")
    assert rep.gamma_observed >= inst.expected["gamma_1median"] - 1e-12


def test_switch_lemma_examples():
    X = np.random.default_rng(2).normal(size=(8, 2))
    g = geometric_median(X).point
    chk = switch_lemma_check(g, g, X, 0.25)
    assert chk.rho == 0 and chk.holds and chk.lhs == pytest.approx(chk.rhs)
    inst = named_instance("cor-tight", n=100, delta=0.1)
    chk = switch_lemma_check([1.0], [0.0], inst.X, 0.1)
    assert (chk.lhs, chk.rhs, chk.rho) == (59, 61, 1) and chk.holds


@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=4, max_size=8), st.sampled_from([0.1, 0.2, 0.3]))
@settings(max_examples=30, deadline=None)
def test_switch_lemma_on_every_corruption(xs, delta):
    X = np.array(xs)
    s = sweep(X, delta, grid_points=7)
    rhs = s.base_cost + 2 * corruption_budget(len(X), delta) * s.rho
    assert np.all(s.cost <= rhs + 1e-9 * max(1.0, s.base_cost))
    assert np.all(s.rho <= s.report.rho_theory + 1e-6)


def test_balanced_target_bounds():
    rng = np.random.default_rng(4)
    X = np.concatenate([rng.normal(0, 1, 25), rng.normal(20, 1, 15)])
    rep = adversary_search(
        X, 0.025, target="bal2med", mode="randomized", budget=300, params={"b": 10}, grid_points=5
    )
    assert rep.gamma_theory == pytest.approx(3.0)
    assert rep.gamma_observed <= 3.0 + 1e-6
    assert rep.rho_observed <= rep.rho_theory + 1e-6


def test_catalogue_instances():
    inst = named_instance("cor-tight", n=100, delta=0.1)
    assert (inst.X == 0).sum() == 41 and (inst.X == 1).sum() == 59
    assert (inst.Xp == 0).sum() == 51 and (inst.Xp == 1).sum() == 49
    assert named_instance("propmech-tight", n=10).X.ravel().tolist() == [0] * 5 + [1] * 4 + [2]
    inst = named_instance("bcc-5-3", n=800, eps=0.01, M=1e6)
    x = inst.X.ravel()
    assert len(x) == 801 and (x == 0).sum() == 400 and (x == -0.51).sum() == 200
    assert (x == -1).sum() == 200 and (x == 1e6).sum() == 1
    assert inst.Xp.ravel()[-1] == -1
    inst = named_instance("minbb-tight", n=4, d=2)
    assert inst.X.tolist() == [[-1, -1]] * 3 + [[1, 1]]
    for key in CATALOGUE:
        inst = named_instance(key)
        assert count_incorrect(inst.X, inst.Xp, 0) <= max(corruption_budget(len(inst.X), inst.delta), 0)
    with pytest.raises(ValueError):
        named_instance("nope")
    with pytest.raises(ValueError):
        named_instance("bcc-5-3", n=802)


def test_example_1_1_breaks_two_medians():
    inst = named_instance("example-1-1", n=10, M=1e6)
    G = balanced_kmedians_line(inst.X, 2, 0).centers
    H = balanced_kmedians_line(inst.Xp, 2, 0).centers
    assert hausdorff(G, H) >= 1e6 / 2
