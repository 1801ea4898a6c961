import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macfl.core import induced_partition, kmed_cost
from macfl.estimators import (
    BalancedSolverConfig,
    Infeasible,
    balanced_kmedians_line,
    bcc,
    bcccost,
    best_second_facility,
    big_cluster,
    coordinatewise_median,
    geometric_median,
    geometric_median_batch,
    grid_refine_median,
    kmedians_bruteforce,
    mad,
    median_1d,
    solve_balanced_line,
)
from macfl.robustness import named_instance

values = st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=12)


def test_median_1d_examples():
    assert median_1d([0, 0, 10]) == 0
    assert median_1d([1, 2, 3, 4]) == 2
    assert median_1d([7]) == 7
    with pytest.raises(ValueError):
        median_1d([])


@given(values)
@settings(max_examples=80, deadline=None)
def test_median_1d_minimizes_absolute_deviation(v):
    v = np.array(v)
    m = median_1d(v)
    grid = np.linspace(v.min() - 1, v.max() + 1, 401)
    best = np.abs(v[None, :] - grid[:, None]).sum(axis=1).min()
    assert np.abs(v - m).sum() <= best + 1e-9


def test_coordinatewise_median_examples():
    assert coordinatewise_median([[0, 0], [1, 1]]).tolist() == [0, 0]
    assert coordinatewise_median([[0, 5], [5, 0], [2, 2]]).tolist() == [2, 2]
    assert coordinatewise_median([[3, 4]]).tolist() == [3, 4]


def test_geometric_median_examples():
    res = geometric_median([[2.0, 3.0]] * 4)
    assert res.point.tolist() == [2.0, 3.0] and res.iterations == 0
    res = geometric_median([[1, 0], [-1, 0], [0, 1], [0, -1]])
    assert np.allclose(res.point, 0, atol=1e-9)
    X = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 3.0]])
    res = geometric_median(X)
    assert res.converged and res.residual <= 1e-9
    assert np.allclose(res.point, grid_refine_median(X), atol=1e-4)
    assert res.objective == pytest.approx(kmed_cost(X, res.point[None]), rel=1e-9)


def test_geometric_median_dense_grid_oracle():
    # plain grid over [-1,5]x[-1,4], coarse then 1e-4 around the best node
    X = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 3.0]])
    f = lambda P: np.linalg.norm(P[:, None, :] - X[None], axis=2).sum(axis=1)
    gx, gy = np.meshgrid(np.arange(-1, 5, 1e-2), np.arange(-1, 4, 1e-2), indexing="ij")
    P = np.column_stack([gx.ravel(), gy.ravel()])
    c = P[np.argmin(f(P))]
    gx, gy = np.meshgrid(np.arange(c[0] - 0.02, c[0] + 0.02, 1e-4), np.arange(c[1] - 0.02, c[1] + 0.02, 1e-4), indexing="ij")
    P = np.column_stack([gx.ravel(), gy.ravel()])
    best = P[np.argmin(f(P))]
    assert np.allclose(geometric_median(X).point, best, atol=1e-4)


def test_geometric_median_at_a_data_point():
    X = np.array([[-1.0, -1.0]] * 3 + [[1.0, 1.0]])
    assert geometric_median(X).point.tolist() == [-1.0, -1.0]


def test_geometric_median_line_is_lower_median():
    assert geometric_median([0, 1, 5, 9]).point.tolist() == [1.0]


def test_geometric_median_flags_nonconvergence():
    rng = np.random.default_rng(3)
    res = geometric_median(rng.normal(size=(30, 2)), max_iter=1)
    assert not res.converged and res.residual > 1e-9


@given(st.lists(st.tuples(st.floats(-20, 20), st.floats(-20, 20)), min_size=1, max_size=9))
@settings(max_examples=60, deadline=None)
def test_geometric_median_beats_data_points_and_cwmed(pts):
    X = np.array(pts)
    res = geometric_median(X)
    f = lambda y: np.linalg.norm(X - y, axis=1).sum()
    scale = max(1.0, f(coordinatewise_median(X)))
    assert res.objective <= min(f(x) for x in X) + 1e-9 * scale
    assert res.objective <= f(coordinatewise_median(X)) + 1e-9 * scale
    assert res.objective <= f(grid_refine_median(X)) * (1 + 1e-7) + 1e-12


def test_batch_matches_single():
    rng = np.random.default_rng(1)
    P = rng.normal(size=(50, 7, 2))
    P[::5, 0] = 1e6
    pts, ok = geometric_median_batch(P)
    assert ok.all()
    for i in range(0, 50, 7):
        assert np.allclose(pts[i], geometric_median(P[i]).point, atol=1e-8)


def test_mad_examples():
    assert mad([[1.5, 2.0]] * 3) == 0
    assert mad([0, 0, 10]) == pytest.approx(10 / 3)
    assert mad([0, 1]) == 0.5


def test_balanced_line_examples():
    sol = balanced_kmedians_line([0] * 5 + [1] * 5, 2, 0.5)
    assert sol.centers.ravel().tolist() == [0, 1] and sol.cost == 0
    X = [0] * 5 + [1] * 4 + [1e6]
    sol = balanced_kmedians_line(X, 2, 0.0)
    assert 1e6 in sol.centers.ravel()
    sol = balanced_kmedians_line([0, 1, 2, 9, 10, 11], 2, 1 / 3)
    assert sol.centers.ravel().tolist() == [1, 10] and sol.cost == 4


def test_balanced_line_enumeration_oracle():
    # {0,1,2,9,10,11} split after i points: left/right lower medians and costs
    X = np.array([0, 1, 2, 9, 10, 11.0])
    costs = {}
    for i in range(2, 5):  # beta=1/3 needs >= 2 points per side
        L, R = X[:i], X[i:]
        costs[i] = np.abs(L - median_1d(L)).sum() + np.abs(R - median_1d(R)).sum()
    assert min(costs.values()) == 4 == balanced_kmedians_line(X, 2, 1 / 3).cost


def test_balanced_line_infeasible():
    with pytest.raises(Infeasible):
        balanced_kmedians_line([0, 1, 2], 2, 0.5)
    with pytest.raises(ValueError):
        BalancedSolverConfig(k=3, beta=0.4)
    with pytest.raises(ValueError):
        balanced_kmedians_line([[0, 1]], 1, 0)


def test_balanced_line_fallback_to_cheapest_split():
    # a far outlier: every split with >= 2 points per side fails inducedness
    # (checked by hand for left sizes 2..5)
    X = [-100.0, -7, -4, -2, -2, -1, 0]
    with pytest.raises(Infeasible):
        balanced_kmedians_line(X, 2, 0.25)
    sol = balanced_kmedians_line(X, 2, 0.25, require_induced=False)
    assert sol.centers.ravel().tolist() == [-100.0, -2.0]
    assert sol.sizes == (1, 6)


def test_balanced_line_three_centers():
    X = [0, 0, 5, 5, 10, 10]
    sol = solve_balanced_line(X, BalancedSolverConfig(3, 1 / 3))
    assert sol.centers.ravel().tolist() == [0, 5, 10] and sol.cost == 0


@given(st.lists(st.integers(-6, 6), min_size=2, max_size=12), st.sampled_from([0.0, 0.1, 0.25]))
@settings(max_examples=80, deadline=None)
def test_balanced_line_centers_are_cluster_medians(xs, beta):
    X = np.array(xs, float)
    try:
        sol = balanced_kmedians_line(X, 2, beta)
    except Infeasible:
        return
    for j, idx in enumerate(sol.clusters()):
        assert sol.centers[j, 0] == median_1d(X[idx])
    assert min(sol.sizes) >= np.ceil(beta * len(X) - 1e-9)


@given(st.lists(st.floats(-30, 30, allow_nan=False), min_size=2, max_size=12))
@settings(max_examples=80, deadline=None)
def test_balanced_line_matches_bruteforce(xs):
    X = np.array(xs)
    assert balanced_kmedians_line(X, 2, 0.0).cost == pytest.approx(kmedians_bruteforce(X, 2).cost, abs=1e-9)


@given(st.lists(st.integers(-5, 5), min_size=4, max_size=10), st.sampled_from([0.2, 0.3]))
@settings(max_examples=60, deadline=None)
def test_bruteforce_never_worse_than_line_when_balanced(xs, beta):
    X = np.array(xs, float)
    try:
        line = balanced_kmedians_line(X, 2, beta)
    except Infeasible:
        return
    assert kmedians_bruteforce(X, 2, beta).cost <= line.cost + 1e-9


def test_bruteforce_examples():
    sol = kmedians_bruteforce([0, 1, 3], 1)
    assert sol.centers.ravel().tolist() == [1] and sol.cost == 3
    assert kmedians_bruteforce([0, 0, 1, 1], 2).cost == 0
    X = [0, 1, 2, 9, 10, 11]
    assert kmedians_bruteforce(X, 2).cost == balanced_kmedians_line(X, 2, 0).cost
    with pytest.raises(ValueError):
        kmedians_bruteforce(np.arange(2000.0), 3, max_candidates=1000)


def test_bcc_examples():
    assert bcc([0] * 6 + [10] * 4, 2, 0.1).tolist() == [0]
    assert bcc([0] * 5 + [10] * 5, 2, 0.1).tolist() == [0]
    inst = named_instance("bcc-5-3", n=800, eps=0.01, M=1e6)
    sol = balanced_kmedians_line(inst.Xp, 2, 45 * inst.delta)
    assert sol.centers.ravel().tolist() == [-1.0, 0.0]
    assert np.count_nonzero(np.abs(inst.Xp[:, 0] + 1) <= np.abs(inst.Xp[:, 0])) == 401
    assert bcc(inst.Xp, 46, inst.delta).tolist() == [-1.0]


def test_bcc_rejects_large_beta():
    with pytest.raises(ValueError):
        bcc([0, 1, 2], 11, 0.05)


@given(st.lists(st.integers(-8, 8), min_size=4, max_size=14))
@settings(max_examples=60, deadline=None)
def test_bcc_returns_an_inner_center(xs):
    X = np.array(xs, float)
    sol = balanced_kmedians_line(X, 2, 0.1, require_induced=False)
    assert bcc(X, 2, 0.1)[0] in sol.centers.ravel()


def test_big_cluster_and_bcccost():
    inst = named_instance("bcc-5-3", n=800, eps=0.01, M=1e6)
    bc = big_cluster(inst.X)
    assert len(bc) == 800 and 800 not in bc
    assert bcccost(inst.X, 0.0) == pytest.approx(400 * 0.51 * 0 + 200 * 0.51 + 200 * 1)
    assert bcccost(inst.X, -1.0) == pytest.approx(400 + 200 * 0.49)
    # equal sizes: the cluster holding the first point
    assert big_cluster([5, 5, 0, 0]).tolist() == [0, 1]


def test_best_second_facility_examples():
    X = np.array([3.0, 5, 14])
    costs = [kmed_cost(X, [0, t]) for t in X]
    assert costs == [13, 11, 8]
    assert best_second_facility(X, 0).tolist() == [14]
    X = [0] * 5 + [1] * 4 + [2]
    t = best_second_facility(X, 0)
    assert t.tolist() == [1] and kmed_cost(X, [0, t[0]]) == 1
    assert best_second_facility([2, 2, 2], 2).tolist() == [2]
