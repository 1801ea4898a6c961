import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macfl.core import (
    Dataset,
    FacilitySolution,
    PredictionSet,
    balance_of,
    corruption_budget,
    count_incorrect,
    distance,
    hausdorff,
    induced_partition,
    is_center_induced,
    is_mac,
    kmed_cost,
)

coords = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


def point_sets(dim=2, min_size=1, max_size=6):
    return st.lists(st.tuples(*[coords] * dim), min_size=min_size, max_size=max_size).map(np.array)


def test_distance_examples():
    assert distance([0], [0]) == 0
    assert distance([0, 0], [3, 4]) == 5
    assert distance([1, 1], [-1, -1]) == pytest.approx(2 * math.sqrt(2))


def test_distance_rejects_dimension_mismatch():
    with pytest.raises(ValueError):
        distance([0, 0], [1])


def test_non_finite_points_rejected():
    with pytest.raises(ValueError):
        Dataset([[0.0, np.nan]])
    with pytest.raises(ValueError):
        Dataset([])


def test_kmed_cost_examples():
    assert kmed_cost([0, 1, 3], [1]) == 3
    X = np.random.default_rng(0).normal(size=(7, 2))
    assert kmed_cost(X, X) == 0
    assert kmed_cost([0] * 5 + [1, 1, 2], [0, 1]) == 1


def test_kmed_cost_needs_centers():
    with pytest.raises(ValueError):
        kmed_cost([0, 1], [])


def test_hausdorff_examples():
    U = [[0.0], [5.0]]
    assert hausdorff(U, U) == 0
    assert hausdorff([0], [0, 5]) == 5
    assert hausdorff([0, 10], [1, 8]) == 2


def test_induced_partition_examples():
    sol = induced_partition([0, 1], [0, 1])
    assert sol.labels.tolist() == [0, 1] and sol.cost == 0
    assert induced_partition([0.5], [0, 1], "lowest_center_index").labels.tolist() == [0]
    sol = induced_partition([0, 0, 1, 1], [0, 1])
    assert sol.sizes == (2, 2) and balance_of(sol) == 0.5


def test_balance_seeking_splits_ties():
    sol = induced_partition([0.5] * 4, [0, 1], "balance_seeking")
    assert sol.sizes == (2, 2)
    # three centers: the flow assignment lifts the smallest cluster
    X = [[0.0], [0.0], [1.0], [1.0], [1.0], [1.0]]
    sol = induced_partition(X, [[0.0], [1.0], [1.0]], "balance_seeking")
    assert sorted(sol.sizes) == [2, 2, 2]
    assert is_center_induced(X, sol)


def test_balance_of_examples():
    def sol(sizes):
        labels = np.repeat(np.arange(len(sizes)), sizes)
        return FacilitySolution(np.zeros((len(sizes), 1)), labels, 0.0)

    assert balance_of(sol([5, 5])) == 0.5
    assert balance_of(sol([9, 1])) == 0.1
    assert balance_of(sol([4, 3, 3])) == 0.3


def test_count_incorrect_examples():
    X = np.arange(3.0)
    assert count_incorrect(X, X, 0.0) == 0
    assert count_incorrect([0, 0, 0], [0, 0, 100], 0) == 1
    assert count_incorrect([0, 1, 2], [0.05, 0.9, 7], 0.1) == 1
    with pytest.raises(ValueError):
        count_incorrect([0, 1], [0, 1, 2], 0)


def test_mac_budget():
    assert corruption_budget(10, 0.3) == 3  # 0.3*10 is 3.0000000000000004
    assert corruption_budget(3, 1 / 3) == 1
    assert is_mac([0, 0, 0], [0, 0, 9], 0, 1 / 3)
    assert not is_mac([0, 0, 0], [0, 9, 9], 0, 1 / 3)


def test_dataset_json_roundtrip(tmp_path):
    ds = Dataset([[0.0, 1.0], [2.0, 3.0]])
    assert ds.to_json() == {"dim": 2, "points": [[0.0, 1.0], [2.0, 3.0]]}
    path = tmp_path / "x.json"
    path.write_text('{"dim": 2, "points": [[0, 1], [2, 3]]}')
    assert np.array_equal(Dataset.load(path).points, ds.points)
    with pytest.raises(ValueError):
        Dataset.from_json({"dim": 3, "points": [[0, 1]]})
    assert not ds.points.flags.writeable


def test_prediction_set_validation():
    p = PredictionSet([[0.0]], epsilon=0.1, delta=0.2)
    q = PredictionSet.from_json(p.to_json())
    assert (q.epsilon, q.delta) == (0.1, 0.2) and np.array_equal(q.points, p.points)
    with pytest.raises(ValueError):
        PredictionSet([[0.0]], delta=0.5)
    with pytest.raises(ValueError):
        PredictionSet([[0.0]], epsilon=-1)
    with pytest.raises(ValueError):
        p.check_against([[0.0], [1.0]])


@given(point_sets(), point_sets(), point_sets(max_size=3))
@settings(max_examples=60, deadline=None)
def test_kmed_cost_monotone_in_centers(X, F, extra):
    assert kmed_cost(X, np.vstack([F, extra])) <= kmed_cost(X, F) + 1e-12


@given(point_sets(), point_sets(), point_sets())
@settings(max_examples=60, deadline=None)
def test_hausdorff_is_a_metric(U, V, W):
    assert hausdorff(U, V) == pytest.approx(hausdorff(V, U))
    assert hausdorff(U, W) <= hausdorff(U, V) + hausdorff(V, W) + 1e-9
    assert hausdorff(U, U) == 0
    assert hausdorff(U, np.vstack([U, U])) == 0


@given(point_sets(min_size=1, max_size=10), point_sets(min_size=1, max_size=4), st.sampled_from(["lowest_center_index", "balance_seeking"]))
@settings(max_examples=60, deadline=None)
def test_induced_partition_is_center_induced(X, F, rule):
    sol = induced_partition(X, F, rule)
    D = np.linalg.norm(X[:, None] - F[None], axis=2)
    own = D[np.arange(len(X)), sol.labels]
    assert np.all(own <= D.min(axis=1) + 1e-9 * max(1, np.ptp(np.vstack([X, F]))))
    assert sol.cost == pytest.approx(kmed_cost(X, F), rel=1e-9, abs=1e-12)


@given(point_sets(min_size=1, max_size=8), point_sets(min_size=1, max_size=8), st.floats(0, 50), st.floats(0, 50))
@settings(max_examples=60, deadline=None)
def test_count_incorrect_monotone_in_eps(X, Y, e1, e2):
    Y = np.resize(Y, X.shape)
    lo, hi = sorted([e1, e2])
    assert count_incorrect(X, Y, hi) <= count_incorrect(X, Y, lo)
