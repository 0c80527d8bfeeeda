import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gkcoarsen.clustering import KMeansConfig, _assign, kmeans_fit, kmeans_warm_start, kmeans_wcss
from gkcoarsen.coarsening import Partition, lower_level_objective
from gkcoarsen.linalg import ContractError


def brute_force_wcss(z: np.ndarray, k: int = 2) -> float:
    """Minimum WCSS over every assignment with k nonempty clusters."""
    n = z.shape[0]
    best = np.inf
    # fixing point 0 in cluster 0 removes label-permutation duplicates for k=2
    for rest in itertools.product(range(k), repeat=n - 1):
        labels = np.array((0,) + rest)
        if len(set(labels.tolist())) < k:
            continue
        best = min(best, kmeans_wcss(z, labels, k))
    return best


def test_config_validation():
    with pytest.raises(ContractError):
        KMeansConfig(0)
    with pytest.raises(ContractError):
        KMeansConfig(2, n_restarts=0)
    with pytest.raises(ContractError):
        KMeansConfig(2, tol=-1.0)


def test_two_obvious_blobs():
    z = np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [5.0, 5.0], [5.1, 5.0]])
    res = kmeans_fit(z, KMeansConfig(2, seed=3))
    labels = res.partition.assignment
    assert labels[0] == labels[1] == labels[2] != labels[3] == labels[4]
    assert res.wcss == pytest.approx(kmeans_wcss(z, labels))


def test_wcss_equals_lower_level_objective(rng):
    z = rng.normal(size=(30, 4))
    p = Partition(np.arange(30) % 5, 5)
    assert kmeans_wcss(z, p.assignment, 5) == pytest.approx(lower_level_objective(z, p), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 9), st.integers(0, 2**32 - 1))
def test_fit_reaches_brute_force_optimum_small(n, seed):
    z = np.random.default_rng(seed).normal(size=(n, 2))
    res = kmeans_fit(z, KMeansConfig(2, n_restarts=10, seed=seed % 1000))
    # multi-restart Lloyd is a heuristic; it is never below the optimum
    assert res.wcss >= brute_force_wcss(z) - 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 40), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_history_monotone_and_partition_valid(n, k, seed):
    k = min(k, n)
    z = np.random.default_rng(seed).normal(size=(n, 3))
    res = kmeans_fit(z, KMeansConfig(k, n_restarts=2, seed=1))
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))
    assert np.all(res.partition.sizes > 0)
    assert res.wcss == pytest.approx(kmeans_wcss(z, res.partition.assignment, k), rel=1e-12, abs=1e-12)


def test_seeded_determinism(rng):
    z = rng.normal(size=(50, 3))
    a = kmeans_fit(z, KMeansConfig(6, seed=11))
    b = kmeans_fit(z, KMeansConfig(6, seed=11))
    assert a.partition == b.partition and a.wcss == b.wcss


def test_more_restarts_never_worse(rng):
    z = rng.normal(size=(80, 2))
    one = kmeans_fit(z, KMeansConfig(8, n_restarts=1, seed=5))
    many = kmeans_fit(z, KMeansConfig(8, n_restarts=10, seed=5))
    # the first spawned restart is shared, so the best of ten cannot be worse
    assert many.wcss <= one.wcss


def test_k_equals_n_is_identity(rng):
    z = rng.normal(size=(6, 2))
    res = kmeans_fit(z, KMeansConfig(6))
    assert res.partition == Partition.identity(6) and res.wcss == 0.0
    warm = kmeans_warm_start(z, Partition.identity(6), KMeansConfig(6))
    assert warm.partition == Partition.identity(6)


def test_too_many_clusters_rejected(rng):
    with pytest.raises(ContractError):
        kmeans_fit(rng.normal(size=(3, 2)), KMeansConfig(4))


def test_duplicate_points_repair_empty_clusters():
    z = np.zeros((5, 2))
    res = kmeans_fit(z, KMeansConfig(3, n_restarts=2))
    assert np.all(res.partition.sizes > 0)
    assert res.wcss == 0.0


def test_assign_ties_go_to_lowest_index():
    z = np.array([[0.0], [2.0], [4.0], [6.0]])
    c = np.array([[1.0], [3.0], [6.0]])
    # node 1 is equidistant from centroids 0 and 1
    np.testing.assert_array_equal(_assign(z, c), [0, 0, 1, 2])


def test_assign_repairs_empty_clusters_from_farthest_points():
    z = np.array([[0.0], [1.0], [2.0]])
    c = np.array([[1.0], [1.0], [3.0]])
    # all three land in cluster 0; cluster 1 takes node 0 (first of the farthest),
    # cluster 2 then takes node 2
    np.testing.assert_array_equal(_assign(z, c), [1, 0, 2])


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 40), st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_warm_start_never_worse_than_previous_partition(n, k, seed):
    rng = np.random.default_rng(seed)
    k = min(k, n)
    z = rng.normal(size=(n, 3))
    prev = Partition(rng.permutation(np.arange(n) % k), k)
    res = kmeans_warm_start(z, prev, KMeansConfig(k))
    assert res.wcss <= kmeans_wcss(z, prev.assignment, k) + 1e-12


def test_warm_start_fixed_point(rng):
    z = rng.normal(size=(40, 2))
    cfg = KMeansConfig(4, seed=2)
    res = kmeans_fit(z, cfg)
    again = kmeans_warm_start(z, res.partition, cfg)
    assert again.partition == res.partition


def test_warm_start_checks_shapes(rng):
    z = rng.normal(size=(6, 2))
    with pytest.raises(ContractError):
        kmeans_warm_start(z, Partition([0, 1, 0, 1, 0], 2), KMeansConfig(2))
    with pytest.raises(ContractError):
        kmeans_warm_start(z, Partition([0, 1, 0, 1, 0, 1], 2), KMeansConfig(3))
