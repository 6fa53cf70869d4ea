import numpy as np
import pytest
import scipy.cluster.hierarchy as sch
import scipy.sparse.csgraph as csgraph
from hypothesis import given, settings, strategies as st

from convoctx.clustering import (CondensedEdge, cluster, condense_tree,
                                 core_distances, mst, mutual_reachability,
                                 select_eom, single_linkage)
from convoctx.errors import DataError
from .oracles import reference_cluster, same_partition


def test_core_distances_min_samples_one_is_zero(rng):
    pts = rng.normal(size=(8, 3))
    assert np.array_equal(core_distances(pts, 1), np.zeros(8))


def test_core_distances_hand_case():
    pts = np.array([[0.0], [1.0], [3.0]])
    # min_samples=2 counts the point itself first, so this is the distance to
    # the nearest other point.
    assert np.allclose(core_distances(pts, 2), [1.0, 1.0, 2.0])
    assert np.allclose(core_distances(pts, 3), [3.0, 2.0, 3.0])


def test_mutual_reachability_hand_case():
    pts = np.array([[0.0], [1.0], [3.0]])
    M = mutual_reachability(pts, 2)
    assert M[0, 1] == 1.0            # max(core 1, core 1, dist 1)
    assert M[1, 2] == 2.0            # max(1, 2, 2)
    assert M[0, 2] == 3.0
    assert np.all(np.diag(M) == 0)
    assert np.array_equal(M, M.T)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 8))
def test_mst_total_weight_matches_scipy(seed, n):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, 2))
    D = mutual_reachability(pts, 1)
    edges = mst(D)
    assert len(edges) == n - 1
    ours = sum(w for w, _, _ in edges)
    theirs = csgraph.minimum_spanning_tree(D).sum()
    assert abs(ours - theirs) < 1e-9


def test_single_linkage_heights_match_scipy(rng):
    pts = rng.normal(size=(12, 3))
    D = mutual_reachability(pts, 1)
    Z = single_linkage(mst(D), 12)
    Z_ref = sch.linkage(pts, method="single")
    assert np.allclose(np.sort(Z[:, 2]), np.sort(Z_ref[:, 2]), atol=1e-9)
    assert np.array_equal(np.sort(Z[:, 3]), np.sort(Z_ref[:, 3]))


def test_cluster_1d_worked_example():
    pts = np.array([[1.0], [2.0], [10.0], [11.0]])
    result = cluster(pts, min_cluster_size=2, min_samples=1)
    assert same_partition(result.labels, [0, 0, 1, 1])
    assert result.n_clusters == 2
    assert result.noise_fraction == 0.0


def test_cluster_all_points_one_blob_is_noise():
    # A single cluster candidate is the root, which EOM never selects.
    pts = np.array([[0.0], [0.1], [0.2]])
    result = cluster(pts, min_cluster_size=2)
    assert result.n_clusters <= 1


def test_cluster_input_validation():
    with pytest.raises(DataError):
        cluster(np.zeros((3, 2)), min_cluster_size=1)
    with pytest.raises(DataError):
        cluster(np.array([[np.nan, 0.0]]), min_cluster_size=2)
    with pytest.raises(DataError):
        cluster(np.zeros(3), min_cluster_size=2)


def test_cluster_single_point_is_noise():
    result = cluster(np.zeros((1, 2)), min_cluster_size=2)
    assert result.labels.tolist() == [-1]


def test_cluster_order_invariance(rng):
    pts = np.vstack([rng.normal(size=(15, 2)), rng.normal(size=(15, 2)) + 10.0])
    base = cluster(pts, min_cluster_size=5).labels
    perm = rng.permutation(len(pts))
    permuted = cluster(pts[perm], min_cluster_size=5).labels
    restored = np.empty_like(permuted)
    restored[perm] = permuted
    assert same_partition(base, restored)


def test_cluster_duplicated_dataset_keeps_partition(rng):
    pts = np.vstack([rng.normal(size=(10, 2)), rng.normal(size=(10, 2)) + 8.0])
    base = cluster(pts, min_cluster_size=4).labels
    doubled = cluster(np.vstack([pts, pts]), min_cluster_size=4).labels
    assert same_partition(doubled[:20], doubled[20:])


def test_condense_tree_and_eom_hand_case():
    # Two tight pairs far apart, mcs=2: the root splits into two clusters that
    # both get selected.
    pts = np.array([[1.0], [2.0], [10.0], [11.0]])
    D = mutual_reachability(pts, 1)
    Z = single_linkage(mst(D), 4)
    edges = condense_tree(Z, 4, 2)
    clusters = [e for e in edges if not e.is_point]
    assert len(clusters) == 2
    assert all(e.parent == 4 for e in clusters)
    assert all(e.lam == 1.0 / 8.0 for e in clusters)  # split at distance 8
    selected, stability = select_eom(edges, root=4)
    assert selected == {5, 6}
    # Each child holds 2 points born at 1/8 departing at 1/1.
    assert np.isclose(stability[5], 2 * (1.0 - 1.0 / 8.0))


def test_select_eom_prefers_stable_parent():
    # Parent stability 10 vs children totalling 3: keep the parent.
    edges = [
        CondensedEdge(parent=100, child=101, lam=1.0, size=6, is_point=False),
        CondensedEdge(parent=101, child=102, lam=2.0, size=3, is_point=False),
        CondensedEdge(parent=101, child=103, lam=2.0, size=3, is_point=False),
        CondensedEdge(parent=101, child=0, lam=12.0, size=1, is_point=True),
    ]
    for p in range(1, 4):
        edges.append(CondensedEdge(102, p, 2.5, 1, True))
    for p in range(4, 7):
        edges.append(CondensedEdge(103, p, 2.5, 1, True))
    selected, stability = select_eom(edges, root=100)
    assert stability[101] == (12.0 - 1.0) + 2 * (2.0 - 1.0) * 3
    assert stability[102] == stability[103] == 3 * 0.5
    assert selected == {101}


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_cluster_matches_reference_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 30))
    pts = rng.normal(size=(n, 2)) + rng.integers(0, 3, size=(n, 1)) * 6.0
    mcs = int(rng.integers(2, 5))
    ours = cluster(pts, min_cluster_size=mcs).labels
    ref = reference_cluster(pts, mcs)
    assert same_partition(ours, ref)
