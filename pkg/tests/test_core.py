import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from otflow.core import ScenePair, knn, pairwise_sq_dist, seeded_rng

coords = st.floats(-50, 50, allow_nan=False, width=64)


def clouds(min_n=1, max_n=12):
    return st.integers(min_n, max_n).flatmap(
        lambda n: arrays(np.float64, (n, 3), elements=coords))


def brute_knn(cloud, queries, m):
    out = []
    for q in queries:
        d = [(sum((q[k] - c[k]) ** 2 for k in range(3)), j) for j, c in enumerate(cloud)]
        out.append([j for _, j in sorted(d)[:m]])
    return np.array(out)


def test_knn_self_is_nearest():
    cloud = np.array([[0, 0, 0], [1, 0, 0], [5, 0, 0]], dtype=float)
    assert knn(cloud, cloud, 1).tolist() == [[0], [1], [2]]


def test_knn_distance_order():
    cloud = np.array([[0, 0, 0], [2, 0, 0]], dtype=float)
    assert knn(cloud, np.array([[0.9, 0, 0]]), 2).tolist() == [[0, 1]]


def test_knn_matches_exhaustive_sort(rng):
    cloud = rng.uniform(0, 10, (50, 3))
    np.testing.assert_array_equal(knn(cloud, cloud, 5), brute_knn(cloud, cloud, 5))


def test_knn_ties_go_to_lower_index():
    cloud = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0]], dtype=float)
    assert knn(cloud, np.zeros((1, 3)), 3).tolist() == [[0, 1, 2]]


@pytest.mark.parametrize("m", [0, 4])
def test_knn_rejects_bad_m(m):
    with pytest.raises(ValueError):
        knn(np.zeros((3, 3)), np.zeros((1, 3)), m)


def test_knn_chunking_does_not_change_result(rng):
    cloud = rng.uniform(0, 10, (300, 3))
    queries = rng.uniform(0, 10, (600, 3))
    full = knn(cloud, queries, 4)
    np.testing.assert_array_equal(full[550:], knn(cloud, queries[550:], 4))


@given(st.integers(0, 2**32 - 1))
def test_knn_permutation_equivariant(seed):
    r = np.random.default_rng(seed)
    cloud = r.uniform(0, 10, (20, 3))
    perm = r.permutation(20)
    base = knn(cloud, cloud, 4)
    moved = knn(cloud[perm], cloud[perm], 4)
    # relabel back to original indices and compare neighbour sets
    for i in range(20):
        assert set(perm[moved[i]]) == set(base[perm[i]])


def test_sq_dist_trivial():
    assert pairwise_sq_dist([[0, 0, 0]], [[0, 0, 0]]).tolist() == [[0.0]]
    assert pairwise_sq_dist([[0, 0, 0]], [[3, 4, 0]]).tolist() == [[25.0]]


def test_sq_dist_matches_scalar_recompute(rng):
    p = rng.normal(size=(8, 3))
    q = rng.normal(size=(8, 3))
    D = pairwise_sq_dist(p, q)
    for i in range(8):
        for j in range(8):
            ref = math.fsum((float(p[i, k]) - float(q[j, k])) ** 2 for k in range(3))
            assert D[i, j] == pytest.approx(ref, rel=1e-14, abs=1e-15)


@given(clouds(), clouds())
def test_sq_dist_transpose_exact(p, q):
    np.testing.assert_array_equal(pairwise_sq_dist(p, q).T, pairwise_sq_dist(q, p))


@given(clouds())
def test_sq_dist_self_symmetric_zero_diagonal(p):
    D = pairwise_sq_dist(p, p)
    np.testing.assert_array_equal(D, D.T)
    assert np.all(np.diag(D) == 0)


@given(clouds(2, 10))
def test_pure_functions_are_bitwise_repeatable(p):
    np.testing.assert_array_equal(pairwise_sq_dist(p, p), pairwise_sq_dist(p.copy(), p))
    np.testing.assert_array_equal(knn(p, p, 2), knn(p.copy(), p.copy(), 2))


def test_rng_determinism():
    assert seeded_rng(0).random(10).tolist() == seeded_rng(0).random(10).tolist()
    assert seeded_rng(0).random() != seeded_rng(1).random()


def test_rng_reference_stream_seed_42():
    # recorded when the generator was fixed to PCG64
    ints = seeded_rng(42).integers(0, 2**63, size=5).tolist()
    assert ints == [7138484576005690180, 4047939128787533792, 7919168045412322066,
                    6432084778622665798, 868632717012091125]
    floats = [float.hex(x) for x in seeded_rng(42).random(3)]
    assert floats == ["0x1.8c43f79a2db24p-1", "0x1.c16959869e47ep-2",
                      "0x1.b79a2584ddb42p-1"]


def test_rng_accepts_negative_and_wide_seeds():
    seeded_rng(-1).random()
    seeded_rng(2**64 - 1).random()


def test_scene_pair_validation():
    p = np.zeros((3, 3))
    ScenePair(p, p, p, np.ones(3, bool), [2, 0, 1])
    with pytest.raises(ValueError):
        ScenePair(p, p, p, np.ones(3, bool), [0, 0, 1])
    with pytest.raises(ValueError):
        ScenePair(p, np.zeros((2, 3)), p, np.ones(3, bool))
    with pytest.raises(ValueError):
        ScenePair(p, p, p, np.ones(2, bool))


def test_scene_pair_arrays_are_read_only():
    p = np.zeros((2, 3))
    pair = ScenePair(p, p, p, np.ones(2, bool))
    with pytest.raises(ValueError):
        pair.source[0, 0] = 1.0
