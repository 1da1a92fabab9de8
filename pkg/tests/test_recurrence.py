import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.distance import cdist

from shdr.embedding import EmbeddingParams, embed
from shdr.errors import ArgumentRange, DegenerateGeometry, NoUsablePairs, ShapeMismatch
from shdr.recurrence import (
    INF,
    ConsensusAccumulator,
    ConsensusGraph,
    DistanceMatrix,
    binarize,
    consensus,
    default_knn,
    load_triplets,
    pairwise_distances,
    save_triplets,
    sparsify_knn,
)


def _dm(d01, sigma=1.0):
    return DistanceMatrix(np.array([d01]), 2, sigma)


def test_distance_examples():
    assert pairwise_distances(np.array([[0.0, 0.0], [3.0, 4.0]]))[0, 1] == 5.0
    assert pairwise_distances(np.array([[0.0, 0.0], [0.0, 0.0]]))[0, 1] == 0.0
    d = pairwise_distances(np.array([[1.0, np.nan], [2.0, 7.0]]))
    assert d[0, 1] == pytest.approx(math.sqrt(2.0))


def test_no_shared_coordinates():
    with pytest.raises(NoUsablePairs):
        pairwise_distances(np.array([[1.0, np.nan], [np.nan, 7.0]]))


def test_unusable_pair_is_nan():
    d = pairwise_distances(np.array([[1.0, np.nan], [np.nan, 7.0], [1.0, 1.0]]))
    assert math.isnan(d[0, 1])
    assert d.has_unusable
    assert d[0, 2] == pytest.approx(0.0)


def test_distances_match_brute_force(rng):
    X = rng.normal(size=(40, 3))
    np.testing.assert_allclose(pairwise_distances(X).d, cdist(X, X), atol=1e-12)


def test_masked_distances_match_brute_force(rng):
    X = rng.normal(size=(30, 4))
    X[rng.random(X.shape) < 0.2] = np.nan
    d = pairwise_distances(X)
    for i in range(30):
        for j in range(i + 1, 30):
            ok = ~np.isnan(X[i]) & ~np.isnan(X[j])
            if ok.any():
                ref = np.sqrt(np.sum((X[i, ok] - X[j, ok]) ** 2) * 4 / ok.sum())
                assert d[i, j] == pytest.approx(ref, rel=1e-12)
            else:
                assert math.isnan(d[i, j])


def test_sigma_is_population_std(rng):
    X = rng.normal(size=(25, 2))
    d = pairwise_distances(X)
    assert d.sigma == pytest.approx(np.std(d.condensed))


def test_consensus_examples():
    g = consensus([_dm(0.0)], p=3.0)
    assert g.dense()[0, 1] == 1.0
    pair = [_dm(0.0), _dm(math.log(2))]
    assert consensus(pair, p=1.0).dense()[0, 1] == pytest.approx(0.75)
    assert consensus(pair, p=INF).dense()[0, 1] == 1.0


@given(st.integers(1, 5), st.sampled_from([1.0, 2.0, 7.5, INF]), st.integers(0, 10_000))
def test_consensus_properties(n_mats, p, seed):
    rng = np.random.default_rng(seed)
    mats = [pairwise_distances(rng.normal(size=(12, 2))) for _ in range(n_mats)]
    A = consensus(mats, p).dense()
    np.testing.assert_array_equal(A, A.T)
    np.testing.assert_array_equal(np.diag(A), 1.0)
    assert np.all((A > 0) & (A <= 1))


def test_consensus_matches_formula(rng):
    mats = [pairwise_distances(rng.normal(size=(15, 3))) for _ in range(4)]
    p = 2.5
    ref = np.mean([np.exp(-p * m.d / m.sigma) for m in mats], axis=0) ** (1 / p)
    np.testing.assert_allclose(consensus(mats, p).dense(), ref, rtol=1e-12)


def test_high_p_approaches_min_rule(rng):
    mats = [pairwise_distances(rng.normal(size=(30, 2))) for _ in range(5)]
    hi = consensus(mats, 64.0).dense()
    lim = consensus(mats, INF).dense()
    # the gap is bounded by A_inf * (1 - N^(-1/p))
    assert np.abs(hi - lim).max() <= 1 - 5 ** (-1 / 64) + 1e-12


def test_unusable_pairs_average_over_available(rng):
    a = DistanceMatrix(np.array([np.nan, 1.0, 2.0]), 3, 1.0)
    b = DistanceMatrix(np.array([1.0, 1.0, 2.0]), 3, 1.0)
    A = consensus([a, b], 1.0).dense()
    assert A[0, 1] == pytest.approx(math.exp(-1.0))
    assert A[0, 2] == pytest.approx(math.exp(-1.0))


def test_accumulator_is_order_free(rng):
    mats = [pairwise_distances(rng.normal(size=(20, 2))) for _ in range(6)]
    fwd = consensus(mats, 3.0).dense()
    rev = consensus(mats[::-1], 3.0).dense()
    np.testing.assert_allclose(fwd, rev, rtol=1e-14)


def test_degenerate_sigma():
    with pytest.raises(DegenerateGeometry):
        ConsensusAccumulator(2, 1.0).add(_dm(1.0, sigma=0.0))


def test_consensus_shape_mismatch(rng):
    with pytest.raises(ShapeMismatch):
        consensus([pairwise_distances(rng.normal(size=(5, 1))),
                   pairwise_distances(rng.normal(size=(6, 1)))])


def test_bad_p():
    with pytest.raises(ArgumentRange):
        ConsensusAccumulator(3, 0.5)


def test_knn_full_graph_unchanged(rng):
    X = rng.random((4, 4))
    A = (X + X.T) / 2
    np.fill_diagonal(A, 1.0)
    g = sparsify_knn(ConsensusGraph(A), 3)
    np.testing.assert_array_equal(g.dense(), A)


def test_knn_star():
    A = np.full((4, 4), 0.01)
    A[0, 1:] = A[1:, 0] = [0.9, 0.8, 0.7]
    np.fill_diagonal(A, 1.0)
    W = sparsify_knn(ConsensusGraph(A), 1).dense()
    off = W - np.diag(np.diag(W))
    assert set(zip(*np.nonzero(off))) == {(0, 1), (1, 0), (0, 2), (2, 0), (0, 3), (3, 0)}


def test_knn_too_large():
    with pytest.raises(ArgumentRange):
        sparsify_knn(ConsensusGraph(np.eye(4)), 4)


@given(st.integers(0, 10_000), st.integers(1, 6))
def test_knn_properties(seed, k):
    rng = np.random.default_rng(seed)
    X = rng.random((15, 15))
    A = (X + X.T) / 2
    np.fill_diagonal(A, 1.0)
    W = sparsify_knn(ConsensusGraph(A), k).csr()
    assert (W != W.T).nnz == 0
    off = W - sp.diags(W.diagonal())
    deg = np.diff(sp.csr_matrix(off).indptr)
    assert deg.min() >= k
    # kept entries carry the original weights
    r, c = off.nonzero()
    np.testing.assert_array_equal(np.asarray(off[r, c]).ravel(), A[r, c])


def test_knn_theiler_excludes_band(rng):
    X = rng.random((30, 30))
    A = (X + X.T) / 2
    np.fill_diagonal(A, 1.0)
    W = sparsify_knn(ConsensusGraph(A), 3, theiler=4).csr().tocoo()
    off = W.row != W.col
    assert np.all(np.abs(W.row[off] - W.col[off]) > 4)


def test_default_knn():
    assert default_knn(3000) == math.ceil(4 * math.log(3000))


def test_binarize_examples():
    A = np.array([[1.0, 1.0, math.exp(-2)], [1.0, 1.0, math.exp(-1)],
                  [math.exp(-2), math.exp(-1), 1.0]])
    B = binarize(ConsensusGraph(A, INF), 1.0)
    assert B[0, 1] and B[1, 2] and not B[0, 2]
    assert not B.diagonal().any()


def test_binarize_requires_inf():
    with pytest.raises(ArgumentRange):
        binarize(ConsensusGraph(np.eye(2), 1.0), 1.0)


def test_triplet_round_trip(tmp_path, rng):
    x = rng.normal(size=200)
    g = consensus([pairwise_distances(embed(x, EmbeddingParams(2, 1)))])
    g = sparsify_knn(g, 5)
    save_triplets(g, tmp_path / "g.txt")
    back = load_triplets(tmp_path / "g.txt", n=g.n)
    assert abs(back.csr() - g.csr()).max() == 0
