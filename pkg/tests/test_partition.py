import numpy as np
import pytest

from oracles import accuracy as acc_oracle
from dualfair.errors import ConfigError, DegenerateError, ParseError
from dualfair.generators import SyntheticSpec, generate
from dualfair.metrics import Partition
from dualfair.partition import (SimilarityGraph, kmeans, kmeans_details, knn_indices, laplacian, read_partition,
                                similarity_graph, smallest_eigenvectors, spectral_clustering, write_partition)
import scipy.sparse as sp


def test_duplicate_rows_weight_one_and_orthogonal_zero():
    h = np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
    w = similarity_graph(h, 1).weights.toarray()
    assert w[0, 1] == w[1, 0] == 1.0
    h = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 2.0]])
    w = similarity_graph(h, 2).weights.toarray()
    assert w[0, 1] == w[0, 2] == 0.0 and w[1, 2] == 1.0


def test_knn_matches_brute_force(rng):
    h = rng.standard_normal((30, 8))
    u = h / np.linalg.norm(h, axis=1, keepdims=True)
    sims = u @ u.T
    np.fill_diagonal(sims, -np.inf)
    nb = knn_indices(h, 5)
    for i in range(30):
        assert set(nb[i]) == set(np.argsort(-sims[i])[:5])


def test_similarity_graph_properties(rng):
    s = similarity_graph(rng.standard_normal((40, 6)), 4)
    w = s.weights
    assert (w != w.T).nnz == 0 and w.diagonal().sum() == 0
    assert w.data.min() > 0 and w.data.max() <= 1.0
    assert w.getnnz(axis=1).min() >= 4


@pytest.mark.parametrize("k_nn", [0, 10])
def test_bad_k_nn(k_nn):
    with pytest.raises(ConfigError):
        similarity_graph(np.eye(10), k_nn)


def clique_pair(size=6):
    w = np.zeros((2 * size, 2 * size))
    w[:size, :size] = 1
    w[size:, size:] = 1
    np.fill_diagonal(w, 0)
    return SimilarityGraph(sp.csr_matrix(w), 2 * size)


@pytest.mark.parametrize("normalized", [False, True])
def test_two_cliques(normalized):
    p = spectral_clustering(clique_pair(), 2, seed=1, normalized=normalized)
    truth = np.repeat([0, 1], 6)
    assert acc_oracle(truth, p.assignment) == 1.0


def test_k_equals_n_gives_singletons():
    s = clique_pair(3)
    assert np.array_equal(spectral_clustering(s, 6).assignment, np.arange(6))
    with pytest.raises(ConfigError):
        spectral_clustering(s, 7)


def test_sbm_recovered():
    g, comms = generate(SyntheticSpec(model="sbm", node_count=200, group_sizes=(100, 100),
                                      p_in=0.2, p_out=0.01, seed=4), return_communities=True)
    s = SimilarityGraph(g.adjacency.tocsr().astype(float), g.node_count)
    p = spectral_clustering(s, 2, seed=0)
    assert acc_oracle(np.asarray(comms), p.assignment) >= 0.95


def test_zero_eigenvalues_count_components():
    w = sp.block_diag([clique_pair(3).weights, clique_pair(4).weights, sp.csr_matrix(np.ones((2, 2)) - np.eye(2))])
    lap = laplacian(SimilarityGraph(w.tocsr(), w.shape[0]))
    vals, _ = smallest_eigenvectors(lap, 6)
    assert np.sum(vals < 1e-9) == 5 and vals[5] > 1e-3
    assert np.allclose(np.asarray(lap.sum(axis=1)).ravel(), 0, atol=1e-12)


def test_normalized_laplacian_spectrum_bounds(rng):
    s = similarity_graph(rng.standard_normal((50, 4)), 5)
    vals = np.linalg.eigvalsh(laplacian(s, normalized=True).toarray())
    assert vals.min() > -1e-10 and vals.max() < 2 + 1e-10


def test_scaling_invariance(rng):
    h = np.vstack([rng.normal(3, 1, (30, 4)), rng.normal(-3, 1, (30, 4))])
    a = spectral_clustering(similarity_graph(h, 6), 2, seed=2)
    b = spectral_clustering(similarity_graph(7.5 * h, 6), 2, seed=2)
    assert acc_oracle(a.assignment, b.assignment) == 1.0


def test_kmeans_blobs(rng):
    centers = np.array([[0, 0], [10, 0], [0, 10]])
    x = np.vstack([c + rng.standard_normal((40, 2)) for c in centers])
    res = kmeans_details(x, 3, seed=1)
    assert acc_oracle(np.repeat([0, 1, 2], 40), res.partition.assignment) == 1.0
    assert all(a >= b - 1e-9 for a, b in zip(res.history, res.history[1:]))


def test_kmeans_edge_cases(rng):
    same = np.ones((5, 3))
    assert np.all(kmeans(same, 1).assignment == 0)
    with pytest.raises(DegenerateError):
        kmeans(same, 2)
    x = rng.standard_normal((7, 2))
    assert sorted(kmeans(x, 7).assignment) == list(range(7))
    with pytest.raises(ConfigError):
        kmeans(x, 8)


def test_kmeans_deterministic(rng):
    x = rng.standard_normal((60, 3))
    assert np.array_equal(kmeans(x, 4, seed=9).assignment, kmeans(x, 4, seed=9).assignment)


def test_partition_roundtrip(tmp_path):
    p = Partition(np.array([1, 0, 2, 1]))
    path = tmp_path / "p.tsv"
    write_partition(p, path)
    assert np.array_equal(read_partition(path).assignment, p.assignment)
    path.write_text("0\t1\n2\t0\n")
    with pytest.raises(ParseError):
        read_partition(path)
    path.write_text("0\tx\n")
    with pytest.raises(ParseError):
        read_partition(path)
