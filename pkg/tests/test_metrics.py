import numpy as np
import pytest

from ssdsim.metrics import (EmbeddingSet, ProbeConfig, effective_rank,
                            linear_probe, mean_inter_client_dot,
                            uniformity_decomposition, uniformity_metric)
from ssdsim.numerics import ParameterError, l2_normalize_rows, make_rng


def unit_rows(rng, n, d):
    return l2_normalize_rows(rng.normal(size=(n, d)))


def test_uniformity_metric_antipodal():
    z = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert abs(uniformity_metric(z, 2.0) - 8.0) < 1e-12


def test_uniformity_metric_identical():
    z = np.array([[1.0, 0.0], [1.0, 0.0]])
    assert abs(uniformity_metric(z, 2.0)) < 1e-12


def test_uniformity_metric_matches_loop():
    rng = make_rng(0)
    z = unit_rows(rng, 12, 5)
    pots = [np.exp(-2.0 * np.sum((z[i] - z[j]) ** 2))
            for i in range(12) for j in range(i + 1, 12)]
    assert abs(uniformity_metric(z, 2.0) - (-np.log(np.mean(pots)))) < 1e-10


def test_decomposition_single_client():
    rng = make_rng(1)
    e = EmbeddingSet([0], [unit_rows(rng, 6, 4)])
    global_loss, intra, inter = uniformity_decomposition(e, 2.0)
    assert inter == {}
    assert abs(global_loss - np.log(intra[0])) < 1e-12


def test_decomposition_two_singletons():
    a = np.array([[1.0, 0.0]])
    b = np.array([[0.0, 1.0]])
    global_loss, intra, inter = uniformity_decomposition(EmbeddingSet([0, 1], [a, b]), 2.0)
    assert intra == {}
    assert abs(global_loss - (-4.0)) < 1e-12  # single pair at distance^2 = 2, t=2


def test_decomposition_reconstruction():
    rng = make_rng(2)
    mats = [unit_rows(rng, n, 6) for n in (5, 8, 3)]
    e = EmbeddingSet([0, 1, 2], mats)
    global_loss, _, _ = uniformity_decomposition(e, 2.0)
    pooled = np.vstack(mats)
    direct = -uniformity_metric(pooled, 2.0)
    assert abs(global_loss - direct) < 1e-10


def test_effective_rank_equal_singular_values():
    for k in (1, 2, 5):
        m = np.zeros((8, 8))
        m[:k, :k] = np.eye(k) * 3.0
        assert abs(effective_rank(m) - k) < 1e-9


def test_effective_rank_rank_one():
    m = np.outer([1.0, 2.0, 3.0], [4.0, 5.0])
    assert abs(effective_rank(m) - 1.0) < 1e-9


def test_effective_rank_matches_gram_oracle():
    rng = make_rng(3)
    m = rng.normal(size=(64, 16))
    sigma = np.sqrt(np.maximum(np.sort(np.linalg.eigvalsh(m.T @ m))[::-1], 0.0))
    p = sigma / sigma.sum()
    nz = p[p > 0]
    expected = np.exp(-np.sum(nz * np.log(nz)))
    assert abs(effective_rank(m) - expected) < 1e-6


def test_effective_rank_scale_invariant():
    rng = make_rng(4)
    m = rng.normal(size=(10, 6))
    assert abs(effective_rank(m) - effective_rank(3.7 * m)) < 1e-9


def test_effective_rank_row_permutation_invariant():
    rng = make_rng(5)
    m = rng.normal(size=(10, 6))
    perm = rng.permutation(10)
    assert abs(effective_rank(m) - effective_rank(m[perm])) < 1e-9


def test_effective_rank_zero_matrix():
    with pytest.raises(ParameterError):
        effective_rank(np.zeros((3, 3)))


def test_inter_client_dot_orthogonal():
    e = EmbeddingSet([0, 1], [np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])])
    assert mean_inter_client_dot(e) == 0.0


def test_inter_client_dot_identical():
    v = np.array([[0.6, 0.8]])
    assert abs(mean_inter_client_dot(EmbeddingSet([0, 1], [v, v])) - 1.0) < 1e-12


def test_inter_client_dot_matches_double_loop():
    rng = make_rng(6)
    mats = [unit_rows(rng, n, 4) for n in (3, 4, 2)]
    e = EmbeddingSet([0, 1, 2], mats)
    total, count = 0.0, 0
    for a in range(3):
        for b in range(a + 1, 3):
            for i in range(mats[a].shape[0]):
                for j in range(mats[b].shape[0]):
                    total += mats[a][i] @ mats[b][j]
                    count += 1
    assert abs(mean_inter_client_dot(e) - total / count) < 1e-12


def test_inter_client_dot_needs_two_clients():
    with pytest.raises(ParameterError):
        mean_inter_client_dot(EmbeddingSet([0], [np.ones((2, 2))]))


def test_inter_client_dot_disjoint_masked_supports():
    rng = make_rng(7)
    a = unit_rows(rng, 4, 6)
    b = unit_rows(rng, 4, 6)
    a[:, 3:] = 0.0
    b[:, :3] = 0.0
    e = EmbeddingSet([0, 1], [a, b])
    assert mean_inter_client_dot(e) == 0.0


def test_probe_separable_clusters():
    reps = np.concatenate([np.full((20, 1), -3.0), np.full((20, 1), 3.0)])
    labels = np.concatenate([np.zeros(20, dtype=int), np.ones(20, dtype=int)])
    acc = linear_probe(reps, labels, reps, labels)
    assert acc == 1.0


def test_probe_deterministic():
    rng = make_rng(8)
    reps = rng.normal(size=(30, 4))
    labels = rng.integers(0, 3, size=30)
    a = linear_probe(reps, labels, reps, labels)
    b = linear_probe(reps, labels, reps, labels)
    assert a == b


def test_probe_unseen_class_never_predicted():
    train_reps = np.array([[-1.0], [1.0], [-1.1], [1.1]])
    train_labels = np.array([0, 1, 0, 1])
    test_reps = np.array([[0.0]])
    acc = linear_probe(train_reps, train_labels, test_reps, np.array([2]))
    assert acc == 0.0


def test_probe_training_loss_decreases():
    rng = make_rng(9)
    reps = rng.normal(size=(40, 5))
    labels = rng.integers(0, 2, size=40)
    _, losses = linear_probe(reps, labels, reps, labels,
                             ProbeConfig(epochs=50, lr=0.05, l2=0.0),
                             return_losses=True)
    diffs = np.diff(losses)
    assert np.all(diffs <= 1e-12)


def test_probe_accuracy_bounds():
    rng = make_rng(10)
    reps = rng.normal(size=(30, 3))
    labels = rng.integers(0, 2, size=30)
    acc = linear_probe(reps, labels, rng.normal(size=(10, 3)),
                       rng.integers(0, 2, size=10))
    assert 0.0 <= acc <= 1.0
