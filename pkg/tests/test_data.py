import numpy as np
import pytest

from ssdsim.data import (AugmentConfig, augment_pair, dirichlet_partition,
                         generate_gaussian_mixture, load_binary_dataset,
                         load_csv_dataset, save_binary_dataset,
                         save_csv_dataset)
from ssdsim.numerics import ParameterError, make_rng


def test_mixture_counts():
    ds = generate_gaussian_mixture(make_rng(0), 3, 10, 4)
    assert ds.n == 30
    assert ds.input_dim == 4
    assert np.array_equal(np.bincount(ds.labels), [10, 10, 10])


def test_mixture_zero_within_std():
    ds = generate_gaussian_mixture(make_rng(1), 2, 5, 3, within_std=0.0)
    for c in range(2):
        feats = ds.features[ds.labels == c]
        assert np.all(feats == feats[0])


def test_mixture_nearest_center_separable():
    ds = generate_gaussian_mixture(make_rng(2), 4, 50, 8,
                                   center_spread=20.0, within_std=0.1)
    centers = np.array([ds.features[ds.labels == c].mean(axis=0) for c in range(4)])
    d2 = ((ds.features[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    pred = np.argmin(d2, axis=1)
    assert np.mean(pred == ds.labels) > 0.99


def test_mixture_deterministic():
    a = generate_gaussian_mixture(make_rng(3), 2, 4, 3)
    b = generate_gaussian_mixture(make_rng(3), 2, 4, 3)
    assert np.array_equal(a.features, b.features)


def test_partition_single_client():
    labels = np.array([0, 0, 1, 1, 2])
    part = dirichlet_partition(make_rng(0), labels, 1, 0.5)
    assert np.array_equal(part.assignments[0], np.arange(5))


def test_partition_is_partition():
    rng = make_rng(4)
    labels = rng.integers(0, 5, size=200)
    part = dirichlet_partition(rng, labels, 7, 0.3)
    pooled = np.concatenate(part.assignments)
    assert pooled.size == 200
    assert np.array_equal(np.sort(pooled), np.arange(200))
    for a in part.assignments:
        assert a.size >= 1


def test_partition_concentration_limit_balanced():
    labels = np.repeat(np.arange(4), 100)
    rel_errs = []
    for seed in range(20):
        part = dirichlet_partition(make_rng(seed), labels, 4, 1000.0)
        for idx in part.assignments:
            hist = np.bincount(labels[idx], minlength=4)
            rel_errs.append(np.max(np.abs(hist / hist.sum() - 0.25)) / 0.25)
    assert np.mean(rel_errs) < 0.10


def test_partition_heterogeneity_entropy():
    labels = np.repeat(np.arange(5), 60)

    def mean_entropy(alpha):
        vals = []
        for seed in range(10):
            part = dirichlet_partition(make_rng(seed), labels, 5, alpha)
            for idx in part.assignments:
                p = np.bincount(labels[idx], minlength=5) / idx.size
                nz = p[p > 0]
                vals.append(-np.sum(nz * np.log(nz)))
        return np.mean(vals)

    assert mean_entropy(0.05) < mean_entropy(100.0)


def test_partition_k_exceeds_n():
    with pytest.raises(ParameterError):
        dirichlet_partition(make_rng(0), np.array([0, 1]), 3, 1.0)


def test_partition_deterministic():
    labels = np.repeat(np.arange(3), 30)
    a = dirichlet_partition(make_rng(9), labels, 4, 0.2)
    b = dirichlet_partition(make_rng(9), labels, 4, 0.2)
    for x, y in zip(a.assignments, b.assignments):
        assert np.array_equal(x, y)


def test_augment_noiseless_identity():
    x = make_rng(0).normal(size=(4, 3))
    v1, v2 = augment_pair(make_rng(1), x, AugmentConfig(0.0, 0.0))
    assert np.array_equal(v1, x)
    assert np.array_equal(v2, x)


def test_augment_noise_statistics():
    x = np.zeros((100, 100))
    v1, _ = augment_pair(make_rng(2), x, AugmentConfig(0.5, 0.0))
    diffs = v1 - x
    assert abs(diffs.mean()) < 0.01
    assert abs(diffs.std() - 0.5) < 0.02


def test_augment_views_differ():
    x = make_rng(3).normal(size=(5, 6))
    v1, v2 = augment_pair(make_rng(4), x, AugmentConfig(0.3, 0.0))
    assert not np.array_equal(v1, v2)


def test_augment_input_untouched():
    x = make_rng(5).normal(size=(5, 6))
    copy = x.copy()
    augment_pair(make_rng(6), x, AugmentConfig(0.3, 0.5))
    assert np.array_equal(x, copy)


def test_csv_roundtrip(tmp_path):
    ds = generate_gaussian_mixture(make_rng(7), 2, 3, 2)
    path = str(tmp_path / "data.csv")
    save_csv_dataset(ds, path)
    loaded = load_csv_dataset(path, "label")
    assert np.array_equal(loaded.labels, ds.labels)
    assert np.max(np.abs(loaded.features - ds.features)) == 0.0


def test_csv_fixture(tmp_path):
    path = tmp_path / "fix.csv"
    path.write_text("a,b,label\n1.0,2.0,0\n3.0,4.0,1\n5.0,6.0,0\n")
    ds = load_csv_dataset(str(path), "label")
    assert ds.features.shape == (3, 2)
    assert np.array_equal(ds.labels, [0, 1, 0])


def test_csv_empty_data_section(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("a,b,label\n")
    with pytest.raises(ValueError):
        load_csv_dataset(str(path), "label")


def test_csv_ragged_row_names_row(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("a,b,label\n1.0,2.0,0\n3.0,1\n")
    with pytest.raises(ValueError, match="row 3"):
        load_csv_dataset(str(path), "label")


def test_csv_missing_file():
    with pytest.raises(IOError):
        load_csv_dataset("/nonexistent/nope.csv", "label")


def test_binary_roundtrip(tmp_path):
    ds = generate_gaussian_mixture(make_rng(8), 3, 4, 5)
    path = str(tmp_path / "data.bin")
    save_binary_dataset(ds, path)
    loaded = load_binary_dataset(path)
    assert np.array_equal(loaded.features, ds.features)
    assert np.array_equal(loaded.labels, ds.labels)
