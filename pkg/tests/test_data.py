import numpy as np
import pytest

from ctvae.data import (
    BlobSpec,
    Dataset,
    MinMaxNormalizer,
    ParseError,
    apply_normalizer,
    fit_normalizer,
    load_csv,
    make_blobs,
    save_csv,
    split,
)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_counts_and_lexicographic_ids(tmp_path):
    p = write(tmp_path, "a,b,label\n1,2,benign\n3,4,attack\n5,6,benign\n")
    d = load_csv(p)
    assert d.n == 3 and d.n_classes == 2 and d.d_input == 2
    assert d.class_names == ("attack", "benign")
    assert d.class_counts.tolist() == [1, 2]


def test_load_integer_labels_sort_numerically(tmp_path):
    p = write(tmp_path, "x,label\n0,10\n1,2\n2,1\n")
    d = load_csv(p)
    assert d.class_names == ("1", "2", "10")
    assert d.labels.tolist() == [2, 1, 0]


def test_load_errors_carry_row(tmp_path):
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, ""))
    with pytest.raises(ParseError) as err:
        load_csv(write(tmp_path, "a,label\n1,x\n2\n", "r.csv"))
    assert err.value.row == 3
    with pytest.raises(ParseError) as err:
        load_csv(write(tmp_path, "a,label\n1,x\nfoo,y\n", "n.csv"))
    assert err.value.row == 3
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "a,b\n1,2\n", "m.csv"), label_column="label")


def test_load_without_header_by_index(tmp_path):
    d = load_csv(write(tmp_path, "0,1,b\n2,3,a\n"), label_column=2, has_header=False)
    assert d.features.tolist() == [[0, 1], [2, 3]]
    assert d.labels.tolist() == [1, 0]


def test_load_115_wide(tmp_path):
    rng = np.random.default_rng(0)
    d = Dataset(rng.random((4, 115)), np.array([0, 1, 0, 1]), ("benign", "mirai"))
    save_csv(d, tmp_path / "wide.csv")
    back = load_csv(tmp_path / "wide.csv")
    assert back.d_input == 115
    assert np.array_equal(back.features, d.features)
    assert back.class_names == d.class_names


def test_minmax_rules():
    train = Dataset(np.array([[0.0, 7.0], [5.0, 7.0], [10.0, 7.0]]), np.zeros(3))
    stats = fit_normalizer(train)
    out = apply_normalizer(stats, train).features
    np.testing.assert_allclose(out[:, 0], [0, 0.5, 1])
    np.testing.assert_allclose(out[:, 1], [0, 0, 0])
    test = Dataset(np.array([[20.0, 8.0]]), np.zeros(1))
    assert apply_normalizer(stats, test).features[0, 0] == 2.0  # no clipping


def test_minmax_train_range_property(rng):
    X = rng.normal(size=(50, 4)) * [1, 10, 100, 0]
    out = MinMaxNormalizer().fit_transform(X)
    assert np.allclose(out[:, :3].min(axis=0), 0) and np.allclose(out[:, :3].max(axis=0), 1)
    assert not out[:, 3].any()


def test_split_sizes_partition_and_determinism():
    d = Dataset(np.arange(100.0)[:, None], np.repeat([0, 1], 50))
    tr, te = split(d, 0.7, seed=3)
    assert tr.n == 70 and te.n == 30
    assert abs(tr.class_counts[0] - tr.class_counts[1]) <= 1
    both = np.sort(np.concatenate([tr.features[:, 0], te.features[:, 0]]))
    assert np.array_equal(both, np.arange(100.0))
    tr2, _ = split(d, 0.7, seed=3)
    assert np.array_equal(tr.features, tr2.features)


def test_split_rejects_singleton_class_and_bad_fraction():
    d = Dataset(np.arange(5.0)[:, None], np.array([0, 0, 0, 0, 1]))
    with pytest.raises(ValueError):
        split(d)
    with pytest.raises(ValueError):
        split(d, 1.0, stratified=False)


def test_blobs_shapes_and_reproducible():
    spec = BlobSpec()
    tr, te = make_blobs(spec)
    assert tr.features.shape == (3500, 10) and te.features.shape == (1500, 10)
    assert tr.class_counts.tolist() == [1167, 1167, 1166]
    tr2, te2 = make_blobs(spec)
    assert np.array_equal(tr.features, tr2.features) and np.array_equal(te.labels, te2.labels)


def test_blobs_tiny_std_nearest_centroid():
    tr, _ = make_blobs(BlobSpec(std=1e-6, n_train=300, n_test=30))
    centers = np.stack([tr.features[tr.labels == c].mean(axis=0) for c in range(3)])
    pred = np.argmin(((tr.features[:, None] - centers[None]) ** 2).sum(-1), axis=1)
    assert np.array_equal(pred, tr.labels)


def test_blobspec_validation():
    for bad in (dict(std=0), dict(n_classes=1), dict(center_box=(1, 0))):
        with pytest.raises(ValueError):
            BlobSpec(**bad)


def test_dataset_is_read_only():
    d = Dataset(np.zeros((2, 2)), np.array([0, 1]))
    with pytest.raises(ValueError):
        d.features[0, 0] = 1.0
