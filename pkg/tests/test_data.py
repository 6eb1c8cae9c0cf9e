import gzip

import numpy as np
import pytest

from sparseapt import data


def write_pair(tmp_path, images, labels, gz=False):
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
    data.write_idx(ip, lp, images, labels)
    if gz:
        for p in (ip, lp):
            p.with_suffix(".gz").write_bytes(gzip.compress(p.read_bytes()))
        return ip.with_suffix(".gz"), lp.with_suffix(".gz")
    return ip, lp


def test_load_idx_shapes_and_scaling(tmp_path, rng):
    images = rng.integers(0, 256, size=(10, 28, 28), dtype=np.uint8)
    images[0, 0, 0] = 255
    labels = rng.integers(0, 10, size=10, dtype=np.uint8)
    for gz in (False, True):
        ds = data.load_idx(*write_pair(tmp_path, images, labels, gz))
        assert ds.features.shape == (10, 784)
        assert ds.features[0, 0] == 1.0
        assert ds.labels.tolist() == labels.tolist()


def test_load_idx_rejects_bad_headers(tmp_path, rng):
    images = rng.integers(0, 256, size=(4, 2, 2), dtype=np.uint8)
    ip, lp = write_pair(tmp_path, images, np.zeros(3, dtype=np.uint8))
    with pytest.raises(ValueError, match="count mismatch"):
        data.load_idx(ip, lp)
    ip, lp = write_pair(tmp_path, images, np.zeros(4, dtype=np.uint8))
    raw = bytearray(ip.read_bytes())
    ip.write_bytes(b"\x00\x00\x08\x01" + bytes(raw[4:]))
    with pytest.raises(ValueError, match="magic is 0x00000801"):
        data.load_idx(ip, lp)
    ip.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="magic"):
        data.load_idx(ip, ip)
    ip.write_bytes(bytes(raw[:-1]))
    with pytest.raises(ValueError, match="pixel count"):
        data.load_idx(ip, lp)


def test_split_sizes_and_determinism():
    ds = data.Dataset(np.arange(60000, dtype=float)[:, None], np.zeros(60000, dtype=np.int64))
    tr, va = data.split(ds, 0.1, 0)
    assert (len(tr), len(va)) == (54000, 6000)
    tr2, va2 = data.split(ds, 0.1, 0)
    np.testing.assert_array_equal(va.features, va2.features)
    tr0, va0 = data.split(ds, 0.0, 0)
    assert len(va0) == 0 and len(tr0) == 60000


def test_split_normalization_is_train_only(rng):
    x = rng.normal(3.0, 2.0, size=(500, 4))
    x[:, 3] = 7.0  # constant feature
    ds = data.Dataset(x, rng.integers(0, 3, size=500))
    tr, va = data.split(ds, 0.2, 1)
    np.testing.assert_allclose(tr.features.mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(tr.features[:, :3].var(axis=0), 1.0, atol=1e-6)
    assert tr.normalization.var[3] == 1.0
    # the record is recomputable from the training rows alone
    raw_train = tr.features * np.sqrt(tr.normalization.var) + tr.normalization.mean
    np.testing.assert_allclose(raw_train.mean(axis=0), tr.normalization.mean, rtol=1e-12)
    assert va.normalization is tr.normalization


def test_blobs():
    a = data.synthetic_blobs(2, 50, 3, 10.0, 7)
    b = data.synthetic_blobs(2, 50, 3, 10.0, 7)
    np.testing.assert_array_equal(a.features, b.features)
    assert len(a) == 100 and a.n_classes == 2
    with pytest.raises(ValueError):
        data.synthetic_blobs(2, 0, 3, 1.0, 0)


def test_blobs_are_learnable():
    from sparseapt import nn

    ds = data.synthetic_blobs(2, 100, 4, 10.0, 0)
    spec = nn.NetworkSpec((4, 8, 2))
    p = nn.glorot_init(spec, 0)
    state = nn.AdadeltaState(np.zeros(spec.n_params), np.zeros(spec.n_params))
    for b in data.batches(ds, 20, 0, 0):
        _, g = nn.loss_and_grad(spec, p, b)
        nn.adadelta_step(p.values, g, state)
    for e in range(1, 30):
        for b in data.batches(ds, 20, 0, e):
            _, g = nn.loss_and_grad(spec, p, b)
            nn.adadelta_step(p.values, g, state)
    assert nn.error_rate(spec, p, ds.features, ds.labels) == 0.0


def test_batches():
    ds = data.Dataset(np.arange(10, dtype=float)[:, None], np.arange(10))
    sizes = [len(b) for b in data.batches(ds, 3, 5, 0)]
    assert sizes == [3, 3, 3, 1]
    a = np.concatenate([b.labels for b in data.batches(ds, 3, 5, 0)])
    b = np.concatenate([b.labels for b in data.batches(ds, 3, 5, 0)])
    c = np.concatenate([b.labels for b in data.batches(ds, 3, 5, 1)])
    np.testing.assert_array_equal(a, b)
    assert sorted(a.tolist()) == list(range(10))
    assert a.tolist() != c.tolist()
    with pytest.raises(ValueError):
        next(data.batches(ds, 0, 0, 0))


def test_cache_round_trip(tmp_path, rng):
    ds = data.Dataset(rng.normal(size=(20, 3)), rng.integers(0, 4, size=20))
    tr, _ = data.split(ds, 0.25, 0)
    for d in (ds, tr):
        p = tmp_path / "c.npz"
        data.save_dataset(d, p)
        back = data.load_dataset(p)
        np.testing.assert_array_equal(back.features, d.features)
        np.testing.assert_array_equal(back.labels, d.labels)
        if d.normalization is None:
            assert back.normalization is None
        else:
            np.testing.assert_array_equal(back.normalization.mean, d.normalization.mean)
            np.testing.assert_array_equal(back.normalization.var, d.normalization.var)
