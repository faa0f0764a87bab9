import numpy as np
import pytest

from dsfnet.baselines import LogisticRegression, zscore_apply, zscore_fit
from dsfnet.harness import balanced_accuracy
from dsfnet.synth import (Dataset, Recording, SynthConfig, generate_dataset,
                          load_dataset, mixing_matrix, save_dataset,
                          split_dataset)

TINY = SynthConfig(n_channels=3, n_times=128, n_recordings=8,
                   windows_per_recording=3)


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(n_channels=1)
    with pytest.raises(ValueError):
        SynthConfig(n_times=64)


def test_mixing_matrix_properties():
    A = mixing_matrix(SynthConfig())
    assert A.shape == (6, 3)
    np.testing.assert_allclose(np.linalg.norm(A, axis=0), 1.0, rtol=1e-12)
    assert np.linalg.matrix_rank(A) == 3
    # Fixed by the mixing seed, independent of the dataset seed.
    np.testing.assert_array_equal(A, mixing_matrix(SynthConfig()))


def test_generate_is_deterministic():
    a = generate_dataset(TINY, seed=5)
    b = generate_dataset(TINY, seed=5)
    c = generate_dataset(TINY, seed=6)
    for ra, rb in zip(a.recordings, b.recordings):
        np.testing.assert_array_equal(ra.windows, rb.windows)
    assert not np.array_equal(a.recordings[0].windows, c.recordings[0].windows)


def test_shapes_and_labels():
    ds = generate_dataset(TINY, seed=0)
    assert len(ds.recordings) == 8
    for rec in ds.recordings:
        assert rec.windows.shape == (3, 3, 128)
        assert rec.label == rec.id % 2
    labels = [r.label for r in ds.recordings]
    assert labels.count(0) == labels.count(1) == 4


def test_amplitude_scale_is_tens_of_microvolts():
    ds = generate_dataset(SynthConfig(n_recordings=4), seed=1)
    stds = np.concatenate([r.windows.std(axis=2).ravel()
                           for r in ds.recordings])
    assert 3.0 < np.median(stds) < 50.0


def test_split_is_stratified_and_partitions():
    ds = generate_dataset(SynthConfig(n_recordings=20, windows_per_recording=2),
                          seed=2)
    ds = split_dataset(ds, (0.6, 0.2, 0.2), seed=2)
    tags = {tag: ds.split(tag) for tag in ("train", "valid", "test")}
    assert len(tags["train"]) == 12
    assert len(tags["valid"]) == 4
    assert len(tags["test"]) == 4
    all_ids = [r.id for recs in tags.values() for r in recs]
    assert sorted(all_ids) == list(range(20))
    for recs in tags.values():
        labels = [r.label for r in recs]
        assert labels.count(0) == labels.count(1)


def test_split_validation():
    ds = generate_dataset(TINY, seed=0)
    with pytest.raises(ValueError, match="sum to 1"):
        split_dataset(ds, (0.5, 0.2, 0.2), seed=0)


def test_windows_and_labels():
    ds = split_dataset(generate_dataset(TINY, seed=0), (0.5, 0.25, 0.25), 0)
    X, y = ds.windows_and_labels("train")
    assert X.shape == (4 * 3, 3, 128)
    assert len(y) == len(X)
    with pytest.raises(ValueError, match="empty"):
        Dataset(config=TINY, recordings=ds.recordings).windows_and_labels("train")


def test_save_load_round_trip(tmp_path):
    ds = split_dataset(generate_dataset(TINY, seed=3), (0.5, 0.25, 0.25), 3)
    path = str(tmp_path / "data.bin")
    save_dataset(ds, path)
    loaded = load_dataset(path)
    assert loaded.config.n_channels == 3
    assert loaded.config.n_times == 128
    assert loaded.config.sfreq == 100.0
    assert loaded.splits == ds.splits
    for ra, rb in zip(ds.recordings, loaded.recordings):
        assert (ra.id, ra.label) == (rb.id, rb.label)
        np.testing.assert_array_equal(ra.windows, rb.windows)


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"XXXX" + b"\x00" * 32)
    with pytest.raises(ValueError, match="bad magic"):
        load_dataset(str(path))


def bandpower_features(X, sfreq, bands=((8.0, 12.0), (18.0, 22.0))):
    spec = np.abs(np.fft.rfft(X, axis=-1)) ** 2
    freqs = np.fft.rfftfreq(X.shape[-1], d=1.0 / sfreq)
    feats = []
    for lo, hi in bands:
        sel = (freqs >= lo) & (freqs <= hi)
        feats.append(np.log(spec[..., sel].sum(axis=-1)))
    return np.concatenate(feats, axis=-1)


def test_classes_are_linearly_separable_from_bandpower():
    # Oracle separability: a plain logistic regression on per-channel
    # narrow-band log power must discriminate the two classes.
    cfg = SynthConfig(n_recordings=30, windows_per_recording=6)
    ds = split_dataset(generate_dataset(cfg, seed=7), (0.6, 0.2, 0.2), 7)
    X_tr, y_tr = ds.windows_and_labels("train")
    X_te, y_te = ds.windows_and_labels("test")
    f_tr = bandpower_features(X_tr, cfg.sfreq)
    f_te = bandpower_features(X_te, cfg.sfreq)
    mean, std = zscore_fit(f_tr)
    clf = LogisticRegression(f_tr.shape[1], 2, seed=0, n_steps=300)
    clf.fit(zscore_apply(f_tr, mean, std), y_tr, np.ones(2))
    preds = clf.predict(zscore_apply(f_te, mean, std))
    assert balanced_accuracy(preds, y_te) >= 0.9
