"""Deterministic synthetic multichannel dataset generator.

Two oscillatory sources (10 Hz and 20 Hz) plus a distractor are mixed
into C sensor channels by a fixed full-rank matrix; the class label
controls which source is boosted. Spatial structure therefore carries the
discriminative signal, and amplitudes sit in the tens-of-microvolts range
so that the 20-50 uV corruption regime is genuinely destructive.
"""

import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .seeding import rng_for

MAGIC = b"DSFD"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class SynthConfig:
    n_channels: int = 6
    n_times: int = 600
    sfreq: float = 100.0
    n_recordings: int = 60
    windows_per_recording: int = 20
    n_classes: int = 2
    mixing_seed: int = 12345
    class_freqs: tuple[float, float] = (10.0, 20.0)
    distractor_freq: float = 5.0
    base_amplitude_uv: float = 10.0
    boost_factor: float = 2.0  # amplitude boost of the class-preferred source
    background_std_uv: float = 4.0
    sensor_noise_std_uv: float = 2.0

    def __post_init__(self) -> None:
        if self.n_channels < 2:
            raise ValueError("need at least 2 channels")
        if self.n_times < 128:
            raise ValueError("need at least 128 samples per window")


@dataclass
class Recording:
    id: int
    label: int
    windows: NDArray  # (n_windows, C, T)


@dataclass
class Dataset:
    config: SynthConfig
    recordings: list[Recording]
    splits: dict[int, str] = field(default_factory=dict)  # id -> tag

    def split(self, tag: str) -> list[Recording]:
        return [r for r in self.recordings if self.splits.get(r.id) == tag]

    def windows_and_labels(self, tag: str) -> tuple[NDArray, NDArray]:
        recs = self.split(tag)
        if not recs:
            raise ValueError(f"split {tag!r} is empty")
        X = np.concatenate([r.windows for r in recs])
        y = np.concatenate([np.full(len(r.windows), r.label) for r in recs])
        return X, y


def mixing_matrix(cfg: SynthConfig) -> NDArray:
    """Fixed C x 3 full-rank mixing matrix with unit-norm columns."""
    rng = np.random.default_rng(cfg.mixing_seed)
    while True:
        A = rng.uniform(-1.0, 1.0, size=(cfg.n_channels, 3))
        if np.linalg.matrix_rank(A) == 3:
            return A / np.linalg.norm(A, axis=0, keepdims=True)


def _pink_noise(shape: tuple[int, int], rng: np.random.Generator,
                std: float) -> NDArray:
    """1/f-shaped background noise, scaled to the requested std per row."""
    C, T = shape
    white = rng.normal(size=(C, T))
    spec = np.fft.rfft(white, axis=1)
    freqs = np.fft.rfftfreq(T)
    weights = np.ones_like(freqs)
    weights[1:] = 1.0 / np.sqrt(freqs[1:])
    weights[0] = 0.0
    shaped = np.fft.irfft(spec * weights, n=T, axis=1)
    shaped /= shaped.std(axis=1, keepdims=True)
    return std * shaped


def _window(cfg: SynthConfig, label: int, A: NDArray,
            rng: np.random.Generator) -> NDArray:
    t = np.arange(cfg.n_times) / cfg.sfreq
    amps = np.full(3, cfg.base_amplitude_uv)
    amps[label] *= cfg.boost_factor
    freqs = (*cfg.class_freqs, cfg.distractor_freq)
    sources = np.stack([
        amp * np.sin(2.0 * np.pi * f * t + rng.uniform(0.0, 2.0 * np.pi))
        for amp, f in zip(amps, freqs)
    ])
    X = A @ sources
    X += _pink_noise((cfg.n_channels, cfg.n_times), rng, cfg.background_std_uv)
    X += rng.normal(0.0, cfg.sensor_noise_std_uv,
                    size=(cfg.n_channels, cfg.n_times))
    return X


def generate_dataset(cfg: SynthConfig, seed: int) -> Dataset:
    """Deterministic dataset: same (cfg, seed) gives bit-identical data."""
    A = mixing_matrix(cfg)
    recordings = []
    for rec_id in range(cfg.n_recordings):
        label = rec_id % cfg.n_classes
        rng = rng_for(seed, rec_id)
        windows = np.stack([
            _window(cfg, label, A, rng)
            for _ in range(cfg.windows_per_recording)
        ])
        recordings.append(Recording(id=rec_id, label=label, windows=windows))
    return Dataset(config=cfg, recordings=recordings)


def split_dataset(ds: Dataset, fractions: tuple[float, float, float],
                  seed: int) -> Dataset:
    """Label-stratified recording-wise split into train/valid/test."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    rng = np.random.default_rng(seed)
    splits: dict[int, str] = {}
    labels = sorted({r.label for r in ds.recordings})
    for label in labels:
        ids = [r.id for r in ds.recordings if r.label == label]
        ids = list(rng.permutation(ids))
        n = len(ids)
        n_train = int(round(fractions[0] * n))
        n_valid = int(round(fractions[1] * n))
        if fractions[0] > 0 and n_train == 0 or fractions[1] > 0 and n_valid == 0:
            raise ValueError(f"too few recordings of class {label} to split")
        for i, rec_id in enumerate(ids):
            if i < n_train:
                splits[rec_id] = "train"
            elif i < n_train + n_valid:
                splits[rec_id] = "valid"
            else:
                splits[rec_id] = "test"
    return Dataset(config=ds.config, recordings=ds.recordings, splits=splits)


def save_dataset(ds: Dataset, path: str) -> None:
    """Binary dataset file; see load_dataset for the layout."""
    cfg = ds.config
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<II", cfg.n_channels, cfg.n_times))
        f.write(struct.pack("<d", cfg.sfreq))
        f.write(struct.pack("<I", len(ds.recordings)))
        for rec in ds.recordings:
            f.write(struct.pack("<Q", rec.id))
            f.write(struct.pack("<B", rec.label))
            tag = ds.splits.get(rec.id, "")
            f.write(struct.pack("<B", {"": 0, "train": 1, "valid": 2,
                                       "test": 3}[tag]))
            f.write(struct.pack("<I", len(rec.windows)))
            f.write(np.ascontiguousarray(rec.windows, dtype="<f8").tobytes())


def load_dataset(path: str) -> Dataset:
    tags = {0: "", 1: "train", 2: "valid", 3: "test"}
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path}: bad magic, not a dataset file")
        (version,) = struct.unpack("<I", f.read(4))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        C, T = struct.unpack("<II", f.read(8))
        (sfreq,) = struct.unpack("<d", f.read(8))
        (n_rec,) = struct.unpack("<I", f.read(4))
        cfg = SynthConfig(n_channels=C, n_times=T, sfreq=sfreq,
                          n_recordings=n_rec)
        recordings = []
        splits: dict[int, str] = {}
        for _ in range(n_rec):
            (rec_id,) = struct.unpack("<Q", f.read(8))
            (label,) = struct.unpack("<B", f.read(1))
            (tag_code,) = struct.unpack("<B", f.read(1))
            (n_win,) = struct.unpack("<I", f.read(4))
            data = np.frombuffer(f.read(8 * n_win * C * T), dtype="<f8")
            windows = data.reshape(n_win, C, T).astype(np.float64).copy()
            recordings.append(Recording(id=rec_id, label=label,
                                        windows=windows))
            if tags[tag_code]:
                splits[rec_id] = tags[tag_code]
    return Dataset(config=cfg, recordings=recordings, splits=splits)
