"""Non-attention comparison pipelines.

Filter-bank covariance features projected through the matrix logarithm,
a handcrafted per-channel feature set, z-scoring, a linear logistic
regression classifier built on the nn stack, and recording-wise
aggregation helpers.
"""

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .linalg import (matrix_exp_eig, matrix_log_eig, oas_shrink,
                     sample_covariance, vec_upper)
from .nn import (Dense, ParamStore, TrainConfig, adamw_step, cosine_lr,
                 softmax_xent)

RIEMANN_BANDS = ((0.1, 1.5), (1.5, 4.0), (4.0, 8.0), (8.0, 15.0),
                 (15.0, 26.0), (26.0, 35.0), (35.0, 49.0))

POWER_BAND_EDGES = (0.0, 2.0, 4.0, 8.0, 13.0, 18.0, 24.0, 30.0, 49.0)

# Per-channel handcrafted feature schema, in order. 22 features: five
# moment/amplitude statistics, four quantiles, peak-to-peak, eight log band
# powers, Hjorth mobility and complexity, line length and zero crossings.
HANDCRAFTED_NAMES = (
    ["mean", "std", "rms", "kurtosis", "skewness",
     "q10", "q25", "q75", "q90", "ptp"]
    + [f"logpow_{POWER_BAND_EDGES[i]:g}_{POWER_BAND_EDGES[i + 1]:g}"
       for i in range(len(POWER_BAND_EDGES) - 1)]
    + ["hjorth_mobility", "hjorth_complexity", "line_length",
       "zero_crossings"]
)


@dataclass(frozen=True)
class FeatureVector:
    schema: str  # "riemann" or "handcrafted"
    values: NDArray


def riemann_length(n_channels: int) -> int:
    return len(RIEMANN_BANDS) * n_channels * (n_channels + 1) // 2


def handcrafted_length(n_channels: int) -> int:
    return len(HANDCRAFTED_NAMES) * n_channels


def bandpass_filterbank(X: NDArray, sfreq: float,
                        bands=RIEMANN_BANDS) -> list[NDArray]:
    """Zero-phase brick-wall band filters: zero DFT bins outside each band."""
    X = np.asarray(X, dtype=np.float64)
    T = X.shape[-1]
    nyquist = sfreq / 2.0
    spec = np.fft.rfft(X, axis=-1)
    freqs = np.fft.rfftfreq(T, d=1.0 / sfreq)
    out = []
    for f_lo, f_hi in bands:
        if f_hi > nyquist:
            raise ValueError(f"band ({f_lo}, {f_hi}) Hz exceeds Nyquist "
                             f"{nyquist} Hz")
        keep = (freqs >= f_lo) & (freqs <= f_hi)
        out.append(np.fft.irfft(spec * keep, n=T, axis=-1))
    return out


def riemann_features(X: NDArray, sfreq: float) -> FeatureVector:
    """Per band: upper triangle of logm of the OAS-shrunk covariance;
    concatenated over the 7 bands."""
    X = np.asarray(X, dtype=np.float64)
    T = X.shape[1]
    parts = []
    for Xb in bandpass_filterbank(X, sfreq):
        S = oas_shrink(sample_covariance(Xb), T).matrix
        parts.append(vec_upper(matrix_log_eig(S)))
    return FeatureVector(schema="riemann", values=np.concatenate(parts))


def band_cov_stack(X: NDArray, sfreq: float) -> NDArray:
    """Per-band OAS-shrunk covariance matrices, shape (n_bands, C, C)."""
    X = np.asarray(X, dtype=np.float64)
    T = X.shape[1]
    return np.stack([
        oas_shrink(sample_covariance(Xb), T).matrix
        for Xb in bandpass_filterbank(X, sfreq)
    ])


def riemann_vectorize(covs: NDArray) -> FeatureVector:
    """Vectorize a stack of per-band covariance matrices."""
    parts = [vec_upper(matrix_log_eig(S)) for S in covs]
    return FeatureVector(schema="riemann", values=np.concatenate(parts))


def _channel_features(x: NDArray, sfreq: float) -> list[float]:
    T = len(x)
    mean = x.mean()
    centered = x - mean
    var = centered.var()
    std = np.sqrt(var)
    rms = np.sqrt(np.mean(x**2))
    if std > 0:
        kurtosis = np.mean(centered**4) / var**2 - 3.0
        skewness = np.mean(centered**3) / std**3
    else:
        kurtosis = 0.0
        skewness = 0.0
    q10, q25, q75, q90 = np.quantile(x, (0.1, 0.25, 0.75, 0.9))
    ptp = x.max() - x.min()

    spec = np.abs(np.fft.rfft(x)) ** 2 / T
    freqs = np.fft.rfftfreq(T, d=1.0 / sfreq)
    log_powers = []
    for i in range(len(POWER_BAND_EDGES) - 1):
        sel = (freqs >= POWER_BAND_EDGES[i]) & (freqs < POWER_BAND_EDGES[i + 1])
        log_powers.append(np.log(np.maximum(spec[sel].sum(), 1e-300)))

    dx = np.diff(x)
    ddx = np.diff(dx)
    var_dx = dx.var()
    mobility = np.sqrt(var_dx / var) if var > 0 else 0.0
    mobility_dx = np.sqrt(ddx.var() / var_dx) if var_dx > 0 else 0.0
    complexity = mobility_dx / mobility if mobility > 0 else 0.0
    line_length = np.abs(dx).sum()
    zero_crossings = int(np.sum(np.sign(x[:-1]) * np.sign(x[1:]) < 0))

    return [mean, std, rms, kurtosis, skewness, q10, q25, q75, q90, ptp,
            *log_powers, mobility, complexity, line_length,
            float(zero_crossings)]


def handcrafted_features(X: NDArray, sfreq: float) -> FeatureVector:
    """Fixed per-channel statistics concatenated over channels; any
    non-finite entries are left for fit-time mean imputation."""
    X = np.asarray(X, dtype=np.float64)
    values = np.concatenate([_channel_features(ch, sfreq) for ch in X])
    return FeatureVector(schema="handcrafted", values=values)


def impute_fit(features: NDArray) -> NDArray:
    """Column means over finite entries; 0 where a column is all-bad."""
    finite = np.isfinite(features)
    with np.errstate(invalid="ignore"):
        sums = np.where(finite, features, 0.0).sum(axis=0)
        counts = finite.sum(axis=0)
    return np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)


def impute_apply(features: NDArray, means: NDArray) -> NDArray:
    out = np.array(features, dtype=np.float64)
    bad = ~np.isfinite(out)
    out[bad] = np.broadcast_to(means, out.shape)[bad]
    return out


def zscore_fit(features: NDArray) -> tuple[NDArray, NDArray]:
    """Column mean and std from a training matrix; zero stds become 1."""
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return mean, std


def zscore_apply(features: NDArray, mean: NDArray, std: NDArray) -> NDArray:
    return (features - mean) / std


class LogisticRegression:
    """Linear softmax classifier trained with AdamW full-batch."""

    def __init__(self, n_features: int, n_classes: int, seed: int = 0,
                 n_steps: int = 500, lr0: float = 0.05,
                 weight_decay: float = 1e-4):
        self.store = ParamStore()
        rng = np.random.default_rng(seed)
        self.layer = Dense("logreg", n_features, n_classes, self.store, rng)
        self.n_steps = n_steps
        self.cfg = TrainConfig(lr0=lr0, weight_decay=weight_decay,
                               max_epochs=n_steps, t_max=n_steps,
                               dropout_rate=0.0)

    def fit(self, features: NDArray, labels: NDArray,
            class_weights: NDArray | None = None) -> "LogisticRegression":
        labels = np.asarray(labels, dtype=np.intp)
        n_classes = self.store["logreg.W"].value.shape[1]
        if class_weights is None:
            class_weights = np.ones(n_classes)
        for t in range(1, self.n_steps + 1):
            self.store.zero_grads()
            logits = self.layer.forward(features, self.store)
            _, dlogits = softmax_xent(logits, labels, class_weights)
            self.layer.backward(dlogits, self.store)
            lr = cosine_lr(t - 1, self.n_steps, self.cfg.lr0)
            adamw_step(self.store, lr, self.cfg, t)
        return self

    def predict_proba(self, features: NDArray) -> NDArray:
        logits = self.layer.forward(features, self.store)
        shifted = logits - logits.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        return expd / expd.sum(axis=1, keepdims=True)

    def predict(self, features: NDArray) -> NDArray:
        return np.argmax(self.predict_proba(features), axis=1)


def aggregate_recording(items: list[NDArray], method: str) -> NDArray:
    """Collapse window-level items into one recording-level item.

    logm_mean: log-Euclidean geometric mean of SPD matrices (exp of the
    mean of matrix logs). median: elementwise. prob_mean: mean of
    probability rows.
    """
    if not items:
        raise ValueError("nothing to aggregate")
    stack = np.stack([np.asarray(it, dtype=np.float64) for it in items])
    if method == "logm_mean":
        logs = np.stack([matrix_log_eig(S) for S in stack])
        return matrix_exp_eig(logs.mean(axis=0))
    if method == "median":
        return np.median(stack, axis=0)
    if method == "prob_mean":
        return stack.mean(axis=0)
    raise ValueError(f"unknown aggregation method: {method!r}")
