"""Channel-corruption transform and corruption detector.

The same masked convex combination of signal and Gaussian white noise
serves as training-time data augmentation (fresh mask per window) and as
evaluation-time corruption (one mask per recording). A spectral-slope plus
variance detector estimates the fraction of corrupted channel-windows.
"""

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .seeding import rng_for


@dataclass(frozen=True)
class CorruptionSpec:
    p: float = 0.5
    eta_range: tuple[float, float] = (0.5, 1.0)
    sigma_range_uv: tuple[float, float] = (20.0, 50.0)
    scope: str = "per_window"  # or "per_recording"
    forced_mask: NDArray | None = None
    forced_count: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must be in [0, 1]")
        lo, hi = self.eta_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError("eta range must lie inside [0, 1]")
        slo, shi = self.sigma_range_uv
        if not (0.0 < slo <= shi):
            raise ValueError("sigma range must be positive")
        if self.scope not in ("per_window", "per_recording"):
            raise ValueError(f"unknown scope: {self.scope!r}")


def sample_mask(C: int, p: float, rng: np.random.Generator) -> NDArray:
    """i.i.d. Bernoulli(p) corruption mask; 1 marks a corrupted channel."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    return (rng.random(C) < p).astype(np.float64)


def corrupt_window(X: NDArray, nu: NDArray, eta: float, sigma_uv: float,
                   rng: np.random.Generator) -> NDArray:
    """Masked convex combination of the window with Gaussian white noise.

    X~ = (1 - eta) diag(nu) X + eta diag(nu) Z + diag(1 - nu) X with
    Z ~ N(0, sigma^2). Unmasked channels come out bit-identical; with
    eta = 0 the whole window does.
    """
    X = np.asarray(X, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must be in [0, 1]")
    if sigma_uv <= 0:
        raise ValueError("sigma must be positive")
    masked = nu > 0
    if eta == 0.0 or not masked.any():
        return X.copy()
    out = X.copy()
    Z = rng.normal(0.0, sigma_uv, size=(int(masked.sum()), X.shape[1]))
    out[masked] = (1.0 - eta) * X[masked] + eta * Z
    return out


def _draw_params(spec: CorruptionSpec, rng: np.random.Generator
                 ) -> tuple[float, float]:
    lo, hi = spec.eta_range
    eta = lo if lo == hi else rng.uniform(lo, hi)
    slo, shi = spec.sigma_range_uv
    sigma = slo if slo == shi else rng.uniform(slo, shi)
    return eta, sigma


def augment_batch(batch: NDArray, spec: CorruptionSpec, master_seed: int,
                  index_offset: int = 0) -> NDArray:
    """Corrupt each window of a (B, C, T) batch independently.

    Per-window RNGs are derived from (master_seed, window index), so the
    augmented stream does not depend on batching or scheduling.
    """
    if spec.scope != "per_window":
        raise ValueError("augment_batch needs scope='per_window'")
    batch = np.asarray(batch, dtype=np.float64)
    out = np.empty_like(batch)
    C = batch.shape[1]
    for i, X in enumerate(batch):
        rng = rng_for(master_seed, index_offset + i)
        nu = sample_mask(C, spec.p, rng)
        eta, sigma = _draw_params(spec, rng)
        out[i] = corrupt_window(X, nu, eta, sigma, rng)
    return out


def recording_mask(C: int, spec: CorruptionSpec,
                   rng: np.random.Generator) -> NDArray:
    """Single corruption mask shared by all windows of one recording."""
    if spec.forced_mask is not None:
        return np.asarray(spec.forced_mask, dtype=np.float64)
    if spec.forced_count is not None:
        if spec.forced_count > C:
            raise ValueError(f"forced_count {spec.forced_count} exceeds C={C}")
        nu = np.zeros(C)
        nu[rng.choice(C, size=spec.forced_count, replace=False)] = 1.0
        return nu
    return sample_mask(C, spec.p, rng)


def corrupt_recording(windows: list[NDArray], spec: CorruptionSpec,
                      rng: np.random.Generator) -> list[NDArray]:
    """Corrupt every window with one shared mask; eta and sigma are redrawn
    per window within the spec's ranges."""
    if spec.scope != "per_recording":
        raise ValueError("corrupt_recording needs scope='per_recording'")
    if not windows:
        raise ValueError("recording has no windows")
    C = windows[0].shape[0]
    nu = recording_mask(C, spec, rng)
    out = []
    for X in windows:
        eta, sigma = _draw_params(spec, rng)
        out.append(corrupt_window(X, nu, eta, sigma, rng))
    return out


def psd_slope(x: NDArray, f_lo: float, f_hi: float, sfreq: float) -> float:
    """Log10-log10 spectral slope of a periodogram over [f_lo, f_hi].

    Least-squares slope of log10(power) against log10(frequency) over the
    in-band bins, DC excluded. Plain rectangular-window periodogram.
    """
    x = np.asarray(x, dtype=np.float64)
    T = x.shape[-1]
    if T < 256:
        raise ValueError(f"need at least 256 samples, got {T}")
    spec = np.abs(np.fft.rfft(x)) ** 2 / T
    freqs = np.fft.rfftfreq(T, d=1.0 / sfreq)
    sel = (freqs >= f_lo) & (freqs <= f_hi) & (freqs > 0)
    if not sel.any():
        raise ValueError(f"no frequency bins inside [{f_lo}, {f_hi}] Hz")
    logf = np.log10(freqs[sel])
    logp = np.log10(np.maximum(spec[sel], 1e-300))
    slope, _ = np.polyfit(logf, logp, 1)
    return float(slope)


def corruption_fraction(windows: list[NDArray], sfreq: float,
                        slope_thresh: float = -0.5,
                        var_thresh_uv2: float = 1000.0) -> float:
    """Fraction of (window, channel) pairs flagged as corrupted.

    A channel-window is flagged when its 0.1-30 Hz spectral slope is above
    slope_thresh and its variance is above var_thresh_uv2: flat-spectrum,
    high-power content that physiological signal does not produce.
    """
    if not windows:
        raise ValueError("recording has no windows")
    flagged = 0
    total = 0
    for X in windows:
        for ch in np.asarray(X, dtype=np.float64):
            total += 1
            if ch.var() <= var_thresh_uv2:
                continue
            if psd_slope(ch, 0.1, 30.0, sfreq) > slope_thresh:
                flagged += 1
    return flagged / total
