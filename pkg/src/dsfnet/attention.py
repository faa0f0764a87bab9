"""Dynamic spatial filter (DSF) attention module.

A 2-layer MLP conditioned on a fixed spatial summary of each window emits
a per-window set of spatial filters W (C' x C) and biases b (C'), applied
as Y = W X + b. Gradients flow into the MLP parameters but not through
the summary into X.
"""

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .nn import Dense, ParamStore, Sigmoid
from .spatial import compute_summary, phi_length

VARIANTS = ("dsfd", "dsfm", "dsfm_st")


@dataclass(frozen=True)
class DsfConfig:
    variant: str = "dsfm_st"
    n_channels: int = 6
    n_virtual: int = 6  # C': output (virtual) channel count
    hidden: int | None = None  # default C^2
    tau: float = 0.1

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown DSF variant: {self.variant!r}")
        if self.n_virtual < 1:
            raise ValueError("n_virtual must be >= 1")
        if self.hidden is not None and self.hidden < 1:
            raise ValueError("hidden size must be >= 1")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")

    @property
    def summary_kind(self) -> str:
        return "log_variance" if self.variant == "dsfd" else "logm_covariance"

    @property
    def hidden_size(self) -> int:
        return self.n_channels**2 if self.hidden is None else self.hidden

    @property
    def summary_length(self) -> int:
        return phi_length(self.summary_kind, self.n_channels)

    @property
    def thresholded(self) -> bool:
        return self.variant == "dsfm_st"


@dataclass(frozen=True)
class SpatialFilterSet:
    """Per-window filters as applied (post-threshold when enabled)."""

    W: NDArray  # (C', C)
    b: NDArray  # (C',)


def soft_threshold(W: NDArray, tau: float) -> NDArray:
    """sign(w) * max(|w| - tau, 0), elementwise."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    return np.sign(W) * np.maximum(np.abs(W) - tau, 0.0)


def soft_threshold_subgradient(W: NDArray, tau: float) -> NDArray:
    """Subgradient of soft_threshold: 0 where |w| <= tau, 1 elsewhere."""
    return (np.abs(W) > tau).astype(np.float64)


def channel_contribution(W: NDArray) -> NDArray:
    """Column-wise Euclidean norms of W: how much each input channel feeds
    the virtual channels."""
    return np.sqrt(np.sum(np.asarray(W, dtype=np.float64) ** 2, axis=0))


def dsf_param_count(cfg: DsfConfig) -> int:
    """Trainable parameter count of the filter generator MLP."""
    d = cfg.summary_length
    h = cfg.hidden_size
    return (d + 1) * h + (h + 1) * cfg.n_virtual * (cfg.n_channels + 1)


class DsfModule:
    """Trainable DSF filter generator; batched forward/backward."""

    def __init__(self, cfg: DsfConfig, store: ParamStore,
                 rng: np.random.Generator, prefix: str = "dsf"):
        self.cfg = cfg
        out_dim = cfg.n_virtual * (cfg.n_channels + 1)
        self.fc1 = Dense(f"{prefix}.fc1", cfg.summary_length, cfg.hidden_size,
                         store, rng)
        self.act = Sigmoid()
        self.fc2 = Dense(f"{prefix}.fc2", cfg.hidden_size, out_dim, store, rng)

    def summaries(self, X: NDArray) -> NDArray:
        """Spatial summaries of a (B, C, T) batch; no gradient flows here."""
        return np.stack([compute_summary(self.cfg.summary_kind, x).values
                         for x in X])

    def filters_from_summary(self, phi: NDArray, store: ParamStore
                             ) -> tuple[NDArray, NDArray]:
        """MLP output reshaped into W (B, C', C) and b (B, C'), thresholded
        when the variant asks for it."""
        cfg = self.cfg
        h = self.act.forward(self.fc1.forward(phi, store), store)
        raw = self.fc2.forward(h, store)
        B = raw.shape[0]
        split = cfg.n_virtual * cfg.n_channels
        W_pre = raw[:, :split].reshape(B, cfg.n_virtual, cfg.n_channels)
        b = raw[:, split:]
        self._W_pre = W_pre
        if cfg.thresholded:
            W = soft_threshold(W_pre, cfg.tau)
        else:
            W = W_pre
        self._b = b
        return W, b

    def forward(self, X: NDArray, store: ParamStore, train: bool = False,
                rng: np.random.Generator | None = None) -> NDArray:
        """(B, C, T) -> (B, C', T): Y_i = W_i X_i + b_i."""
        phi = self.summaries(X)
        W, b = self.filters_from_summary(phi, store)
        self._X = X
        self._W = W
        return np.einsum("bvc,bct->bvt", W, X, optimize=True) + b[:, :, None]

    def backward(self, dY: NDArray, store: ParamStore) -> NDArray:
        """Propagate dL/dY into the MLP parameters; returns dL/dX through
        the filter application only (the summary path carries no gradient)."""
        cfg = self.cfg
        dW = np.einsum("bvt,bct->bvc", dY, self._X, optimize=True)
        db = dY.sum(axis=2)
        if cfg.thresholded:
            dW = dW * soft_threshold_subgradient(self._W_pre, cfg.tau)
        B = dY.shape[0]
        draw = np.concatenate([dW.reshape(B, -1), db], axis=1)
        dh = self.fc2.backward(draw, store)
        self.fc1.backward(self.act.backward(dh, store), store)
        return np.einsum("bvc,bvt->bct", self._W, dY, optimize=True)


def dsf_forward(X: NDArray, params: ParamStore, cfg: DsfConfig,
                module: DsfModule | None = None,
                ) -> tuple[NDArray, SpatialFilterSet]:
    """Single-window forward pass returning the output and the filters
    actually applied."""
    X = np.asarray(X, dtype=np.float64)
    if module is None:
        module = bind_module(cfg, params)
    Y = module.forward(X[None], params)
    filters = SpatialFilterSet(W=module._W[0].copy(), b=module._b[0].copy())
    return Y[0], filters


def bind_module(cfg: DsfConfig, store: ParamStore,
                prefix: str = "dsf") -> DsfModule:
    """Attach a DsfModule view onto an existing parameter store."""
    module = DsfModule.__new__(DsfModule)
    module.cfg = cfg
    module.fc1 = _bind_dense(f"{prefix}.fc1", store)
    module.act = Sigmoid()
    module.fc2 = _bind_dense(f"{prefix}.fc2", store)
    return module


def _bind_dense(name: str, store: ParamStore) -> Dense:
    layer = Dense.__new__(Dense)
    layer.name = name
    layer.w_name = f"{name}.W"
    layer.b_name = f"{name}.b"
    layer.param_names = (layer.w_name, layer.b_name)
    if layer.w_name not in store or layer.b_name not in store:
        raise ValueError(f"parameter store is missing {name} weights")
    return layer
