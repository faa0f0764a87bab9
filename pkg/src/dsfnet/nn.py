"""Minimal differentiable-computation stack with hand-derived gradients.

Layers cache what their backward pass needs, parameters live in a flat
named ParamStore, and AdamW with cosine annealing drives the updates.
Everything is plain float64 numpy; a finite-difference checker in the
test suite pins every gradient.
"""

import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

LOG_FLOOR = 1e-6
MAGIC = b"DSF1"
FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# Parameters


@dataclass
class Param:
    value: NDArray
    grad: NDArray
    adam_m: NDArray
    adam_v: NDArray


class ParamStore:
    """Flat named collection of trainable tensors plus optimizer state."""

    def __init__(self) -> None:
        self._params: dict[str, Param] = {}

    def add(self, name: str, value: NDArray) -> Param:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name!r}")
        value = np.asarray(value, dtype=np.float64)
        p = Param(
            value=value,
            grad=np.zeros_like(value),
            adam_m=np.zeros_like(value),
            adam_v=np.zeros_like(value),
        )
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def n_parameters(self) -> int:
        return sum(p.value.size for p in self._params.values())

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad[...] = 0.0

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name, p in self._params.items():
            q = out.add(name, p.value.copy())
            q.adam_m = p.adam_m.copy()
            q.adam_v = p.adam_v.copy()
        return out

    # Binary round-trip: magic, version, entry count, then per entry the
    # name, shape and raw little-endian float64 values. Bit-exact across
    # runs on the same platform.
    def save(self, path: str) -> None:
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", FORMAT_VERSION))
            f.write(struct.pack("<I", len(self._params)))
            for name in sorted(self._params):
                value = self._params[name].value
                encoded = name.encode("utf-8")
                f.write(struct.pack("<I", len(encoded)))
                f.write(encoded)
                f.write(struct.pack("<Q", value.ndim))
                for dim in value.shape:
                    f.write(struct.pack("<Q", dim))
                f.write(np.ascontiguousarray(value, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str) -> "ParamStore":
        store = cls()
        with open(path, "rb") as f:
            if f.read(4) != MAGIC:
                raise ValueError(f"{path}: bad magic, not a parameter file")
            (version,) = struct.unpack("<I", f.read(4))
            if version != FORMAT_VERSION:
                raise ValueError(f"{path}: unsupported version {version}")
            (count,) = struct.unpack("<I", f.read(4))
            for _ in range(count):
                (name_len,) = struct.unpack("<I", f.read(4))
                name = f.read(name_len).decode("utf-8")
                (rank,) = struct.unpack("<Q", f.read(8))
                shape = tuple(
                    struct.unpack("<Q", f.read(8))[0] for _ in range(rank)
                )
                n = int(np.prod(shape)) if shape else 1
                data = np.frombuffer(f.read(8 * n), dtype="<f8").reshape(shape)
                store.add(name, data.astype(np.float64).copy())
        return store


def he_uniform_init(
    shape: tuple[int, ...], fan_in: int, rng: np.random.Generator
) -> NDArray:
    """Uniform He initialization: i.i.d. U(-sqrt(6/fan_in), +sqrt(6/fan_in))."""
    if fan_in < 1:
        raise ValueError("fan_in must be >= 1")
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


# ---------------------------------------------------------------------------
# Layers


class Layer:
    """Forward caches activations; backward returns the input gradient and
    accumulates parameter gradients into the store."""

    param_names: tuple[str, ...] = ()

    def forward(self, x, store, train=False, rng=None):
        raise NotImplementedError

    def backward(self, dout, store):
        raise NotImplementedError


class Dense(Layer):
    """Affine map on the last axis: y = x @ W + b."""

    def __init__(self, name, in_dim, out_dim, store, rng):
        self.name = name
        self.w_name = f"{name}.W"
        self.b_name = f"{name}.b"
        self.param_names = (self.w_name, self.b_name)
        store.add(self.w_name, he_uniform_init((in_dim, out_dim), in_dim, rng))
        store.add(self.b_name, np.zeros(out_dim))

    def forward(self, x, store, train=False, rng=None):
        self._x = x
        return x @ store[self.w_name].value + store[self.b_name].value

    def backward(self, dout, store):
        store[self.w_name].grad += self._x.T @ dout
        store[self.b_name].grad += dout.sum(axis=0)
        return dout @ store[self.w_name].value.T


class TemporalConv(Layer):
    """Valid-padding temporal convolution, filters shared across channels.

    (B, C, T) -> (B, C * n_filters, T - k + 1); output map index is
    c * n_filters + f.
    """

    def __init__(self, name, n_filters, kernel, store, rng):
        self.name = name
        self.n_filters = n_filters
        self.kernel = kernel
        self.w_name = f"{name}.W"
        self.b_name = f"{name}.b"
        self.param_names = (self.w_name, self.b_name)
        store.add(self.w_name, he_uniform_init((n_filters, kernel), kernel, rng))
        store.add(self.b_name, np.zeros(n_filters))

    def forward(self, x, store, train=False, rng=None):
        B, C, T = x.shape
        k = self.kernel
        if T < k:
            raise ValueError(f"window of {T} samples shorter than kernel {k}")
        Tp = T - k + 1
        windows = np.lib.stride_tricks.sliding_window_view(x, k, axis=2)
        # Contiguous copy so both the forward product and the weight
        # gradient run as plain BLAS matmuls.
        self._win2d = np.ascontiguousarray(windows).reshape(-1, k)
        self._in_shape = x.shape
        W = store[self.w_name].value
        b = store[self.b_name].value
        out = (self._win2d @ W.T + b).reshape(B, C, Tp, self.n_filters)
        return np.ascontiguousarray(
            out.transpose(0, 1, 3, 2)).reshape(B, C * self.n_filters, Tp)

    def backward(self, dout, store):
        B, C, T = self._in_shape
        F, k = self.n_filters, self.kernel
        Tp = T - k + 1
        dout2d = np.ascontiguousarray(
            dout.reshape(B, C, F, Tp).transpose(0, 1, 3, 2)).reshape(-1, F)
        store[self.w_name].grad += dout2d.T @ self._win2d
        store[self.b_name].grad += dout2d.sum(axis=0)
        # Input gradient: scatter-add each kernel tap's contribution.
        W = store[self.w_name].value
        G = (dout2d @ W).reshape(B, C, Tp, k)
        dx = np.zeros((B, C, T))
        for j in range(k):
            dx[:, :, j : j + Tp] += G[..., j]
        return dx


class SpatialConv(Layer):
    """Affine map across the map axis applied independently at every time step.

    (B, M, T) -> (B, out_maps, T).
    """

    def __init__(self, name, in_maps, out_maps, store, rng):
        self.name = name
        self.w_name = f"{name}.W"
        self.b_name = f"{name}.b"
        self.param_names = (self.w_name, self.b_name)
        store.add(self.w_name, he_uniform_init((in_maps, out_maps), in_maps, rng))
        store.add(self.b_name, np.zeros(out_maps))

    def forward(self, x, store, train=False, rng=None):
        self._x = x
        W = store[self.w_name].value
        b = store[self.b_name].value
        return np.einsum("bmt,mo->bot", x, W, optimize=True) + b[None, :, None]

    def backward(self, dout, store):
        store[self.w_name].grad += np.einsum("bmt,bot->mo", self._x, dout, optimize=True)
        store[self.b_name].grad += dout.sum(axis=(0, 2))
        return np.einsum("bot,mo->bmt", dout, store[self.w_name].value, optimize=True)


class Square(Layer):
    def forward(self, x, store, train=False, rng=None):
        self._x = x
        return x * x

    def backward(self, dout, store):
        return 2.0 * self._x * dout


class LogFloor(Layer):
    """Elementwise natural log with floor: log(max(x, LOG_FLOOR))."""

    def forward(self, x, store, train=False, rng=None):
        self._clipped = np.maximum(x, LOG_FLOOR)
        self._active = x > LOG_FLOOR
        return np.log(self._clipped)

    def backward(self, dout, store):
        return np.where(self._active, dout / self._clipped, 0.0)


class AvgPool(Layer):
    """Temporal average pooling with window w and stride s on the last axis."""

    def __init__(self, width, stride):
        self.width = width
        self.stride = stride

    def forward(self, x, store, train=False, rng=None):
        T = x.shape[-1]
        if T < self.width:
            raise ValueError(f"cannot pool {T} samples with window {self.width}")
        n_pool = (T - self.width) // self.stride + 1
        self._in_shape = x.shape
        self._n_pool = n_pool
        windows = np.lib.stride_tricks.sliding_window_view(x, self.width, axis=-1)
        return windows[..., :: self.stride, :].mean(axis=-1)

    def backward(self, dout, store):
        dx = np.zeros(self._in_shape)
        scale = 1.0 / self.width
        for p in range(self._n_pool):
            start = p * self.stride
            dx[..., start : start + self.width] += (
                dout[..., p : p + 1] * scale
            )
        return dx


class Dropout(Layer):
    """Inverted-scaling dropout; identity in eval mode."""

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate

    def forward(self, x, store, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("train-mode dropout needs an rng")
        keep = 1.0 - self.rate
        self._mask = (rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, dout, store):
        if self._mask is None:
            return dout
        return dout * self._mask


class Sigmoid(Layer):
    def forward(self, x, store, train=False, rng=None):
        self._y = 1.0 / (1.0 + np.exp(-x))
        return self._y

    def backward(self, dout, store):
        return dout * self._y * (1.0 - self._y)


class Flatten(Layer):
    def forward(self, x, store, train=False, rng=None):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout, store):
        return dout.reshape(self._in_shape)


# ---------------------------------------------------------------------------
# Loss


def softmax_xent(
    logits: NDArray, labels: NDArray, class_weights: NDArray
) -> tuple[float, NDArray]:
    """Class-weighted cross-entropy: mean over the batch of -w_y log p_y.

    Returns the scalar loss and its gradient with respect to the logits.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits contain non-finite values")
    labels = np.asarray(labels, dtype=np.intp)
    class_weights = np.asarray(class_weights, dtype=np.float64)
    B = logits.shape[0]

    shifted = logits - logits.max(axis=1, keepdims=True)
    logZ = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - logZ
    w = class_weights[labels]
    loss = float(-(w * log_probs[np.arange(B), labels]).mean())

    probs = np.exp(log_probs)
    grad = probs * w[:, None]
    grad[np.arange(B), labels] -= w
    return loss, grad / B


# ---------------------------------------------------------------------------
# Optimization


@dataclass
class TrainConfig:
    lr0: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    dropout_rate: float = 0.5
    max_epochs: int = 40
    patience: int = 7
    batch_size: int = 64
    t_max: int = 40
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max_epochs")


def adamw_step(store: ParamStore, lr: float, config: TrainConfig, t: int) -> None:
    """One decoupled-weight-decay Adam update with bias correction at step t."""
    b1, b2, eps, wd = config.beta1, config.beta2, config.eps, config.weight_decay
    for name in store.names():
        p = store[name]
        p.adam_m[...] = b1 * p.adam_m + (1.0 - b1) * p.grad
        p.adam_v[...] = b2 * p.adam_v + (1.0 - b2) * p.grad**2
        m_hat = p.adam_m / (1.0 - b1**t)
        v_hat = p.adam_v / (1.0 - b2**t)
        p.value[...] -= lr * (m_hat / (np.sqrt(v_hat) + eps) + wd * p.value)


def cosine_lr(t: int, t_max: int, lr0: float) -> float:
    """Cosine annealing from lr0 at t=0 down to 0 at t=t_max."""
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    return lr0 * 0.5 * (1.0 + np.cos(np.pi * t / t_max))


# ---------------------------------------------------------------------------
# ShallowNet-style classifier


@dataclass
class ShallowNetConfig:
    n_temporal_filters: int = 8
    temporal_kernel: int = 25
    n_spatial_filters: int = 8
    pool_width: int = 75
    pool_stride: int = 15
    dropout_rate: float = 0.5
    n_classes: int = 2


class ShallowNet:
    """Temporal conv -> spatial conv -> square -> avg pool -> log -> dropout
    -> dense classifier, on (batch, channels, time) input."""

    def __init__(self, n_channels, n_times, cfg: ShallowNetConfig, store, rng,
                 prefix="net"):
        self.cfg = cfg
        t_conv = n_times - cfg.temporal_kernel + 1
        if t_conv < cfg.pool_width:
            raise ValueError(
                f"{n_times} samples leave {t_conv} after convolution, "
                f"fewer than the pool width {cfg.pool_width}"
            )
        n_pool = (t_conv - cfg.pool_width) // cfg.pool_stride + 1
        self.layers = [
            TemporalConv(f"{prefix}.tconv", cfg.n_temporal_filters,
                         cfg.temporal_kernel, store, rng),
            SpatialConv(f"{prefix}.sconv",
                        n_channels * cfg.n_temporal_filters,
                        cfg.n_spatial_filters, store, rng),
            Square(),
            AvgPool(cfg.pool_width, cfg.pool_stride),
            LogFloor(),
            Dropout(cfg.dropout_rate),
            Flatten(),
            Dense(f"{prefix}.out", cfg.n_spatial_filters * n_pool,
                  cfg.n_classes, store, rng),
        ]

    def forward(self, x, store, train=False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, store, train=train, rng=rng)
        return x

    def backward(self, dout, store):
        for layer in reversed(self.layers):
            dout = layer.backward(dout, store)
        return dout
