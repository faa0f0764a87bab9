"""Training loop, corruption-sweep evaluation and result persistence.

A "model unit" is a (model name, denoising strategy) pair. Deep models are
a ShallowNet classifier optionally fronted by a DSF or interpolation
module; feature models aggregate recording-level features into a logistic
regression. The sweep corrupts test recordings cell by cell on an
(eta, corrupted-count) grid with per-recording masks and writes one CSV
row per cell, seed and model unit.
"""

import csv
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

from .attention import DsfConfig, DsfModule, channel_contribution
from .baselines import (LogisticRegression, aggregate_recording,
                        band_cov_stack, handcrafted_features, impute_apply,
                        impute_fit, riemann_vectorize, zscore_apply,
                        zscore_fit)
from .corruption import CorruptionSpec, augment_batch, corrupt_recording
from .interp import INTERP_KINDS, InterpModule
from .nn import (ParamStore, ShallowNet, ShallowNetConfig, TrainConfig,
                 adamw_step, cosine_lr, softmax_xent)
from .seeding import derive_seed, rng_for
from .synth import Dataset, Recording

DEEP_MODELS = ("vanilla", "dsfd", "dsfm", "dsfm_st",
               "interp_only", "scalar", "vector", "dynamic")
FEATURE_MODELS = ("riemann", "handcrafted")
MODEL_NAMES = DEEP_MODELS + FEATURE_MODELS
DSF_MODELS = ("dsfd", "dsfm", "dsfm_st")

RESULT_HEADER = ("seed", "split_id", "model", "denoise", "eta",
                 "n_corrupted", "c_prime", "metric", "value")

RANDOM_MASK = -1  # count-grid sentinel: Bernoulli(p) mask instead of a
                  # forced corrupted-channel count


@dataclass(frozen=True)
class ResultRow:
    seed: int
    split_id: int
    model: str
    denoise: str
    eta: float
    n_corrupted: int
    c_prime: int
    metric: str
    value: float


@dataclass
class ExperimentConfig:
    models: list[tuple[str, str]]  # (model name, denoise strategy)
    train: TrainConfig = field(default_factory=TrainConfig)
    net: ShallowNetConfig = field(default_factory=ShallowNetConfig)
    eta_grid: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    count_grid: tuple[int, ...] = (RANDOM_MASK,)
    c_prime_grid: tuple[int, ...] = ()  # empty: C' = C
    mask_p: float = 0.5
    sigma_range_uv: tuple[float, float] = (20.0, 50.0)
    n_seeds: int = 1
    master_seed: int = 0
    metric: str = "balanced_accuracy"
    dsf_tau: float = 0.1

    def __post_init__(self) -> None:
        if not self.eta_grid or not self.count_grid:
            raise ValueError("eta and count grids must be non-empty")
        for name, denoise in self.models:
            if name not in MODEL_NAMES:
                raise ValueError(f"unknown model: {name!r}")
            if denoise not in ("none", "augmentation"):
                raise ValueError(f"unknown denoise strategy: {denoise!r}")
        if any(not 0.0 <= e <= 1.0 for e in self.eta_grid):
            raise ValueError("eta grid must lie inside [0, 1]")
        if self.metric not in ("accuracy", "balanced_accuracy"):
            raise ValueError(f"unknown metric: {self.metric!r}")


# ---------------------------------------------------------------------------
# Metrics


def balanced_accuracy(preds: NDArray, labels: NDArray) -> float:
    """Mean per-class recall over the classes present in the labels."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("no examples to score")
    recalls = []
    for cls in np.unique(labels):
        sel = labels == cls
        recalls.append(float(np.mean(preds[sel] == cls)))
    return float(np.mean(recalls))


def accuracy(preds: NDArray, labels: NDArray) -> float:
    return float(np.mean(np.asarray(preds) == np.asarray(labels)))


def compute_metric(name: str, preds: NDArray, labels: NDArray) -> float:
    if name == "balanced_accuracy":
        return balanced_accuracy(preds, labels)
    if name == "accuracy":
        return accuracy(preds, labels)
    raise ValueError(f"unknown metric: {name!r}")


# ---------------------------------------------------------------------------
# Deep models


class DeepModel:
    """ShallowNet with an optional attention/interpolation front end."""

    def __init__(self, name: str, n_channels: int, n_times: int,
                 net_cfg: ShallowNetConfig, seed: int,
                 c_prime: int | None = None, tau: float = 0.1):
        if name not in DEEP_MODELS:
            raise ValueError(f"not a deep model: {name!r}")
        self.name = name
        self.n_channels = n_channels
        self.store = ParamStore()
        rng = rng_for(seed, 0xD5F)
        self.front: DsfModule | InterpModule | None = None
        net_channels = n_channels
        if name in DSF_MODELS:
            self.dsf_cfg = DsfConfig(
                variant=name, n_channels=n_channels,
                n_virtual=c_prime if c_prime else n_channels, tau=tau)
            self.front = DsfModule(self.dsf_cfg, self.store, rng)
            net_channels = self.dsf_cfg.n_virtual
        elif name in INTERP_KINDS:
            self.front = InterpModule(name, n_channels, self.store, rng)
        self.net = ShallowNet(net_channels, n_times, net_cfg, self.store, rng)

    @property
    def c_prime(self) -> int:
        if self.name in DSF_MODELS:
            return self.dsf_cfg.n_virtual
        return 0

    def forward(self, X: NDArray, train: bool = False,
                rng: np.random.Generator | None = None) -> NDArray:
        if self.front is not None:
            X = self.front.forward(X, self.store, train=train, rng=rng)
        return self.net.forward(X, self.store, train=train, rng=rng)

    def backward(self, dlogits: NDArray) -> None:
        dX = self.net.backward(dlogits, self.store)
        if self.front is not None:
            self.front.backward(dX, self.store)

    def post_step(self) -> None:
        if isinstance(self.front, InterpModule):
            self.front.clamp_diagonal(self.store)

    def predict_proba(self, X: NDArray) -> NDArray:
        logits = self.forward(X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        return expd / expd.sum(axis=1, keepdims=True)


@dataclass
class TrainLog:
    train_losses: list[float]
    valid_losses: list[float]
    best_epoch: int


def class_weight_vector(labels: NDArray, n_classes: int) -> NDArray:
    """Inverse-frequency weights normalized to mean 1."""
    counts = np.bincount(np.asarray(labels, dtype=np.intp),
                         minlength=n_classes).astype(np.float64)
    present = counts > 0
    w = np.zeros(n_classes)
    w[present] = labels.shape[0] / (present.sum() * counts[present])
    return w


def train_deep_model(model: DeepModel, dataset: Dataset, cfg: TrainConfig,
                     denoise: str, seed: int,
                     aug_spec: CorruptionSpec | None = None) -> TrainLog:
    """Train with AdamW + cosine annealing and early stopping on the
    validation loss; restores the best-validation-loss parameters."""
    X_train, y_train = dataset.windows_and_labels("train")
    X_valid, y_valid = dataset.windows_and_labels("valid")
    n_classes = model.net.cfg.n_classes
    weights = class_weight_vector(y_train, n_classes)
    if aug_spec is None:
        aug_spec = CorruptionSpec()

    n = len(X_train)
    best_loss = np.inf
    best_params: ParamStore | None = None
    best_epoch = -1
    train_losses: list[float] = []
    valid_losses: list[float] = []
    step = 0

    for epoch in range(cfg.max_epochs):
        order = rng_for(seed, 1, epoch).permutation(n)
        drop_rng = rng_for(seed, 2, epoch)
        lr = cosine_lr(epoch, cfg.t_max, cfg.lr0)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = X_train[idx]
            if denoise == "augmentation":
                batch = augment_batch(batch, aug_spec,
                                      derive_seed(seed, 3, epoch),
                                      index_offset=start)
            model.store.zero_grads()
            logits = model.forward(batch, train=True, rng=drop_rng)
            loss, dlogits = softmax_xent(logits, y_train[idx], weights)
            model.backward(dlogits)
            step += 1
            adamw_step(model.store, lr, cfg, step)
            model.post_step()
            epoch_loss += loss * len(idx)
        train_losses.append(epoch_loss / n)

        valid_loss = 0.0
        for start in range(0, len(X_valid), cfg.batch_size):
            sl = slice(start, start + cfg.batch_size)
            logits = model.forward(X_valid[sl])
            loss, _ = softmax_xent(logits, y_valid[sl], weights)
            valid_loss += loss * len(X_valid[sl])
        valid_loss /= len(X_valid)
        valid_losses.append(valid_loss)

        if valid_loss < best_loss:
            best_loss = valid_loss
            best_params = model.store.copy()
            best_epoch = epoch
        if epoch - best_epoch >= cfg.patience:
            break

    if best_params is not None:
        for name in model.store.names():
            model.store[name].value[...] = best_params[name].value

    return TrainLog(train_losses=train_losses, valid_losses=valid_losses,
                    best_epoch=best_epoch)


def recording_predict(model, recording_windows: NDArray) -> int:
    """Argmax of the mean window probabilities; ties go to the lowest
    class index."""
    if len(recording_windows) == 0:
        raise ValueError("recording has no windows")
    probs = model.predict_proba(np.asarray(recording_windows))
    return int(np.argmax(probs.mean(axis=0)))


# ---------------------------------------------------------------------------
# Feature models


class FeatureModel:
    """Recording-level feature pipeline + logistic regression."""

    N_AUG_COPIES = 5  # augmented replicas per training recording

    def __init__(self, kind: str, sfreq: float, n_classes: int, seed: int):
        if kind not in FEATURE_MODELS:
            raise ValueError(f"not a feature model: {kind!r}")
        self.kind = kind
        self.sfreq = sfreq
        self.n_classes = n_classes
        self.seed = seed

    def _recording_features(self, windows) -> NDArray:
        if self.kind == "riemann":
            covs = [band_cov_stack(X, self.sfreq) for X in windows]
            agg = np.stack([
                aggregate_recording([c[b] for c in covs], "logm_mean")
                for b in range(covs[0].shape[0])
            ])
            return riemann_vectorize(agg).values
        feats = [handcrafted_features(X, self.sfreq).values for X in windows]
        return aggregate_recording(feats, "median")

    def fit(self, dataset: Dataset, denoise: str,
            aug_spec: CorruptionSpec | None = None) -> "FeatureModel":
        if aug_spec is None:
            aug_spec = CorruptionSpec()
        rows = []
        labels = []
        recs = dataset.split("train") + dataset.split("valid")
        for rec in recs:
            rows.append(self._recording_features(list(rec.windows)))
            labels.append(rec.label)
            if denoise == "augmentation":
                for copy in range(self.N_AUG_COPIES):
                    aug = augment_batch(
                        rec.windows, aug_spec,
                        derive_seed(self.seed, 4, rec.id, copy))
                    rows.append(self._recording_features(list(aug)))
                    labels.append(rec.label)
        features = np.stack(rows)
        y = np.asarray(labels)
        self.impute_means = impute_fit(features)
        features = impute_apply(features, self.impute_means)
        self.norm_mean, self.norm_std = zscore_fit(features)
        features = zscore_apply(features, self.norm_mean, self.norm_std)
        weights = class_weight_vector(y, self.n_classes)
        self.clf = LogisticRegression(features.shape[1], self.n_classes,
                                      seed=self.seed)
        self.clf.fit(features, y, weights)
        return self

    def predict_recording(self, windows) -> int:
        feats = self._recording_features(list(windows))[None]
        feats = impute_apply(feats, self.impute_means)
        feats = zscore_apply(feats, self.norm_mean, self.norm_std)
        return int(self.clf.predict(feats)[0])


# ---------------------------------------------------------------------------
# Sweep


def _cell_spec(cfg: ExperimentConfig, eta: float,
               n_corrupted: int) -> CorruptionSpec:
    forced = None if n_corrupted == RANDOM_MASK else n_corrupted
    return CorruptionSpec(p=cfg.mask_p, eta_range=(eta, eta),
                          sigma_range_uv=cfg.sigma_range_uv,
                          scope="per_recording", forced_count=forced)


def corrupt_test_recordings(recordings: list[Recording],
                            spec: CorruptionSpec,
                            cell_seed: int) -> list[Recording]:
    out = []
    for rec in recordings:
        rng = rng_for(cell_seed, rec.id)
        windows = corrupt_recording(list(rec.windows), spec, rng)
        out.append(Recording(id=rec.id, label=rec.label,
                             windows=np.stack(windows)))
    return out


def evaluate_cell(model, recordings: list[Recording],
                  spec: CorruptionSpec, cell_seed: int,
                  metric: str) -> float:
    corrupted = (recordings if spec.eta_range == (0.0, 0.0)
                 else corrupt_test_recordings(recordings, spec, cell_seed))
    preds = []
    labels = []
    for rec in corrupted:
        if isinstance(model, FeatureModel):
            preds.append(model.predict_recording(rec.windows))
        else:
            preds.append(recording_predict(model, rec.windows))
        labels.append(rec.label)
    return compute_metric(metric, np.asarray(preds), np.asarray(labels))


def train_model_unit(cfg: ExperimentConfig, dataset: Dataset, name: str,
                     denoise: str, seed: int, c_prime: int | None = None):
    """Train one (model, denoise) unit for one seed."""
    ds_cfg = dataset.config
    aug = CorruptionSpec(sigma_range_uv=cfg.sigma_range_uv)
    if name in FEATURE_MODELS:
        model = FeatureModel(name, ds_cfg.sfreq, cfg.net.n_classes, seed)
        model.fit(dataset, denoise, aug)
        return model, None
    model = DeepModel(name, ds_cfg.n_channels, ds_cfg.n_times, cfg.net,
                      seed, c_prime=c_prime, tau=cfg.dsf_tau)
    log = train_deep_model(model, dataset, replace(cfg.train, seed=seed),
                           denoise, seed, aug)
    return model, log


def _evaluate_task(args):
    model, recordings, spec, cell_seed, metric, row_key = args
    value = evaluate_cell(model, recordings, spec, cell_seed, metric)
    seed, name, denoise, eta, n_corrupted, c_prime = row_key
    return ResultRow(seed=seed, split_id=0, model=name, denoise=denoise,
                     eta=eta, n_corrupted=n_corrupted, c_prime=c_prime,
                     metric=metric, value=value)


def run_sweep(cfg: ExperimentConfig, dataset: Dataset, out_path: str,
              jobs: int = 1) -> list[ResultRow]:
    """Train every model unit per seed, evaluate every grid cell and write
    the rows as CSV. Cell seeds derive from (master seed, cell index), so
    serial and parallel schedules give identical results."""
    test_recs = dataset.split("test")
    if not test_recs:
        raise ValueError("dataset has no test split")

    tasks = []
    cell_index = 0
    for name, denoise in cfg.models:
        c_primes: tuple[int | None, ...]
        if name in DSF_MODELS and cfg.c_prime_grid:
            c_primes = cfg.c_prime_grid
        else:
            c_primes = (None,)
        for c_prime in c_primes:
            for seed_idx in range(cfg.n_seeds):
                seed = derive_seed(cfg.master_seed, 100 + seed_idx)
                model, _ = train_model_unit(cfg, dataset, name, denoise,
                                            seed, c_prime)
                for eta in cfg.eta_grid:
                    for count in cfg.count_grid:
                        spec = _cell_spec(cfg, eta, count)
                        cell_seed = derive_seed(cfg.master_seed, cell_index)
                        cell_index += 1
                        row_key = (seed, name, denoise, eta, count,
                                   getattr(model, "c_prime", 0) or 0)
                        tasks.append((model, test_recs, spec, cell_seed,
                                      cfg.metric, row_key))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_evaluate_task, tasks))
    else:
        rows = [_evaluate_task(t) for t in tasks]

    rows.sort(key=lambda r: (r.model, r.denoise, r.seed, r.eta,
                             r.n_corrupted, r.c_prime))
    write_results_csv(rows, out_path)
    return rows


def write_results_csv(rows: list[ResultRow], out_path: str) -> None:
    """Write atomically: temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(out_path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".csv.tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(RESULT_HEADER)
            for r in rows:
                writer.writerow([r.seed, r.split_id, r.model, r.denoise,
                                 repr(r.eta), r.n_corrupted, r.c_prime,
                                 r.metric, repr(r.value)])
        os.replace(tmp, out_path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Filter inspection


def inspect_filters(model: DeepModel, recordings: list[Recording],
                    spec: CorruptionSpec | None, seed: int,
                    dump_path: str | None = None):
    """Per-window filter dump and per-channel contribution summary.

    Returns (records, summary) where each record is (window_index, W, b,
    phi) and summary maps each channel to (q25, median, q75) of phi. When
    a corruption spec is given, recordings are corrupted first.
    """
    if model.name not in DSF_MODELS:
        raise ValueError(f"{model.name!r} is not a DSF-family model")
    if spec is not None:
        recordings = corrupt_test_recordings(recordings, spec, seed)
    module = model.front
    records = []
    phis = []
    window_index = 0
    for rec in recordings:
        phi_in = module.summaries(rec.windows)
        W, b = module.filters_from_summary(phi_in, model.store)
        for i in range(len(rec.windows)):
            phi = channel_contribution(W[i])
            records.append((window_index, W[i], b[i], phi))
            phis.append(phi)
            window_index += 1
    phis = np.stack(phis)
    summary = {
        ch: (float(np.quantile(phis[:, ch], 0.25)),
             float(np.median(phis[:, ch])),
             float(np.quantile(phis[:, ch], 0.75)))
        for ch in range(phis.shape[1])
    }
    if dump_path is not None:
        _write_filter_dump(records, dump_path)
    return records, summary


def _write_filter_dump(records, path: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".csv.tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            writer = csv.writer(f)
            for window_index, W, b, phi in records:
                row = ([window_index] + [repr(v) for v in W.ravel()]
                       + [repr(v) for v in b] + [repr(v) for v in phi])
                writer.writerow(row)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
