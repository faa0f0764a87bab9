"""Command-line harness.

Subcommands: `gen` writes a synthetic dataset file, `train` trains a
single model unit and saves its parameters, `sweep` runs the corruption
robustness sweep and writes a results CSV, `inspect` dumps the per-window
filters of a trained DSF model, and `taylor-bench` emits the truncated-
series matrix-log error curve as CSV.
"""

import argparse
import csv
import os
import sys
import tempfile

import numpy as np

from .config import load_experiment_config
from .harness import (DEEP_MODELS, DSF_MODELS, ExperimentConfig,
                      FeatureModel, inspect_filters, run_sweep,
                      train_model_unit)
from .corruption import CorruptionSpec
from .linalg import matrix_log_eig, matrix_log_taylor, oas_shrink, \
    sample_covariance
from .synth import generate_dataset, load_dataset, save_dataset, \
    split_dataset


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="experiment config file")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--out", required=True, help="output path")
    parser.add_argument("--jobs", type=int, default=1,
                        help="parallel evaluation workers")


def _load_configs(args):
    if args.config:
        return load_experiment_config(args.config)
    from .synth import SynthConfig
    return SynthConfig(), ExperimentConfig(models=[("vanilla", "none")])


def cmd_gen(args) -> int:
    data_cfg, _ = _load_configs(args)
    ds = generate_dataset(data_cfg, args.seed)
    ds = split_dataset(ds, (0.6, 0.2, 0.2), args.seed)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds.recordings)} recordings to {args.out}")
    return 0


def cmd_train(args) -> int:
    _, sweep_cfg = _load_configs(args)
    sweep_cfg.master_seed = args.seed
    ds = load_dataset(args.dataset)
    name, denoise = sweep_cfg.models[0]
    model, log = train_model_unit(sweep_cfg, ds, name, denoise, args.seed)
    if isinstance(model, FeatureModel):
        print(f"trained feature model {name} ({denoise})", file=sys.stderr)
        print("feature models have no parameter file; nothing written")
        return 0
    model.store.save(args.out)
    print(f"trained {name} ({denoise}), best epoch {log.best_epoch}, "
          f"saved parameters to {args.out}")
    return 0


def cmd_sweep(args) -> int:
    _, sweep_cfg = _load_configs(args)
    sweep_cfg.master_seed = args.seed
    ds = load_dataset(args.dataset)
    rows = run_sweep(sweep_cfg, ds, args.out, jobs=args.jobs)
    print(f"wrote {len(rows)} result rows to {args.out}")
    return 0


def cmd_inspect(args) -> int:
    _, sweep_cfg = _load_configs(args)
    sweep_cfg.master_seed = args.seed
    ds = load_dataset(args.dataset)
    name, denoise = sweep_cfg.models[0]
    if name not in DSF_MODELS:
        print(f"error: {name!r} is not a DSF-family model", file=sys.stderr)
        return 2
    model, _ = train_model_unit(sweep_cfg, ds, name, denoise, args.seed)
    spec = None
    if args.eta > 0:
        spec = CorruptionSpec(p=sweep_cfg.mask_p,
                              eta_range=(args.eta, args.eta),
                              scope="per_recording",
                              forced_count=args.n_corrupted)
    _, summary = inspect_filters(model, ds.split("test"), spec, args.seed,
                                 dump_path=args.out)
    for ch, (q25, med, q75) in summary.items():
        print(f"channel {ch}: phi median {med:.4f} (q25 {q25:.4f}, "
              f"q75 {q75:.4f})")
    return 0


def taylor_error_curve(windows, n_terms_grid):
    """Median/mean relative error of the truncated-series matrix log
    against the eigendecomposition value, per term count."""
    covs = [oas_shrink(sample_covariance(X), X.shape[1]).matrix
            for X in windows]
    exact = [matrix_log_eig(S) for S in covs]
    curve = []
    for n in n_terms_grid:
        errs = []
        for S, L in zip(covs, exact):
            approx = matrix_log_taylor(S, n)
            errs.append(np.linalg.norm(L - approx, 2)
                        / np.linalg.norm(L, 2))
        errs = np.asarray(errs)
        curve.append((n, float(np.median(errs)), float(errs.mean()),
                      float(errs.std())))
    return curve


def cmd_taylor_bench(args) -> int:
    data_cfg, _ = _load_configs(args)
    ds = generate_dataset(data_cfg, args.seed)
    windows = np.concatenate([r.windows for r in ds.recordings])
    windows = windows[:args.n_windows]
    grid = sorted(set(int(n) for n in args.terms.split(",")))
    curve = taylor_error_curve(list(windows), grid)

    directory = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".csv.tmp")
    with os.fdopen(fd, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["n_terms", "median_rel_error", "mean_rel_error",
                         "std_rel_error"])
        for row in curve:
            writer.writerow(row)
    os.replace(tmp, args.out)
    for n, med, mean, std in curve:
        print(f"n={n:3d}  median {med:.4f}  mean {mean:.4f}  std {std:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsfnet",
        description="dynamic spatial filtering experiments on synthetic "
                    "multichannel data")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset file")
    _add_common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train one model unit")
    _add_common(p)
    p.add_argument("--dataset", required=True, help="dataset file from gen")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="run the corruption robustness sweep")
    _add_common(p)
    p.add_argument("--dataset", required=True, help="dataset file from gen")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("inspect", help="dump per-window DSF filters")
    _add_common(p)
    p.add_argument("--dataset", required=True, help="dataset file from gen")
    p.add_argument("--eta", type=float, default=0.0,
                   help="corruption strength for the inspected condition")
    p.add_argument("--n-corrupted", type=int, default=None,
                   help="exact number of corrupted channels")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("taylor-bench",
                       help="truncated-series matrix-log error curve")
    _add_common(p)
    p.add_argument("--n-windows", type=int, default=1000)
    p.add_argument("--terms", default="5,10,20,50",
                   help="comma-separated term counts")
    p.set_defaults(func=cmd_taylor_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
