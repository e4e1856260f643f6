"""Command line for the full pipeline: synthetic data, training, evaluation,
ablation table, hyperparameter sweeps, landscape slices, bank inspection.

Exit codes: 0 success, 1 usage error, 2 runtime failure (I/O, non-finite
loss abort). Config precedence per key: --set/--seed flags, then the
--config file, then the ROBUST_CLF_SEED environment variable (seed only),
then built-in defaults. Every run directory receives the effective config;
re-running from that file reproduces outputs bit for bit.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bank import (
    BankFormatError,
    class_counts,
    generate_synthetic,
    load_bank,
    save_bank,
)
from .config import (
    SEED_ENV_VAR,
    TrainConfig,
    parse_config_text,
    parse_value,
    save_config,
)
from .metrics import evaluate, write_roc_csv
from .mlp import load_model, save_model
from .trainer import (
    NanLossError,
    landscape_slice,
    run_ablation,
    run_sweep,
    train,
    write_landscape_csv,
    write_run_record,
    write_sweep_csv,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage by default; this CLI reserves 2 for
    # runtime failures, so usage problems exit 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override one config key (repeatable)")
    p.add_argument("--seed", type=int,
                   help=f"run seed (wins over --config and ${SEED_ENV_VAR})")


def _effective_config(args) -> TrainConfig:
    merged = {}
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            merged["seed"] = parse_value("seed", env_seed)
        except ValueError as e:
            raise _UsageError(f"${SEED_ENV_VAR}: {e}") from None
    try:
        if getattr(args, "config", None):
            with open(args.config, "r", encoding="utf-8") as fh:
                merged.update(parse_config_text(fh.read()))
        for item in getattr(args, "overrides", []):
            if "=" not in item:
                raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
            key, _, raw = item.partition("=")
            merged[key.strip()] = parse_value(key.strip(), raw)
        if getattr(args, "seed", None) is not None:
            merged["seed"] = args.seed
        return replace(TrainConfig(), **merged)
    except ValueError as e:
        raise _UsageError(str(e)) from None


def _resolve_seed(flag_seed) -> int:
    if flag_seed is not None:
        return flag_seed
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            return parse_value("seed", env_seed)
        except ValueError as e:
            raise _UsageError(f"${SEED_ENV_VAR}: {e}") from None
    return 0


def _parse_values(spec: str) -> list[float]:
    """Sweep values: 'start:stop:step' (inclusive) or 'v1,v2,...'."""
    try:
        if ":" in spec:
            start_s, stop_s, step_s = spec.split(":")
            start, stop, step = float(start_s), float(stop_s), float(step_s)
            if step <= 0 or stop < start:
                raise ValueError
            count = int(round((stop - start) / step)) + 1
            return [round(start + i * step, 12) for i in range(count)]
        return [float(v) for v in spec.split(",") if v.strip()]
    except ValueError:
        raise _UsageError(
            f"bad --values {spec!r}: expected start:stop:step or comma list"
        ) from None


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_synth(args) -> int:
    seed = _resolve_seed(args.seed)
    bank = generate_synthetic(args.n_pos, args.n_neg, args.dim, args.sep, seed)
    save_bank(bank, args.out)
    n_pos, n_neg = class_counts(bank)
    print(f"wrote {args.out}: n={len(bank)} dim={bank.dim} pos={n_pos} neg={n_neg} seed={seed}")
    return 0


def cmd_inspect_bank(args) -> int:
    bank = load_bank(args.bank)
    n_pos, n_neg = class_counts(bank)
    print(f"path={args.bank}")
    print(f"n={len(bank)}")
    print(f"dim={bank.dim}")
    print(f"pos={n_pos}")
    print(f"neg={n_neg}")
    return 0


def _print_epoch(es) -> None:
    print(
        f"epoch {es.epoch} total {es.mean_total:.6f} cvar {es.mean_cvar:.6f} "
        f"auc_term {es.mean_auc:.6f} lambda {es.mean_lambda:.4f} "
        f"lr {es.lr:.6g} ({es.wall_time_s:.2f}s)"
    )


def cmd_train(args) -> int:
    cfg = _effective_config(args)
    bank = load_bank(args.bank)
    out = _out_dir(args.out)
    save_config(cfg, out / "effective.cfg")
    try:
        model, record = train(bank, cfg, progress=_print_epoch)
    except NanLossError as e:
        dump = out / "nan_dump.txt"
        with open(dump, "w", encoding="utf-8") as fh:
            for key, value in e.state.items():
                fh.write(f"{key}={value!r}\n")
        print(f"error: {e} (state dumped to {dump})", file=sys.stderr)
        return 2
    save_model(model, out / "model.ckpt")
    record.checkpoint_path = "model.ckpt"
    write_run_record(record, out / "run_record.txt")
    print(f"trained {record.n_examples} examples for {len(record.epochs)} epochs")
    print(f"wrote {out / 'model.ckpt'} and {out / 'run_record.txt'}")
    return 0


def cmd_eval(args) -> int:
    bank = load_bank(args.bank)
    model = load_model(args.model)
    report = evaluate(model, bank)
    lines = [
        f"n_pos={report.n_pos}",
        f"n_neg={report.n_neg}",
        f"auc={report.auc!r}",
        f"auc_percent={100.0 * report.auc:.6f}",
    ]
    print("\n".join(lines))
    if args.out:
        out = _out_dir(args.out)
        with open(out / "eval.txt", "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        write_roc_csv(report.roc_points, out / "roc.csv")
        print(f"wrote {out / 'eval.txt'} and {out / 'roc.csv'}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _effective_config(args)
    bank = load_bank(args.bank)
    out = _out_dir(args.out)
    save_config(cfg, out / "effective.cfg")
    rows = run_ablation(bank, cfg, holdout_fraction=args.holdout_fraction, jobs=args.jobs)
    with open(out / "ablation.csv", "w", encoding="utf-8") as fh:
        fh.write("variant,auc\n")
        for name, auc in rows:
            fh.write(f"{name},{auc!r}\n")
    for name, auc in rows:
        print(f"{name} auc={auc:.6f}")
    print(f"wrote {out / 'ablation.csv'}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _effective_config(args)
    values = _parse_values(args.values)
    bank = load_bank(args.bank)
    out = _out_dir(args.out)
    save_config(cfg, out / "effective.cfg")
    rows = run_sweep(bank, cfg, args.parameter, values,
                     holdout_fraction=args.holdout_fraction, jobs=args.jobs)
    csv_path = out / f"sweep_{args.parameter}.csv"
    write_sweep_csv(rows, csv_path, value_column=args.parameter)
    for value, auc in rows:
        print(f"{args.parameter}={value} auc={auc:.6f}")
    print(f"wrote {csv_path}")
    return 0


def cmd_landscape(args) -> int:
    cfg = _effective_config(args)
    bank = load_bank(args.bank)
    model = load_model(args.model)
    out = _out_dir(args.out)
    offsets, losses = landscape_slice(
        model, bank, cfg, grid=args.grid, radius=args.radius, seed=cfg.seed
    )
    write_landscape_csv(offsets, losses, out / "landscape.csv")
    center = float(losses[args.grid // 2, args.grid // 2]) if args.grid % 2 == 1 else float("nan")
    print(f"grid={args.grid} radius={args.radius} center_loss={center!r} "
          f"min={float(losses.min())!r} max={float(losses.max())!r}")
    print(f"wrote {out / 'landscape.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="robustclf",
        description="Train and evaluate the real-vs-generated embedding detector.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="write a synthetic two-Gaussian bank")
    p.add_argument("--n-pos", type=int, required=True)
    p.add_argument("--n-neg", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--sep", type=float, required=True,
                   help="positive-class mean offset along coordinate 0")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help=".csv extension selects CSV, else binary")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("inspect-bank", help="print bank shape and class counts")
    p.add_argument("bank")
    p.set_defaults(func=cmd_inspect_bank)

    p = sub.add_parser("train", help="train a detector on a feature bank")
    p.add_argument("--bank", required=True)
    p.add_argument("--out", required=True, help="run directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="exact AUC of a checkpoint on a bank")
    p.add_argument("--bank", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="optional directory for eval.txt and roc.csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train the five component ablation variants")
    p.add_argument("--bank", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--holdout-fraction", type=float, default=0.25)
    p.add_argument("--jobs", type=int, default=1)
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="train once per value of alpha or gamma")
    p.add_argument("--bank", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--parameter", choices=("alpha", "gamma"), required=True)
    p.add_argument("--values", required=True, help="start:stop:step or comma list")
    p.add_argument("--holdout-fraction", type=float, default=0.25)
    p.add_argument("--jobs", type=int, default=1)
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("landscape", help="loss over a 2-D random parameter slice")
    p.add_argument("--bank", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid", type=int, default=21)
    p.add_argument("--radius", type=float, default=1.0)
    _add_config_flags(p)
    p.set_defaults(func=cmd_landscape)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except NanLossError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, BankFormatError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
