"""Command line interface.

Subcommands:
  encode   dump a spike train (flat binary + raster figure) for inspection
  train    run one training config, writing metrics CSV, timing CSV, and
           a training-curve figure
  compare  sweep encoders under a shared config, writing per-encoder
           metrics plus a comparison CSV, markdown table, and bar chart

A JSON config supplies the TrainConfig schema via --config; --seed,
--epochs, and --out-dir override it.  The dataset root falls back to the
SPIKEBIT_DATA_DIR environment variable.  Exit code 0 on success, nonzero
with a diagnostic on stderr otherwise.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from .data import DataError
from .encoders import EncodingError, encode
from .harness import (
    DATA_DIR_ENV,
    ConfigError,
    HarnessError,
    TrainConfig,
    compare_encoders,
    dump_spike_train,
    emit_comparison_csv,
    emit_csv,
    emit_markdown,
    emit_timing_csv,
    load_datasets,
    run_experiment,
)
from .tensor import SeededRng, TensorError


def _load_config(path: str | None) -> TrainConfig:
    if path is None:
        return TrainConfig()
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return TrainConfig.from_dict(raw)


def _apply_overrides(cfg: TrainConfig, args: argparse.Namespace) -> TrainConfig:
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "epochs", None) is not None:
        cfg = replace(cfg, epochs=args.epochs)
    return cfg


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    cfg.validate()
    os.makedirs(args.out_dir, exist_ok=True)
    result = run_experiment(cfg)

    metrics_path = os.path.join(args.out_dir, "metrics.csv")
    emit_csv(result.records, metrics_path, zero_wall_seconds=True)
    emit_timing_csv(result.records, os.path.join(args.out_dir, "timing.csv"))
    from .figures import save_training_curves

    save_training_curves(result.records, os.path.join(args.out_dir, "training_curves.png"))
    with open(os.path.join(args.out_dir, "config.json"), "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)

    final = result.records[-1]
    print(f"dataset={cfg.dataset.name} encoder={cfg.encoder} arch={cfg.arch} "
          f"optimizer={cfg.optimizer.kind} seed={cfg.seed}")
    print(f"final val loss={final.loss:.4f} top1={final.top1:.4f}")
    print(f"wrote {metrics_path}")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    cfg.validate()
    os.makedirs(args.out_dir, exist_ok=True)
    result = compare_encoders(cfg, args.encoders)

    for enc, run in result.runs.items():
        emit_csv(run.records, os.path.join(args.out_dir, f"metrics_{enc}.csv"),
                 zero_wall_seconds=True)
        emit_timing_csv(run.records, os.path.join(args.out_dir, f"timing_{enc}.csv"))
    emit_comparison_csv(result, os.path.join(args.out_dir, "comparison.csv"))
    md_path = os.path.join(args.out_dir, "comparison.md")
    emit_markdown(result.table, md_path)
    from .figures import save_comparison_chart

    save_comparison_chart(result.table, os.path.join(args.out_dir, "comparison.png"))

    for enc in result.table.encoders:
        marker = " best" if enc == result.table.best else ""
        delta = result.table.deltas.get(enc)
        extra = f" ({delta * 100:+.2f} vs baseline)" if delta is not None else ""
        print(f"{enc}: top1={result.table.top1[enc]:.4f}{extra}{marker}")
    print(f"wrote {md_path}")
    return 0


def _cmd_encode(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    cfg.validate()
    os.makedirs(args.out_dir, exist_ok=True)
    train_ds, _ = load_datasets(cfg)
    imgs = train_ds.take(args.count).images
    rng = SeededRng(cfg.seed).child(99)
    st = encode(cfg.encoder, imgs, cfg.encoder_cfg, rng)

    dump_path = os.path.join(args.out_dir, "spikes.bin")
    dump_spike_train(st, dump_path)
    from .figures import save_spike_raster

    save_spike_raster(st, os.path.join(args.out_dir, "spike_raster.png"))
    shape = st.spikes.shape
    print(f"encoder={st.encoding_tag} shape={shape} "
          f"spikes={int(st.spikes.data.sum())}")
    print(f"wrote {dump_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikebit",
        description="Spike coding toolkit: encoders, surrogate-gradient "
                    "training, encoder comparison.",
        epilog=f"Dataset root: --config dataset.root, else ${DATA_DIR_ENV}, else ./data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file with the TrainConfig schema")
    common.add_argument("--seed", type=int, default=None, help="override config seed")
    common.add_argument("--out-dir", default="out", help="output directory")

    p_train = sub.add_parser("train", parents=[common], help="run one training config")
    p_train.add_argument("--epochs", type=int, default=None, help="override config epochs")
    p_train.set_defaults(func=_cmd_train)

    p_comp = sub.add_parser("compare", parents=[common], help="sweep encoders")
    p_comp.add_argument("--epochs", type=int, default=None, help="override config epochs")
    p_comp.add_argument("--encoders", nargs="+", required=True,
                        help="two or more encoder names to compare")
    p_comp.set_defaults(func=_cmd_compare)

    p_enc = sub.add_parser("encode", parents=[common],
                           help="dump a spike train for inspection")
    p_enc.add_argument("--count", type=int, default=4, help="samples to encode")
    p_enc.set_defaults(func=_cmd_encode)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError, EncodingError, HarnessError, TensorError,
            ValueError) as exc:
        print(f"spikebit: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
