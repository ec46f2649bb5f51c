"""Experiment runner: trains (encoder x architecture x optimizer)
combinations, records per-epoch metrics, and builds encoder-comparison
tables.

Every random choice (synthetic data, split, init, shuffling, rate
encoding) derives from the one experiment seed, so a config fully
determines the metrics.  Wall-clock durations are measured and carried
on the records, but the deterministic CSV writers live here too; see
emit_csv.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .autodiff import backward, cross_entropy
from .data import (
    DATASET_NAMES,
    Dataset,
    SplitSpec,
    batches,
    load_image_dataset,
    split,
    synthetic_dataset,
)
from .encoders import ENCODING_TAGS, EncoderConfig, encode, train_length
from .network import ARCH_NAMES, build_arch, forward_sequence, init_params
from .neuron import NeuronConfig
from .optim import OPTIMIZER_KINDS, make_optimizer
from .tensor import SeededRng

DATA_DIR_ENV = "SPIKEBIT_DATA_DIR"

# substream keys hung off the experiment seed
_STREAM_DATA = 1
_STREAM_SPLIT = 2
_STREAM_INIT = 3
_STREAM_SHUFFLE = 4
_STREAM_ENCODE_TRAIN = 5
_STREAM_ENCODE_VAL = 6

# hybrid encoders are compared against the plain scheme they extend
BASELINE_OF = {"hybrid_temporal_bit": "ttfs", "hybrid_rate_bit": "rate"}

CSV_HEADER = ("epoch", "split", "loss", "top1", "wall_seconds")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class HarnessError(RuntimeError):
    """Failure while emitting harness artifacts."""


@dataclass(frozen=True)
class DatasetConfig:
    name: str = "synthetic"
    root: str | None = None
    n: int = 512
    k: int = 3
    limit: int | None = None

    def resolved_root(self) -> str:
        return self.root or os.environ.get(DATA_DIR_ENV) or "data"


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    lr: float = 1e-3
    weight_decay: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    momentum: float = 0.9

    def build(self, params):
        if self.kind == "adam":
            return make_optimizer("adam", params, lr=self.lr, betas=self.betas,
                                  weight_decay=self.weight_decay)
        return make_optimizer("sgd", params, lr=self.lr, momentum=self.momentum,
                              weight_decay=self.weight_decay)


@dataclass(frozen=True)
class TrainConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    encoder: str = "hybrid_temporal_bit"
    encoder_cfg: EncoderConfig = field(default_factory=EncoderConfig)
    arch: str = "mlp"
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    neuron: NeuronConfig = field(default_factory=NeuronConfig)
    epochs: int = 3
    batch_size: int = 16
    seed: int = 0
    split: SplitSpec = field(default_factory=SplitSpec)

    def validate(self) -> None:
        if self.dataset.name not in DATASET_NAMES:
            raise ConfigError(f"unknown dataset {self.dataset.name!r}")
        if self.encoder not in ENCODING_TAGS:
            raise ConfigError(f"unknown encoder {self.encoder!r}")
        if self.arch not in ARCH_NAMES:
            raise ConfigError(f"unknown arch {self.arch!r}")
        if self.optimizer.kind not in OPTIMIZER_KINDS:
            raise ConfigError(f"unknown optimizer {self.optimizer.kind!r}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.dataset.name == "synthetic" and self.dataset.n < self.dataset.k:
            raise ConfigError("synthetic dataset needs n >= k")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        try:
            ds = DatasetConfig(**d.get("dataset", {}))
            enc_cfg = EncoderConfig(**d.get("encoder_cfg", {}))
            opt_d = dict(d.get("optimizer", {}))
            if "betas" in opt_d:
                opt_d["betas"] = tuple(opt_d["betas"])
            opt = OptimizerConfig(**opt_d)
            neuron = NeuronConfig(**d.get("neuron", {}))
            sp = SplitSpec(**d.get("split", {}))
            cfg = cls(
                dataset=ds,
                encoder=d.get("encoder", "hybrid_temporal_bit"),
                encoder_cfg=enc_cfg,
                arch=d.get("arch", "mlp"),
                optimizer=opt,
                neuron=neuron,
                epochs=int(d.get("epochs", 3)),
                batch_size=int(d.get("batch_size", 16)),
                seed=int(d.get("seed", 0)),
                split=sp,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config: {exc}") from exc
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {
            "dataset": {"name": self.dataset.name, "root": self.dataset.root,
                        "n": self.dataset.n, "k": self.dataset.k,
                        "limit": self.dataset.limit},
            "encoder": self.encoder,
            "encoder_cfg": {"t_ttfs": self.encoder_cfg.t_ttfs,
                            "t_rate": self.encoder_cfg.t_rate,
                            "bit_order": self.encoder_cfg.bit_order,
                            "rounding": self.encoder_cfg.rounding},
            "arch": self.arch,
            "optimizer": {"kind": self.optimizer.kind, "lr": self.optimizer.lr,
                          "weight_decay": self.optimizer.weight_decay,
                          "betas": list(self.optimizer.betas),
                          "momentum": self.optimizer.momentum},
            "neuron": {"v_th": self.neuron.v_th, "alpha": self.neuron.alpha},
            "epochs": self.epochs, "batch_size": self.batch_size, "seed": self.seed,
            "split": {"train_fraction": self.split.train_fraction,
                      "seed": self.split.seed,
                      "use_predefined": self.split.use_predefined},
        }


@dataclass(frozen=True)
class MetricsRecord:
    epoch: int
    split: str
    loss: float
    top1: float
    wall_seconds: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.top1 <= 1.0:
            raise ValueError(f"top1 must lie in [0, 1], got {self.top1}")


@dataclass
class ExperimentResult:
    config: TrainConfig
    records: list[MetricsRecord]
    timesteps_per_forward: set[int]

    @property
    def final_val_top1(self) -> float:
        return [r for r in self.records if r.split == "val"][-1].top1


def load_datasets(cfg: TrainConfig) -> tuple[Dataset, Dataset]:
    """Resolve the config's dataset into (train, val) per its split spec."""
    base = SeededRng(cfg.seed)
    split_spec = cfg.split
    if split_spec.seed == 0:
        derived = int(base.child(_STREAM_SPLIT).integers(0, 2 ** 62))
        split_spec = replace(split_spec, seed=derived)
    if cfg.dataset.name == "synthetic":
        ds = synthetic_dataset(cfg.dataset.n, cfg.dataset.k, base.child(_STREAM_DATA))
        predefined = None
    else:
        ds, predefined = load_image_dataset(cfg.dataset.name, cfg.dataset.resolved_root())
    if cfg.dataset.limit:
        ds = ds.take(cfg.dataset.limit)
    return split(ds, split_spec, predefined_val=predefined)


def _evaluate(net, params, cfg: TrainConfig, ds: Dataset, rng: SeededRng,
              timestep_log: set[int]) -> tuple[float, float]:
    loss_sum, correct, count = 0.0, 0, 0
    for bi, (imgs, labels) in enumerate(batches(ds, cfg.batch_size)):
        st = encode(cfg.encoder, imgs, cfg.encoder_cfg, rng.child(bi))
        readout, stats = forward_sequence(net, params, st, cfg.neuron)
        timestep_log.add(stats.timesteps)
        loss = cross_entropy(readout, labels.data)
        n = labels.shape[0]
        loss_sum += float(loss.data) * n
        correct += int((readout.data.argmax(axis=1) == labels.data).sum())
        count += n
    return loss_sum / count, correct / count


def run_experiment(cfg: TrainConfig) -> ExperimentResult:
    """Full training loop: encode, forward, loss, backward, optimizer step,
    with per-epoch train and val metrics.  Deterministic under cfg.seed."""
    cfg.validate()
    train_ds, val_ds = load_datasets(cfg)
    base = SeededRng(cfg.seed)

    input_shape = train_ds.images.shape[1:]
    net = build_arch(cfg.arch, input_shape, train_ds.class_count, cfg.neuron)
    params = init_params(net, base.child(_STREAM_INIT))
    opt = cfg.optimizer.build(params)

    records: list[MetricsRecord] = []
    timestep_log: set[int] = set()
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.monotonic()
        loss_sum, correct, count = 0.0, 0, 0
        shuffle_rng = base.child(_STREAM_SHUFFLE, epoch)
        enc_rng = base.child(_STREAM_ENCODE_TRAIN, epoch)
        for bi, (imgs, labels) in enumerate(
            batches(train_ds, cfg.batch_size, shuffle_rng, shuffle=True)
        ):
            st = encode(cfg.encoder, imgs, cfg.encoder_cfg, enc_rng.child(bi))
            readout, stats = forward_sequence(net, params, st, cfg.neuron)
            timestep_log.add(stats.timesteps)
            loss = cross_entropy(readout, labels.data)
            opt.zero_grad()
            backward(loss)
            opt.step()
            n = labels.shape[0]
            loss_sum += float(loss.data) * n
            correct += int((readout.data.argmax(axis=1) == labels.data).sum())
            count += n
        records.append(MetricsRecord(epoch, "train", loss_sum / count,
                                     correct / count, time.monotonic() - t0))

        t0 = time.monotonic()
        val_loss, val_top1 = _evaluate(net, params, cfg, val_ds,
                                       base.child(_STREAM_ENCODE_VAL, epoch), timestep_log)
        records.append(MetricsRecord(epoch, "val", val_loss, val_top1,
                                     time.monotonic() - t0))
    return ExperimentResult(cfg, records, timestep_log)


def expected_timesteps(cfg: TrainConfig, x_max: int = 255) -> int:
    return train_length(cfg.encoder, cfg.encoder_cfg, x_max)


@dataclass
class ComparisonTable:
    """One dataset/arch row across coding methods, with hybrid deltas."""

    dataset: str
    arch: str
    encoders: list[str]
    top1: dict[str, float]
    deltas: dict[str, float]
    best: str
    second: str | None


@dataclass
class ComparisonResult:
    table: ComparisonTable
    runs: dict[str, ExperimentResult]


def compare_encoders(base_cfg: TrainConfig, encoders: Sequence[str]) -> ComparisonResult:
    """Run one experiment per encoder with shared seed and architecture."""
    encoders = list(encoders)
    if len(encoders) < 2:
        raise ConfigError(f"need at least 2 encoders to compare, got {len(encoders)}")
    for enc in encoders:
        if enc not in ENCODING_TAGS:
            raise ConfigError(f"unknown encoder {enc!r}")
    if len(set(encoders)) != len(encoders):
        raise ConfigError("duplicate encoders in comparison")

    runs: dict[str, ExperimentResult] = {}
    for enc in encoders:
        runs[enc] = run_experiment(replace(base_cfg, encoder=enc))
    top1 = {enc: runs[enc].final_val_top1 for enc in encoders}
    deltas = {
        enc: top1[enc] - top1[BASELINE_OF[enc]]
        for enc in encoders
        if enc in BASELINE_OF and BASELINE_OF[enc] in top1
    }
    ranked = sorted(encoders, key=lambda e: top1[e], reverse=True)
    table = ComparisonTable(
        dataset=base_cfg.dataset.name,
        arch=base_cfg.arch,
        encoders=encoders,
        top1=top1,
        deltas=deltas,
        best=ranked[0],
        second=ranked[1] if len(ranked) > 1 else None,
    )
    return ComparisonResult(table, runs)


def emit_csv(records: Sequence[MetricsRecord], path: str,
             zero_wall_seconds: bool = False) -> None:
    """Write metrics as CSV.  zero_wall_seconds swaps measured durations
    for 0.0 so the file is byte-deterministic under a fixed seed; pair it
    with emit_timing_csv to keep the measured values."""
    if not records:
        raise HarnessError(f"refusing to write empty metrics to {path}")
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for r in records:
                wall = 0.0 if zero_wall_seconds else r.wall_seconds
                writer.writerow([r.epoch, r.split, repr(r.loss), repr(r.top1), repr(wall)])
    except OSError as exc:
        raise HarnessError(f"cannot write metrics to {path}: {exc}") from exc


def emit_timing_csv(records: Sequence[MetricsRecord], path: str) -> None:
    """Measured wall-clock durations; non-deterministic by nature."""
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("epoch", "split", "wall_seconds"))
            for r in records:
                writer.writerow([r.epoch, r.split, repr(r.wall_seconds)])
    except OSError as exc:
        raise HarnessError(f"cannot write timing to {path}: {exc}") from exc


def parse_csv(path: str) -> list[MetricsRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise HarnessError(f"{path}: unexpected header {header}")
        return [
            MetricsRecord(int(row[0]), row[1], float(row[2]), float(row[3]), float(row[4]))
            for row in reader
        ]


SPIKE_DUMP_HEADER = "<5I"  # little-endian uint32 extents (T, N, C, H, W)


def dump_spike_train(train, path: str) -> None:
    """Flat binary spike dump: 5-field extent header then uint8 payload in
    leading-axis (time-major, row-major) order."""
    import struct

    spikes = train.spikes.data
    if spikes.ndim != 5:
        raise HarnessError(f"spike dump expects a (T, N, C, H, W) train, got {spikes.shape}")
    try:
        with open(path, "wb") as fh:
            fh.write(struct.pack(SPIKE_DUMP_HEADER, *spikes.shape))
            fh.write(np.ascontiguousarray(spikes, dtype=np.uint8).tobytes())
    except OSError as exc:
        raise HarnessError(f"cannot write spike dump to {path}: {exc}") from exc


def load_spike_dump(path: str) -> np.ndarray:
    """Read back a dump_spike_train file as a (T, N, C, H, W) uint8 array."""
    import struct

    header_size = struct.calcsize(SPIKE_DUMP_HEADER)
    with open(path, "rb") as fh:
        header = fh.read(header_size)
        if len(header) != header_size:
            raise HarnessError(f"{path}: truncated spike dump header")
        shape = struct.unpack(SPIKE_DUMP_HEADER, header)
        payload = fh.read()
    expected = int(np.prod(shape))
    if len(payload) != expected:
        raise HarnessError(f"{path}: payload {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(shape)


def _format_cell(table: ComparisonTable, enc: str) -> str:
    cell = f"{table.top1[enc] * 100:.2f}"
    if enc in table.deltas:
        cell += f" ({table.deltas[enc] * 100:+.2f})"
    if enc == table.best:
        cell = f"**{cell}**"
    elif enc == table.second:
        cell = f"<u>{cell}</u>"
    return cell


def emit_markdown(table: ComparisonTable, path: str) -> None:
    """Comparison table: rows are the dataset/arch pair, columns the
    coding methods; best bold, second best underlined, hybrid deltas in
    parentheses."""
    lines = [
        "| Dataset (arch) | " + " | ".join(table.encoders) + " |",
        "|" + "---|" * (len(table.encoders) + 1),
        f"| {table.dataset} ({table.arch}) | "
        + " | ".join(_format_cell(table, enc) for enc in table.encoders)
        + " |",
    ]
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise HarnessError(f"cannot write table to {path}: {exc}") from exc


def emit_comparison_csv(result: ComparisonResult, path: str) -> None:
    """Summary CSV: one row per encoder with final top1 and hybrid delta."""
    table = result.table
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("encoder", "final_val_top1", "baseline", "delta"))
            for enc in table.encoders:
                base = BASELINE_OF.get(enc, "")
                delta = repr(table.deltas[enc]) if enc in table.deltas else ""
                writer.writerow([enc, repr(table.top1[enc]), base, delta])
    except OSError as exc:
        raise HarnessError(f"cannot write comparison to {path}: {exc}") from exc
