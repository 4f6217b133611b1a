"""RMSProp training loop with per-epoch binary checkpoints.

Training is fully deterministic given (corpus, config, seed): sample
shuffling and dropout masks draw from two separate seeded streams, so runs
that differ only in network width still consume identical data orders. Both
stream states are checkpointed, which makes an interrupted-then-resumed run
bitwise equal to an uninterrupted one.

Checkpoint file layout (little-endian): magic "MGCK", version u32, metadata
length u32 + UTF-8 JSON (epoch, loss, spec, vocab hash, rng states), tensor
count u32, then per tensor: name length u16 + name, rank u8, dims u32 each,
row-major float64 payload.
"""

from __future__ import annotations

import csv
import io
import json
import signal
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import dataset as ds_mod
from .dataset import EncodedDataset, Vocabulary, WindowSpec
from .neural import (
    NetworkParams,
    NetworkSpec,
    init_params,
    mean_cross_entropy,
    network_backward,
    network_forward,
)
from .util import atomic_write_bytes

CHECKPOINT_MAGIC = b"MGCK"
CHECKPOINT_VERSION = 1
LOSS_LOG_NAME = "loss_log.csv"


class EmptyDatasetError(ValueError):
    """Training needs at least one sample."""


class NonFiniteGradientError(FloatingPointError):
    """A gradient turned NaN or infinite; training cannot continue."""


class CheckpointError(Exception):
    """Base class for checkpoint file problems."""


class BadMagicError(CheckpointError):
    """File does not start with the checkpoint magic."""


class VersionMismatchError(CheckpointError):
    """Checkpoint was written by an incompatible format version."""


class TruncatedFileError(CheckpointError):
    """Checkpoint ends in the middle of a record."""


class ShapeMismatchError(CheckpointError):
    """Stored tensor does not match the shape the embedded spec implies."""


@dataclass
class RmsPropState:
    """Optimizer hyperparameters plus one accumulator per parameter tensor."""

    learning_rate: float = 0.001
    decay: float = 0.9
    epsilon: float = 1e-7
    s: NetworkParams | None = None

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or not 0 <= self.decay < 1 or self.epsilon <= 0:
            raise ValueError(f"invalid RMSProp hyperparameters: {self}")

    @classmethod
    def for_spec(cls, spec: NetworkSpec, learning_rate: float = 0.001,
                 decay: float = 0.9, epsilon: float = 1e-7) -> "RmsPropState":
        return cls(learning_rate, decay, epsilon, NetworkParams.zeros(spec))


def rmsprop_step(params: NetworkParams, grads: NetworkParams, state: RmsPropState) -> None:
    """One in-place update: s <- ds*s + (1-d)*g^2; p <- p - lr*g/(sqrt(s)+eps)."""
    grad_map = dict(grads.named_tensors())
    acc_map = dict(state.s.named_tensors())
    for name, p in params.named_tensors():
        g = grad_map[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        if not np.isfinite(g).all():
            raise NonFiniteGradientError(f"non-finite gradient in {name}")
        s = acc_map[name]
        s *= state.decay
        s += (1.0 - state.decay) * g * g
        assert s.min() >= 0.0, f"negative RMSProp accumulator in {name}"
        p -= state.learning_rate * g / (np.sqrt(s) + state.epsilon)


@dataclass
class TrainingRng:
    """Separate streams for data order and network noise (dropout)."""

    data: np.random.Generator
    net: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "TrainingRng":
        data_seq, net_seq = np.random.SeedSequence(seed).spawn(2)
        return cls(np.random.default_rng(data_seq), np.random.default_rng(net_seq))

    def state(self) -> dict:
        return {"data": self.data.bit_generator.state, "net": self.net.bit_generator.state}

    def set_state(self, state: dict) -> None:
        self.data.bit_generator.state = state["data"]
        self.net.bit_generator.state = state["net"]


def train_epoch(
    data: EncodedDataset,
    params: NetworkParams,
    spec: NetworkSpec,
    opt_state: RmsPropState,
    batch_size: int,
    rng: TrainingRng,
    stop: Callable[[], bool] | None = None,
) -> tuple[float, bool]:
    """One pass over the shuffled dataset with one optimizer step per batch.

    Returns (mean loss weighted by batch size, stopped_early). When `stop`
    reports True the current batch still completes, then the epoch ends.
    """
    n = data.num_samples
    if n == 0:
        raise EmptyDatasetError("dataset has no samples")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = rng.data.permutation(n)
    target_ids = data.target_ids
    loss_sum = 0.0
    processed = 0
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        xb = data.inputs[idx]
        ids = target_ids[idx]
        probs, cache = network_forward(xb, params, spec, mode="train", rng=rng.net)
        loss_sum += mean_cross_entropy(probs, ids) * len(idx)
        grads = network_backward(cache, ids)
        rmsprop_step(params, grads, opt_state)
        processed += len(idx)
        if stop is not None and stop():
            return loss_sum / processed, processed < n
    return loss_sum / n, False


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    seconds: float


@dataclass
class TrainingReport:
    """Per-epoch losses plus the lowest-loss (earliest on ties) epoch."""

    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    best_loss: float | None = None
    interrupted: bool = False
    checkpoint_dir: Path | None = None

    def note_epoch(self, record: EpochRecord) -> bool:
        """Track a finished epoch; returns True when it is a new best."""
        self.records.append(record)
        if self.best_loss is None or record.mean_loss < self.best_loss:
            self.best_loss = record.mean_loss
            self.best_epoch = record.epoch
            return True
        return False


@dataclass
class Checkpoint:
    """Everything needed to resume or generate: weights, optimizer, rng."""

    epoch: int
    loss: float
    spec: NetworkSpec
    vocab_hash: str
    rng_state: dict
    params: NetworkParams
    opt_state: RmsPropState
    stride: int = 1
    partial: bool = False
    version: int = CHECKPOINT_VERSION


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    atomic_write_bytes(Path(path), checkpoint_to_bytes(ckpt))


def checkpoint_to_bytes(ckpt: Checkpoint) -> bytes:
    meta = {
        "epoch": ckpt.epoch,
        "loss": ckpt.loss,
        "spec": ckpt.spec.to_dict(),
        "vocab_hash": ckpt.vocab_hash,
        "rng": ckpt.rng_state,
        "optimizer": {
            "learning_rate": ckpt.opt_state.learning_rate,
            "decay": ckpt.opt_state.decay,
            "epsilon": ckpt.opt_state.epsilon,
        },
        "stride": ckpt.stride,
        "partial": ckpt.partial,
    }
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out = io.BytesIO()
    out.write(CHECKPOINT_MAGIC)
    out.write(struct.pack("<I", ckpt.version))
    out.write(struct.pack("<I", len(meta_bytes)))
    out.write(meta_bytes)
    named = [("params." + n, t) for n, t in ckpt.params.named_tensors()]
    named += [("rms." + n, t) for n, t in ckpt.opt_state.s.named_tensors()]
    out.write(struct.pack("<I", len(named)))
    for name, tensor in named:
        name_bytes = name.encode("utf-8")
        out.write(struct.pack("<H", len(name_bytes)))
        out.write(name_bytes)
        out.write(struct.pack("<B", tensor.ndim))
        for dim in tensor.shape:
            out.write(struct.pack("<I", dim))
        out.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
    return out.getvalue()


def load_checkpoint(path: str | Path) -> Checkpoint:
    return checkpoint_from_bytes(Path(path).read_bytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(f"checkpoint ends inside {what}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def checkpoint_from_bytes(data: bytes) -> Checkpoint:
    r = _Reader(data)
    if r.take(4, "magic") != CHECKPOINT_MAGIC:
        raise BadMagicError("not a checkpoint file (bad magic)")
    version = r.u32("version")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    meta = json.loads(r.take(r.u32("metadata length"), "metadata").decode("utf-8"))
    spec = NetworkSpec.from_dict(meta["spec"])

    tensors: dict[str, np.ndarray] = {}
    for _ in range(r.u32("tensor count")):
        name = r.take(struct.unpack("<H", r.take(2, "name length"))[0], "name").decode("utf-8")
        rank = r.take(1, "rank")[0]
        shape = tuple(r.u32("dim") for _ in range(rank))
        count = int(np.prod(shape)) if shape else 1
        payload = r.take(count * 8, f"tensor {name}")
        tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()

    params = _fill_from_stored(NetworkParams.zeros(spec), tensors, "params.")
    opt = RmsPropState(
        learning_rate=meta["optimizer"]["learning_rate"],
        decay=meta["optimizer"]["decay"],
        epsilon=meta["optimizer"]["epsilon"],
        s=_fill_from_stored(NetworkParams.zeros(spec), tensors, "rms."),
    )
    return Checkpoint(
        epoch=meta["epoch"],
        loss=meta["loss"],
        spec=spec,
        vocab_hash=meta["vocab_hash"],
        rng_state=meta["rng"],
        params=params,
        opt_state=opt,
        stride=meta.get("stride", 1),
        partial=meta.get("partial", False),
        version=version,
    )


def _fill_from_stored(
    target: NetworkParams, stored: dict[str, np.ndarray], prefix: str
) -> NetworkParams:
    for name, tensor in target.named_tensors():
        key = prefix + name
        if key not in stored:
            raise CheckpointError(f"checkpoint is missing tensor {key}")
        if stored[key].shape != tensor.shape:
            raise ShapeMismatchError(
                f"tensor {key} has shape {stored[key].shape}, spec implies {tensor.shape}"
            )
        tensor[...] = stored[key]
    return target


@dataclass
class TrainConfig:
    """Everything `train` needs; mirrors the CLI flags."""

    corpus_dir: str | Path
    out_dir: str | Path
    vocab_path: str | Path | None = None
    epochs: int = 100
    window_len: int = 80
    stride: int = 1
    lstm_width: int = 512
    dense1_width: int = 256
    dropout_rate: float = 0.3
    dense1_relu: bool = False
    batch_size: int = 64
    learning_rate: float = 0.001
    decay: float = 0.9
    epsilon: float = 1e-7
    seed: int = 0
    resume: str | Path | None = None
    keep_best_only: bool = False
    patience: int | None = None    # optional early stop, off by default
    stop_loss: float | None = None  # optional loss threshold, off by default

    def network_spec(self, vocab_size: int) -> NetworkSpec:
        return NetworkSpec(
            vocab_size=vocab_size,
            window_len=self.window_len,
            lstm_width=self.lstm_width,
            dense1_width=self.dense1_width,
            dropout_rate=self.dropout_rate,
            dense1_relu=self.dense1_relu,
        )


def checkpoint_path(out_dir: Path, epoch: int) -> Path:
    return Path(out_dir) / f"ckpt_epoch_{epoch:04d}.ckpt"


def best_checkpoint_path(out_dir: Path) -> Path:
    return Path(out_dir) / "ckpt_best.ckpt"


def load_training_data(config: TrainConfig) -> tuple[EncodedDataset, Vocabulary]:
    sequences = ds_mod.load_corpus(config.corpus_dir)
    if config.vocab_path is not None:
        vocab = Vocabulary.load(config.vocab_path)
    else:
        vocab = ds_mod.build_vocabulary(sequences)
    window_spec = WindowSpec(config.window_len, config.stride)
    return ds_mod.encode_corpus(sequences, vocab, window_spec), vocab


def train(config: TrainConfig, log: Callable[[str], None] | None = None) -> TrainingReport:
    """Run up to config.epochs epochs, checkpointing after every one.

    SIGINT is handled gracefully: the in-flight batch finishes, a final
    checkpoint is written, and the report comes back with interrupted=True.
    Resuming from a checkpoint restores weights, optimizer accumulators and
    both rng streams, so the continuation matches an uninterrupted run.
    """
    say = log or (lambda msg: None)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data, vocab = load_training_data(config)
    spec = config.network_spec(len(vocab))
    vocab_hash = vocab.content_hash()

    rng = TrainingRng.from_seed(config.seed)
    init_seq = np.random.SeedSequence(config.seed).spawn(3)[2]
    start_epoch = 1
    report = TrainingReport(checkpoint_dir=out_dir)

    if config.resume is not None:
        ckpt = load_checkpoint(config.resume)
        if ckpt.spec != spec:
            raise ShapeMismatchError(
                f"resume checkpoint spec {ckpt.spec} != configured spec {spec}"
            )
        if ckpt.vocab_hash != vocab_hash:
            raise CheckpointError("resume checkpoint was trained with a different vocabulary")
        params = ckpt.params
        opt_state = ckpt.opt_state
        rng.set_state(ckpt.rng_state)
        start_epoch = ckpt.epoch + 1
        _restore_prior_records(out_dir, start_epoch, report)
    else:
        params = init_params(spec, np.random.default_rng(init_seq))
        opt_state = RmsPropState.for_spec(
            spec, config.learning_rate, config.decay, config.epsilon
        )

    _write_loss_log(out_dir, report.records)

    interrupted = False

    def on_sigint(signum, frame):
        nonlocal interrupted
        interrupted = True
        say("interrupt received; finishing current batch and checkpointing")

    written: dict[int, Path] = {}
    previous_handler = signal.signal(signal.SIGINT, on_sigint)
    try:
        for epoch in range(start_epoch, config.epochs + 1):
            if interrupted:
                break
            started = time.perf_counter()
            mean_loss, partial = train_epoch(
                data, params, spec, opt_state, config.batch_size, rng,
                stop=lambda: interrupted,
            )
            seconds = time.perf_counter() - started
            ckpt = Checkpoint(
                epoch=epoch, loss=mean_loss, spec=spec, vocab_hash=vocab_hash,
                rng_state=rng.state(), params=params, opt_state=opt_state,
                stride=config.stride, partial=partial,
            )
            path = checkpoint_path(out_dir, epoch)
            _write_or_abort(path, checkpoint_to_bytes(ckpt))
            written[epoch] = path
            is_best = report.note_epoch(EpochRecord(epoch, mean_loss, seconds))
            if is_best:
                _write_or_abort(best_checkpoint_path(out_dir), path.read_bytes())
            _write_loss_log(out_dir, report.records)
            say(f"epoch {epoch}: loss {mean_loss:.6f} ({seconds:.2f}s)"
                + (" [partial]" if partial else ""))
            if config.keep_best_only:
                for other_epoch, other_path in list(written.items()):
                    if other_epoch != report.best_epoch:
                        other_path.unlink(missing_ok=True)
                        del written[other_epoch]
            if partial:
                break
            if config.stop_loss is not None and mean_loss < config.stop_loss:
                say(f"stopping: loss below {config.stop_loss}")
                break
            if (
                config.patience is not None
                and report.best_epoch is not None
                and epoch - report.best_epoch >= config.patience
            ):
                say(f"stopping: no improvement for {config.patience} epochs")
                break
    finally:
        signal.signal(signal.SIGINT, previous_handler)
    report.interrupted = interrupted
    return report


def _restore_prior_records(out_dir: Path, start_epoch: int, report: TrainingReport) -> None:
    """Carry loss-log rows from the interrupted run into the resumed report."""
    log_path = out_dir / LOSS_LOG_NAME
    if not log_path.exists():
        return
    with log_path.open(newline="") as handle:
        for row in csv.DictReader(handle):
            epoch = int(row["epoch"])
            if epoch < start_epoch:
                report.note_epoch(EpochRecord(epoch, float(row["mean_loss"]), float(row["seconds"])))


def _write_loss_log(out_dir: Path, records: list[EpochRecord]) -> None:
    lines = ["epoch,mean_loss,seconds"]
    lines += [f"{r.epoch},{r.mean_loss!r},{r.seconds:.3f}" for r in records]
    _write_or_abort(out_dir / LOSS_LOG_NAME, ("\n".join(lines) + "\n").encode("utf-8"))


def _write_or_abort(path: Path, data: bytes) -> None:
    try:
        atomic_write_bytes(path, data)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
