"""Autoregressive piece generation from a trained checkpoint.

The loop keeps a rolling window of the last window_len token ids: each step
feeds the normalized window through the network in inference mode, picks the
next id (argmax by default, temperature sampling optionally), appends it and
drops the window's first element.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataset as ds_mod
from .dataset import TrainingWindow, Vocabulary, WindowSpec
from .midi import write_midi
from .neural import network_forward
from .optim import Checkpoint, load_checkpoint
from .score import PitchToken, piece_to_midi, tokens_to_piece
from .util import atomic_write_bytes


class VocabularyHashMismatchError(ValueError):
    """Vocabulary file content does not match the hash the checkpoint pinned."""


@dataclass
class GenerationConfig:
    checkpoint_path: str | Path
    vocab_path: str | Path
    corpus_dir: str | Path
    length: int = 200
    mode: str = "argmax"            # "argmax" or "temperature"
    temperature: float = 1.0
    seed: int = 0
    seed_index: int | None = None   # explicit window instead of a random one
    include_seed: bool = False

    def __post_init__(self) -> None:
        if self.length < 1:
            raise ValueError("length must be >= 1")
        if self.mode not in ("argmax", "temperature"):
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        if self.mode == "temperature" and self.temperature <= 0:
            raise ValueError("temperature must be > 0")


@dataclass
class GenerationResult:
    ids: list[int]          # newly produced ids, length == config.length
    seed_ids: list[int]
    vocab: Vocabulary
    checkpoint: Checkpoint

    def output_ids(self, include_seed: bool) -> list[int]:
        return self.seed_ids + self.ids if include_seed else list(self.ids)


def select_seed(
    windows: list[TrainingWindow],
    rng: np.random.Generator,
    index: int | None = None,
) -> list[int]:
    """Pick the input ids of a training window: uniformly random or by index."""
    if not windows:
        raise ds_mod.CorpusTooShortError("no windows available for seeding")
    if index is None:
        index = int(rng.integers(len(windows)))
    elif not 0 <= index < len(windows):
        raise IndexError(f"seed window index {index} outside 0..{len(windows) - 1}")
    return list(windows[index].input_ids)


def sample_index(
    probs: np.ndarray,
    mode: str = "argmax",
    rng: np.random.Generator | None = None,
    temperature: float = 1.0,
) -> int:
    """Pick a token id from a distribution.

    argmax resolves ties toward the smallest id. Temperature mode redraws
    from softmax(ln(probs)/tau) via inverse-CDF on the seeded rng.
    """
    if mode == "argmax":
        return int(np.argmax(probs))
    if mode != "temperature":
        raise ValueError(f"unknown sampling mode {mode!r}")
    if rng is None:
        raise ValueError("temperature sampling needs an rng")
    with np.errstate(divide="ignore"):
        logp = np.where(probs > 0, np.log(np.maximum(probs, 1e-300)), -np.inf)
    scaled = logp / temperature
    shifted = scaled - scaled.max()
    weights = np.exp(shifted)
    cdf = np.cumsum(weights / weights.sum())
    return int(np.searchsorted(cdf, rng.random(), side="right"))


def load_generation_inputs(
    config: GenerationConfig,
) -> tuple[Checkpoint, Vocabulary, list[TrainingWindow]]:
    """Load checkpoint + vocabulary, verify the hash, and window the corpus."""
    ckpt = load_checkpoint(config.checkpoint_path)
    vocab = Vocabulary.load(config.vocab_path)
    if vocab.content_hash() != ckpt.vocab_hash:
        raise VocabularyHashMismatchError(
            f"vocabulary at {config.vocab_path} does not match the checkpoint's hash"
        )
    window_spec = WindowSpec(ckpt.spec.window_len, ckpt.stride)
    windows: list[TrainingWindow] = []
    for sequence in ds_mod.load_corpus(config.corpus_dir):
        ids = vocab.encode(sequence)
        if len(ids) > window_spec.window_len:
            windows.extend(ds_mod.make_windows(ids, window_spec))
    if not windows:
        raise ds_mod.CorpusTooShortError(
            f"corpus yields no seed window of length {window_spec.window_len}"
        )
    return ckpt, vocab, windows


def generate_ids(
    ckpt: Checkpoint,
    seed_ids: list[int],
    length: int,
    mode: str = "argmax",
    temperature: float = 1.0,
    rng: np.random.Generator | None = None,
) -> list[int]:
    """Run the predict/append/drop-first loop for `length` steps."""
    spec = ckpt.spec
    window_len = spec.window_len
    if len(seed_ids) != window_len:
        raise ValueError(f"seed holds {len(seed_ids)} ids, window needs {window_len}")
    V = spec.vocab_size
    buffer = list(seed_ids)
    out: list[int] = []
    for _ in range(length):
        x = np.asarray(buffer, dtype=np.float64).reshape(1, window_len, 1) / V
        probs, _ = network_forward(x, ckpt.params, spec, mode="infer")
        next_id = sample_index(probs[0], mode, rng, temperature)
        out.append(next_id)
        buffer.append(next_id)
        del buffer[0]
        assert len(buffer) == window_len
    return out


def generate_sequence(config: GenerationConfig) -> GenerationResult:
    """End-to-end generation per config; deterministic for a fixed seed."""
    ckpt, vocab, windows = load_generation_inputs(config)
    rng = np.random.default_rng(config.seed)
    seed_ids = select_seed(windows, rng, config.seed_index)
    ids = generate_ids(ckpt, seed_ids, config.length, config.mode, config.temperature, rng)
    return GenerationResult(ids=ids, seed_ids=seed_ids, vocab=vocab, checkpoint=ckpt)


def emit_piece(
    ids: list[int],
    vocab: Vocabulary,
    out_path: str | Path,
    step_quarters: float = 0.5,
    note_quarters: float = 0.5,
) -> None:
    """Render ids as a MIDI file on the fixed grid; the write is atomic."""
    tokens = [PitchToken.parse(text) for text in vocab.decode(ids)]
    piece = tokens_to_piece(tokens, step_quarters, note_quarters)
    atomic_write_bytes(Path(out_path), write_midi(piece_to_midi(piece)))


def write_token_sidecar(ids: list[int], vocab: Vocabulary, path: str | Path) -> None:
    """One token text per line; handy for diffing two generation runs."""
    atomic_write_bytes(Path(path), "".join(t + "\n" for t in vocab.decode(ids)).encode("utf-8"))
