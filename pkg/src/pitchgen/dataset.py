"""Vocabulary construction and windowed training tensors.

Each source sequence is cut into sliding windows of window_len input ids
plus one target id; inputs are encoded as scalar id/V values per timestep
(shape [N, window_len, 1]) and targets as one-hot rows.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import midi, score


class EmptyCorpusError(ValueError):
    """Corpus yielded no tokens at all."""


class CorpusTooShortError(ValueError):
    """No sequence is long enough to produce a single training window."""


class IdOutOfRangeError(ValueError):
    """Token id is not below the vocabulary size."""


class UnknownTokenError(KeyError):
    """Token text does not exist in the vocabulary."""


@dataclass(frozen=True)
class Vocabulary:
    """Bijective token text <-> id mapping; ids follow lexicographic order."""

    tokens: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if any(a >= b for a, b in zip(self.tokens, self.tokens[1:])):
            raise ValueError("tokens must be strictly ascending")
        object.__setattr__(self, "index", {tok: i for i, tok in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def encode_token(self, token: str) -> int:
        try:
            return self.index[token]
        except KeyError:
            raise UnknownTokenError(f"token {token!r} not in vocabulary") from None

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.encode_token(t) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        out = []
        for i in ids:
            if not 0 <= i < len(self.tokens):
                raise IdOutOfRangeError(f"id {i} outside vocabulary of size {len(self.tokens)}")
            out.append(self.tokens[i])
        return out

    def to_text(self) -> str:
        """Serialized form: one token per line, line number (0-based) = id."""
        return "".join(tok + "\n" for tok in self.tokens)

    @classmethod
    def from_text(cls, text: str) -> "Vocabulary":
        return cls(tuple(line for line in text.splitlines()))

    def content_hash(self) -> str:
        """SHA-256 of the serialized vocabulary; checkpoints pin this."""
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def save(self, path: str | Path) -> None:
        from .util import atomic_write_bytes

        atomic_write_bytes(Path(path), self.to_text().encode("utf-8"))

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class WindowSpec:
    window_len: int = 80
    stride: int = 1

    def __post_init__(self) -> None:
        if self.window_len < 1:
            raise ValueError("window_len must be >= 1")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


@dataclass(frozen=True)
class TrainingWindow:
    input_ids: tuple[int, ...]
    target_id: int


@dataclass
class EncodedDataset:
    """Normalized inputs [N, T, 1] plus one-hot targets [N, V], read-only."""

    inputs: np.ndarray
    targets: np.ndarray
    vocab: Vocabulary
    spec: WindowSpec

    def __post_init__(self) -> None:
        self.inputs.flags.writeable = False
        self.targets.flags.writeable = False

    @property
    def num_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def target_ids(self) -> np.ndarray:
        return np.argmax(self.targets, axis=1)


def build_vocabulary(corpus: Iterable[Iterable[str]]) -> Vocabulary:
    """Sorted set of all distinct token texts; deterministic across runs."""
    seen: set[str] = set()
    for sequence in corpus:
        seen.update(sequence)
    if not seen:
        raise EmptyCorpusError("corpus contains no tokens")
    return Vocabulary(tuple(sorted(seen)))


def make_windows(ids: Sequence[int], spec: WindowSpec) -> list[TrainingWindow]:
    """All windows of one sequence: input ids[p : p+window_len], target ids[p+window_len].

    Starts run p = 0, stride, 2*stride, ... while the target index stays in
    range. Raises CorpusTooShortError when the sequence yields no window.
    """
    T = spec.window_len
    windows = [
        TrainingWindow(tuple(ids[p : p + T]), ids[p + T])
        for p in range(0, max(len(ids) - T, 0), spec.stride)
    ]
    if not windows:
        raise CorpusTooShortError(
            f"sequence of length {len(ids)} yields no window of length {T}"
        )
    return windows


def one_hot(index: int, size: int) -> np.ndarray:
    if not 0 <= index < size:
        raise IdOutOfRangeError(f"id {index} outside range of {size} classes")
    row = np.zeros(size, dtype=np.float64)
    row[index] = 1.0
    return row


def normalize_inputs(
    windows: Sequence[TrainingWindow], vocab: Vocabulary, spec: WindowSpec
) -> EncodedDataset:
    """Encode windows as id/V scalars per timestep and one-hot target rows."""
    V = len(vocab)
    n = len(windows)
    inputs = np.empty((n, spec.window_len, 1), dtype=np.float64)
    targets = np.zeros((n, V), dtype=np.float64)
    for s, w in enumerate(windows):
        ids = np.asarray(w.input_ids, dtype=np.float64)
        if ids.size != spec.window_len:
            raise ValueError(f"window {s} has length {ids.size}, expected {spec.window_len}")
        if w.target_id >= V or any(i >= V for i in w.input_ids):
            raise IdOutOfRangeError(f"window {s} holds ids beyond vocabulary size {V}")
        inputs[s, :, 0] = ids / V
        targets[s, w.target_id] = 1.0
    return EncodedDataset(inputs=inputs, targets=targets, vocab=vocab, spec=spec)


def encode_corpus(
    sequences: Iterable[Sequence[str]], vocab: Vocabulary, spec: WindowSpec
) -> EncodedDataset:
    """Window every sequence separately (windows never span sequences).

    Sequences too short for a single window are skipped; raises
    CorpusTooShortError when nothing remains.
    """
    windows: list[TrainingWindow] = []
    for sequence in sequences:
        ids = vocab.encode(sequence)
        if len(ids) > spec.window_len:
            windows.extend(make_windows(ids, spec))
    if not windows:
        raise CorpusTooShortError(
            f"no sequence exceeds window_len {spec.window_len}; nothing to train on"
        )
    return normalize_inputs(windows, vocab, spec)


def corpus_files(directory: str | Path) -> list[Path]:
    """MIDI files of a corpus directory in deterministic (sorted) order."""
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus path not found: {root}")
    return sorted(p for p in root.iterdir() if p.suffix.lower() in (".mid", ".midi"))


def load_corpus(directory: str | Path) -> list[list[str]]:
    """Tokenize every MIDI file of a directory; one token-text list per file."""
    paths = corpus_files(directory)
    if not paths:
        raise EmptyCorpusError(f"no .mid/.midi files under {directory}")
    sequences = []
    for path in paths:
        parsed = midi.parse_midi(path.read_bytes())
        sequences.append([tok.text for tok in score.extract_pitch_tokens(parsed)])
    return sequences
