"""Shared fixtures: corpus paths, random MIDI event lists, cycle-oracle model.

The cycle oracle is a hand-crafted checkpoint whose argmax prediction is
always (last input id + 1) mod V: the LSTM stack is saturated into a
monotone scalar path through the last input, and the output layer's lines
are arranged so each id's measured activation selects the next id. It gives
generation tests an exactly predictable model.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from pitchgen.dataset import Vocabulary
from pitchgen.midi import EventKind, MidiEvent, note_off, note_on, tempo_event
from pitchgen.neural import NetworkParams, NetworkSpec, network_forward
from pitchgen.optim import Checkpoint, RmsPropState, TrainingRng, save_checkpoint

FIXTURES = Path(__file__).resolve().parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    return FIXTURES / "corpus"


def random_event_list(rng: np.random.Generator, max_events: int = 40) -> list[MidiEvent]:
    """Random well-formed events for writer/parser round-trip checks.

    NoteOn velocities stay >= 1 so parse-time velocity-0 normalization cannot
    blur the comparison.
    """
    events: list[MidiEvent] = []
    tick = 0
    for _ in range(int(rng.integers(1, max_events + 1))):
        tick += int(rng.integers(0, 400))
        kind = int(rng.integers(0, 10))
        if kind < 4:
            events.append(note_on(tick, int(rng.integers(0, 128)), int(rng.integers(1, 128)),
                                  channel=int(rng.integers(0, 16))))
        elif kind < 8:
            events.append(note_off(tick, int(rng.integers(0, 128)), int(rng.integers(0, 128)),
                                   channel=int(rng.integers(0, 16))))
        elif kind == 8:
            events.append(tempo_event(tick, int(rng.integers(10_000, 2_000_000))))
        else:
            payload = bytes([0x01]) + bytes(rng.integers(0, 128, size=int(rng.integers(0, 6))))
            events.append(MidiEvent(tick=tick, kind=EventKind.OTHER_META, raw_payload=payload))
    return events


def build_cycle_oracle(vocab_size: int = 7, window_len: int = 3) -> Checkpoint:
    """Craft weights so argmax(forward(buffer)) == (buffer[-1] + 1) mod V."""
    spec = NetworkSpec(
        vocab_size=vocab_size, window_len=window_len,
        lstm_width=1, dense1_width=1, dropout_rate=0.0,
    )
    params = NetworkParams.zeros(spec)
    for layer, gain in zip(params.lstm, (4.0, 2.5, 2.5)):
        layer.b[0] = 30.0    # input gate ~ 1
        layer.b[1] = -30.0   # forget gate ~ 0: no history, pure f(last x)
        layer.b[3] = 30.0    # output gate ~ 1
        layer.W[2, 0] = gain  # candidate = tanh(gain * x), monotone in x
    params.dense1.W[0, 0] = 1.0

    # Measure the scalar each id produces, then pick output lines whose upper
    # envelope hands interval k to class (k+1) mod V.
    V = vocab_size
    levels = np.empty(V)
    for token_id in range(V):
        x = np.full((1, window_len, 1), token_id / V)
        _, cache = network_forward(x, params, spec, mode="infer")
        levels[token_id] = cache.dense1_in[0, 0]
    assert np.all(np.diff(levels) > 1e-6), "oracle path must stay monotone in the last id"

    scale = 200.0
    slopes = np.empty(V)
    intercepts = np.empty(V)
    beta = 0.0
    for k in range(V):
        winner = (k + 1) % V
        slopes[winner] = k * scale
        intercepts[winner] = beta
        if k + 1 < V:
            beta -= scale * (levels[k] + levels[k + 1]) / 2.0
    params.dense2.W[:, 0] = slopes
    params.dense2.b[:] = intercepts

    for token_id in range(V):  # verify the recurrence holds on the real path
        history = np.random.default_rng(token_id).integers(0, V, size=window_len)
        history[-1] = token_id
        x = (history / V).reshape(1, window_len, 1)
        probs, _ = network_forward(x, params, spec, mode="infer")
        assert int(np.argmax(probs[0])) == (token_id + 1) % V

    vocab = Vocabulary(tuple(str(60 + i) for i in range(V)))
    return Checkpoint(
        epoch=1, loss=0.0, spec=spec, vocab_hash=vocab.content_hash(),
        rng_state=TrainingRng.from_seed(0).state(), params=params,
        opt_state=RmsPropState.for_spec(spec), stride=1,
    )


@pytest.fixture(scope="session")
def cycle_oracle() -> Checkpoint:
    return build_cycle_oracle()


@pytest.fixture()
def cycle_oracle_on_disk(cycle_oracle, tmp_path) -> tuple[Path, Path]:
    """(checkpoint path, vocabulary path) for pipeline-level tests."""
    ckpt_path = tmp_path / "oracle.ckpt"
    vocab_path = tmp_path / "vocab.txt"
    save_checkpoint(ckpt_path, cycle_oracle)
    V = cycle_oracle.spec.vocab_size
    Vocabulary(tuple(str(60 + i) for i in range(V))).save(vocab_path)
    return ckpt_path, vocab_path
