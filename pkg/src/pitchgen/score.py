"""Pitch tokens: the note/chord units extracted from and rendered to MIDI.

A token is the set of keys struck at one tick. Its canonical text form is
the ascending key numbers joined by dots ("60", "60.64.67"); vocabulary
identity depends on this form being bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .midi import (
    DEFAULT_TEMPO_US,
    EventKind,
    MidiFile,
    end_of_track,
    note_off,
    note_on,
    tempo_event,
)

DEFAULT_STEP_QUARTERS = 0.5
DEFAULT_NOTE_QUARTERS = 0.5
DEFAULT_VELOCITY = 90
DEFAULT_DIVISION = 480


class NoNotesError(ValueError):
    """The MIDI file contains no NoteOn events to tokenize."""


class EmptySequenceError(ValueError):
    """A piece needs at least one token."""


@dataclass(frozen=True)
class PitchToken:
    """A single note or chord; keys are distinct and strictly ascending."""

    keys: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.keys:
            raise ValueError("token needs at least one key")
        for k in self.keys:
            if not 0 <= k <= 127:
                raise ValueError(f"key {k} outside 0..127")
        if any(a >= b for a, b in zip(self.keys, self.keys[1:])):
            raise ValueError(f"keys not strictly ascending: {self.keys}")

    @classmethod
    def from_keys(cls, keys: Iterable[int]) -> "PitchToken":
        """Canonicalize arbitrary key iterables: sort and drop duplicates."""
        return cls(tuple(sorted(set(keys))))

    @classmethod
    def parse(cls, text: str) -> "PitchToken":
        try:
            keys = tuple(int(part) for part in text.split("."))
        except ValueError:
            raise ValueError(f"malformed token text {text!r}") from None
        return cls(keys)

    @property
    def text(self) -> str:
        return ".".join(str(k) for k in self.keys)

    def __str__(self) -> str:
        return self.text


@dataclass
class Piece:
    """A token sequence on a fixed rhythmic grid.

    step_quarters is the onset spacing between consecutive tokens and
    note_quarters the sounding length of each key, both in quarter notes.
    """

    tokens: list[PitchToken]
    step_quarters: float = DEFAULT_STEP_QUARTERS
    note_quarters: float = DEFAULT_NOTE_QUARTERS

    def __post_init__(self) -> None:
        if not self.tokens:
            raise EmptySequenceError("piece has no tokens")
        if self.step_quarters <= 0 or self.note_quarters <= 0:
            raise ValueError("step_quarters and note_quarters must be positive")


def extract_pitch_tokens(midi: MidiFile) -> list[PitchToken]:
    """Group NoteOn events sharing an exact tick into tokens, across all tracks.

    NoteOff events and non-note events are ignored; duplicate keys at one
    tick collapse. Raises NoNotesError when the file has no NoteOn at all.
    """
    by_tick: dict[int, set[int]] = {}
    for track in midi.tracks:
        for ev in track:
            if ev.kind is EventKind.NOTE_ON:
                by_tick.setdefault(ev.tick, set()).add(ev.key)
    if not by_tick:
        raise NoNotesError("no NoteOn events in file")
    return [PitchToken.from_keys(by_tick[t]) for t in sorted(by_tick)]


def tokens_to_piece(
    tokens: Iterable[PitchToken],
    step_quarters: float = DEFAULT_STEP_QUARTERS,
    note_quarters: float = DEFAULT_NOTE_QUARTERS,
) -> Piece:
    return Piece(list(tokens), step_quarters, note_quarters)


def piece_to_midi(
    piece: Piece,
    division: int = DEFAULT_DIVISION,
    tempo_us_per_quarter: int = DEFAULT_TEMPO_US,
) -> MidiFile:
    """Render a piece on its fixed grid as a single-track format-0 file.

    Token i sounds at tick round(i * step_quarters * division); every key
    gets a NoteOn (velocity 90) and a NoteOff note_quarters later.
    """
    # Fraction arithmetic keeps onset ticks exact for any float grid values.
    step = Fraction(piece.step_quarters) * division
    dur = round(Fraction(piece.note_quarters) * division)
    events = [tempo_event(0, tempo_us_per_quarter)]
    last_off = 0
    for i, token in enumerate(piece.tokens):
        onset = round(i * step)
        for key in token.keys:
            events.append(note_on(onset, key, DEFAULT_VELOCITY))
            events.append(note_off(onset + dur, key))
        last_off = max(last_off, onset + dur)
    events.sort(key=lambda ev: ev.tick)
    events.append(end_of_track(last_off))
    return MidiFile(format=0, division=division, tracks=[events])
