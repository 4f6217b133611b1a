"""Token extraction and piece synthesis, including the inverse contract."""

import numpy as np
import pytest

from pitchgen.midi import (
    EventKind,
    MidiFile,
    end_of_track,
    note_off,
    note_on,
    parse_midi,
    tempo_event,
    write_midi,
)
from pitchgen.score import (
    EmptySequenceError,
    NoNotesError,
    PitchToken,
    extract_pitch_tokens,
    piece_to_midi,
    tokens_to_piece,
)


class TestPitchToken:
    def test_canonical_text(self):
        assert PitchToken.from_keys([64, 60, 67]).text == "60.64.67"
        assert PitchToken((60,)).text == "60"

    def test_parse_round_trip(self):
        for text in ("60", "60.64.67", "0.127"):
            assert PitchToken.parse(text).text == text

    def test_duplicates_collapse(self):
        assert PitchToken.from_keys([60, 60, 64]).keys == (60, 64)

    def test_validation(self):
        with pytest.raises(ValueError):
            PitchToken(())
        with pytest.raises(ValueError):
            PitchToken((64, 60))
        with pytest.raises(ValueError):
            PitchToken((128,))
        with pytest.raises(ValueError):
            PitchToken.parse("60.xy")


class TestExtraction:
    def test_same_tick_becomes_chord(self):
        track = [note_on(0, 64, 90), note_on(0, 60, 90), note_on(0, 67, 90), end_of_track(0)]
        midi = MidiFile(format=0, division=480, tracks=[track])
        assert [t.text for t in extract_pitch_tokens(midi)] == ["60.64.67"]

    def test_distinct_ticks_stay_separate(self):
        track = [note_on(0, 60, 90), note_on(480, 62, 90), end_of_track(480)]
        midi = MidiFile(format=0, division=480, tracks=[track])
        assert [t.text for t in extract_pitch_tokens(midi)] == ["60", "62"]

    def test_meta_only_file_raises(self):
        midi = MidiFile(format=0, division=480,
                        tracks=[[tempo_event(0, 500_000), end_of_track(0)]])
        with pytest.raises(NoNotesError):
            extract_pitch_tokens(midi)

    def test_duplicate_keys_at_tick_collapse(self):
        track = [note_on(0, 60, 90), note_on(0, 60, 40), end_of_track(0)]
        midi = MidiFile(format=0, division=480, tracks=[track])
        assert [t.text for t in extract_pitch_tokens(midi)] == ["60"]

    def test_track_order_and_note_offs_irrelevant(self):
        """Shuffling NoteOffs around and splitting tracks never changes tokens."""
        rng = np.random.default_rng(11)
        for _ in range(30):
            n = int(rng.integers(1, 40))
            ons = [note_on(int(t), int(k), 90)
                   for t, k in zip(np.sort(rng.integers(0, 2000, n)), rng.integers(0, 128, n))]
            offs = [note_off(int(rng.integers(0, 3000)), int(k))
                    for k in rng.integers(0, 128, size=int(rng.integers(0, 20)))]
            single = MidiFile(format=0, division=480, tracks=[ons + offs])
            mixed = list(ons) + offs
            rng.shuffle(mixed)
            half = len(mixed) // 2
            split = MidiFile(format=1, division=480, tracks=[mixed[:half], mixed[half:]])
            assert extract_pitch_tokens(single) == extract_pitch_tokens(split)


class TestSynthesis:
    def test_single_token_timing(self):
        midi = piece_to_midi(tokens_to_piece([PitchToken.parse("60")], 0.5, 0.5), division=480)
        (events,) = midi.tracks
        notes = [e for e in events if e.kind in (EventKind.NOTE_ON, EventKind.NOTE_OFF)]
        assert notes[0] == note_on(0, 60, 90)
        assert notes[1] == note_off(240, 60)

    def test_two_token_onsets(self):
        piece = tokens_to_piece([PitchToken.parse("60"), PitchToken.parse("62")], 0.5, 0.5)
        (events,) = piece_to_midi(piece, division=480).tracks
        onsets = [e.tick for e in events if e.kind is EventKind.NOTE_ON]
        assert onsets == [0, 240]

    def test_tempo_and_end_of_track(self):
        (events,) = piece_to_midi(tokens_to_piece([PitchToken.parse("60")])).tracks
        assert events[0].kind is EventKind.TEMPO
        assert events[0].tick == 0
        assert events[-1].kind is EventKind.END_OF_TRACK
        assert events[-1].tick == max(e.tick for e in events)

    def test_empty_sequence_raises(self):
        with pytest.raises(EmptySequenceError):
            tokens_to_piece([])

    def test_extraction_inverts_synthesis(self):
        """extract(synthesize(tokens)) == tokens for random token lists."""
        rng = np.random.default_rng(5)
        for _ in range(50):
            tokens = _random_tokens(rng, int(rng.integers(1, 200)))
            midi = piece_to_midi(tokens_to_piece(tokens))
            assert extract_pitch_tokens(midi) == tokens

    def test_inverse_survives_file_round_trip(self):
        rng = np.random.default_rng(6)
        tokens = _random_tokens(rng, 64)
        data = write_midi(piece_to_midi(tokens_to_piece(tokens)))
        assert extract_pitch_tokens(parse_midi(data)) == tokens


def _random_tokens(rng: np.random.Generator, count: int) -> list[PitchToken]:
    return [
        PitchToken.from_keys(rng.choice(128, size=int(rng.integers(1, 5)), replace=False))
        for _ in range(count)
    ]
