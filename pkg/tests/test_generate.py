"""Seed selection, sampling, the rolling-window loop, and MIDI emission."""

import numpy as np
import pytest

import pitchgen.generate as gen_mod
from pitchgen.dataset import (
    CorpusTooShortError,
    TrainingWindow,
    UnknownTokenError,
    Vocabulary,
)
from pitchgen.generate import (
    GenerationConfig,
    VocabularyHashMismatchError,
    emit_piece,
    generate_ids,
    generate_sequence,
    sample_index,
    select_seed,
    write_token_sidecar,
)
from pitchgen.midi import EventKind, parse_midi, write_midi
from pitchgen.score import PitchToken, extract_pitch_tokens, piece_to_midi, tokens_to_piece

WINDOWS = [TrainingWindow((0, 1, 2), 3), TrainingWindow((1, 2, 3), 4), TrainingWindow((2, 3, 4), 5)]


class TestSelectSeed:
    def test_explicit_index(self):
        assert select_seed(WINDOWS, np.random.default_rng(0), index=0) == [0, 1, 2]

    def test_random_is_deterministic(self):
        picks = {tuple(select_seed(WINDOWS, np.random.default_rng(3))) for _ in range(5)}
        assert len(picks) == 1

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            select_seed(WINDOWS, np.random.default_rng(0), index=3)

    def test_no_windows(self):
        with pytest.raises(CorpusTooShortError):
            select_seed([], np.random.default_rng(0))


class TestSampleIndex:
    def test_argmax(self):
        assert sample_index(np.array([0.1, 0.7, 0.2])) == 1

    def test_argmax_tie_takes_smallest(self):
        assert sample_index(np.array([0.5, 0.5])) == 0

    def test_low_temperature_concentrates(self):
        rng = np.random.default_rng(12)
        probs = np.array([0.1, 0.7, 0.2])
        draws = [sample_index(probs, "temperature", rng, temperature=0.01)
                 for _ in range(10_000)]
        assert all(d == 1 for d in draws)

    def test_unit_temperature_matches_distribution(self):
        rng = np.random.default_rng(55)
        probs = np.array([0.1, 0.7, 0.2])
        n = 20_000
        draws = np.array([sample_index(probs, "temperature", rng, 1.0) for _ in range(n)])
        for idx, p in enumerate(probs):
            freq = (draws == idx).mean()
            assert abs(freq - p) < 4 * np.sqrt(p * (1 - p) / n)

    def test_zero_probability_never_drawn(self):
        rng = np.random.default_rng(4)
        probs = np.array([0.0, 1.0, 0.0])
        assert all(sample_index(probs, "temperature", rng, 2.0) == 1 for _ in range(100))


class TestGenerationLoop:
    def test_cycle_oracle_short(self, cycle_oracle):
        V = cycle_oracle.spec.vocab_size
        out = generate_ids(cycle_oracle, [0, 1, 2], 4)
        assert out == [(2 + i) % V for i in range(1, 5)]

    def test_cycle_oracle_long_recurrence(self, cycle_oracle):
        V = cycle_oracle.spec.vocab_size
        out = generate_ids(cycle_oracle, [4, 0, 5], 60)
        assert out == [(5 + i) % V for i in range(1, 61)]

    def test_window_stays_fixed_length(self, cycle_oracle, monkeypatch):
        """Every forward pass sees exactly window_len inputs."""
        shapes = []
        real = gen_mod.network_forward

        def spy(x, *args, **kwargs):
            shapes.append(x.shape)
            return real(x, *args, **kwargs)

        monkeypatch.setattr(gen_mod, "network_forward", spy)
        generate_ids(cycle_oracle, [0, 1, 2], 25)
        assert shapes == [(1, 3, 1)] * 25

    def test_single_step_runs_one_forward(self, cycle_oracle, monkeypatch):
        calls = []
        real = gen_mod.network_forward
        monkeypatch.setattr(gen_mod, "network_forward",
                            lambda *a, **k: calls.append(1) or real(*a, **k))
        out = generate_ids(cycle_oracle, [0, 1, 2], 1)
        assert len(calls) == 1
        assert out == [3]

    def test_seed_length_validated(self, cycle_oracle):
        with pytest.raises(ValueError):
            generate_ids(cycle_oracle, [0, 1], 4)


class TestPipeline:
    def _corpus(self, tmp_path, tokens):
        corpus = tmp_path / "corpus"
        corpus.mkdir(exist_ok=True)
        piece = tokens_to_piece([PitchToken.parse(t) for t in tokens])
        (corpus / "seed.mid").write_bytes(write_midi(piece_to_midi(piece)))
        return corpus

    def test_generate_sequence_deterministic(self, cycle_oracle_on_disk, tmp_path):
        ckpt_path, vocab_path = cycle_oracle_on_disk
        corpus = self._corpus(tmp_path, ["60", "61", "62", "63", "64"])
        config = GenerationConfig(
            checkpoint_path=ckpt_path, vocab_path=vocab_path, corpus_dir=corpus,
            length=12, seed=5,
        )
        a = generate_sequence(config)
        b = generate_sequence(config)
        assert a.ids == b.ids
        assert a.seed_ids == b.seed_ids

    def test_explicit_seed_index_follows_recurrence(self, cycle_oracle_on_disk, tmp_path):
        ckpt_path, vocab_path = cycle_oracle_on_disk
        corpus = self._corpus(tmp_path, ["60", "61", "62", "63", "64"])
        config = GenerationConfig(
            checkpoint_path=ckpt_path, vocab_path=vocab_path, corpus_dir=corpus,
            length=5, seed_index=0,
        )
        result = generate_sequence(config)
        assert result.seed_ids == [0, 1, 2]
        assert result.ids == [3, 4, 5, 6, 0]
        assert result.output_ids(include_seed=True) == [0, 1, 2, 3, 4, 5, 6, 0]

    def test_vocabulary_hash_checked(self, cycle_oracle_on_disk, tmp_path):
        ckpt_path, vocab_path = cycle_oracle_on_disk
        corpus = self._corpus(tmp_path, ["60", "61", "62", "63"])
        vocab_path.write_text("59\n60\n61\n62\n63\n64\n65\n", encoding="utf-8")
        config = GenerationConfig(
            checkpoint_path=ckpt_path, vocab_path=vocab_path, corpus_dir=corpus, length=2,
        )
        with pytest.raises(VocabularyHashMismatchError):
            generate_sequence(config)

    def test_unknown_corpus_token_rejected(self, cycle_oracle_on_disk, tmp_path):
        ckpt_path, vocab_path = cycle_oracle_on_disk
        corpus = self._corpus(tmp_path, ["60", "61", "90", "62"])  # 90 not in vocab
        config = GenerationConfig(
            checkpoint_path=ckpt_path, vocab_path=vocab_path, corpus_dir=corpus, length=2,
        )
        with pytest.raises(UnknownTokenError):
            generate_sequence(config)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            GenerationConfig("c", "v", "d", length=0)
        with pytest.raises(ValueError):
            GenerationConfig("c", "v", "d", mode="temperature", temperature=0.0)
        with pytest.raises(ValueError):
            GenerationConfig("c", "v", "d", mode="weird")


class TestEmit:
    def test_single_note(self, tmp_path):
        out = tmp_path / "piece.mid"
        emit_piece([0], Vocabulary(("60",)), out)
        (events,) = parse_midi(out.read_bytes()).tracks
        notes = [e for e in events if e.kind in (EventKind.NOTE_ON, EventKind.NOTE_OFF)]
        assert [(e.kind, e.tick, e.key) for e in notes] == [
            (EventKind.NOTE_ON, 0, 60), (EventKind.NOTE_OFF, 240, 60),
        ]

    def test_re_extraction_reproduces_tokens(self, tmp_path):
        vocab = Vocabulary(("60", "60.64.67", "62"))
        ids = [0, 2, 1, 0, 1]
        out = tmp_path / "piece.mid"
        emit_piece(ids, vocab, out)
        tokens = extract_pitch_tokens(parse_midi(out.read_bytes()))
        assert [t.text for t in tokens] == vocab.decode(ids)

    def test_unwritable_path(self, tmp_path):
        target = tmp_path / "missing" / "deep" / "piece.mid"
        target.parent.parent.touch()  # a file where a directory is needed
        with pytest.raises(OSError):
            emit_piece([0], Vocabulary(("60",)), target)

    def test_token_sidecar(self, tmp_path):
        path = tmp_path / "tokens.txt"
        write_token_sidecar([0, 2], Vocabulary(("60", "61", "62")), path)
        assert path.read_text(encoding="utf-8") == "60\n62\n"
