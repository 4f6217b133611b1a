"""Regenerate the committed test fixtures under tests/fixtures/.

Corpus files are periodic melodies built from motifs of all-distinct tokens,
so every context determines its continuation uniquely and a small network
can memorize them. The reference file is spelled out byte by byte to stay
independent of this package's writer; its dump is committed as a golden.
"""

from __future__ import annotations

import sys
from pathlib import Path

from pitchgen.midi import dump_events, parse_midi, write_midi
from pitchgen.score import PitchToken, extract_pitch_tokens, piece_to_midi, tokens_to_piece

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

MOTIF_A = [
    "60", "62", "64", "60.64.67", "65", "67", "62.65.69", "69", "71",
    "64.67.71", "72", "74", "65.69.72", "76", "77", "67.71.74", "79",
    "55.59.62", "81", "83", "57.60.64", "84", "86", "59.62.65", "88",
]
MOTIF_B = [
    "48", "50", "48.52.55", "52", "53", "50.53.57", "55", "57",
    "52.55.59", "59", "36", "36.40.43", "38", "40", "38.41.45", "41",
    "43", "40.43.47", "45", "41.45.48", "47", "43.47.50", "45.48.52",
]
REPEATS = 4

# Handcrafted format-1 file: 2 tracks, division 480. Track 0 carries time
# signature, tempo and a name; track 1 exercises running status (including a
# velocity-0 NoteOn that must normalize to NoteOff) and a SysEx event.
REFERENCE_BYTES = bytes.fromhex(
    "4d546864" "00000006" "0001" "0002" "01e0"        # MThd, format 1, 2 trks
    "4d54726b" "0000001d"                              # MTrk, 29 bytes
    "00" "ff5804" "04021808"                           # time signature 4/4
    "00" "ff5103" "07a120"                             # tempo 500000 us
    "00" "ff0305" "496e74726f"                         # track name "Intro"
    "8f00" "ff2f00"                                    # EOT at tick 1920
    "4d54726b" "00000023"                              # MTrk, 35 bytes
    "00" "c005"                                        # program change 5
    "00" "903c64"                                      # NoteOn 60 vel 100
    "00" "4360"                                        # running: NoteOn 67
    "60" "3c00"                                        # running: vel 0 -> off
    "00" "804340"                                      # NoteOff 67 vel 64
    "00" "903e5a"                                      # NoteOn 62 vel 90
    "8140" "3e00"                                      # running: off at +192
    "00" "f003" "0102f7"                               # SysEx, 3 data bytes
    "60" "ff2f00"                                      # EOT at tick 384
)


def build_corpus_file(motif: list[str], path: Path) -> None:
    tokens = [PitchToken.parse(t) for t in motif] * REPEATS
    data = write_midi(piece_to_midi(tokens_to_piece(tokens)))
    path.write_bytes(data)
    back = extract_pitch_tokens(parse_midi(data))
    assert [t.text for t in back] == [t.text for t in tokens], f"round trip broke for {path}"


def main() -> int:
    corpus = FIXTURES / "corpus"
    corpus.mkdir(parents=True, exist_ok=True)
    assert len(set(MOTIF_A)) == len(MOTIF_A) and len(set(MOTIF_B)) == len(MOTIF_B)
    assert not set(MOTIF_A) & set(MOTIF_B), "fixture token sets must stay disjoint"
    build_corpus_file(MOTIF_A, corpus / "fixture_a.mid")
    build_corpus_file(MOTIF_B, corpus / "fixture_b.mid")

    (FIXTURES / "reference.mid").write_bytes(REFERENCE_BYTES)
    dump = dump_events(parse_midi(REFERENCE_BYTES))
    (FIXTURES / "reference_dump.txt").write_text(dump, encoding="utf-8")
    sys.stdout.write(dump)
    print(f"fixtures written under {FIXTURES}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
