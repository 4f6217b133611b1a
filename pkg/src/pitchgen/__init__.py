"""Next-pitch LSTM modelling and MIDI piece generation, from scratch on numpy."""

__version__ = "0.1.0"

from .dataset import Vocabulary, WindowSpec, build_vocabulary, encode_corpus, load_corpus
from .generate import GenerationConfig, generate_sequence
from .midi import MidiEvent, MidiFile, parse_midi, write_midi
from .neural import NetworkParams, NetworkSpec, init_params, network_forward
from .optim import Checkpoint, TrainConfig, load_checkpoint, save_checkpoint, train
from .score import PitchToken, Piece, extract_pitch_tokens, piece_to_midi, tokens_to_piece

__all__ = [
    "Checkpoint",
    "GenerationConfig",
    "MidiEvent",
    "MidiFile",
    "NetworkParams",
    "NetworkSpec",
    "PitchToken",
    "Piece",
    "TrainConfig",
    "Vocabulary",
    "WindowSpec",
    "build_vocabulary",
    "encode_corpus",
    "extract_pitch_tokens",
    "generate_sequence",
    "init_params",
    "load_checkpoint",
    "load_corpus",
    "network_forward",
    "parse_midi",
    "piece_to_midi",
    "save_checkpoint",
    "tokens_to_piece",
    "train",
    "write_midi",
]
