"""Command-line interface: ingest, train, generate, sweep, inspect, midi-dump.

Every subcommand accepts --config FILE, a flat JSON object whose keys are
flag names; explicit flags win over the file, the file wins over built-in
defaults. Exit codes: 0 success, 1 usage error, 2 runtime error (reported as
a single "error: ..." line on stderr).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from types import SimpleNamespace

from . import dataset as ds_mod
from .dataset import WindowSpec
from .experiments import SweepConfig, run_hidden_size_sweep, run_loss_curve
from .generate import GenerationConfig, emit_piece, generate_sequence, write_token_sidecar
from .midi import dump_events, parse_midi
from .optim import TrainConfig, load_checkpoint


class _UsageError(SystemExit):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageError(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="pitchgen", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("ingest", parents=[], help="build a vocabulary from a MIDI corpus",
                       argument_default=argparse.SUPPRESS)
    p.add_argument("--config", help="JSON file with flag defaults")
    p.add_argument("--corpus", help="directory of .mid files")
    p.add_argument("--out", help="vocabulary output path")
    p.add_argument("--window", type=int, help="window length (default 80)")
    p.add_argument("--stride", type=int, help="window stride (default 1)")

    p = sub.add_parser("train", help="train a model and checkpoint every epoch",
                       argument_default=argparse.SUPPRESS)
    p.add_argument("--config")
    p.add_argument("--corpus")
    p.add_argument("--vocab")
    p.add_argument("--out")
    p.add_argument("--epochs", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--hidden", type=int, help="LSTM width (default 512)")
    p.add_argument("--dense", type=int, help="first dense width (default 256)")
    p.add_argument("--dropout", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--keep-best-only", action="store_true")
    p.add_argument("--patience", type=int, help="early stop after N stale epochs")
    p.add_argument("--stop-loss", type=float, help="stop once mean loss drops below this")

    p = sub.add_parser("generate", help="generate a MIDI piece from a checkpoint",
                       argument_default=argparse.SUPPRESS)
    p.add_argument("--config")
    p.add_argument("--checkpoint")
    p.add_argument("--vocab")
    p.add_argument("--corpus", help="corpus the seed window is drawn from")
    p.add_argument("--out", help="output .mid path")
    p.add_argument("--length", type=int)
    p.add_argument("--sample", choices=["argmax", "temp"])
    p.add_argument("--temp", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--seed-index", type=int)
    p.add_argument("--include-seed", action="store_true")
    p.add_argument("--tokens-out", help="also write generated tokens, one per line")

    p = sub.add_parser("sweep", help="loss curves across several hidden widths",
                       argument_default=argparse.SUPPRESS)
    p.add_argument("--config")
    p.add_argument("--corpus")
    p.add_argument("--out")
    p.add_argument("--widths", help="comma-separated, e.g. 32,64,128,256")
    p.add_argument("--epochs", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--dense", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("inspect", help="print checkpoint metadata",
                       argument_default=argparse.SUPPRESS)
    p.add_argument("--config")
    p.add_argument("--checkpoint")

    p = sub.add_parser("midi-dump", help="human-readable event listing of a MIDI file",
                       argument_default=argparse.SUPPRESS)
    p.add_argument("path", nargs="?")
    return parser


_DEFAULTS: dict[str, dict] = {
    "ingest": {"corpus": None, "out": None, "window": 80, "stride": 1},
    "train": {
        "corpus": None, "vocab": None, "out": None, "epochs": 100, "window": 80,
        "stride": 1, "hidden": 512, "dense": 256, "dropout": 0.3, "batch": 64,
        "lr": 0.001, "seed": 0, "resume": None, "keep_best_only": False,
        "patience": None, "stop_loss": None,
    },
    "generate": {
        "checkpoint": None, "vocab": None, "corpus": None, "out": None,
        "length": 200, "sample": "argmax", "temp": 1.0, "seed": 0,
        "seed_index": None, "include_seed": False, "tokens_out": None,
    },
    "sweep": {
        "corpus": None, "out": None, "widths": "32,64,128,256", "epochs": 50,
        "window": 80, "stride": 1, "dense": 256, "dropout": 0.3, "batch": 64,
        "lr": 0.001, "seed": 0,
    },
    "inspect": {"checkpoint": None},
    "midi-dump": {"path": None},
}


def _merge_options(command: str, provided: dict, parser: _Parser) -> SimpleNamespace:
    merged = dict(_DEFAULTS[command])
    config_path = provided.pop("config", None)
    if config_path is not None:
        try:
            overlay = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise RuntimeError(f"cannot read config file {config_path}: {exc}") from exc
        if not isinstance(overlay, dict):
            raise RuntimeError(f"config file {config_path} must hold a JSON object")
        for key, value in overlay.items():
            norm = key.replace("-", "_")
            if norm not in merged:
                raise RuntimeError(f"config file {config_path}: unknown key {key!r}")
            merged[norm] = value
    merged.update(provided)
    return SimpleNamespace(**merged)


def _require(opts: SimpleNamespace, parser: _Parser, *names: str) -> None:
    for name in names:
        if getattr(opts, name) is None:
            parser.error(f"--{name.replace('_', '-')} is required")


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except _UsageError as exc:
        return exc.code
    if ns.command is None:
        parser.print_usage(sys.stderr)
        return 1
    provided = {k: v for k, v in vars(ns).items() if k != "command"}
    try:
        opts = _merge_options(ns.command, provided, parser)
        return _dispatch(ns.command, opts, parser)
    except _UsageError as exc:
        return exc.code
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(command: str, opts: SimpleNamespace, parser: _Parser) -> int:
    if command == "ingest":
        return _cmd_ingest(opts, parser)
    if command == "train":
        return _cmd_train(opts, parser)
    if command == "generate":
        return _cmd_generate(opts, parser)
    if command == "sweep":
        return _cmd_sweep(opts, parser)
    if command == "inspect":
        return _cmd_inspect(opts, parser)
    if command == "midi-dump":
        return _cmd_midi_dump(opts, parser)
    raise RuntimeError(f"unknown command {command!r}")


def _cmd_ingest(opts: SimpleNamespace, parser: _Parser) -> int:
    _require(opts, parser, "corpus", "out")
    spec = WindowSpec(opts.window, opts.stride)
    sequences = ds_mod.load_corpus(opts.corpus)
    vocab = ds_mod.build_vocabulary(sequences)
    vocab.save(opts.out)
    total = sum(len(s) for s in sequences)
    windows = sum(
        max(0, (len(s) - spec.window_len - 1) // spec.stride + 1)
        for s in sequences
        if len(s) > spec.window_len
    )
    print(f"files {len(sequences)}  tokens {total}  vocabulary {len(vocab)}  windows {windows}")
    print(f"wrote {opts.out}")
    return 0


def _cmd_train(opts: SimpleNamespace, parser: _Parser) -> int:
    _require(opts, parser, "corpus", "vocab", "out")
    config = TrainConfig(
        corpus_dir=opts.corpus,
        out_dir=opts.out,
        vocab_path=opts.vocab,
        epochs=opts.epochs,
        window_len=opts.window,
        stride=opts.stride,
        lstm_width=opts.hidden,
        dense1_width=opts.dense,
        dropout_rate=opts.dropout,
        batch_size=opts.batch,
        learning_rate=opts.lr,
        seed=opts.seed,
        resume=opts.resume,
        keep_best_only=opts.keep_best_only,
        patience=opts.patience,
        stop_loss=opts.stop_loss,
    )
    report = run_loss_curve(config, log=print)
    if report.interrupted:
        print("training interrupted; latest checkpoint written")
    return 0


def _cmd_generate(opts: SimpleNamespace, parser: _Parser) -> int:
    _require(opts, parser, "checkpoint", "vocab", "corpus", "out")
    config = GenerationConfig(
        checkpoint_path=opts.checkpoint,
        vocab_path=opts.vocab,
        corpus_dir=opts.corpus,
        length=opts.length,
        mode="temperature" if opts.sample == "temp" else "argmax",
        temperature=opts.temp,
        seed=opts.seed,
        seed_index=opts.seed_index,
        include_seed=opts.include_seed,
    )
    result = generate_sequence(config)
    out_ids = result.output_ids(config.include_seed)
    emit_piece(out_ids, result.vocab, opts.out)
    if opts.tokens_out is not None:
        write_token_sidecar(out_ids, result.vocab, opts.tokens_out)
    print(f"wrote {opts.out} ({len(out_ids)} tokens)")
    return 0


def _cmd_sweep(opts: SimpleNamespace, parser: _Parser) -> int:
    _require(opts, parser, "corpus", "out")
    widths = opts.widths
    if isinstance(widths, str):
        try:
            widths = tuple(int(part) for part in widths.split(",") if part)
        except ValueError:
            parser.error(f"bad --widths value {opts.widths!r}")
    sweep = SweepConfig(
        corpus_dir=opts.corpus,
        out_dir=opts.out,
        widths=tuple(widths),
        epochs=opts.epochs,
        seed=opts.seed,
        window_len=opts.window,
        stride=opts.stride,
        dense1_width=opts.dense,
        dropout_rate=opts.dropout,
        batch_size=opts.batch,
        learning_rate=opts.lr,
    )
    result = run_hidden_size_sweep(sweep, log=print)
    for width in result.widths:
        print(f"width {width}: best loss {result.best_loss(width):.6f}")
    return 0


def _cmd_inspect(opts: SimpleNamespace, parser: _Parser) -> int:
    _require(opts, parser, "checkpoint")
    ckpt = load_checkpoint(opts.checkpoint)
    spec = ckpt.spec
    n_params = sum(t.size for _, t in ckpt.params.named_tensors())
    print(f"checkpoint {opts.checkpoint}")
    print(f"  epoch {ckpt.epoch}  loss {ckpt.loss!r}{'  (partial epoch)' if ckpt.partial else ''}")
    print(
        f"  network: vocab {spec.vocab_size}  window {spec.window_len}  "
        f"lstm {spec.lstm_width}x3  dense {spec.dense1_width}  dropout {spec.dropout_rate}"
    )
    print(f"  parameters {n_params}")
    print(f"  optimizer: lr {ckpt.opt_state.learning_rate}  decay {ckpt.opt_state.decay}")
    print(f"  vocabulary hash {ckpt.vocab_hash}")
    return 0


def _cmd_midi_dump(opts: SimpleNamespace, parser: _Parser) -> int:
    if opts.path is None:
        parser.error("a MIDI file path is required")
    data = Path(opts.path).read_bytes()
    sys.stdout.write(dump_events(parse_midi(data)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
