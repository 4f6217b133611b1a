"""Loss-curve and hidden-width comparison experiments with CSV outputs.

Sweep runs share one seed, and the data-order rng stream is independent of
network size, so every width consumes the identical shuffled sample order
and curves differ only by architecture.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .optim import TrainConfig, TrainingReport, train
from .util import atomic_write_text

LOSS_CURVE_NAME = "loss_curve.csv"
SWEEP_NAME = "sweep.csv"


@dataclass
class SweepConfig:
    corpus_dir: str | Path
    out_dir: str | Path
    widths: tuple[int, ...] = (32, 64, 128, 256)
    epochs: int = 50
    seed: int = 0
    window_len: int = 80
    stride: int = 1
    dense1_width: int = 256
    dropout_rate: float = 0.3
    batch_size: int = 64
    learning_rate: float = 0.001

    def __post_init__(self) -> None:
        if len(set(self.widths)) != len(self.widths) or min(self.widths) < 1:
            raise ValueError(f"widths must be positive and distinct: {self.widths}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class SweepResult:
    widths: tuple[int, ...]
    reports: dict[int, TrainingReport]

    def best_loss(self, width: int) -> float:
        return self.reports[width].best_loss

    def final_loss(self, width: int) -> float:
        return self.reports[width].records[-1].mean_loss

    def wall_seconds(self, width: int) -> float:
        return sum(r.seconds for r in self.reports[width].records)


def run_loss_curve(
    config: TrainConfig, log: Callable[[str], None] | None = None
) -> TrainingReport:
    """Train once and write loss_curve.csv; prints a short summary."""
    say = log or print
    report = train(config, log=log)
    out_dir = Path(config.out_dir)
    lines = ["epoch,mean_loss,seconds"]
    lines += [f"{r.epoch},{r.mean_loss!r},{r.seconds:.3f}" for r in report.records]
    atomic_write_text(out_dir / LOSS_CURVE_NAME, "\n".join(lines) + "\n")
    if report.records:
        say(
            f"first-epoch loss {report.records[0].mean_loss:.6f}, "
            f"best loss {report.best_loss:.6f} at epoch {report.best_epoch}"
        )
    return report


def run_hidden_size_sweep(
    sweep: SweepConfig, log: Callable[[str], None] | None = None
) -> SweepResult:
    """Train one model per width under identical seeds and data order.

    Writes sweep.csv (one loss column per width plus final/best/seconds
    summary rows) and a small gnuplot script next to it.
    """
    say = log or print
    out_dir = Path(sweep.out_dir)
    reports: dict[int, TrainingReport] = {}
    for width in sweep.widths:
        config = TrainConfig(
            corpus_dir=sweep.corpus_dir,
            out_dir=out_dir / f"w{width}",
            epochs=sweep.epochs,
            window_len=sweep.window_len,
            stride=sweep.stride,
            lstm_width=width,
            dense1_width=sweep.dense1_width,
            dropout_rate=sweep.dropout_rate,
            batch_size=sweep.batch_size,
            learning_rate=sweep.learning_rate,
            seed=sweep.seed,
        )
        say(f"sweep: training width {width}")
        reports[width] = train(config, log=log)

    result = SweepResult(widths=tuple(sweep.widths), reports=reports)
    _write_sweep_csv(out_dir, sweep, result)
    _write_gnuplot_script(out_dir, sweep)
    _check_wall_time_order(sweep, result, say)
    return result


def _write_sweep_csv(out_dir: Path, sweep: SweepConfig, result: SweepResult) -> None:
    header = "epoch," + ",".join(f"loss_w{w}" for w in sweep.widths)
    lines = [header]
    for i in range(sweep.epochs):
        row = [str(i + 1)]
        for w in sweep.widths:
            records = result.reports[w].records
            row.append(repr(records[i].mean_loss) if i < len(records) else "")
        lines.append(",".join(row))
    lines.append("final," + ",".join(repr(result.final_loss(w)) for w in sweep.widths))
    lines.append("best," + ",".join(repr(result.best_loss(w)) for w in sweep.widths))
    lines.append("seconds," + ",".join(f"{result.wall_seconds(w):.3f}" for w in sweep.widths))
    atomic_write_text(out_dir / SWEEP_NAME, "\n".join(lines) + "\n")


def _write_gnuplot_script(out_dir: Path, sweep: SweepConfig) -> None:
    plots = ", ".join(
        f"'{SWEEP_NAME}' every ::0::{sweep.epochs - 1} using 1:{i + 2} with lines title 'H={w}'"
        for i, w in enumerate(sweep.widths)
    )
    script = (
        "set datafile separator ','\n"
        "set key top right\n"
        "set xlabel 'epoch'\n"
        "set ylabel 'mean loss'\n"
        f"plot {plots}\n"
    )
    atomic_write_text(out_dir / "plot_sweep.gp", script)


def _check_wall_time_order(
    sweep: SweepConfig, result: SweepResult, say: Callable[[str], None]
) -> None:
    """Wider nets should not train faster; log a warning when they do."""
    by_width = sorted(sweep.widths)
    for small, big in zip(by_width, by_width[1:]):
        if result.wall_seconds(big) < result.wall_seconds(small):
            print(
                f"warning: width {big} trained faster than width {small} "
                f"({result.wall_seconds(big):.2f}s < {result.wall_seconds(small):.2f}s)",
                file=sys.stderr,
            )
