"""Command-line front end: run experiments, produce maps, score
checkpoints, and export plot-ready series.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .agent.agent import DQNAgent
from .config import ConfigError, ExperimentConfig, load_config, save_config
from .curriculum import (KINDS, METRICS_COLUMNS, evaluate, run_schedule,
                         write_metrics_csv)
from .game.board import write_boards
from .generators.constructive import generate
from .generators.evolution import evolve
from .lossnet import LossNet


class ZeroOracle:
    """Stand-in loss predictor scoring every board 0; used when no loss-net
    checkpoint is supplied."""

    def predict_loss(self, board) -> float:
        return 0.0

    def predict_batch(self, boards) -> np.ndarray:
        return np.zeros(len(boards))


def _experiment(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return ExperimentConfig()


def _emit(text: str, out_path) -> None:
    if out_path:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        Path(out_path).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- commands


def cmd_run(args) -> int:
    cfg = _experiment(args)
    if args.schedule:
        cfg.schedule.kind = args.schedule
    if args.seed is not None:
        cfg.run.master_seed = args.seed
    if args.out:
        cfg.run.out_dir = args.out
    out = Path(cfg.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.ini")

    t0 = time.perf_counter()
    metrics = run_schedule(
        cfg.schedule, cfg.run.master_seed,
        game_cfg=cfg.game, agent_cfg=cfg.agent, lossnet_cfg=cfg.lossnet,
        gen_cfg=cfg.gen, evo_cfg=cfg.evo,
        checkpoint_dir=out / "checkpoints",
        progress=lambda msg: print(msg, file=sys.stderr, flush=True))
    write_metrics_csv(metrics, out / "metrics.csv")

    summary = {
        "schedule": metrics.schedule,
        "seed": metrics.seed,
        "maps_played": metrics.maps_played,
        "games_played": metrics.games_played,
        "peak_score": metrics.peak_score,
        "maps_to_peak": metrics.peak_maps,
        "stopped_early": metrics.stopped_early,
        "eval_points": metrics.eval_points,
        "batches_per_cycle": cfg.agent.batches_per_cycle,
        "batch_size": cfg.agent.batch_size,
        "observed_cycles": [
            {"maps_played": maps, "batches": batches, "batch_size": size}
            for maps, batches, size in metrics.cycle_protocol],
        "error": metrics.error,
        "wall_seconds": time.perf_counter() - t0,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")

    if metrics.error:
        print(f"run failed: {metrics.error}", file=sys.stderr)
        return 1
    print(f"peak score {metrics.peak_score} after {metrics.peak_maps} maps "
          f"({metrics.maps_played} maps played)", file=sys.stderr)
    return 0


def cmd_gen(args) -> int:
    cfg = _experiment(args)
    boards = generate(args.count, args.seed, cfg.gen)
    _emit(write_boards(boards), args.out)
    return 0


def cmd_evolve(args) -> int:
    cfg = _experiment(args)
    if args.checkpoint:
        oracle = LossNet.load(args.checkpoint)
        if (oracle.width, oracle.height) != (cfg.gen.width, cfg.gen.height):
            raise ConfigError(
                f"loss-net checkpoint is {oracle.width}x{oracle.height} but "
                f"the generator config wants {cfg.gen.width}x{cfg.gen.height}")
    else:
        print("warning: no loss-net checkpoint given; scoring all boards 0",
              file=sys.stderr)
        oracle = ZeroOracle()

    result = evolve(args.count, oracle, args.seed, cfg.evo, cfg.gen)
    if result.fallback_used:
        print("warning: evolution came up short; topped up with "
              "freshly sampled boards", file=sys.stderr)

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "boards.txt").write_text(write_boards(result.boards))
        stats_path = out / "fitness.csv"
    else:
        sys.stdout.write(write_boards(result.boards))
        stats_path = Path("evolve_fitness.csv")
    with open(stats_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generation", "best_feasible", "mean_feasible",
                         "best_constrained", "feasible_count"])
        for s in result.stats:
            writer.writerow([s.generation, s.best_feasible, s.mean_feasible,
                             s.best_constrained, s.feasible_count])
    return 0


def cmd_eval(args) -> int:
    cfg = _experiment(args)
    agent = DQNAgent.load(args.checkpoint)
    if (agent.width, agent.height) != (cfg.gen.width, cfg.gen.height):
        raise ConfigError(
            f"checkpoint plays {agent.width}x{agent.height} boards but the "
            f"config generates {cfg.gen.width}x{cfg.gen.height}")
    boards = generate(args.count, args.seed, cfg.gen)
    score = evaluate(agent, boards, cfg.game)
    print(f"mean score over {args.count} maps: {score}")
    row = f"{args.checkpoint},{args.seed},{args.count},{score}\n"
    print(row, end="")
    if args.out:
        with open(args.out, "a") as fh:
            fh.write(row)
    return 0


def _read_metrics_rows(path: Path) -> list[dict]:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValueError(f"cannot read metrics file: {exc}") from None
    lines = text.splitlines()
    if not lines:
        raise ValueError(f"{path}: empty metrics file")
    header = lines[0].split(",")
    if header != list(METRICS_COLUMNS):
        raise ValueError(f"{path} line 1: expected header "
                         f"{','.join(METRICS_COLUMNS)}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(METRICS_COLUMNS):
            raise ValueError(f"{path} line {lineno}: expected "
                             f"{len(METRICS_COLUMNS)} columns, got {len(cells)}")
        row = dict(zip(METRICS_COLUMNS, cells))
        try:
            row["maps_played"] = int(row["maps_played"])
            for col in ("mean_cycle_loss", "eval_score", "wall_ms"):
                row[col] = float(row[col]) if row[col] != "" else None
        except ValueError:
            raise ValueError(
                f"{path} line {lineno}: non-numeric value") from None
        rows.append(row)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return rows


_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _svg_chart(series: dict[str, list[tuple[float, float]]],
               title: str, y_label: str, path: Path) -> None:
    width, height, margin = 640, 400, 55
    points = [p for pts in series.values() for p in pts]
    xs = [p[0] for p in points] or [0.0]
    ys = [p[1] for p in points] or [0.0]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0

    def sx(x):
        return margin + (x - x_lo) / x_span * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y_lo) / y_span * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" '
        f'font-size="14">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle" '
        f'font-size="11">maps played</text>',
        f'<text x="14" y="{height / 2}" font-size="11" '
        f'transform="rotate(-90 14 {height / 2})" '
        f'text-anchor="middle">{y_label}</text>',
        f'<text x="{margin}" y="{height - margin + 16}" '
        f'font-size="10">{x_lo:g}</text>',
        f'<text x="{width - margin}" y="{height - margin + 16}" '
        f'text-anchor="end" font-size="10">{x_hi:g}</text>',
        f'<text x="{margin - 4}" y="{height - margin}" text-anchor="end" '
        f'font-size="10">{y_lo:g}</text>',
        f'<text x="{margin - 4}" y="{margin + 4}" text-anchor="end" '
        f'font-size="10">{y_hi:g}</text>',
    ]
    for i, (label, pts) in enumerate(series.items()):
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        coords = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in pts)
        parts.append(f'<polyline points="{coords}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        for x, y in pts:
            parts.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="2.5" '
                         f'fill="{color}"/>')
        parts.append(f'<text x="{width - margin + 4}" y="{margin + 14 * i}" '
                     f'font-size="11" fill="{color}">{label}</text>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


def cmd_export(args) -> int:
    metrics_path = Path(args.metrics)
    rows = _read_metrics_rows(metrics_path)
    out = Path(args.out) if args.out else metrics_path.parent / "series"
    out.mkdir(parents=True, exist_ok=True)

    schedules = list(dict.fromkeys(row["schedule"] for row in rows))
    score_series: dict[str, list[tuple[float, float]]] = {}
    loss_series: dict[str, list[tuple[float, float]]] = {}
    for schedule in schedules:
        score_series[schedule] = [
            (row["maps_played"], row["eval_score"]) for row in rows
            if row["schedule"] == schedule and row["phase"] == "eval"]
        loss_series[schedule] = [
            (row["maps_played"], row["mean_cycle_loss"]) for row in rows
            if row["schedule"] == schedule and row["phase"] not in ("eval", "error")
            and row["mean_cycle_loss"] is not None]

    written = []
    for label, series, columns in (
            ("score_vs_maps", score_series, ("maps_played", "eval_score")),
            ("loss_vs_maps", loss_series, ("maps_played", "mean_cycle_loss"))):
        for schedule, pts in series.items():
            path = out / f"{label}_{schedule}.csv"
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(columns)
                for x, y in pts:
                    writer.writerow([x, y])
            written.append(path)
    if args.svg:
        _svg_chart(score_series, "evaluation score", "mean attackers slain",
                   out / "score_vs_maps.svg")
        _svg_chart(loss_series, "training cycle loss", "mean |TD error|",
                   out / "loss_vs_maps.svg")
    for path in written:
        print(path)
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eccl",
        description="Curriculum-trained tower-defense agent toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one schedule arm end to end")
    run_p.add_argument("--config", help="experiment config file")
    run_p.add_argument("--schedule", choices=KINDS,
                       help="override the configured schedule kind")
    run_p.add_argument("--seed", type=int, help="override the master seed")
    run_p.add_argument("--out", help="override the output directory")
    run_p.set_defaults(func=cmd_run)

    gen_p = sub.add_parser("gen", help="sample constraint-satisfying boards")
    gen_p.add_argument("-n", "--count", type=int, default=5)
    gen_p.add_argument("--seed", type=int, default=0)
    gen_p.add_argument("--config", help="experiment config file")
    gen_p.add_argument("--out", help="write boards here instead of stdout")
    gen_p.set_defaults(func=cmd_gen)

    evo_p = sub.add_parser("evolve", help="evolve boards against a loss net")
    evo_p.add_argument("-n", "--count", type=int, default=5)
    evo_p.add_argument("--seed", type=int, default=0)
    evo_p.add_argument("--config", help="experiment config file")
    evo_p.add_argument("--checkpoint", help="loss-net checkpoint to score with")
    evo_p.add_argument("--out", help="directory for boards.txt and fitness.csv")
    evo_p.set_defaults(func=cmd_evolve)

    eval_p = sub.add_parser("eval", help="score an agent checkpoint")
    eval_p.add_argument("--checkpoint", required=True)
    eval_p.add_argument("--seed", type=int, default=0,
                        help="seed for the generated evaluation set")
    eval_p.add_argument("-n", "--count", type=int, default=100)
    eval_p.add_argument("--config", help="experiment config file")
    eval_p.add_argument("--out", help="append the result row to this CSV")
    eval_p.set_defaults(func=cmd_eval)

    exp_p = sub.add_parser("export", help="turn metrics.csv into plot series")
    exp_p.add_argument("metrics", help="metrics.csv produced by `run`")
    exp_p.add_argument("--out", help="series output directory")
    exp_p.add_argument("--svg", action="store_true",
                       help="also draw SVG line charts")
    exp_p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
