"""Training curriculum: map streams, episode playing, the cycle loop,
periodic evaluation, and the early-stopping rule.

One iteration of the outer loop plays five maps with the current policy,
banks every turn as an experience, runs one prioritized training cycle,
and refits the loss predictor on the realized losses of the maps just
played.  Map supply switches from a shared bootstrap set to the
schedule's own generator; evaluation runs a frozen greedy policy over a
fixed board set.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent.agent import DQNAgent, select_action
from .agent.replay import Experience, ReplayBank
from .codec import encode_state, index_to_action, mask_q
from .game.board import Board
from .game.engine import GameConfig, GameState, legal_actions, new_game, step
from .generators.constructive import GenConfig, generate
from .generators.evolution import EvoConfig, evolve
from .lossnet import LossNet, record_map_loss

CONSTRUCTIVE = "constructive"
EVOLVED = "evolved"
MIXED = "mixed"
KINDS = (CONSTRUCTIVE, EVOLVED, MIXED)

# Offsets for deriving per-purpose RNG streams from one master seed.
SEED_STRIDE = 1000003
BOOTSTRAP_SALT = 1
EVAL_SALT = 2
AGENT_SALT = 3
LOSSNET_SALT = 4
BATCH_SALT = 100

METRICS_COLUMNS = ("maps_played", "phase", "mean_cycle_loss", "eval_score",
                   "schedule", "seed", "wall_ms")


def derive_seed(master_seed: int, salt: int) -> int:
    return master_seed * SEED_STRIDE + salt


@dataclass
class Schedule:
    kind: str = CONSTRUCTIVE
    bootstrap_count: int = 50
    eval_every_maps: int = 200
    eval_set_size: int = 100
    patience_cycles: int = 2
    max_maps: int = 1500

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}; "
                             f"expected one of {KINDS}")
        for name in ("bootstrap_count", "eval_every_maps", "eval_set_size",
                     "patience_cycles", "max_maps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass
class MetricsRow:
    maps_played: int
    phase: str
    mean_cycle_loss: float | None
    eval_score: float | None
    schedule: str
    seed: int
    wall_ms: float

    def as_csv(self) -> list[str]:
        def cell(v):
            return "" if v is None else str(v)
        return [str(self.maps_played), self.phase,
                cell(self.mean_cycle_loss), cell(self.eval_score),
                self.schedule, str(self.seed), str(self.wall_ms)]


@dataclass
class RunMetrics:
    schedule: str
    seed: int
    rows: list[MetricsRow] = field(default_factory=list)
    eval_points: list[tuple[int, float]] = field(default_factory=list)
    cycle_points: list[tuple[int, float]] = field(default_factory=list)
    cycle_protocol: list[tuple[int, int, int]] = field(default_factory=list)
    maps_played: int = 0
    games_played: int = 0
    stopped_early: bool = False
    error: str | None = None

    @property
    def peak_score(self) -> float:
        return max(score for _, score in self.eval_points)

    @property
    def peak_maps(self) -> int:
        best = self.peak_score
        return next(maps for maps, score in self.eval_points if score == best)


def write_metrics_csv(metrics: RunMetrics, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for row in metrics.rows:
            writer.writerow(row.as_csv())


def should_stop(eval_scores, patience: int) -> bool:
    """True once the tail of the score sequence shows `patience` consecutive
    evaluations without a strict new best (ties do not count as progress)."""
    best = float("-inf")
    streak = 0
    for score in eval_scores:
        if score > best:
            best = score
            streak = 0
        else:
            streak += 1
    return streak >= patience


def play_map(agent: DQNAgent, board: Board, game_cfg: GameConfig | None,
             map_id: int, rng, epsilon: float,
             game_seed: int = 0) -> tuple[list[Experience], int]:
    """Play one full episode, returning every turn as an experience plus the
    number of attackers slain."""
    state = new_game(board, game_cfg, seed=game_seed)
    mask = legal_actions(state)
    experiences: list[Experience] = []
    while not state.terminal and mask.any():
        encoded = encode_state(state)
        action = select_action(agent.q_values(encoded), mask, epsilon, rng)
        nxt, _, reward = step(
            state, index_to_action(action, board.width, board.height))
        next_mask = legal_actions(nxt)
        experiences.append(Experience(
            state=encoded, action=action, reward=reward,
            next_state=encode_state(nxt), terminal=nxt.terminal,
            next_legal_mask=next_mask, map_id=map_id))
        state, mask = nxt, next_mask
    return experiences, state.slain


def evaluate(agent: DQNAgent, boards, game_cfg: GameConfig | None = None) -> float:
    """Mean attackers slain under the greedy policy, batching the Q forward
    pass across all still-running episodes.  Touches no agent state."""
    if not boards:
        raise ValueError("need at least one evaluation board")
    states: list[GameState] = [new_game(b, game_cfg, seed=i)
                               for i, b in enumerate(boards)]
    masks = [legal_actions(s) for s in states]
    running = [i for i in range(len(states)) if masks[i].any()]
    while running:
        batch = np.stack([encode_state(states[i]) for i in running])
        qs = agent.q_batch(batch)
        still = []
        for row, i in enumerate(running):
            state = states[i]
            action = int(np.argmax(mask_q(qs[row], masks[i])))
            nxt, _, _ = step(state, index_to_action(
                action, state.board.width, state.board.height))
            states[i] = nxt
            masks[i] = legal_actions(nxt)
            if not nxt.terminal and masks[i].any():
                still.append(i)
        running = still
    return float(np.mean([s.slain for s in states]))


class MapStream:
    """Supplies training boards for one schedule arm.

    The first `bootstrap_count` maps come from a list derived only from the
    master seed, so every schedule kind trains on identical openers.  After
    that, constructive arms sample fresh boards, evolved arms run the
    evolutionary search against the current loss predictor, and mixed arms
    alternate whole batches starting with a constructive one.
    """

    def __init__(self, schedule: Schedule, master_seed: int,
                 gen_cfg: GenConfig | None = None,
                 evo_cfg: EvoConfig | None = None):
        self.schedule = schedule
        self.master_seed = master_seed
        self.gen_cfg = gen_cfg or GenConfig()
        self.evo_cfg = evo_cfg or EvoConfig()
        self.bootstrap = generate(schedule.bootstrap_count,
                                  derive_seed(master_seed, BOOTSTRAP_SALT),
                                  self.gen_cfg)

    def _batch_seed(self, batch_index: int) -> int:
        return derive_seed(self.master_seed, BATCH_SALT + batch_index)

    def next_maps(self, maps_played: int, oracle,
                  n: int = 5) -> tuple[list[Board], str]:
        if maps_played < self.schedule.bootstrap_count:
            boards = self.bootstrap[maps_played:maps_played + n]
            if len(boards) == n:
                return boards, "bootstrap"
            raise ValueError("map counter is not aligned with the bootstrap "
                             f"list (asked for {n} at {maps_played})")
        batch_index = (maps_played - self.schedule.bootstrap_count) // n
        kind = self.schedule.kind
        if kind == MIXED:
            kind = CONSTRUCTIVE if batch_index % 2 == 0 else EVOLVED
        seed = self._batch_seed(batch_index)
        if kind == CONSTRUCTIVE:
            return generate(n, seed, self.gen_cfg), CONSTRUCTIVE
        result = evolve(n, oracle, seed, self.evo_cfg, self.gen_cfg)
        return result.boards, EVOLVED


def eval_boards(master_seed: int, schedule: Schedule,
                gen_cfg: GenConfig | None = None) -> list[Board]:
    """The fixed scoring set for one experiment; shared by every schedule
    kind under the same master seed."""
    return generate(schedule.eval_set_size, derive_seed(master_seed, EVAL_SALT),
                    gen_cfg or GenConfig())


def run_schedule(schedule: Schedule, master_seed: int, *,
                 game_cfg: GameConfig | None = None,
                 agent_cfg=None, lossnet_cfg=None,
                 gen_cfg: GenConfig | None = None,
                 evo_cfg: EvoConfig | None = None,
                 checkpoint_dir=None,
                 progress=None) -> RunMetrics:
    """Run one schedule arm to its stopping point and return its metrics.

    Writes agent and loss-net checkpoints into checkpoint_dir (when given)
    at every evaluation and once more at the end.
    """
    gen_cfg = gen_cfg or GenConfig()
    game_cfg = game_cfg or GameConfig()
    agent = DQNAgent(gen_cfg.width, gen_cfg.height, agent_cfg,
                     seed=derive_seed(master_seed, AGENT_SALT))
    lossnet = LossNet(gen_cfg.width, gen_cfg.height, lossnet_cfg,
                      seed=derive_seed(master_seed, LOSSNET_SALT))
    bank: ReplayBank = agent.new_bank()
    stream = MapStream(schedule, master_seed, gen_cfg, evo_cfg)
    scoring_set = eval_boards(master_seed, schedule, gen_cfg)
    metrics = RunMetrics(schedule=schedule.kind, seed=master_seed)

    def note(text: str):
        if progress:
            progress(text)

    def save_checkpoints(tag: str):
        if checkpoint_dir is None:
            return
        out = Path(checkpoint_dir)
        out.mkdir(parents=True, exist_ok=True)
        agent.save(out / f"agent_{tag}.ckpt")
        lossnet.save(out / f"lossnet_{tag}.ckpt")

    def run_eval() -> float:
        t0 = time.perf_counter()
        score = evaluate(agent, scoring_set, game_cfg)
        metrics.eval_points.append((metrics.maps_played, score))
        metrics.rows.append(MetricsRow(
            maps_played=metrics.maps_played, phase="eval",
            mean_cycle_loss=None, eval_score=score,
            schedule=schedule.kind, seed=master_seed,
            wall_ms=(time.perf_counter() - t0) * 1000.0))
        save_checkpoints(f"{metrics.maps_played:05d}")
        note(f"eval at {metrics.maps_played} maps: {score:.3f}")
        return score

    per_cycle = agent.config.maps_per_cycle
    try:
        run_eval()  # baseline with freshly initialized weights
        while metrics.maps_played < schedule.max_maps and not metrics.stopped_early:
            t0 = time.perf_counter()
            boards, phase = stream.next_maps(metrics.maps_played, lossnet,
                                             n=per_cycle)
            batch_boards = {}
            for offset, board in enumerate(boards):
                map_id = metrics.maps_played + offset
                batch_boards[map_id] = board
                experiences, _ = play_map(
                    agent, board, game_cfg, map_id, agent.rng,
                    epsilon=agent.epsilon(), game_seed=map_id)
                for exp in experiences:
                    bank.insert(exp)
                agent.games_played += 1
            report = agent.train_cycle(bank)
            metrics.maps_played += len(boards)
            metrics.games_played = agent.games_played

            records = []
            for map_id, board in batch_boards.items():
                samples = report.map_samples.get(map_id)
                if samples:
                    record = record_map_loss(board, samples)
                    if record is not None:
                        records.append(record)
            if records:
                lossnet.train(records)

            mean_loss = None if report.underfull else float(report.mean_loss)
            if mean_loss is not None:
                metrics.cycle_points.append((metrics.maps_played, mean_loss))
                metrics.cycle_protocol.append(
                    (metrics.maps_played, report.batches, report.batch_size))
            metrics.rows.append(MetricsRow(
                maps_played=metrics.maps_played, phase=phase,
                mean_cycle_loss=mean_loss, eval_score=None,
                schedule=schedule.kind, seed=master_seed,
                wall_ms=(time.perf_counter() - t0) * 1000.0))

            if metrics.maps_played % schedule.eval_every_maps == 0:
                run_eval()
                scores = [score for _, score in metrics.eval_points]
                if should_stop(scores, schedule.patience_cycles):
                    metrics.stopped_early = True
    except Exception as exc:  # surface the failure in the metrics themselves
        metrics.error = f"{type(exc).__name__}: {exc}"
        metrics.rows.append(MetricsRow(
            maps_played=metrics.maps_played, phase="error",
            mean_cycle_loss=None, eval_score=None,
            schedule=schedule.kind, seed=master_seed, wall_ms=0.0))
        save_checkpoints("final")
        return metrics

    save_checkpoints("final")
    return metrics
