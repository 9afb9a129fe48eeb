"""Two-population evolutionary map search.

Feasible candidates compete on how much learning signal a trained loss
predictor expects them to produce; infeasible ones compete on constraint
satisfaction and migrate across once repaired.  Each generation runs
evaluate -> migrate -> record stats -> breed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from ..game.board import Board, TileType
from .constraints import constrained_fitness, is_feasible
from .constructive import GenConfig, generate

# Mutation may write any placeable map tile; defenders only appear in play.
MUTATION_TILES = (TileType.NEUTRAL, TileType.SLOW, TileType.BLOCK,
                  TileType.HOME, TileType.SOURCE)

# Cell weights for seeding the infeasible population with raw noise.
RANDOM_GRID_WEIGHTS = (0.64, 0.12, 0.12, 0.06, 0.06)


@dataclass
class EvoConfig:
    feasible_size: int = 50
    infeasible_size: int = 50
    generations: int = 20
    tournament_size: int = 3
    elitism: int = 1
    min_mutations: int = 1
    max_mutations: int = 3

    def __post_init__(self):
        if min(self.feasible_size, self.infeasible_size) < 2:
            raise ValueError("population sizes must be at least 2")
        if self.generations < 1:
            raise ValueError("generations must be positive")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be positive")
        if not 0 <= self.elitism < min(self.feasible_size, self.infeasible_size):
            raise ValueError("elitism must be smaller than both populations")
        if not 1 <= self.min_mutations <= self.max_mutations:
            raise ValueError("mutation counts must satisfy 1 <= min <= max")


@dataclass
class Chromosome:
    grid: np.ndarray
    fitness: float = 0.0
    feasible: bool = False


@dataclass
class GenerationStats:
    generation: int
    best_feasible: float
    mean_feasible: float
    best_constrained: float
    feasible_count: int


@dataclass
class EvolveResult:
    boards: list[Board]
    stats: list[GenerationStats]
    fallback_used: bool = False


def feasible_fitness(grid, oracle) -> float:
    """Predicted training loss of a constraint-satisfying board, floored at
    zero.  Raises if the board fails any constraint."""
    tiles = grid.tiles if isinstance(grid, Board) else grid
    if not is_feasible(tiles):
        raise ValueError("board does not satisfy the map constraints")
    return max(0.0, float(oracle.predict_loss(Board.from_grid(tiles))))


def random_grid(rng: random.Random, cfg: GenConfig) -> np.ndarray:
    cells = rng.choices(MUTATION_TILES, weights=RANDOM_GRID_WEIGHTS,
                        k=cfg.width * cfg.height)
    return np.array(cells, dtype=np.int8).reshape(cfg.height, cfg.width)


def crossover(parent_a: np.ndarray, parent_b: np.ndarray,
              rng: random.Random) -> np.ndarray:
    """Copy of the first parent with one random rectangle taken from the
    second."""
    h, w = parent_a.shape
    rw = rng.randint(1, w)
    rh = rng.randint(1, h)
    x0 = rng.randint(0, w - rw)
    y0 = rng.randint(0, h - rh)
    child = parent_a.copy()
    child[y0:y0 + rh, x0:x0 + rw] = parent_b[y0:y0 + rh, x0:x0 + rw]
    return child


def mutate(grid: np.ndarray, rng: random.Random, min_mutations: int = 1,
           max_mutations: int = 3) -> np.ndarray:
    """Rewrite between min and max cells, each to a uniformly chosen tile
    different from its current one."""
    h, w = grid.shape
    out = grid.copy()
    for _ in range(rng.randint(min_mutations, max_mutations)):
        x, y = rng.randrange(w), rng.randrange(h)
        options = [t for t in MUTATION_TILES if int(t) != out[y, x]]
        out[y, x] = int(rng.choice(options))
    return out


def _evaluate(feasible: list[Chromosome], infeasible: list[Chromosome],
              oracle, cache: dict[bytes, float]) -> None:
    """Refresh feasibility flags and fitness for every chromosome, batching
    the oracle over all feasible grids.

    Oracle scores are cached per distinct grid for the life of one evolve
    call: the snapshot is fixed, and reusing the first prediction keeps a
    surviving elite's fitness exactly stable (batched float32 inference can
    otherwise wobble in the last bits as batch composition changes)."""
    everyone = feasible + infeasible
    for chrom in everyone:
        score = constrained_fitness(chrom.grid)
        chrom.feasible = score == 1.0
        chrom.fitness = score
    pending: dict[bytes, Chromosome] = {}
    for chrom in everyone:
        if chrom.feasible and chrom.grid.tobytes() not in cache:
            pending.setdefault(chrom.grid.tobytes(), chrom)
    if pending:
        fresh = list(pending.values())
        if hasattr(oracle, "predict_batch"):
            preds = oracle.predict_batch([Board.from_grid(c.grid)
                                          for c in fresh])
        else:
            preds = [oracle.predict_loss(Board.from_grid(c.grid))
                     for c in fresh]
        for chrom, pred in zip(fresh, preds):
            cache[chrom.grid.tobytes()] = max(0.0, float(pred))
    for chrom in everyone:
        if chrom.feasible:
            chrom.fitness = cache[chrom.grid.tobytes()]


def _ranked(pop: list[Chromosome]) -> list[Chromosome]:
    return sorted(pop, key=lambda c: -c.fitness)


def _breed(pop: list[Chromosome], target_size: int, cfg: EvoConfig,
           rng: random.Random) -> list[Chromosome]:
    if not pop:
        return []

    def pick() -> Chromosome:
        contenders = [pop[rng.randrange(len(pop))]
                      for _ in range(cfg.tournament_size)]
        return max(contenders, key=lambda c: c.fitness)

    nxt = _ranked(pop)[:cfg.elitism]
    while len(nxt) < target_size:
        child = crossover(pick().grid, pick().grid, rng)
        child = mutate(child, rng, cfg.min_mutations, cfg.max_mutations)
        nxt.append(Chromosome(child))
    return nxt


def evolve(request_count: int, loss_oracle, seed: int,
           evo_cfg: EvoConfig | None = None,
           gen_cfg: GenConfig | None = None) -> EvolveResult:
    """Search for `request_count` distinct feasible boards the loss oracle
    rates highly.  Falls back to freshly sampled boards (and flags it) when
    evolution cannot supply enough."""
    evo_cfg = evo_cfg or EvoConfig()
    gen_cfg = gen_cfg or GenConfig()
    if request_count < 1:
        raise ValueError("request_count must be positive")
    rng = random.Random(seed)

    seeds = generate(evo_cfg.feasible_size, rng.randrange(2**32), gen_cfg)
    feasible = [Chromosome(b.tiles.copy()) for b in seeds]
    infeasible = [Chromosome(random_grid(rng, gen_cfg))
                  for _ in range(evo_cfg.infeasible_size)]

    stats: list[GenerationStats] = []
    oracle_cache: dict[bytes, float] = {}
    for gen in range(evo_cfg.generations):
        _evaluate(feasible, infeasible, loss_oracle, oracle_cache)

        movers = feasible + infeasible
        feasible = _ranked([c for c in movers if c.feasible])
        feasible = feasible[:evo_cfg.feasible_size]
        infeasible = _ranked([c for c in movers if not c.feasible])
        infeasible = infeasible[:evo_cfg.infeasible_size]

        best_constrained = 1.0 if feasible else max(
            (constrained_fitness(c.grid) for c in infeasible), default=0.0)
        stats.append(GenerationStats(
            generation=gen,
            best_feasible=feasible[0].fitness if feasible else 0.0,
            mean_feasible=(float(np.mean([c.fitness for c in feasible]))
                           if feasible else 0.0),
            best_constrained=best_constrained,
            feasible_count=len(feasible),
        ))

        if gen < evo_cfg.generations - 1:
            feasible = _breed(feasible, evo_cfg.feasible_size, evo_cfg, rng)
            infeasible = _breed(infeasible, evo_cfg.infeasible_size, evo_cfg,
                                rng)

    boards: list[Board] = []
    seen: set[bytes] = set()
    for chrom in feasible:
        key = chrom.grid.tobytes()
        if key not in seen:
            seen.add(key)
            boards.append(Board.from_grid(chrom.grid.copy()))
        if len(boards) == request_count:
            break

    fallback_used = len(boards) < request_count
    while len(boards) < request_count:
        for extra in generate(request_count - len(boards),
                              rng.randrange(2**32), gen_cfg):
            if extra.key() not in seen:
                seen.add(extra.key())
                boards.append(extra)
    return EvolveResult(boards=boards, stats=stats, fallback_used=fallback_used)
