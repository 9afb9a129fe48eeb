"""Rejection-sampling map generator.

Proposals are biased toward satisfying the placement constraints (home near
the center, one source per distinct quadrant) and then filtered through the
full constrained fitness, so every board returned scores exactly 1.0.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from ..game.board import MIN_DIM, Board, TileType
from .constraints import center_of, center_radius, is_feasible

MAX_SOURCES = 4


class GenerationError(RuntimeError):
    """Raised when too many consecutive proposals fail the constraints."""


@dataclass
class GenConfig:
    width: int = 10
    height: int = 10
    n_sources_min: int = 2
    n_sources_max: int = 4
    slow_density: float = 0.10
    block_density: float = 0.12
    max_rejects: int = 1000

    def __post_init__(self):
        if self.width < MIN_DIM or self.height < MIN_DIM:
            raise ValueError(f"board dimensions must be at least {MIN_DIM}")
        if not 1 <= self.n_sources_min <= self.n_sources_max <= MAX_SOURCES:
            raise ValueError("source count range must satisfy "
                             f"1 <= min <= max <= {MAX_SOURCES}")
        for name in ("slow_density", "block_density"):
            value = getattr(self, name)
            if not 0.0 <= value < 0.5:
                raise ValueError(f"{name} must lie in [0, 0.5)")
        if self.max_rejects < 1:
            raise ValueError("max_rejects must be positive")


_QUADRANTS = ((0, 0), (1, 0), (0, 1), (1, 1))  # (east half?, south half?)


def _quadrant_span(flag: int, size: int) -> tuple[int, int]:
    half = size // 2
    return (half, size - 1) if flag else (0, half - 1)


def propose(rng: random.Random, cfg: GenConfig) -> np.ndarray:
    """Draw one biased candidate grid; it may still violate path or
    block-clearance constraints."""
    grid = np.full((cfg.height, cfg.width), int(TileType.NEUTRAL), dtype=np.int8)

    cx, cy = center_of(cfg.width, cfg.height)
    radius = center_radius(cfg.width, cfg.height)
    hx = rng.randint(max(0, cx - radius), min(cfg.width - 1, cx + radius))
    hy = rng.randint(max(0, cy - radius), min(cfg.height - 1, cy + radius))
    grid[hy, hx] = int(TileType.HOME)

    n_sources = rng.randint(cfg.n_sources_min, cfg.n_sources_max)
    for qx, qy in rng.sample(_QUADRANTS, n_sources):
        x_lo, x_hi = _quadrant_span(qx, cfg.width)
        y_lo, y_hi = _quadrant_span(qy, cfg.height)
        while True:
            sx, sy = rng.randint(x_lo, x_hi), rng.randint(y_lo, y_hi)
            if grid[sy, sx] == int(TileType.NEUTRAL):
                grid[sy, sx] = int(TileType.SOURCE)
                break

    for y in range(cfg.height):
        for x in range(cfg.width):
            if grid[y, x] != int(TileType.NEUTRAL):
                continue
            u = rng.random()
            if u < cfg.slow_density:
                grid[y, x] = int(TileType.SLOW)
            elif u < cfg.slow_density + cfg.block_density:
                grid[y, x] = int(TileType.BLOCK)
    return grid


def generate(count: int, seed: int, cfg: GenConfig | None = None) -> list[Board]:
    """Produce `count` boards that all pass the constraints, deterministically
    for a given seed."""
    cfg = cfg or GenConfig()
    rng = random.Random(seed)
    boards: list[Board] = []
    rejects = 0
    while len(boards) < count:
        grid = propose(rng, cfg)
        if is_feasible(grid):
            boards.append(Board.from_grid(grid))
            rejects = 0
        else:
            rejects += 1
            if rejects >= cfg.max_rejects:
                raise GenerationError(
                    f"gave up after {rejects} consecutive rejected proposals; "
                    "the density settings likely leave no feasible boards")
    return boards
