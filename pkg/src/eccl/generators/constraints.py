"""Constraint factors scoring how playable a candidate map is.

Each factor maps a raw tile grid (which may be structurally broken while a
chromosome is still evolving) to [0, 1]; their mean is the constrained
fitness, and exactly 1.0 marks a feasible board.
"""

from __future__ import annotations

import math

import numpy as np

from ..game.board import Board, TileType
from ..game.engine import distance_field


def _tiles(grid) -> np.ndarray:
    if isinstance(grid, Board):
        return grid.tiles
    return np.asarray(grid, dtype=np.int8)


def center_of(width: int, height: int) -> tuple[int, int]:
    return ((width - 1) // 2, (height - 1) // 2)


def center_radius(width: int, height: int) -> int:
    return math.ceil(min(width, height) / 4)


def factor_separate_quads(grid) -> float:
    """Distinct source-occupied quadrants over source count (quadrants split
    at floor(W/2), floor(H/2))."""
    tiles = _tiles(grid)
    h, w = tiles.shape
    src = np.argwhere(tiles == int(TileType.SOURCE))
    if len(src) == 0:
        return 0.0
    quads = {(int(x >= w // 2), int(y >= h // 2)) for y, x in src}
    return len(quads) / len(src)


def factor_home_paths(grid) -> float:
    """Fraction of sources that can reach home at all."""
    tiles = _tiles(grid)
    if int((tiles == int(TileType.HOME)).sum()) != 1:
        return 0.0
    src = np.argwhere(tiles == int(TileType.SOURCE))
    if len(src) == 0:
        return 0.0
    dist = distance_field(Board.from_grid(tiles))
    reachable = sum(1 for y, x in src if dist[y, x] >= 0)
    return reachable / len(src)


def factor_home_center(grid) -> float:
    """1 when home sits within Chebyshev radius ceil(min(W,H)/4) of center."""
    tiles = _tiles(grid)
    homes = np.argwhere(tiles == int(TileType.HOME))
    if len(homes) != 1:
        return 0.0
    hy, hx = (int(v) for v in homes[0])
    h, w = tiles.shape
    cx, cy = center_of(w, h)
    return 1.0 if max(abs(hx - cx), abs(hy - cy)) <= center_radius(w, h) else 0.0


def factor_home_blocks(grid) -> float:
    """1 when no block tile touches home (Chebyshev distance <= 1)."""
    tiles = _tiles(grid)
    homes = np.argwhere(tiles == int(TileType.HOME))
    if len(homes) != 1:
        return 0.0
    hy, hx = (int(v) for v in homes[0])
    window = tiles[max(0, hy - 1):hy + 2, max(0, hx - 1):hx + 2]
    return 0.0 if np.any(window == int(TileType.BLOCK)) else 1.0


def all_factors(grid) -> tuple[float, float, float, float]:
    tiles = _tiles(grid)
    return (factor_separate_quads(tiles), factor_home_paths(tiles),
            factor_home_center(tiles), factor_home_blocks(tiles))


def constrained_fitness(grid) -> float:
    return float(np.mean(all_factors(grid)))


def is_feasible(grid) -> bool:
    return constrained_fitness(grid) == 1.0
