"""Translation between game objects and network tensors / flat action indices.

A state becomes a (9, H, W) float32 tensor: six one-hot tile planes in
TileType order, an attacker-HP plane (per-cell hp sum / HP_NORM, clamped),
an attacker-delay plane (count of currently-slowed attackers per cell),
and a constant turn/max_turns plane.  Actions live in a flat space of size
3*W*H ordered entity-major: index = entity*W*H + y*W + x with Defender=0,
Slow=1, Block=2.
"""

from __future__ import annotations

import numpy as np

from .game.board import Board, TileType
from .game.engine import Action, ENTITY_ORDER, GameState

HP_NORM = 10.0
HP_CAP = 10.0
N_PLANES = 9
N_ENTITIES = 3

_ENTITY_ORDINAL = {t: i for i, t in enumerate(ENTITY_ORDER)}


def state_shape(width, height):
    return (N_PLANES, height, width)


def action_space(width, height):
    return N_ENTITIES * width * height


def encode_state(state: GameState) -> np.ndarray:
    h, w = state.board.tiles.shape
    planes = np.zeros((N_PLANES, h, w), dtype=np.float32)
    for t in range(6):
        planes[t] = state.board.tiles == t
    for a in state.attackers:
        planes[6, a.y, a.x] += a.hp / HP_NORM
        if a.slow_delay > 0:
            planes[7, a.y, a.x] += 1.0
    np.clip(planes[6], 0.0, HP_CAP, out=planes[6])
    np.clip(planes[7], 0.0, HP_CAP, out=planes[7])
    planes[8] = state.turn / state.config.max_turns
    return planes


def encode_board(board: Board) -> np.ndarray:
    """Encoding of a board before any play: turn 0, no attackers."""
    h, w = board.tiles.shape
    planes = np.zeros((N_PLANES, h, w), dtype=np.float32)
    for t in range(6):
        planes[t] = board.tiles == t
    return planes


def action_to_index(action: Action, width, height) -> int:
    if action.entity not in _ENTITY_ORDINAL:
        raise ValueError(f"{action.entity!r} is not a placeable entity")
    if not (0 <= action.x < width and 0 <= action.y < height):
        raise ValueError(f"({action.x}, {action.y}) out of bounds for {width}x{height}")
    return _ENTITY_ORDINAL[action.entity] * width * height + action.y * width + action.x


def index_to_action(index, width, height) -> Action:
    index = int(index)
    if not 0 <= index < N_ENTITIES * width * height:
        raise ValueError(f"action index {index} out of range [0, {N_ENTITIES * width * height})")
    entity, rest = divmod(index, width * height)
    y, x = divmod(rest, width)
    return Action(ENTITY_ORDER[entity], x, y)


def mask_q(q: np.ndarray, legal: np.ndarray) -> np.ndarray:
    """Copy of q with illegal entries pushed to -inf; legal entries untouched."""
    if q.shape != legal.shape:
        raise ValueError(f"q shape {q.shape} vs mask shape {legal.shape}")
    if not legal.any():
        raise ValueError("no legal actions")
    out = q.astype(q.dtype, copy=True)
    out[~legal] = -np.inf
    return out
