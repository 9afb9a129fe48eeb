"""Deterministic tower-defense simulation.

Attackers spawn at Source tiles and walk a shortest path toward the single
Home tile; the player interleaves one placement (Defender, Slow, or Block)
per turn.  Everything is reproducible from (board, config, seed, actions).
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .board import Board, PASSABLE, TileType

# Movement tie-break: North (y-1), East (x+1), South (y+1), West (x-1).
_N4 = ((0, -1), (1, 0), (0, 1), (-1, 0))

_PASSABLE_IDS = np.array([int(t) for t in PASSABLE], dtype=np.int8)

# Entity ordinals for the flat action mask: index = entity*W*H + y*W + x.
ENTITY_ORDER = (TileType.DEFENDER, TileType.SLOW, TileType.BLOCK)
_ENTITY_ORDINAL = {t: i for i, t in enumerate(ENTITY_ORDER)}


class InvalidBoardError(ValueError):
    pass


class IllegalActionError(ValueError):
    pass


@dataclass
class GameConfig:
    base_hp: int = 3
    hp_growth_interval: int = 10   # turns per +1 spawn hp
    spawn_period: int = 3          # turns between spawns per source
    defender_damage: int = 1
    defender_range: int = 1        # Chebyshev radius
    max_turns: int = 200
    stochastic_spawn: bool = False


@dataclass
class Attacker:
    x: int
    y: int
    hp: int
    slow_delay: int = 0


@dataclass
class Action:
    entity: TileType  # one of ENTITY_ORDER
    x: int
    y: int


@dataclass
class TurnEvents:
    placed: Action
    spawned: list = field(default_factory=list)   # (x, y, hp)
    slain: list = field(default_factory=list)     # (x, y)
    breached: bool = False
    reward: int = 0


@dataclass
class GameState:
    board: Board
    config: GameConfig
    attackers: list
    turn: int = 0
    slain: int = 0
    breached: bool = False
    rng: random.Random = field(default_factory=random.Random, repr=False)

    @property
    def terminal(self):
        return self.breached or self.turn >= self.config.max_turns

    def copy(self):
        rng = random.Random()
        rng.setstate(self.rng.getstate())
        return GameState(board=self.board.copy(), config=self.config,
                         attackers=[replace(a) for a in self.attackers],
                         turn=self.turn, slain=self.slain,
                         breached=self.breached, rng=rng)


def new_game(board: Board, config: GameConfig = None, seed: int = 0) -> GameState:
    """Validate the board and return a fresh state (turn 0, no attackers)."""
    config = config or GameConfig()
    problems = board.violations()
    if not problems:
        dist = distance_field(board)
        for x, y in board.sources():
            if dist[y, x] < 0:
                problems.append(f"source disconnected at ({x}, {y})")
    if problems:
        raise InvalidBoardError("; ".join(problems))
    return GameState(board=board.copy(), config=config, attackers=[],
                     rng=random.Random(seed))


def distance_field(board: Board) -> np.ndarray:
    """Steps-to-Home over 4-connected passable tiles; -1 marks unreachable.

    Block and Defender tiles are impassable and always -1; Home itself is 0.
    """
    h, w = board.tiles.shape
    dist = np.full((h, w), -1, dtype=np.int32)
    passable = np.isin(board.tiles, _PASSABLE_IDS)
    hx, hy = board.home()
    dist[hy, hx] = 0
    frontier = deque([(hx, hy)])
    while frontier:
        x, y = frontier.popleft()
        d = dist[y, x] + 1
        for dx, dy in _N4:
            nx, ny = x + dx, y + dy
            if 0 <= nx < w and 0 <= ny < h and passable[ny, nx] and dist[ny, nx] < 0:
                dist[ny, nx] = d
                frontier.append((nx, ny))
    return dist


def _paths_survive(board: Board, attackers, cand_flat: np.ndarray) -> np.ndarray:
    """For each candidate cell (flat index), would blocking it keep every
    Source and attacker connected to Home?  Vectorized flood fill over a
    stack of hypothetical grids."""
    h, w = board.tiles.shape
    n = cand_flat.size
    passable = np.isin(board.tiles, _PASSABLE_IDS)
    grids = np.broadcast_to(passable, (n, h, w)).copy()
    grids.reshape(n, -1)[np.arange(n), cand_flat] = False
    hx, hy = board.home()
    reach = np.zeros((n, h, w), dtype=bool)
    reach[:, hy, hx] = True
    filled = n  # home cells
    while True:
        grown = reach.copy()
        grown[:, 1:, :] |= reach[:, :-1, :]
        grown[:, :-1, :] |= reach[:, 1:, :]
        grown[:, :, 1:] |= reach[:, :, :-1]
        grown[:, :, :-1] |= reach[:, :, 1:]
        grown &= grids
        grown[:, hy, hx] = True
        now = int(grown.sum())
        if now == filled:
            break
        filled = now
        reach = grown
    required = board.sources() + sorted({(a.x, a.y) for a in attackers})
    ok = np.ones(n, dtype=bool)
    for x, y in required:
        ok &= reach[:, y, x]
    return ok


def legal_actions(state: GameState) -> np.ndarray:
    """Boolean mask over the 3*W*H flat action space (all false if terminal).

    A placement is legal on a Neutral, attacker-free tile; Block/Defender
    additionally must not cut any Source or living attacker off from Home.
    """
    board = state.board
    h, w = board.tiles.shape
    mask = np.zeros(3 * w * h, dtype=bool)
    if state.terminal:
        return mask
    occupied = np.zeros((h, w), dtype=bool)
    for a in state.attackers:
        occupied[a.y, a.x] = True
    cand = (board.tiles == int(TileType.NEUTRAL)) & ~occupied
    area = w * h
    slow_base = _ENTITY_ORDINAL[TileType.SLOW] * area
    mask[slow_base:slow_base + area] = cand.ravel()
    cand_flat = np.flatnonzero(cand)
    if cand_flat.size:
        keeps = np.zeros(area, dtype=bool)
        keeps[cand_flat] = _paths_survive(board, state.attackers, cand_flat)
        for ent in (TileType.DEFENDER, TileType.BLOCK):
            base = _ENTITY_ORDINAL[ent] * area
            mask[base:base + area] = keeps
    return mask


def _check_action(state: GameState, action: Action):
    board = state.board
    if state.terminal:
        raise IllegalActionError("episode is over")
    if action.entity not in _ENTITY_ORDINAL:
        raise IllegalActionError(f"cannot place {action.entity!r}")
    if not (0 <= action.x < board.width and 0 <= action.y < board.height):
        raise IllegalActionError(f"({action.x}, {action.y}) out of bounds")
    if board.tiles[action.y, action.x] != int(TileType.NEUTRAL):
        raise IllegalActionError(f"({action.x}, {action.y}) is not a neutral tile")
    if any(a.x == action.x and a.y == action.y for a in state.attackers):
        raise IllegalActionError(f"({action.x}, {action.y}) is occupied by an attacker")
    if action.entity in (TileType.BLOCK, TileType.DEFENDER):
        flat = np.array([action.y * board.width + action.x])
        if not _paths_survive(board, state.attackers, flat)[0]:
            raise IllegalActionError(
                f"placing at ({action.x}, {action.y}) would cut off a path to home")


def step(state: GameState, action: Action):
    """Advance one turn: place, spawn, move, damage, breach-check.

    Returns (next_state, events, reward) without touching the input state;
    reward is the number of attackers slain this turn.
    """
    _check_action(state, action)
    s = state.copy()
    cfg = s.config
    events = TurnEvents(placed=action)

    # 1. place
    s.board.tiles[action.y, action.x] = int(action.entity)

    # 2. spawn
    if cfg.stochastic_spawn:
        due = [s.rng.random() < 1.0 / cfg.spawn_period for _ in s.board.sources()]
    else:
        due = [s.turn % cfg.spawn_period == 0] * len(s.board.sources())
    hp = cfg.base_hp + s.turn // cfg.hp_growth_interval
    for (sx, sy), spawn_now in zip(s.board.sources(), due):
        if spawn_now:
            s.attackers.append(Attacker(sx, sy, hp))
            events.spawned.append((sx, sy, hp))

    # 3. move
    dist = distance_field(s.board)
    h, w = s.board.tiles.shape
    for a in s.attackers:
        if a.slow_delay > 0:
            a.slow_delay -= 1
            continue
        best = None
        best_d = None
        for dx, dy in _N4:
            nx, ny = a.x + dx, a.y + dy
            if 0 <= nx < w and 0 <= ny < h and dist[ny, nx] >= 0:
                if best_d is None or dist[ny, nx] < best_d:
                    best, best_d = (nx, ny), dist[ny, nx]
        if best is not None:
            a.x, a.y = best
            if s.board.tiles[a.y, a.x] == int(TileType.SLOW):
                a.slow_delay = 1

    # 4. damage
    dmg = np.zeros((h, w), dtype=np.int64)
    r = cfg.defender_range
    for dx_, dy_ in s.board.positions(TileType.DEFENDER):
        dmg[max(0, dy_ - r):dy_ + r + 1, max(0, dx_ - r):dx_ + r + 1] += cfg.defender_damage
    survivors = []
    for a in s.attackers:
        a.hp -= int(dmg[a.y, a.x])
        if a.hp <= 0:
            events.slain.append((a.x, a.y))
        else:
            survivors.append(a)
    s.attackers = survivors

    # 5. breach
    hx, hy = s.board.home()
    if any(a.x == hx and a.y == hy for a in s.attackers):
        s.breached = True
        events.breached = True

    s.turn += 1
    reward = len(events.slain)
    s.slain += reward
    events.reward = reward
    return s, events, reward


def score(state: GameState) -> int:
    return state.slain
