import numpy as np
import pytest

from eccl.game import (
    Action, Attacker, Board, ENTITY_ORDER, GameConfig, IllegalActionError,
    InvalidBoardError, TileType, distance_field, legal_actions, new_game, score, step,
)

from reference_sim import ref_new, ref_step, snapshot


def board_from_rows(rows):
    return Board.from_text(f"{len(rows[0])} {len(rows)}\n" + "\n".join(rows) + "\n")


def engine_snapshot(state):
    rows = tuple(state.board.to_text().splitlines()[1:])
    atk = tuple((a.x, a.y, a.hp, a.slow_delay) for a in state.attackers)
    return (state.turn, state.slain, state.breached, rows, atk)


def quiet_game(rows, **cfg):
    """Game advanced to turn 1 so the default spawn schedule stays silent
    for a while; handy for single-attacker scenarios."""
    s = new_game(board_from_rows(rows), GameConfig(spawn_period=200, **cfg))
    s.turn = 1
    return s


OPEN = [
    "S.....",
    "......",
    "......",
    "......",
    "......",
    ".....H",
]


# ---------------------------------------------------------------- new_game

def test_new_game_fresh_state():
    s = new_game(board_from_rows(OPEN), GameConfig(), seed=7)
    assert s.turn == 0 and s.slain == 0 and not s.breached
    assert s.attackers == []
    assert score(s) == 0


def test_new_game_rejects_two_homes():
    rows = ["S.....", "..H...", "......", "......", "...H..", "......"]
    with pytest.raises(InvalidBoardError, match="multiple home tiles"):
        new_game(board_from_rows(rows))


def test_new_game_rejects_walled_source():
    rows = [
        "S#....",
        "##....",
        "......",
        "......",
        "......",
        ".....H",
    ]
    with pytest.raises(InvalidBoardError, match="source disconnected"):
        new_game(board_from_rows(rows))


def test_new_game_does_not_mutate_input_board():
    b = board_from_rows(OPEN)
    s = new_game(b)
    step(s, Action(TileType.BLOCK, 3, 3))
    assert b.tiles[3, 3] == TileType.NEUTRAL


# ---------------------------------------------------------------- distance_field

def test_distance_adjacent_to_home():
    d = distance_field(board_from_rows(OPEN))
    assert d[5, 5] == 0
    assert d[4, 5] == 1 and d[5, 4] == 1


def test_distance_unobstructed_is_manhattan():
    rows = ["......", "......", "......", "...H..", "......", "S....."]
    d = distance_field(board_from_rows(rows))
    for y in range(6):
        for x in range(6):
            assert d[y, x] == abs(x - 3) + abs(y - 3)


def test_blocks_and_defenders_are_unreachable():
    rows = ["S.#...", "..D...", "......", "......", "......", ".....H"]
    d = distance_field(board_from_rows(rows))
    assert d[0, 2] == -1 and d[1, 2] == -1


def exhaustive_shortest(rows, start):
    """Branch-and-bound enumeration of all simple paths to home."""
    h, w = len(rows), len(rows[0])
    (hx, hy), = [(x, y) for y in range(h) for x in range(w) if rows[y][x] == "H"]
    best = [None]

    def walk(x, y, seen, steps):
        if best[0] is not None and steps >= best[0]:
            return
        if (x, y) == (hx, hy):
            best[0] = steps
            return
        for nx, ny in ((x, y - 1), (x + 1, y), (x, y + 1), (x - 1, y)):
            if 0 <= nx < w and 0 <= ny < h and rows[ny][nx] in ".sSH" and (nx, ny) not in seen:
                walk(nx, ny, seen | {(nx, ny)}, steps + 1)

    walk(start[0], start[1], {start}, 0)
    return best[0]


def test_distance_with_detour_matches_enumeration():
    rows = [
        "S.#...",
        "..#.#.",
        "..#.#.",
        "..#.#.",
        "....#.",
        "...#.H",
    ]
    d = distance_field(board_from_rows(rows))
    for y in range(6):
        for x in range(6):
            if rows[y][x] in "#D":
                assert d[y, x] == -1
            else:
                want = exhaustive_shortest(rows, (x, y))
                assert d[y, x] == (-1 if want is None else want), (x, y)


# ---------------------------------------------------------------- legal_actions

def test_fresh_board_everything_neutral_is_legal():
    s = new_game(board_from_rows(OPEN))
    mask = legal_actions(s)
    area = 36
    neutral = 34  # 36 minus source and home
    assert mask.shape == (3 * area,)
    assert int(mask.sum()) == 3 * neutral
    # source and home tiles illegal for every entity
    for e in range(3):
        assert not mask[e * area + 0 * 6 + 0]
        assert not mask[e * area + 5 * 6 + 5]


def test_attacker_tile_is_illegal():
    s = new_game(board_from_rows(OPEN))
    s.attackers.append(Attacker(3, 3, hp=2))
    mask = legal_actions(s)
    for e in range(3):
        assert not mask[e * 36 + 3 * 6 + 3]


def test_corridor_choke_point_blockable_only_by_slow():
    rows = [
        "S#....",
        ".#....",
        ".#....",
        ".#....",
        ".#....",
        ".....H",
    ]
    s = new_game(board_from_rows(rows))
    area = 36
    choke = 5 * 6 + 0  # (0,5): the only way out of the left corridor
    mask = legal_actions(s)
    assert not mask[0 * area + choke] and not mask[2 * area + choke]
    assert mask[1 * area + choke]  # slow does not hinder walking
    # a non-choke tile is fine for all three
    free = 5 * 6 + 3
    assert all(mask[e * area + free] for e in range(3))


def test_attacker_path_also_protected():
    rows = [
        "..#...",
        "S#....",
        ".#....",
        ".#....",
        ".#....",
        ".....H",
    ]
    # pocket = {(0,0), (1,0)}; its sole exit runs through (0,0) -> source (0,1)
    s = new_game(board_from_rows(rows))
    s.attackers.append(Attacker(1, 0, hp=3))
    mask = legal_actions(s)
    area = 36
    gap = 0 * 6 + 0  # (0,0)
    assert mask[1 * area + gap]           # slow still fine
    assert not mask[0 * area + gap]       # defender would strand the attacker
    assert not mask[2 * area + gap]       # so would a block
    # without the attacker the same tile is legal for everything
    s.attackers.clear()
    mask2 = legal_actions(s)
    assert all(mask2[e * area + gap] for e in range(3))


def test_terminal_state_has_no_legal_actions():
    s = new_game(board_from_rows(OPEN))
    s.breached = True
    assert not legal_actions(s).any()
    s.breached = False
    s.turn = s.config.max_turns
    assert not legal_actions(s).any()


# ---------------------------------------------------------------- step

def test_step_spawns_at_turn_zero_then_waits():
    s = new_game(board_from_rows(OPEN), GameConfig(spawn_period=3))
    s, ev, r = step(s, Action(TileType.SLOW, 3, 3))
    assert ev.spawned == [(0, 0, 3)] and r == 0
    s, ev, r = step(s, Action(TileType.SLOW, 3, 4))
    assert ev.spawned == [] and r == 0
    s, ev, r = step(s, Action(TileType.SLOW, 2, 4))
    assert ev.spawned == []
    s, ev, r = step(s, Action(TileType.SLOW, 2, 3))  # turn 3
    assert len(ev.spawned) == 1


def test_spawned_hp_grows_with_turn():
    cfg = GameConfig(spawn_period=1, hp_growth_interval=10, base_hp=3, max_turns=50)
    s = new_game(board_from_rows(OPEN), cfg)
    seen = {}
    for t in range(12):
        legal = np.flatnonzero(legal_actions(s))
        idx = int(legal[0])
        y, x = divmod(idx % 36, 6)
        s, ev, _ = step(s, Action(ENTITY_ORDER[idx // 36], x, y))
        seen[t] = ev.spawned[0][2]
    assert seen[0] == 3 and seen[9] == 3 and seen[10] == 4 and seen[11] == 4


def test_attacker_with_one_hp_is_slain_next_to_defender():
    rows = ["S.....", "......", "......", "......", "...D..", ".....H"]
    s = quiet_game(rows)
    s.attackers.append(Attacker(3, 3, hp=1))  # will step east into the defender's reach
    s, ev, r = step(s, Action(TileType.SLOW, 0, 5))
    assert r == 1 and score(s) == 1
    assert ev.slain == [(4, 3)] and s.attackers == []


def test_damage_is_summed_over_defenders_in_range():
    rows = ["S.....", "......", "......", "..D.D.", "......", ".....H"]
    s = quiet_game(rows)
    s.attackers.append(Attacker(3, 4, hp=3, slow_delay=1))  # sits still, both D in range
    s, ev, r = step(s, Action(TileType.SLOW, 0, 1))
    assert s.attackers[0].hp == 1  # 3 - 2
    assert r == 0


def test_movement_prefers_north_on_ties():
    rows = ["......", "......", "..H...", "......", "......", "S....."]
    s = quiet_game(rows)
    s.attackers.append(Attacker(2, 4, hp=5))  # north is uniquely best
    s, _, _ = step(s, Action(TileType.SLOW, 5, 5))
    assert (s.attackers[0].x, s.attackers[0].y) == (2, 3)
    # from (3,3) both north (3,2) and west (2,3) sit at distance 1: north wins
    s.attackers[0].x, s.attackers[0].y = 3, 3
    s, _, _ = step(s, Action(TileType.SLOW, 5, 4))
    assert (s.attackers[0].x, s.attackers[0].y) == (3, 2)


def test_movement_prefers_east_over_south_on_ties():
    rows = ["S.....", "......", "......", "......", "......", ".....H"]
    s = quiet_game(rows)
    s.attackers.append(Attacker(2, 2, hp=5))  # east (3,2) and south (2,3) tie
    s, _, _ = step(s, Action(TileType.SLOW, 0, 5))
    assert (s.attackers[0].x, s.attackers[0].y) == (3, 2)


def test_slow_tile_costs_exactly_two_turns():
    rows = ["S.....", "......", "......", "......", "......", "..s..H"]
    s = quiet_game(rows)
    s.attackers.append(Attacker(1, 5, hp=9))
    s, _, _ = step(s, Action(TileType.SLOW, 0, 1))
    a = s.attackers[0]
    assert (a.x, a.y) == (2, 5) and a.slow_delay == 1  # stepped onto the slow
    s, _, _ = step(s, Action(TileType.SLOW, 1, 1))
    a = s.attackers[0]
    assert (a.x, a.y) == (2, 5) and a.slow_delay == 0  # waited
    s, _, _ = step(s, Action(TileType.SLOW, 2, 1))
    a = s.attackers[0]
    assert (a.x, a.y) == (3, 5)  # moved off


def test_breach_ends_the_game():
    rows = ["S.....", "......", "......", "......", "......", "....H."]
    s = quiet_game(rows)
    s.attackers.append(Attacker(3, 5, hp=9))
    s, ev, _ = step(s, Action(TileType.SLOW, 0, 3))
    assert s.breached and ev.breached and s.terminal
    with pytest.raises(IllegalActionError, match="over"):
        step(s, Action(TileType.SLOW, 0, 4))


def test_slain_attacker_on_home_does_not_breach():
    rows = ["S.....", "......", "......", "......", "....D.", "....DH"]
    s = quiet_game(rows, defender_damage=5)
    s.attackers.append(Attacker(5, 4, hp=1))
    s, ev, r = step(s, Action(TileType.SLOW, 0, 3))
    assert r == 1 and not s.breached and not s.terminal


def test_illegal_action_leaves_state_unchanged():
    s = new_game(board_from_rows(OPEN))
    before = engine_snapshot(s)
    for bad in [Action(TileType.BLOCK, 0, 0),      # source tile
                Action(TileType.SLOW, 5, 5),       # home tile
                Action(TileType.HOME, 2, 2),       # not a placeable entity
                Action(TileType.BLOCK, -1, 2),     # out of bounds
                Action(TileType.BLOCK, 6, 2)]:
        with pytest.raises(IllegalActionError):
            step(s, bad)
        assert engine_snapshot(s) == before


def test_sever_by_block_is_rejected():
    rows = ["S#....", ".#....", ".#....", ".#....", ".#....", ".....H"]
    s = new_game(board_from_rows(rows))
    with pytest.raises(IllegalActionError, match="cut off"):
        step(s, Action(TileType.BLOCK, 0, 5))
    s2, _, _ = step(s, Action(TileType.SLOW, 0, 5))
    assert s2.board.tiles[5, 0] == TileType.SLOW


def test_determinism_same_seed_same_history():
    def run(seed):
        s = new_game(board_from_rows(OPEN), GameConfig(stochastic_spawn=True), seed=seed)
        trail = []
        rng = np.random.default_rng(99)
        for _ in range(15):
            legal = np.flatnonzero(legal_actions(s))
            if len(legal) == 0 or s.terminal:
                break
            idx = int(legal[rng.integers(len(legal))])
            y, x = divmod(idx % 36, 6)
            s, _, r = step(s, Action(ENTITY_ORDER[idx // 36], x, y))
            trail.append((engine_snapshot(s), r))
        return trail

    assert run(5) == run(5)


def test_scripted_six_by_six_matches_reference():
    rows = OPEN
    cfg = dict(spawn_period=2, base_hp=2, max_turns=30)
    script = [
        ("D", 1, 1), ("D", 2, 1), ("D", 3, 1), ("D", 4, 1),
        ("s", 1, 0), ("s", 2, 0), ("s", 3, 0),
        ("#", 0, 5), ("D", 4, 3), ("s", 4, 0),
    ]
    ent = {"D": TileType.DEFENDER, "s": TileType.SLOW, "#": TileType.BLOCK}

    eng = new_game(board_from_rows(rows), GameConfig(**cfg))
    ref = ref_new(rows, cfg)
    for ch, x, y in script:
        eng, _, r_eng = step(eng, Action(ent[ch], x, y))
        r_ref = ref_step(ref, ch, x, y)
        assert r_eng == r_ref
        assert engine_snapshot(eng) == snapshot(ref)
    assert eng.turn == 10
    assert score(eng) == ref.slain > 0


def test_state_copy_is_deep():
    s = new_game(board_from_rows(OPEN), GameConfig(stochastic_spawn=True), seed=3)
    s.attackers.append(Attacker(2, 2, hp=4))
    c = s.copy()
    c.attackers[0].hp = 1
    c.board.tiles[4, 4] = TileType.BLOCK
    c.rng.random()
    assert s.attackers[0].hp == 4
    assert s.board.tiles[4, 4] == TileType.NEUTRAL
    assert s.rng.getstate() != c.rng.getstate()
