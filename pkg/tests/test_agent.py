import numpy as np
import pytest

from eccl.agent import (
    AgentConfig, DQNAgent, Experience, beta_schedule, build_q_model,
    double_q_targets, dueling_combine, epsilon_schedule, select_action,
)
from eccl.codec import action_space, encode_state
from eccl.game import new_game
from eccl.nn import Graph
from eccl.nn.checkpoint import CheckpointError, read_checkpoint, write_checkpoint

from test_engine import board_from_rows, OPEN


def tiny_config(**kw):
    base = dict(residual_blocks=1, conv_filters=4, value_hidden=8,
                advantage_hidden=8, batch_size=8, batches_per_cycle=5,
                replay_capacity=64)
    base.update(kw)
    return AgentConfig(**base)


def tiny_agent(seed=0, **kw):
    return DQNAgent(6, 6, tiny_config(**kw), seed=seed)


# ------------------------------------------------------------ dueling combine

def test_combine_analytic_example():
    g = Graph()
    v = g.input("v", (1,))
    a = g.input("a", (3,))
    q = dueling_combine(g, v, a)
    cache = g.forward({}, {"v": [[2.0]], "a": [[1.0, 0.0, -1.0]]}, outputs=[q])
    assert np.array_equal(cache.values[q.id][0], [3.0, 2.0, 1.0])


def test_combine_constant_advantage_collapses_to_value():
    g = Graph()
    v = g.input("v", (1,))
    a = g.input("a", (4,))
    q = dueling_combine(g, v, a)
    cache = g.forward({}, {"v": [[1.5]], "a": [[0.25, 0.25, 0.25, 0.25]]}, outputs=[q])
    assert np.array_equal(cache.values[q.id][0], np.full(4, 1.5, dtype=np.float32))


def test_combine_shift_invariance_exact():
    g = Graph()
    v = g.input("v", (1,))
    a = g.input("a", (4,))
    q = dueling_combine(g, v, a)
    # multiples of 0.25 keep the 4-element mean float-exact
    base = np.array([[0.75, -0.5, 0.25, 1.5]], dtype=np.float32)
    out1 = g.forward({}, {"v": [[0.5]], "a": base}, outputs=[q]).values[q.id]
    out2 = g.forward({}, {"v": [[0.5]], "a": base + 2.0}, outputs=[q]).values[q.id]
    assert np.array_equal(out1, out2)
    assert np.argmax(out1) == np.argmax(base)


def test_zeroed_advantage_head_means_q_equals_value():
    agent = tiny_agent(seed=3)
    agent.online.tensors["advantage.out.w"][:] = 0.0
    s = encode_state(new_game(board_from_rows(OPEN)))
    q = agent.q_values(s)
    assert q.shape == (action_space(6, 6),)
    assert np.allclose(q, q[0])
    v_node = agent.model.value
    cache = agent.model.graph.forward(agent.online, {"state": s[None]}, outputs=[v_node])
    assert np.allclose(q, cache.values[v_node.id][0][0])


# ------------------------------------------------------------ targets

def test_double_q_uses_online_argmax_and_target_value():
    q_online = np.array([[1.0, 2.0]])
    q_target = np.array([[10.0, 0.0]])
    mask = np.array([[True, True]])
    out = double_q_targets([1.0], [False], mask, q_online, q_target, gamma=0.5)
    assert out[0] == pytest.approx(1.0)   # vanilla max would say 6.0
    assert out[0] != pytest.approx(6.0)


def test_terminal_target_is_reward():
    out = double_q_targets([4.0], [True], np.array([[True, True]]),
                           np.array([[9.0, 9.0]]), np.array([[9.0, 9.0]]), gamma=0.99)
    assert out[0] == pytest.approx(4.0)


def test_gamma_zero_targets_are_rewards():
    rng = np.random.default_rng(0)
    q1, q2 = rng.normal(size=(2, 5, 7))
    masks = np.ones((5, 7), dtype=bool)
    rewards = [0.0, 1.0, 2.0, 3.0, 4.0]
    out = double_q_targets(rewards, [False] * 5, masks, q1, q2, gamma=0.0)
    assert np.allclose(out, rewards)


def test_no_legal_next_action_means_no_bootstrap():
    out = double_q_targets([2.0], [False], np.array([[False, False]]),
                           np.array([[5.0, 5.0]]), np.array([[5.0, 5.0]]), gamma=0.9)
    assert out[0] == pytest.approx(2.0)
    assert np.isfinite(out).all()


def test_argmax_respects_next_legal_mask():
    q_online = np.array([[99.0, 1.0, 2.0]])
    q_target = np.array([[50.0, -1.0, 7.0]])
    mask = np.array([[False, True, True]])  # the 99 is unreachable
    out = double_q_targets([0.0], [False], mask, q_online, q_target, gamma=1.0)
    assert out[0] == pytest.approx(7.0)


# ------------------------------------------------------------ action selection

def test_greedy_when_epsilon_zero():
    q = np.array([0.1, 5.0, -3.0, 2.0])
    legal = np.array([True, False, True, True])
    rng = np.random.default_rng(0)
    assert select_action(q, legal, 0.0, rng) == 3


def test_single_legal_action_for_any_epsilon():
    q = np.array([9.0, 1.0, 9.0])
    legal = np.array([False, True, False])
    rng = np.random.default_rng(1)
    for eps in (0.0, 0.3, 1.0):
        for _ in range(20):
            assert select_action(q, legal, eps, rng) == 1


def test_no_legal_action_raises():
    with pytest.raises(ValueError, match="no legal actions"):
        select_action(np.zeros(3), np.zeros(3, dtype=bool), 0.5, np.random.default_rng(0))


def test_full_exploration_is_uniform_over_legal():
    q = np.linspace(-1, 1, 10)
    legal = np.zeros(10, dtype=bool)
    legal[[1, 3, 4, 8, 9]] = True
    rng = np.random.default_rng(123)
    draws = 100_000
    counts = np.zeros(10)
    for _ in range(draws):
        counts[select_action(q, legal, 1.0, rng)] += 1
    assert counts[~legal].sum() == 0
    freq = counts[legal] / draws
    assert np.max(np.abs(freq - 0.2)) < 0.02


# ------------------------------------------------------------ schedules

def test_beta_schedule_linear_to_one():
    cfg = AgentConfig()
    assert beta_schedule(0, cfg) == pytest.approx(0.4)
    assert beta_schedule(500, cfg) == pytest.approx(0.7)
    assert beta_schedule(1000, cfg) == pytest.approx(1.0)
    assert beta_schedule(5000, cfg) == pytest.approx(1.0)


def test_epsilon_schedule_decays_and_clamps():
    cfg = AgentConfig()
    assert epsilon_schedule(0, cfg) == pytest.approx(1.0)
    assert epsilon_schedule(250, cfg) == pytest.approx(0.525)
    assert epsilon_schedule(500, cfg) == pytest.approx(0.05)
    assert epsilon_schedule(10_000, cfg) == pytest.approx(0.05)


def test_training_protocol_defaults():
    cfg = AgentConfig()
    assert cfg.gamma == 0.99
    assert cfg.replay_capacity == 20_000
    assert (cfg.alpha, cfg.beta0) == (0.6, 0.4)
    assert cfg.beta_anneal_games == 1000
    assert cfg.batches_per_cycle == 250
    assert cfg.batch_size == 32
    assert cfg.maps_per_cycle == 5


# ------------------------------------------------------------ training cycles

def zero_experience(agent):
    s = encode_state(new_game(board_from_rows(OPEN)))
    mask = np.ones(action_space(6, 6), dtype=bool)
    return Experience(state=s, action=7, reward=0.0, next_state=s,
                      terminal=True, next_legal_mask=mask, map_id=1)


def test_zero_td_cycle_changes_nothing():
    agent = tiny_agent()
    for name in agent.online.names():
        agent.online.tensors[name][:] = 0.0  # Q == 0 everywhere
    agent.sync_target()
    bank = agent.new_bank()
    for _ in range(16):
        bank.insert(zero_experience(agent))
    before = {n: agent.online[n].copy() for n in agent.online.names()}
    report = agent.train_cycle(bank)
    assert report.mean_loss == 0.0
    assert report.batches == 5 and report.batch_size == 8
    assert not report.underfull
    for n, t in before.items():
        assert np.array_equal(agent.online[n], t)


def test_underfull_bank_is_a_flagged_noop():
    agent = tiny_agent()
    bank = agent.new_bank()
    bank.insert(zero_experience(agent))
    before = {n: agent.online[n].copy() for n in agent.online.names()}
    report = agent.train_cycle(bank)
    assert report.underfull and report.batches == 0
    for n, t in before.items():
        assert np.array_equal(agent.online[n], t)


def test_prediction_converges_to_fixed_reward():
    agent = tiny_agent(seed=11, learning_rate=0.01, batches_per_cycle=50)
    s = encode_state(new_game(board_from_rows(OPEN)))
    mask = np.ones(action_space(6, 6), dtype=bool)
    exp = Experience(state=s, action=40, reward=2.5, next_state=s,
                     terminal=True, next_legal_mask=mask, map_id=0)
    bank = agent.new_bank()
    for _ in range(8):
        bank.insert(exp)
    pred = None
    for cycle in range(10):  # <= 500 batches in all
        agent.train_cycle(bank)
        pred = agent.q_values(s)[40]
        if abs(pred - 2.5) < 1e-2:
            break
    assert pred == pytest.approx(2.5, abs=1e-2)


def test_losses_grouped_by_map():
    agent = tiny_agent(seed=5)
    bank = agent.new_bank()
    s = encode_state(new_game(board_from_rows(OPEN)))
    mask = np.ones(action_space(6, 6), dtype=bool)
    for map_id, reward in ((3, 0.0), (4, 10.0)):
        for _ in range(8):
            bank.insert(Experience(state=s, action=2, reward=reward, next_state=s,
                                   terminal=True, next_legal_mask=mask, map_id=map_id))
    report = agent.train_cycle(bank)
    assert set(report.losses_by_map) <= {3, 4}
    assert 4 in report.losses_by_map  # the high-error map cannot be missed
    assert report.losses_by_map[4] > report.losses_by_map.get(3, 0.0)
    # overall mean sits inside the per-map range
    lows = min(report.losses_by_map.values())
    highs = max(report.losses_by_map.values())
    assert lows - 1e-9 <= report.mean_loss <= highs + 1e-9


def test_train_cycle_is_deterministic():
    def one(seed):
        agent = tiny_agent(seed=seed)
        bank = agent.new_bank()
        rng = np.random.default_rng(17)
        s = encode_state(new_game(board_from_rows(OPEN)))
        mask = np.ones(action_space(6, 6), dtype=bool)
        for k in range(16):
            bank.insert(Experience(state=s, action=int(rng.integers(108)),
                                   reward=float(rng.random()), next_state=s,
                                   terminal=bool(k % 3 == 0), next_legal_mask=mask,
                                   map_id=k % 2))
        return agent, bank

    a1, b1 = one(9)
    a2, b2 = one(9)
    r1 = a1.train_cycle(b1)
    r2 = a2.train_cycle(b2)
    assert r1.mean_loss == r2.mean_loss
    for n in a1.online.names():
        assert np.array_equal(a1.online[n], a2.online[n])


def test_target_sync_schedule():
    agent = tiny_agent(seed=2, target_sync_cycles=2)
    bank = agent.new_bank()
    rng = np.random.default_rng(4)
    s = encode_state(new_game(board_from_rows(OPEN)))
    mask = np.ones(action_space(6, 6), dtype=bool)
    for k in range(16):
        bank.insert(Experience(state=s, action=int(rng.integers(108)),
                               reward=float(rng.random() * 3), next_state=s,
                               terminal=True, next_legal_mask=mask))
    agent.train_cycle(bank)
    drift = any(not np.array_equal(agent.online[n], agent.target[n])
                for n in agent.online.names())
    assert drift  # cycle 1 of 2: no sync yet
    agent.train_cycle(bank)
    for n in agent.online.names():
        assert np.array_equal(agent.online[n], agent.target[n])


# ------------------------------------------------------------ persistence

def test_checkpoint_round_trip_bitwise(tmp_path):
    agent = tiny_agent(seed=6)
    bank = agent.new_bank()
    s = encode_state(new_game(board_from_rows(OPEN)))
    mask = np.ones(action_space(6, 6), dtype=bool)
    for _ in range(8):
        bank.insert(Experience(state=s, action=5, reward=1.0, next_state=s,
                               terminal=True, next_legal_mask=mask))
    agent.train_cycle(bank)
    agent.games_played = 42
    path = tmp_path / "agent.ckpt"
    agent.save(path)
    loaded = DQNAgent.load(path)
    assert loaded.games_played == 42 and loaded.cycles_done == 1
    assert loaded.online.step == agent.online.step
    assert np.array_equal(loaded.q_values(s), agent.q_values(s))
    states = np.stack([s, s * 0.5])
    assert np.array_equal(loaded.q_batch(states), agent.q_batch(states))


def test_checkpoint_truncation_detected(tmp_path):
    agent = tiny_agent()
    path = tmp_path / "agent.ckpt"
    agent.save(path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-20])
    with pytest.raises(CheckpointError, match="truncated"):
        DQNAgent.load(path)


def test_checkpoint_config_mismatch_detected(tmp_path):
    agent = tiny_agent()
    path = tmp_path / "agent.ckpt"
    agent.save(path)
    tensors, meta = read_checkpoint(path)
    meta["config"]["conv_filters"] = 16  # stored tensors no longer fit
    write_checkpoint(path, tensors, meta)
    with pytest.raises(CheckpointError, match="shape"):
        DQNAgent.load(path)


def test_checkpoint_missing_tensor_detected(tmp_path):
    agent = tiny_agent()
    path = tmp_path / "agent.ckpt"
    agent.save(path)
    tensors, meta = read_checkpoint(path)
    tensors.pop("target.trunk.w")
    write_checkpoint(path, tensors, meta)
    with pytest.raises(CheckpointError, match="missing target"):
        DQNAgent.load(path)


def test_wrong_kind_rejected(tmp_path):
    path = tmp_path / "other.ckpt"
    write_checkpoint(path, {"x": np.zeros(3, dtype=np.float32)}, {"kind": "something"})
    with pytest.raises(CheckpointError, match="not an agent checkpoint"):
        DQNAgent.load(path)
