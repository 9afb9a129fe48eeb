"""Double dueling DQN agent: action selection, targets, training cycles.

The agent owns online and target parameter sets over a shared graph.
Targets follow the double-Q rule (argmax under the online net, value from
the target net); sampled transitions are weighted by importance-sampling
weights from the replay bank and their new |TD error| is written back as
priority.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np

from ..nn import NonFiniteGradientError
from ..nn.checkpoint import CheckpointError, pack_params, read_checkpoint, unpack_params, write_checkpoint
from .network import QModel, build_q_model, init_model_params
from .replay import ReplayBank


@dataclass
class AgentConfig:
    gamma: float = 0.99
    learning_rate: float = 3e-4
    replay_capacity: int = 20000
    alpha: float = 0.6
    beta0: float = 0.4
    beta_final: float = 1.0
    beta_anneal_games: int = 1000
    batch_size: int = 32
    batches_per_cycle: int = 250
    maps_per_cycle: int = 5
    priority_epsilon: float = 1e-3
    target_sync_cycles: int = 1
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_anneal_games: int = 500
    residual_blocks: int = 3
    conv_filters: int = 32
    value_hidden: int = 64
    advantage_hidden: int = 64

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if not 0.0 <= self.beta0 <= self.beta_final <= 1.0:
            raise ValueError("need 0 <= beta0 <= beta_final <= 1")
        if self.replay_capacity < self.batch_size:
            raise ValueError("replay capacity below batch size")


def epsilon_schedule(games_played: int, cfg: AgentConfig) -> float:
    frac = min(max(games_played, 0) / max(cfg.epsilon_anneal_games, 1), 1.0)
    return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start)


def beta_schedule(games_played: int, cfg: AgentConfig) -> float:
    frac = min(max(games_played, 0) / max(cfg.beta_anneal_games, 1), 1.0)
    return cfg.beta0 + frac * (cfg.beta_final - cfg.beta0)


def select_action(q: np.ndarray, legal: np.ndarray, epsilon: float, rng) -> int:
    """Epsilon-greedy over the legal subset of a flat Q vector."""
    legal_idx = np.flatnonzero(legal)
    if legal_idx.size == 0:
        raise ValueError("no legal actions")
    if rng.random() < epsilon:
        return int(legal_idx[rng.integers(legal_idx.size)])
    masked = np.where(legal, q, -np.inf)
    return int(np.argmax(masked))


def double_q_targets(rewards, terminals, next_masks, q_next_online, q_next_target,
                     gamma) -> np.ndarray:
    """r + gamma * Q_target(s', argmax_legal Q_online(s', .)) per sample.

    Terminal rows (and rows whose next state offers no legal action) take
    the bare reward.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    terminals = np.asarray(terminals, dtype=bool)
    masks = np.asarray(next_masks, dtype=bool)
    bootstrappable = ~terminals & masks.any(axis=1)
    masked_online = np.where(masks, q_next_online, -np.inf)
    a_star = np.argmax(masked_online, axis=1)
    chosen = np.take_along_axis(np.asarray(q_next_target, dtype=np.float64),
                                a_star[:, None], axis=1)[:, 0]
    return (rewards + np.where(bootstrappable, gamma * chosen, 0.0)).astype(np.float32)


@dataclass
class CycleReport:
    mean_loss: float                 # mean |TD error| per sample over the cycle
    batches: int
    batch_size: int
    losses_by_map: dict = field(default_factory=dict)   # map_id -> mean |TD|
    map_samples: dict = field(default_factory=dict)     # map_id -> raw |TD| list
    sample_losses: np.ndarray = None
    skipped_stale: int = 0
    nonfinite_rejects: int = 0
    underfull: bool = False


class DQNAgent:
    def __init__(self, width: int, height: int, config: AgentConfig = None, seed: int = 0):
        self.config = config or AgentConfig()
        self.width = width
        self.height = height
        self.model: QModel = build_q_model(
            width, height,
            residual_blocks=self.config.residual_blocks,
            conv_filters=self.config.conv_filters,
            value_hidden=self.config.value_hidden,
            advantage_hidden=self.config.advantage_hidden,
        )
        self.rng = np.random.default_rng(seed)
        self.online = init_model_params(self.model.graph, self.rng)
        self.target = self.online.copy()
        self.games_played = 0
        self.cycles_done = 0

    # ------------------------------------------------------------ inference

    def q_batch(self, states: np.ndarray, params=None) -> np.ndarray:
        params = self.online if params is None else params
        cache = self.model.graph.forward(params, {"state": states}, outputs=[self.model.q])
        return cache.values[self.model.q.id]

    def q_values(self, state: np.ndarray) -> np.ndarray:
        return self.q_batch(state[None])[0]

    def epsilon(self) -> float:
        return epsilon_schedule(self.games_played, self.config)

    def beta(self) -> float:
        return beta_schedule(self.games_played, self.config)

    def new_bank(self) -> ReplayBank:
        cfg = self.config
        return ReplayBank(cfg.replay_capacity, alpha=cfg.alpha,
                          priority_epsilon=cfg.priority_epsilon)

    # ------------------------------------------------------------ training

    def sync_target(self):
        self.target.copy_values_from(self.online)

    def train_cycle(self, bank: ReplayBank) -> CycleReport:
        cfg = self.config
        if len(bank) < cfg.batch_size:
            return CycleReport(mean_loss=float("nan"), batches=0,
                               batch_size=cfg.batch_size, underfull=True)
        g = self.model.graph
        m = self.model
        beta = self.beta()
        abs_tds = []
        by_map = defaultdict(list)
        skipped = 0
        rejects = 0
        for _ in range(cfg.batches_per_cycle):
            batch = bank.sample(cfg.batch_size, beta, self.rng)
            exps = batch.experiences
            states = np.stack([e.state for e in exps])
            next_states = np.stack([e.next_state for e in exps])
            rewards = [e.reward for e in exps]
            terminals = [e.terminal for e in exps]
            next_masks = np.stack([e.next_legal_mask for e in exps])
            targets = double_q_targets(
                rewards, terminals, next_masks,
                self.q_batch(next_states, self.online),
                self.q_batch(next_states, self.target),
                cfg.gamma,
            )
            feeds = {
                "state": states,
                "action": np.array([e.action for e in exps], dtype=np.int64),
                "target": targets,
                "weight": batch.weights.astype(np.float32),
            }
            cache = g.forward(self.online, feeds, outputs=[m.loss])
            grads = g.backward(cache, m.loss)
            try:
                self.online.adam_step(grads, cfg.learning_rate)
            except NonFiniteGradientError:
                rejects += 1
            abs_td = np.abs(cache.values[m.q_selected.id] - targets)
            skipped += bank.update_priorities(batch.tree_indices, batch.stamps, abs_td)
            abs_tds.append(abs_td)
            for e, td in zip(exps, abs_td):
                by_map[e.map_id].append(td)
        self.cycles_done += 1
        if cfg.target_sync_cycles and self.cycles_done % cfg.target_sync_cycles == 0:
            self.sync_target()
        flat = np.concatenate(abs_tds)
        return CycleReport(
            mean_loss=float(flat.mean()),
            batches=cfg.batches_per_cycle,
            batch_size=cfg.batch_size,
            losses_by_map={k: float(np.mean(v)) for k, v in by_map.items()},
            map_samples={k: [float(x) for x in v] for k, v in by_map.items()},
            sample_losses=flat,
            skipped_stale=skipped,
            nonfinite_rejects=rejects,
        )

    # ------------------------------------------------------------ persistence

    def save(self, path):
        """Online+target params and counters; the replay bank is not saved."""
        tensors = {}
        tensors.update(pack_params(self.online, "online."))
        tensors.update(pack_params(self.target, "target."))
        meta = {
            "kind": "dqn-agent",
            "width": self.width,
            "height": self.height,
            "config": asdict(self.config),
            "games_played": self.games_played,
            "cycles_done": self.cycles_done,
            "online_step": self.online.step,
            "target_step": self.target.step,
        }
        write_checkpoint(path, tensors, meta)

    @classmethod
    def load(cls, path) -> "DQNAgent":
        tensors, meta = read_checkpoint(path)
        if meta.get("kind") != "dqn-agent":
            raise CheckpointError(f"not an agent checkpoint: kind={meta.get('kind')!r}")
        agent = cls(meta["width"], meta["height"], AgentConfig(**meta["config"]))
        online = unpack_params(tensors, "online.")
        target = unpack_params(tensors, "target.")
        for name, node in agent.model.graph.param_nodes.items():
            for pack, label in ((online, "online"), (target, "target")):
                if name not in pack:
                    raise CheckpointError(f"checkpoint missing {label} tensor {name!r}")
                if pack[name].shape != node.shape:
                    raise CheckpointError(
                        f"{label} tensor {name!r} has shape {pack[name].shape}, "
                        f"model expects {node.shape}")
        agent.online = online
        agent.target = target
        agent.online.step = int(meta.get("online_step", 0))
        agent.target.step = int(meta.get("target_step", 0))
        agent.games_played = int(meta.get("games_played", 0))
        agent.cycles_done = int(meta.get("cycles_done", 0))
        return agent
