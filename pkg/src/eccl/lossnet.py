"""Board-to-loss regressor.

A small convolutional tower that maps a pristine board (no attackers, no
placements) to the training loss the agent is expected to incur on it.
The evolutionary generator maximizes this prediction; training targets are
the per-map mean |TD error| realized in the latest training cycle.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .agent.network import init_model_params
from .codec import N_PLANES, encode_board
from .game.board import Board
from .nn import Graph
from .nn.checkpoint import CheckpointError, pack_params, read_checkpoint, unpack_params, write_checkpoint


@dataclass
class LossNetConfig:
    residual_blocks: int = 2
    conv_filters: int = 16
    head_hidden: int = 32
    learning_rate: float = 1e-4
    epochs: int = 4

    def __post_init__(self):
        for name, v in asdict(self).items():
            if v <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class MapLossRecord:
    board: Board
    realized_loss: float


def record_map_loss(board: Board, per_experience_losses) -> MapLossRecord | None:
    """Mean |loss| over one map's sampled experiences; None when it had none."""
    losses = np.asarray(list(per_experience_losses), dtype=np.float64)
    if losses.size == 0:
        return None
    value = float(np.mean(np.abs(losses)))
    if not np.isfinite(value):
        raise ValueError("realized loss is not finite")
    return MapLossRecord(board=board, realized_loss=value)


def _build(width, height, cfg: LossNetConfig):
    g = Graph(dtype=np.float32)
    x = g.input("state", (N_PLANES, height, width))

    def conv(tag, src, cin, cout):
        k = g.param(f"{tag}.w", (cout, cin, 3, 3))
        b = g.param(f"{tag}.b", (cout,))
        return g.conv2d(src, k, b)

    h = g.relu(conv("trunk", x, N_PLANES, cfg.conv_filters))
    for i in range(cfg.residual_blocks):
        inner = g.relu(conv(f"res{i}.a", h, cfg.conv_filters, cfg.conv_filters))
        h = g.relu(g.add(h, conv(f"res{i}.b", inner, cfg.conv_filters, cfg.conv_filters)))
    flat = g.reshape(h, (cfg.conv_filters * height * width,))
    w1 = g.param("head.hidden.w", (cfg.head_hidden, flat.shape[0]))
    b1 = g.param("head.hidden.b", (cfg.head_hidden,))
    w2 = g.param("head.out.w", (1, cfg.head_hidden))
    b2 = g.param("head.out.b", (1,))
    pred = g.reshape(g.dense(g.relu(g.dense(flat, w1, b1)), w2, b2), ())

    target = g.input("target", ())
    diff = g.sub(pred, target)
    mse = g.batch_mean(g.mul(diff, diff))
    return g, x, pred, mse


class LossNet:
    def __init__(self, width: int, height: int, config: LossNetConfig = None, seed: int = 0):
        self.config = config or LossNetConfig()
        self.width = width
        self.height = height
        self.graph, self._state, self._pred, self._mse = _build(width, height, self.config)
        self.params = init_model_params(self.graph, np.random.default_rng(seed))

    # ------------------------------------------------------------ inference

    def predict_batch(self, boards) -> np.ndarray:
        states = np.stack([encode_board(b) for b in boards])
        cache = self.graph.forward(self.params, {"state": states}, outputs=[self._pred])
        return cache.values[self._pred.id].astype(np.float64)

    def predict_loss(self, board: Board) -> float:
        return float(self.predict_batch([board])[0])

    # ------------------------------------------------------------ training

    def train(self, records) -> tuple[float, list[float]]:
        """Full-batch MSE descent for cfg.epochs; returns (final_mse, per-epoch MSE)."""
        records = list(records)
        if not records:
            raise ValueError("no map-loss records to train on")
        states = np.stack([encode_board(r.board) for r in records])
        targets = np.array([r.realized_loss for r in records], dtype=np.float32)
        feeds = {"state": states, "target": targets}
        history = []
        for _ in range(self.config.epochs):
            cache = self.graph.forward(self.params, feeds, outputs=[self._mse])
            grads = self.graph.backward(cache, self._mse)
            self.params.adam_step(grads, self.config.learning_rate)
            after = self.graph.forward(self.params, feeds, outputs=[self._mse])
            history.append(float(after.values[self._mse.id]))
        return history[-1], history

    # ------------------------------------------------------------ persistence

    def save(self, path):
        meta = {
            "kind": "loss-net",
            "width": self.width,
            "height": self.height,
            "config": asdict(self.config),
        }
        write_checkpoint(path, pack_params(self.params), meta)

    @classmethod
    def load(cls, path) -> "LossNet":
        tensors, meta = read_checkpoint(path)
        if meta.get("kind") != "loss-net":
            raise CheckpointError(f"not a loss-net checkpoint: kind={meta.get('kind')!r}")
        net = cls(meta["width"], meta["height"], LossNetConfig(**meta["config"]))
        params = unpack_params(tensors)
        for name, node in net.graph.param_nodes.items():
            if name not in params or params[name].shape != node.shape:
                raise CheckpointError(f"checkpoint tensor {name!r} missing or mis-shaped")
        net.params = params
        return net
