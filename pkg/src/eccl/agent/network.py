"""Dueling Q-network over encoded board states.

One graph serves both inference and training: asking only for the q node
runs the plain forward pass, while the loss node additionally consumes the
action / target / importance-weight inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..codec import N_PLANES, action_space
from ..nn import Graph, NetworkParams, he_uniform


def dueling_combine(g: Graph, value, advantage):
    """Q = V + (A - mean_a A); invariant to shifting every advantage."""
    return g.add(value, g.sub(advantage, g.reduce_mean(advantage)))


@dataclass
class QModel:
    graph: Graph
    width: int
    height: int
    state: object
    action: object
    target: object
    weight: object
    value: object
    advantage: object
    q: object
    q_selected: object
    sample_loss: object
    loss: object


def build_q_model(width, height, residual_blocks=3, conv_filters=32,
                  value_hidden=64, advantage_hidden=64, dtype=np.float32,
                  huber_kappa=1.0) -> QModel:
    g = Graph(dtype=dtype)
    x = g.input("state", (N_PLANES, height, width))

    def conv(tag, src, cin, cout):
        k = g.param(f"{tag}.w", (cout, cin, 3, 3))
        b = g.param(f"{tag}.b", (cout,))
        return g.conv2d(src, k, b)

    h = g.relu(conv("trunk", x, N_PLANES, conv_filters))
    for i in range(residual_blocks):
        inner = g.relu(conv(f"res{i}.a", h, conv_filters, conv_filters))
        h = g.relu(g.add(h, conv(f"res{i}.b", inner, conv_filters, conv_filters)))
    flat = g.reshape(h, (conv_filters * height * width,))

    def head(tag, hidden, n_out):
        w1 = g.param(f"{tag}.hidden.w", (hidden, flat.shape[0]))
        b1 = g.param(f"{tag}.hidden.b", (hidden,))
        w2 = g.param(f"{tag}.out.w", (n_out, hidden))
        b2 = g.param(f"{tag}.out.b", (n_out,))
        return g.dense(g.relu(g.dense(flat, w1, b1)), w2, b2)

    value = head("value", value_hidden, 1)
    advantage = head("advantage", advantage_hidden, action_space(width, height))
    q = dueling_combine(g, value, advantage)

    action = g.input("action", (), integer=True)
    target = g.input("target", ())
    weight = g.input("weight", ())
    q_selected = g.gather(q, action)
    sample_loss = g.huber(q_selected, target, kappa=huber_kappa)
    loss = g.batch_mean(g.mul(sample_loss, weight))

    return QModel(graph=g, width=width, height=height, state=x, action=action,
                  target=target, weight=weight, value=value, advantage=advantage,
                  q=q, q_selected=q_selected, sample_loss=sample_loss, loss=loss)


def init_model_params(graph: Graph, rng, dtype=np.float32) -> NetworkParams:
    """He-uniform weights (fan-in from the tensor shape), zero biases."""
    params = NetworkParams(dtype)
    for name, node in graph.param_nodes.items():
        shape = node.shape
        if len(shape) == 4:
            params.add(name, he_uniform(shape, shape[1] * shape[2] * shape[3], rng, dtype))
        elif len(shape) == 2:
            params.add(name, he_uniform(shape, shape[1], rng, dtype))
        else:
            params.add(name, np.zeros(shape, dtype=dtype))
    return params
