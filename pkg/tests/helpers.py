"""Shared test utilities: finite-difference gradient oracle and small builders."""

from __future__ import annotations

import numpy as np

from eccl.nn import Graph


def fd_check(graph, params, feeds, loss_node, eps=1e-4):
    """Worst relative error between analytic grads and central differences.

    Perturbs every element of every parameter and differentiable feed.
    Relative error uses max(1, |a|, |n|) in the denominator so elements
    with near-zero gradient are held to an absolute 1e-4 instead.
    """
    cache = graph.forward(params, feeds, outputs=loss_node)
    analytic_p, analytic_in = graph.backward(cache, loss_node, want_inputs=True)

    def loss_val():
        c = graph.forward(params, feeds, outputs=loss_node)
        return float(c.value(loss_node))

    worst = 0.0
    for store, analytic in ((params, analytic_p), (feeds, analytic_in)):
        for name, g in analytic.items():
            flat = store[name].reshape(-1)
            gf = np.asarray(g).reshape(-1)
            assert gf.size == flat.size, f"grad size mismatch for {name}"
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                lp = loss_val()
                flat[i] = orig - eps
                lm = loss_val()
                flat[i] = orig
                num = (lp - lm) / (2.0 * eps)
                err = abs(num - gf[i]) / max(1.0, abs(num), abs(gf[i]))
                worst = max(worst, err)
    return worst


def scalarize(g: Graph, out):
    """Reduce any batched node to a scalar loss with random fixed weights."""
    w = g.const(np.random.default_rng(out.id).uniform(0.5, 1.5, size=out.shape))
    return g.batch_mean(g.reduce_sum(g.mul(out, w)))


def away_from(x, points, margin):
    """Nudge samples so |x - p| >= margin for every kink point p."""
    x = np.array(x, dtype=np.float64)
    for p in points:
        close = np.abs(x - p) < margin
        x[close] = p + margin * np.where(x[close] >= p, 1.0, -1.0)
    return x
