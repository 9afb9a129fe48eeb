"""Named parameter tensors with Adam optimizer state."""

from __future__ import annotations

import math

import numpy as np


class NonFiniteGradientError(RuntimeError):
    """A gradient contained NaN/inf; the whole update was rejected."""


def he_uniform(shape, fan_in, rng, dtype=np.float32):
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class NetworkParams:
    """Ordered named tensors plus per-tensor Adam moment accumulators.

    Tensor shapes are fixed after `add`; `adam_step` advances the shared
    step counter and both moment buffers.  A zero gradient therefore
    leaves values untouched (0/(sqrt(0)+eps) == 0) while still counting
    the step.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.tensors: dict[str, np.ndarray] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name, value):
        if name in self.tensors:
            raise ValueError(f"duplicate parameter {name!r}")
        arr = np.asarray(value, dtype=self.dtype)
        self.tensors[name] = arr
        self.m[name] = np.zeros_like(arr)
        self.v[name] = np.zeros_like(arr)
        return arr

    def __getitem__(self, name):
        return self.tensors[name]

    def __contains__(self, name):
        return name in self.tensors

    def names(self):
        return list(self.tensors)

    def copy(self):
        out = NetworkParams(self.dtype)
        for name, t in self.tensors.items():
            out.tensors[name] = t.copy()
            out.m[name] = self.m[name].copy()
            out.v[name] = self.v[name].copy()
        out.step = self.step
        return out

    def copy_values_from(self, other):
        """Hard-sync tensor values (target-network update); optimizer state kept."""
        for name, t in other.tensors.items():
            np.copyto(self.tensors[name], t)

    def adam_step(self, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        """One Adam update from a name->gradient dict.

        Raises NonFiniteGradientError before touching any state if a
        gradient is not finite; missing names are treated as zero grad.
        """
        bad = [name for name, g in grads.items() if not np.all(np.isfinite(g))]
        if bad:
            raise NonFiniteGradientError(f"non-finite gradients for {bad}")
        for name, g in grads.items():
            if self.tensors[name].shape != np.shape(g):
                raise ValueError(f"gradient shape {np.shape(g)} does not match "
                                 f"parameter {name!r} {self.tensors[name].shape}")
        self.step += 1
        t = self.step
        bc1 = 1.0 - beta1 ** t
        bc2 = 1.0 - beta2 ** t
        for name, tensor in self.tensors.items():
            g = grads.get(name)
            m = self.m[name]
            v = self.v[name]
            m *= beta1
            v *= beta2
            if g is not None:
                g = np.asarray(g, dtype=self.dtype)
                m += (1.0 - beta1) * g
                v += (1.0 - beta2) * g * g
            tensor -= (lr / bc1) * m / (np.sqrt(v / bc2) + eps)
