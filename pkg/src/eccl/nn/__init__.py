from .graph import Graph, Node, Cache, ShapeError
from .params import NetworkParams, NonFiniteGradientError, he_uniform
from .checkpoint import (CheckpointError, read_checkpoint, write_checkpoint,
                         pack_params, unpack_params)


def huber_value(prediction, target, kappa=1.0):
    """Scalar/array Huber loss: 0.5 d^2 for |d| <= kappa, else kappa(|d| - kappa/2)."""
    import numpy as np
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    d = np.asarray(prediction, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    ad = np.abs(d)
    out = np.where(ad <= kappa, 0.5 * d * d, kappa * (ad - 0.5 * kappa))
    return float(out) if out.ndim == 0 else out
