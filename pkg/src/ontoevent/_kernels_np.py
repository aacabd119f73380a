"""Pure-numpy training-step kernels; fallback when the extension isn't built.

Every function here has a drop-in compiled twin in ``_speedups``. Shapes:
predictions and targets are (batch, dim), weights are (dim,), parameters are
flat float64 arrays updated in place.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"


def sigmoid(logits: np.ndarray, eps: float) -> np.ndarray:
    """Numerically safe sigmoid clamped into [eps, 1 - eps]."""
    out = np.empty_like(logits, dtype=np.float64)
    pos = logits >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
    ez = np.exp(logits[~pos])
    out[~pos] = ez / (1.0 + ez)
    np.clip(out, eps, 1.0 - eps, out=out)
    return out


def bce_loss_dz(probs: np.ndarray, targets: np.ndarray, weights: np.ndarray) -> tuple[float, np.ndarray]:
    """Weighted binary cross-entropy summed over the batch, plus d(loss)/d(logits).

    Both the positive and the negative term are charged, each scaled by its
    entry's weight: loss = -sum_ij w_j * (y log p + (1-y) log(1-p)).
    """
    logp = np.log(probs)
    log1mp = np.log1p(-probs)
    loss = -float(np.sum(weights * (targets * logp + (1.0 - targets) * log1mp)))
    dz = weights * (probs - targets)
    return loss, dz


def cos_loss_dz(probs: np.ndarray, targets: np.ndarray, weights: np.ndarray) -> tuple[float, np.ndarray]:
    """Per-row cosine distance of the weighted vectors, summed over the batch.

    Row loss is 1 - cos(w*y, w*p); the gradient is taken through the sigmoid,
    so the returned matrix is already d(loss)/d(logits).
    """
    u = weights * targets
    v = weights * probs
    un = np.sqrt(np.sum(u * u, axis=1))
    vn = np.sqrt(np.sum(v * v, axis=1))
    if np.any(un == 0.0) or np.any(vn == 0.0):
        raise ValueError("cosine loss undefined for a zero weighted vector")
    uv = np.sum(u * v, axis=1)
    loss = float(np.sum(1.0 - uv / (un * vn)))
    dv = -(u / (un * vn)[:, None] - v * (uv / (un * vn**3))[:, None])
    dz = dv * weights * probs * (1.0 - probs)
    return loss, dz


def nesterov_step(
    param: np.ndarray,
    velocity: np.ndarray,
    grad: np.ndarray,
    lr: float,
    momentum: float,
    weight_decay: float,
) -> None:
    """One SGD step with Nesterov momentum and coupled weight decay, in place."""
    g = grad + weight_decay * param
    velocity *= momentum
    velocity += g
    param -= lr * (g + momentum * velocity)
