"""Adam with bias correction, plus global-norm gradient clipping."""

from __future__ import annotations

import numpy as np


class TrainStepError(RuntimeError):
    pass


def global_norm_clip(params, max_norm: float) -> float:
    """Scale gradients in place so the global L2 norm is at most max_norm."""
    sq = 0.0
    for t in params:
        if t.grad is not None:
            sq += float(np.sum(np.asarray(t.grad, dtype=np.float64) ** 2))
    norm = float(np.sqrt(sq))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for t in params:
            if t.grad is not None:
                t.grad = (t.grad * scale).astype(t.dtype)
    return norm


class Adam:
    def __init__(self, params, lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data, dtype=np.float32) for p in self.params]
        self.v = [np.zeros_like(p.data, dtype=np.float32) for p in self.params]

    def step(self):
        self.t += 1
        lr_t = self.lr * np.sqrt(1.0 - self.b2**self.t) / (1.0 - self.b1**self.t)
        offset = 0
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                offset += p.data.size
                continue
            g = np.asarray(g, dtype=np.float32)
            if not np.all(np.isfinite(g)):
                bad = offset + int(np.flatnonzero(~np.isfinite(g.reshape(-1)))[0])
                raise TrainStepError(f"non-finite gradient at flat parameter index {bad} (tensor {i})")
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g
            p.data = p.data - (lr_t * self.m[i] / (np.sqrt(self.v[i]) + self.eps)).astype(p.dtype)
            offset += p.data.size

    def zero_grad(self):
        for p in self.params:
            p.grad = None
