"""Network building blocks: dense stacks, a gated recurrent cell, mixture
and Gaussian output heads. Parameters are float32; modules can be cast to
float64 for finite-difference verification."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, concat

LOG_2PI = float(np.log(2.0 * np.pi))
STD_FLOOR = 1e-3


class Module:
    def __init__(self):
        self._params: list[tuple[str, Tensor]] = []
        self._children: list[tuple[str, "Module"]] = []

    def param(self, name: str, array: np.ndarray) -> Tensor:
        t = Tensor(np.asarray(array), requires_grad=True, dtype=np.float32)
        self._params.append((name, t))
        return t

    def child(self, name: str, module: "Module") -> "Module":
        self._children.append((name, module))
        return module

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        out = [(prefix + n, t) for n, t in self._params]
        for cn, c in self._children:
            out.extend(c.named_parameters(prefix + cn + "."))
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    @property
    def n_params(self) -> int:
        return sum(t.data.size for t in self.parameters())

    @property
    def dtype(self):
        return self.parameters()[0].dtype

    def constant(self, x) -> Tensor:
        return Tensor(np.asarray(x), dtype=self.dtype)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([t.data.reshape(-1) for t in self.parameters()])

    def set_flat(self, flat: np.ndarray):
        flat = np.asarray(flat)
        i = 0
        for t in self.parameters():
            n = t.data.size
            t.data = flat[i : i + n].reshape(t.data.shape).astype(t.dtype)
            i += n
        if i != flat.size:
            raise ValueError(f"flat vector length {flat.size} != parameter count {i}")

    def cast(self, dtype) -> "Module":
        for t in self.parameters():
            t.data = t.data.astype(dtype)
        return self

    def grad_flat(self) -> np.ndarray:
        parts = []
        for t in self.parameters():
            g = t.grad if t.grad is not None else np.zeros_like(t.data)
            parts.append(np.asarray(g).reshape(-1))
        return np.concatenate(parts)

    def zero_grad(self):
        for t in self.parameters():
            t.grad = None


def _xavier(r: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return r.uniform(-limit, limit, size=(fan_in, fan_out))


class Dense(Module):
    def __init__(self, r: np.random.Generator, n_in: int, n_out: int):
        super().__init__()
        self.W = self.param("W", _xavier(r, n_in, n_out))
        self.b = self.param("b", np.zeros(n_out))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.W + self.b


class MLP(Module):
    """Dense stack with tanh hidden activations; `out_tanh` squashes the output."""

    def __init__(self, r: np.random.Generator, sizes: list[int], out_tanh: bool = False):
        super().__init__()
        self.layers = [self.child(f"l{i}", Dense(r, a, b)) for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))]
        self.out_tanh = out_tanh

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = x.tanh()
        return x.tanh() if self.out_tanh else x


class GRUCell(Module):
    """Single gated recurrent cell: h' = z*h + (1-z)*n."""

    def __init__(self, r: np.random.Generator, n_in: int, n_hidden: int):
        super().__init__()
        self.n_hidden = n_hidden
        for gate in ("z", "r", "n"):
            self.param(f"W{gate}", _xavier(r, n_in, n_hidden))
            self.param(f"U{gate}", _xavier(r, n_hidden, n_hidden))
            self.param(f"b{gate}", np.zeros(n_hidden))
        (self.Wz, self.Uz, self.bz, self.Wr, self.Ur, self.br, self.Wn, self.Un, self.bn) = [t for _, t in self._params]

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        z = (x @ self.Wz + h @ self.Uz + self.bz).sigmoid()
        r = (x @ self.Wr + h @ self.Ur + self.br).sigmoid()
        n = (x @ self.Wn + r * (h @ self.Un) + self.bn).tanh()
        return z * h + (1.0 - z) * n

    def init_hidden(self, batch: int) -> Tensor:
        return Tensor(np.zeros((batch, self.n_hidden)), dtype=self.dtype)


class GmmHead(Module):
    """K-component diagonal Gaussian mixture over the 2D command box.

    Means are tanh-squashed into the box; stds are softplus-floored.
    """

    def __init__(self, r: np.random.Generator, n_in: int, K: int = 5, bounds=((0.0, 1.0), (-1.5, 1.5))):
        super().__init__()
        self.K = K
        lo = np.array([b[0] for b in bounds])
        hi = np.array([b[1] for b in bounds])
        self.center = (lo + hi) / 2.0
        self.half = (hi - lo) / 2.0
        self.logit_l = self.child("logits", Dense(r, n_in, K))
        self.mean_l = self.child("means", Dense(r, n_in, 2 * K))
        self.lstd_l = self.child("lstds", Dense(r, n_in, 2 * K))

    def __call__(self, h: Tensor) -> dict:
        B = h.shape[0]
        logits = self.logit_l(h)
        mu = self.mean_l(h).reshape(B, self.K, 2).tanh() * self.constant(self.half) + self.constant(self.center)
        std = self.lstd_l(h).reshape(B, self.K, 2).softplus() + STD_FLOOR
        return {"logits": logits, "mu": mu, "std": std}


def gmm_nll(head: dict, target) -> Tensor:
    """Per-sample negative log-likelihood, shape (B,), log-sum-exp over components."""
    logits, mu, std = head["logits"], head["mu"], head["std"]
    B, K = logits.shape
    t = target if isinstance(target, Tensor) else Tensor(np.asarray(target), dtype=mu.dtype)
    t = t.reshape(B, 1, 2)
    z = (t - mu) / std
    comp_lp = (z.square() * -0.5 - std.log() - 0.5 * LOG_2PI).sum(axis=2)  # (B, K)
    log_w = logits - logits.logsumexp(axis=1).reshape(B, 1)
    return -(log_w + comp_lp).logsumexp(axis=1)


def gmm_mode(head: dict) -> np.ndarray:
    """Deterministic readout: mean of the argmax-weight component, shape (B, 2)."""
    logits = head["logits"].data
    mu = head["mu"].data
    k = np.argmax(logits, axis=1)
    return mu[np.arange(mu.shape[0]), k]


def gmm_sample(head: dict, r: np.random.Generator, temperature: float = 1.0) -> np.ndarray:
    """Draw one command per row; temperature 0 collapses to gmm_mode."""
    if temperature <= 0.0:
        return gmm_mode(head)
    logits = head["logits"].data.astype(np.float64) / temperature
    mu = head["mu"].data
    std = head["std"].data
    B, K = logits.shape
    p = np.exp(logits - logits.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    out = np.empty((B, 2))
    for i in range(B):
        k = int(r.choice(K, p=p[i]))
        out[i] = mu[i, k] + temperature * std[i, k] * r.standard_normal(2)
    return out


class GaussianHead(Module):
    """Diagonal Gaussian with state-independent learned log-std (PPO policies)."""

    def __init__(self, dim: int = 2, init_std: float = 0.5):
        super().__init__()
        self.log_std = self.param("log_std", np.full(dim, np.log(init_std)))

    def std(self) -> np.ndarray:
        return np.exp(self.log_std.data.astype(np.float64))

    def log_prob(self, mean: Tensor, actions) -> Tensor:
        a = actions if isinstance(actions, Tensor) else Tensor(np.asarray(actions), dtype=mean.dtype)
        z = (a - mean) * (-self.log_std).exp()
        return (z.square() * -0.5 - self.log_std - 0.5 * LOG_2PI).sum(axis=1)

    def entropy(self) -> Tensor:
        return (self.log_std + 0.5 * (LOG_2PI + 1.0)).sum()

    def sample(self, mean: np.ndarray, r: np.random.Generator) -> np.ndarray:
        return mean + self.std() * r.standard_normal(mean.shape)
