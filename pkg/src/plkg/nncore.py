"""Minimal differentiable blocks with hand-written exact backward passes.

The model zoo is small and fixed (dense + layer norm + ReLU trunks, one
LSTM cell, a squashed-Gaussian policy head), so every layer carries its own
backward instead of a generic autodiff graph. All math is float64; every
gradient is checked against central finite differences in the test suite.

Layers cache their last forward activations, so a backward call must follow
the forward it belongs to before the layer is reused.
"""

from __future__ import annotations

import math
import struct

import numpy as np

from .numerics import RngStream

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
TANH_EPS = 1e-6
_LN_EPS = 1e-5
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

_CKPT_MAGIC = b"PLKGNN01"


class Module:
    """Base for layers owning parameters and accumulated gradients."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def _register(self, name: str, value: np.ndarray):
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def param_list(self):
        return [self.params[k] for k in sorted(self.params)]

    def grad_list(self):
        return [self.grads[k] for k in sorted(self.params)]


class Dense(Module):
    """Affine map y = x W + b with fan-in scaled uniform init."""

    def __init__(self, in_dim: int, out_dim: int, rng: RngStream):
        super().__init__()
        limit = 1.0 / math.sqrt(in_dim)
        self._register("W", rng.uniform(-limit, limit, (in_dim, out_dim)))
        self._register("b", np.zeros(out_dim))
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, gy: np.ndarray, accumulate: bool = True) -> np.ndarray:
        if accumulate:
            self.grads["W"] += self._x.T @ gy
            self.grads["b"] += gy.sum(axis=0)
        return gy @ self.params["W"].T


class LayerNorm(Module):
    """Per-row normalization to zero mean / unit variance, then gain+offset."""

    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim
        self._register("g", np.ones(dim))
        self._register("o", np.zeros(dim))
        self._xhat = None
        self._inv_s = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        inv_d = 1.0 / self.dim
        mu = x.sum(axis=-1, keepdims=True)
        mu *= inv_d
        xc = x - mu
        var = np.einsum("...i,...i->...", xc, xc) * inv_d
        inv_s = 1.0 / np.sqrt(var + _LN_EPS)
        xhat = xc * inv_s[..., None]
        self._xhat = xhat
        self._inv_s = inv_s
        return xhat * self.params["g"] + self.params["o"]

    def backward(self, gy: np.ndarray, accumulate: bool = True) -> np.ndarray:
        # rows are feature vectors: inputs here are always (batch, dim)
        xhat = self._xhat
        if accumulate:
            self.grads["g"] += np.einsum("bi,bi->i", gy, xhat)
            self.grads["o"] += gy.sum(axis=0)
        gh = gy * self.params["g"]
        inv_d = 1.0 / self.dim
        m1 = gh.sum(axis=-1, keepdims=True)
        m1 *= inv_d
        m2 = np.einsum("bi,bi->b", gh, xhat) * inv_d
        out = gh
        out -= m1
        out -= xhat * m2[..., None]
        out *= self._inv_s[..., None]
        return out


class ReLU(Module):
    def __init__(self):
        super().__init__()
        self._mask = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0.0
        return x * self._mask

    def backward(self, gy: np.ndarray, accumulate: bool = True) -> np.ndarray:
        return gy * self._mask


class MLP(Module):
    """Dense -> LayerNorm -> ReLU hidden stack, then a bare output Dense."""

    def __init__(self, in_dim: int, hidden_dims, out_dim: int, rng: RngStream):
        super().__init__()
        self.layers = []
        d = in_dim
        for h in hidden_dims:
            self.layers.append(Dense(d, h, rng))
            self.layers.append(LayerNorm(h))
            self.layers.append(ReLU())
            d = h
        self.layers.append(Dense(d, out_dim, rng))

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, gy: np.ndarray, accumulate: bool = True) -> np.ndarray:
        for layer in reversed(self.layers):
            gy = layer.backward(gy, accumulate=accumulate)
        return gy

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def param_list(self):
        return [p for layer in self.layers for p in layer.param_list()]

    def grad_list(self):
        return [g for layer in self.layers for g in layer.grad_list()]

    def named_params(self, prefix: str):
        out = {}
        for i, layer in enumerate(self.layers):
            for k in sorted(layer.params):
                out[f"{prefix}.{i}.{k}"] = layer.params[k]
        return out


class LSTMCell(Module):
    """Standard gated cell; gate order in the packed matrices is (i, f, o, g)."""

    def __init__(self, in_dim: int, hidden: int, rng: RngStream):
        super().__init__()
        self.hidden = hidden
        lim_x = 1.0 / math.sqrt(in_dim)
        lim_h = 1.0 / math.sqrt(hidden)
        self._register("Wx", rng.uniform(-lim_x, lim_x, (in_dim, 4 * hidden)))
        self._register("Wh", rng.uniform(-lim_h, lim_h, (hidden, 4 * hidden)))
        self._register("b", np.zeros(4 * hidden))

    def forward_step(self, x, h, c):
        """One step; returns (h', c', cache) with cache for backward_step."""
        z = x @ self.params["Wx"] + h @ self.params["Wh"] + self.params["b"]
        hs = self.hidden
        i = _sigmoid(z[:, :hs])
        f = _sigmoid(z[:, hs:2 * hs])
        o = _sigmoid(z[:, 2 * hs:3 * hs])
        g = np.tanh(z[:, 3 * hs:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        cache = (x, h, c, i, f, o, g, tc)
        return h_new, c_new, cache

    def backward_step(self, cache, gh, gc, accumulate: bool = True):
        """Gradients for one step given upstream dL/dh' and dL/dc'.

        Returns (gx, gh_prev, gc_prev); parameter gradients accumulate.
        """
        x, h, c, i, f, o, g, tc = cache
        go = gh * tc
        gc_total = gc + gh * o * (1.0 - tc * tc)
        gf = gc_total * c
        gc_prev = gc_total * f
        gi = gc_total * g
        gg = gc_total * i
        dz = np.concatenate(
            [
                gi * i * (1.0 - i),
                gf * f * (1.0 - f),
                go * o * (1.0 - o),
                gg * (1.0 - g * g),
            ],
            axis=1,
        )
        if accumulate:
            self.grads["Wx"] += x.T @ dz
            self.grads["Wh"] += h.T @ dz
            self.grads["b"] += dz.sum(axis=0)
        gx = dz @ self.params["Wx"].T
        gh_prev = dz @ self.params["Wh"].T
        return gx, gh_prev, gc_prev


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def squashed_gaussian_sample(mean: np.ndarray, log_std: np.ndarray,
                             noise: np.ndarray):
    """Reparameterized tanh-squashed Gaussian sample.

    u = mean + exp(log_std) * noise, action = tanh(u); the log density is the
    Gaussian one minus sum log(1 - a^2 + eps) for the squash change of
    variables. log_std is clamped to [-20, 2] before use. Returns
    (action, log_prob, cache); log_prob sums over the trailing axis.
    """
    ls = np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)
    std = np.exp(ls)
    u = mean + std * noise
    # float64 tanh rounds to +-1 past |u| ~ 19; keep the open interval
    a = np.clip(np.tanh(u), -1.0 + 1e-12, 1.0 - 1e-12)
    sq = 1.0 - a * a
    log_prob = (
        -0.5 * noise * noise - ls - _LOG_SQRT_2PI - np.log(sq + TANH_EPS)
    ).sum(axis=-1)
    inside = (log_std > LOG_STD_MIN) & (log_std < LOG_STD_MAX)
    cache = (a, sq, std, noise, inside)
    return a, log_prob, cache


def squashed_gaussian_backward(cache, g_action: np.ndarray, g_logp: np.ndarray):
    """Exact gradients of (action, log_prob) w.r.t. (mean, log_std).

    g_action has the action's shape, g_logp the per-sample shape; returns
    (g_mean, g_log_std). The log-density is treated as a function of the
    pre-squash sample, so with frozen noise the only parameter paths are
    through mean and log_std (reparameterization trick).
    """
    a, sq, std, noise, inside = cache
    g_logp = np.asarray(g_logp)[..., None]
    # d log_prob / du: only the squash correction depends on u given noise
    dlp_du = g_logp * (2.0 * a * sq / (sq + TANH_EPS))
    du = g_action * sq + dlp_du
    g_mean = du
    g_log_std = du * std * noise - g_logp * np.ones_like(a)
    return g_mean, g_log_std * inside


def recompute_log_prob(mean: np.ndarray, log_std: np.ndarray,
                       action: np.ndarray) -> np.ndarray:
    """Log density of an already-squashed action (independent recomputation)."""
    ls = np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)
    a = np.clip(action, -1.0 + 1e-12, 1.0 - 1e-12)
    u = np.arctanh(a)
    z = (u - mean) / np.exp(ls)
    return (
        -0.5 * z * z - ls - _LOG_SQRT_2PI - np.log(1.0 - a * a + TANH_EPS)
    ).sum(axis=-1)


class Adam:
    """Bias-corrected moment optimizer updating a fixed parameter list in place."""

    def __init__(self, params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params_ref = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params_ref]
        self.v = [np.zeros_like(p) for p in self.params_ref]

    def step(self, grads):
        self.t += 1
        b1t = 1.0 - self.b1**self.t
        b2t = 1.0 - self.b2**self.t
        # lr m-hat / (sqrt(v-hat) + eps) with m-hat = m/b1t, v-hat = v/b2t
        scale = self.lr / b1t
        root = math.sqrt(1.0 / b2t)
        for p, g, m, v in zip(self.params_ref, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            denom = np.sqrt(v)
            denom *= root
            denom += self.eps
            p -= scale * m / denom


def soft_update(target: dict[str, np.ndarray], online: dict[str, np.ndarray],
                tau: float):
    """target <- (1 - tau) * target + tau * online, elementwise, in place."""
    if target.keys() != online.keys():
        raise ValueError("parameter sets do not match")
    for k in target:
        if target[k].shape != online[k].shape:
            raise ValueError(f"shape mismatch for {k}")
        target[k] *= 1.0 - tau
        target[k] += tau * online[k]


def save_checkpoint(path, named: dict[str, np.ndarray]):
    """Write named float64 tensors to a little-endian binary container."""
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", len(named)))
        for name in sorted(named):
            arr = np.asarray(named[name], dtype="<f8")
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<I", d))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read a container written by save_checkpoint; bit-exact round trip."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ValueError(f"not a parameter checkpoint: magic {magic!r}")
        (count,) = struct.unpack("<I", fh.read(4))
        out = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", fh.read(2))
            name = fh.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = tuple(
                struct.unpack("<I", fh.read(4))[0] for _ in range(ndim)
            )
            n_items = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * n_items), dtype="<f8")
            out[name] = data.reshape(shape).copy()
        return out
