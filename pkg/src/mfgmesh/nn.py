"""Two-hidden-layer ReLU Q-network with Munchausen targets and Adam, in plain numpy.

Weights are stored ``(fan_in, fan_out)`` so a batch of row-vector
observations is propagated with ``x @ W + b``. Everything is float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .env import N_ACTIONS

MIN_HIDDEN = 16


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [w.shape for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @classmethod
    def from_arrays(cls, arrays) -> "MlpParams":
        arrays = list(arrays)
        return cls(arrays[0::2], arrays[1::2])

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "MlpParams":
        return MlpParams([np.zeros_like(w) for w in self.weights],
                         [np.zeros_like(b) for b in self.biases])


def hidden_width(input_dim: int) -> int:
    """Largest power of two not exceeding the input size, floored at ``MIN_HIDDEN``."""
    if input_dim < 1:
        raise ValueError("input_dim must be positive")
    return max(MIN_HIDDEN, 1 << (int(input_dim).bit_length() - 1))


def init_params(input_dim: int, rng: np.random.Generator, n_actions: int = N_ACTIONS,
                hidden: int | None = None) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
    hidden = hidden or hidden_width(input_dim)
    dims = [input_dim, hidden, hidden, n_actions]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpParams(weights, biases)


def _forward_cache(params: MlpParams, x: np.ndarray):
    acts = [x]
    pre = []
    h = x
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        pre.append(z)
        h = z if k == last else np.maximum(z, 0.0)
        acts.append(h)
    return h, pre, acts


def forward(params: MlpParams, obs) -> np.ndarray:
    """Q-values for one observation ``(d,)`` or a batch ``(B, d)``."""
    x = np.asarray(obs, dtype=np.float64)
    if x.shape[-1] != params.input_dim:
        raise ValueError(f"observation has {x.shape[-1]} features, network expects {params.input_dim}")
    return _forward_cache(params, x)[0]


def forward_stacked(weights: list[np.ndarray], biases: list[np.ndarray], x: np.ndarray) -> np.ndarray:
    """Per-agent forward pass: ``weights[k]`` is ``(N, fan_in, fan_out)``, ``x`` is ``(N, d)``."""
    h = x
    last = len(weights) - 1
    for k, (w, b) in enumerate(zip(weights, biases)):
        h = np.einsum("ni,nio->no", h, w) + b
        if k != last:
            h = np.maximum(h, 0.0)
    return h


def log_policy_from_q(q, tau_q: float) -> np.ndarray:
    """Log-softmax of ``q / tau_q`` along the last axis."""
    if tau_q <= 0:
        raise ValueError("tau_q must be positive")
    q = np.asarray(q, dtype=np.float64)
    if not np.isfinite(q).all():
        raise ValueError("non-finite Q-values")
    z = q / tau_q
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def policy_from_q(q, tau_q: float) -> np.ndarray:
    """Softmax policy ``softmax(q / tau_q)`` computed with max-subtraction."""
    if tau_q <= 0:
        raise ValueError("tau_q must be positive")
    q = np.asarray(q, dtype=np.float64)
    if not np.isfinite(q).all():
        raise ValueError("non-finite Q-values")
    z = q / tau_q
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class Transition(NamedTuple):
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray


class Batch(NamedTuple):
    obs: np.ndarray       # (B, d)
    actions: np.ndarray   # (B,) int
    rewards: np.ndarray   # (B,)
    next_obs: np.ndarray  # (B, d)

    @classmethod
    def from_transitions(cls, transitions) -> "Batch":
        transitions = list(transitions)
        if not transitions:
            raise ValueError("empty batch")
        return cls(np.stack([t.obs for t in transitions]).astype(np.float64),
                   np.array([int(t.action) for t in transitions], dtype=np.int64),
                   np.array([float(t.reward) for t in transitions]),
                   np.stack([t.next_obs for t in transitions]).astype(np.float64))


def munchausen_targets(target_params: MlpParams, batch: Batch, tau_q: float,
                       cl: float, gamma: float) -> np.ndarray:
    """Regression targets for a batch, computed from the target network only.

    ``T = r + clip(tau * log pi'(a|o), cl, 0)
          + gamma * sum_a pi'(a|o') * (Q'(o', a) - tau * log pi'(a|o'))``
    """
    if cl >= 0:
        raise ValueError("clip lower bound cl must be negative")
    q_now = forward(target_params, batch.obs)
    q_next = forward(target_params, batch.next_obs)
    logp_now = log_policy_from_q(q_now, tau_q)
    logp_next = log_policy_from_q(q_next, tau_q)
    idx = np.arange(len(batch.actions))
    bonus = np.clip(tau_q * logp_now[idx, batch.actions], cl, 0.0)
    soft_value = (np.exp(logp_next) * (q_next - tau_q * logp_next)).sum(axis=1)
    out = batch.rewards + bonus + gamma * soft_value
    if not np.isfinite(out).all():
        raise FloatingPointError("non-finite Munchausen target")
    return out


def munchausen_target(tr: Transition, target_params: MlpParams, tau_q: float,
                      cl: float, gamma: float) -> float:
    return float(munchausen_targets(target_params, Batch.from_transitions([tr]), tau_q, cl, gamma)[0])


def regression_loss_and_gradients(params: MlpParams, obs: np.ndarray, actions: np.ndarray,
                                  targets: np.ndarray) -> tuple[float, MlpParams]:
    """Mean squared error of ``Q(o, a)`` against fixed targets, with backprop gradients."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[1] != params.input_dim:
        raise ValueError(f"batch observations must be (B, {params.input_dim}), got {obs.shape}")
    q, pre, acts = _forward_cache(params, obs)
    n = len(actions)
    idx = np.arange(n)
    resid = q[idx, actions] - targets
    loss = float(np.mean(resid ** 2))
    delta = np.zeros_like(q)
    delta[idx, actions] = 2.0 * resid / n
    gw, gb = [], []
    for k in range(len(params.weights) - 1, -1, -1):
        gw.append(acts[k].T @ delta)
        gb.append(delta.sum(axis=0))
        if k:
            delta = (delta @ params.weights[k].T) * (pre[k - 1] > 0)
    return loss, MlpParams(gw[::-1], gb[::-1])


def loss_and_gradients(params: MlpParams, target_params: MlpParams, batch: Batch,
                       tau_q: float, cl: float, gamma: float) -> tuple[float, MlpParams]:
    """Munchausen loss of ``params`` on ``batch``; targets are treated as constants."""
    if len(batch.actions) == 0:
        raise ValueError("empty batch")
    targets = munchausen_targets(target_params, batch, tau_q, cl, gamma)
    return regression_loss_and_gradients(params, batch.obs, batch.actions, targets)


@dataclass
class AdamState:
    m: MlpParams
    v: MlpParams
    step: int = 0
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams, lr: float = 0.01) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), 0, lr)

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.step, self.lr,
                         self.beta1, self.beta2, self.eps)


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState) -> tuple[MlpParams, AdamState]:
    """Bias-corrected Adam update; returns new parameter and state objects."""
    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** step
    c2 = 1.0 - b2 ** step
    lr_t = state.lr / c1
    inv_c2 = 1.0 / np.sqrt(c2)
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m.arrays(), state.v.arrays()):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m = b1 * m
        m += (1.0 - b1) * g
        v = b2 * v
        v += (1.0 - b2) * (g * g)
        denom = np.sqrt(v)
        denom *= inv_c2
        denom += state.eps
        upd = m * lr_t
        upd /= denom
        new_p.append(p - upd)
        new_m.append(m)
        new_v.append(v)
    return MlpParams.from_arrays(new_p), AdamState(
        MlpParams.from_arrays(new_m), MlpParams.from_arrays(new_v), step,
        state.lr, b1, b2, state.eps)


def sync_target(params: MlpParams) -> MlpParams:
    return params.copy()


# --- serialization -----------------------------------------------------------
# Layout (little-endian): u64 layer count, then (u64 fan_in, u64 fan_out) per
# layer, then per layer the row-major weights followed by the biases, f64.

def serialize_params(params: MlpParams) -> bytes:
    parts = [struct.pack("<Q", len(params.weights))]
    for w in params.weights:
        parts.append(struct.pack("<QQ", *w.shape))
    for w, b in zip(params.weights, params.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


def deserialize_params(blob: bytes) -> MlpParams:
    (n_layers,) = struct.unpack_from("<Q", blob, 0)
    offset = 8
    shapes = []
    for _ in range(n_layers):
        shapes.append(struct.unpack_from("<QQ", blob, offset))
        offset += 16
    weights, biases = [], []
    for fan_in, fan_out in shapes:
        count = fan_in * fan_out
        w = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(fan_in, fan_out)
        offset += 8 * count
        b = np.frombuffer(blob, dtype="<f8", count=fan_out, offset=offset)
        offset += 8 * fan_out
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    if offset != len(blob):
        raise ValueError(f"{len(blob) - offset} trailing bytes after parameters")
    return MlpParams(weights, biases)
