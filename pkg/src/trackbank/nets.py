"""Two-layer dense networks in numpy with exact hand-written backprop.

The policy net maps a binary observation to logits over the action space;
the value net maps it to a scalar. Both share this module's forward and
backward passes; the loss-specific gradients live in ppo.py.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import ConfigurationError


@dataclass
class MlpParams:
    w1: np.ndarray  # [hidden, in]
    b1: np.ndarray  # [hidden]
    w2: np.ndarray  # [out, hidden]
    b2: np.ndarray  # [out]

    def copy(self) -> "MlpParams":
        return MlpParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    def tensors(self) -> Iterator[tuple[str, np.ndarray]]:
        yield "w1", self.w1
        yield "b1", self.b1
        yield "w2", self.w2
        yield "b2", self.b2


@dataclass
class PolicyParams:
    policy: MlpParams
    value: MlpParams

    @property
    def input_width(self) -> int:
        return self.policy.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.policy.w1.shape[0]

    @property
    def action_count(self) -> int:
        return self.policy.w2.shape[0]

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.policy.copy(), self.value.copy())

    def tensors(self) -> Iterator[tuple[str, np.ndarray]]:
        for name, arr in self.policy.tensors():
            yield f"policy.{name}", arr
        for name, arr in self.value.tensors():
            yield f"value.{name}", arr


def orthogonal(rows: int, cols: int, gain: float, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal weight matrix scaled by gain (rows x cols)."""
    big, small = max(rows, cols), min(rows, cols)
    a = rng.normal(0.0, 1.0, size=(big, small))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(gain * q[:rows, :cols], dtype=np.float64)


def _init_mlp(
    input_width: int, hidden: int, out: int, final_gain: float, rng: np.random.Generator
) -> MlpParams:
    return MlpParams(
        w1=orthogonal(hidden, input_width, np.sqrt(2.0), rng),
        b1=np.zeros(hidden, dtype=np.float64),
        w2=orthogonal(out, hidden, final_gain, rng),
        b2=np.zeros(out, dtype=np.float64),
    )


def init_policy_params(
    input_width: int, hidden: int, action_count: int, rng: np.random.Generator
) -> PolicyParams:
    """Orthogonal init; the final policy layer is shrunk so the initial
    action distribution is near uniform."""
    for name, v in (("input_width", input_width), ("hidden", hidden), ("action_count", action_count)):
        if v < 1:
            raise ConfigurationError(f"{name} must be positive, got {v}")
    return PolicyParams(
        policy=_init_mlp(input_width, hidden, action_count, 0.01, rng),
        value=_init_mlp(input_width, hidden, 1, 1.0, rng),
    )


def mlp_forward(p: MlpParams, x: np.ndarray) -> tuple[np.ndarray, tuple]:
    """x: [B, in] -> (out [B, out], cache for backward)."""
    z1 = x @ p.w1.T + p.b1
    a1 = np.maximum(z1, 0.0)
    out = a1 @ p.w2.T + p.b2
    return out, (x, z1, a1)


def mlp_backward(p: MlpParams, cache: tuple, d_out: np.ndarray) -> MlpParams:
    """Gradient of a scalar loss w.r.t. all parameters, given d loss/d out."""
    x, z1, a1 = cache
    d_w2 = d_out.T @ a1
    d_b2 = d_out.sum(axis=0)
    d_a1 = d_out @ p.w2
    d_z1 = d_a1 * (z1 > 0.0)
    d_w1 = d_z1.T @ x
    d_b1 = d_z1.sum(axis=0)
    return MlpParams(w1=d_w1, b1=d_b1, w2=d_w2, b2=d_b2)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def entropy(probs: np.ndarray) -> np.ndarray:
    """Row-wise Shannon entropy in nats; 0 log 0 reads as 0."""
    p = np.asarray(probs, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(p), 0.0)
    return -terms.sum(axis=-1)


def policy_forward(params: PolicyParams, observation: np.ndarray) -> tuple[np.ndarray, float]:
    """Single-observation convenience: (action probabilities, value estimate)."""
    obs = np.asarray(observation, dtype=np.float64)
    if obs.ndim != 1 or obs.shape[0] != params.input_width:
        raise ConfigurationError(
            f"observation has shape {obs.shape}, expected ({params.input_width},)"
        )
    logits, _ = mlp_forward(params.policy, obs[None, :])
    value, _ = mlp_forward(params.value, obs[None, :])
    return softmax(logits)[0], float(value[0, 0])


def policy_forward_batch(
    params: PolicyParams, observations: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched (probs [B, A], log-probs [B, A], values [B])."""
    obs = np.asarray(observations, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[1] != params.input_width:
        raise ConfigurationError(
            f"observations have shape {obs.shape}, expected (B, {params.input_width})"
        )
    logits, _ = mlp_forward(params.policy, obs)
    values, _ = mlp_forward(params.value, obs)
    logp = log_softmax(logits)
    return np.exp(logp), logp, values[:, 0]


def greedy_action_index(probs: np.ndarray) -> int:
    """Argmax with lowest-index tie-breaking."""
    return int(np.argmax(probs))


def pack_params(params: PolicyParams) -> np.ndarray:
    return np.concatenate([arr.ravel() for _, arr in params.tensors()])


def unpack_params(vector: np.ndarray, template: PolicyParams) -> PolicyParams:
    out = template.copy()
    needed = sum(arr.size for _, arr in out.tensors())
    if vector.size != needed:
        raise ConfigurationError(
            f"vector has {vector.size} entries, parameters need {needed}"
        )
    offset = 0
    for _, arr in out.tensors():
        n = arr.size
        arr[...] = vector[offset : offset + n].reshape(arr.shape)
        offset += n
    return out


@dataclass
class AdamState:
    """Per-tensor first/second moment accumulators."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: PolicyParams) -> "AdamState":
        return cls(
            m={name: np.zeros_like(arr) for name, arr in params.tensors()},
            v={name: np.zeros_like(arr) for name, arr in params.tensors()},
            step=0,
        )


def adam_step(
    params: PolicyParams,
    grads: PolicyParams,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One adaptive-moment update, in place."""
    state.step += 1
    t = state.step
    scale = lr * np.sqrt(1.0 - beta2**t) / (1.0 - beta1**t)
    grad_map = dict(grads.tensors())
    for name, arr in params.tensors():
        g = grad_map[name]
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        arr -= scale * m / (np.sqrt(v) + eps)
