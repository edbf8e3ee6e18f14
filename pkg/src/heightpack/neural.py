"""Shared-trunk actor-critic MLP with hand-written backprop and Adam.

Architecture: obs -> tanh(128) -> tanh(128) -> {one logit layer per action
component, scalar value}. Arrays are stored with shape (in, out) so a layer is
``h @ W + b``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

HEADS = ("x", "y", "board", "piece")
HIDDEN = 128


class PolicyParams:
    """Named parameter arrays in a fixed declaration order."""

    def __init__(self, arrays: dict[str, np.ndarray]):
        self.arrays = arrays

    @staticmethod
    def layout(obs_size: int, head_sizes: Sequence[int], hidden: int = HIDDEN):
        shapes = [("w1", (obs_size, hidden)), ("b1", (hidden,)),
                  ("w2", (hidden, hidden)), ("b2", (hidden,))]
        for name, n in zip(HEADS, head_sizes):
            shapes += [(f"w_{name}", (hidden, n)), (f"b_{name}", (n,))]
        shapes += [("w_value", (hidden, 1)), ("b_value", (1,))]
        return shapes

    @classmethod
    def zeros(cls, obs_size: int, head_sizes: Sequence[int], hidden: int = HIDDEN,
              dtype=np.float32) -> "PolicyParams":
        return cls({k: np.zeros(s, dtype=dtype) for k, s in cls.layout(obs_size, head_sizes, hidden)})

    @property
    def names(self) -> list[str]:
        return list(self.arrays)

    @property
    def head_sizes(self) -> tuple[int, ...]:
        return tuple(self.arrays[f"b_{h}"].shape[0] for h in HEADS)

    @property
    def obs_size(self) -> int:
        return self.arrays["w1"].shape[0]

    @property
    def dtype(self):
        return self.arrays["w1"].dtype

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def copy(self) -> "PolicyParams":
        return PolicyParams({k: v.copy() for k, v in self.arrays.items()})

    def astype(self, dtype) -> "PolicyParams":
        return PolicyParams({k: v.astype(dtype) for k, v in self.arrays.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.arrays.values()])

    def load_flat(self, vector: np.ndarray) -> "PolicyParams":
        out, i = {}, 0
        for k, v in self.arrays.items():
            out[k] = vector[i:i + v.size].reshape(v.shape).astype(v.dtype)
            i += v.size
        return PolicyParams(out)

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.arrays.values())

    def __eq__(self, other):
        if not isinstance(other, PolicyParams) or self.names != other.names:
            return NotImplemented
        return all(np.array_equal(self[k], other[k]) for k in self.names)


Gradients = PolicyParams


def _orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float) -> np.ndarray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_params(obs_size: int, head_sizes: Sequence[int], rng: np.random.Generator,
                hidden: int = HIDDEN, dtype=np.float32) -> PolicyParams:
    gains = {"w1": 1.0, "w2": 1.0, "w_value": 1.0}
    arrays = {}
    for name, shape in PolicyParams.layout(obs_size, head_sizes, hidden):
        if name.startswith("b"):
            arrays[name] = np.zeros(shape, dtype=dtype)
        else:
            arrays[name] = _orthogonal(rng, shape, gains.get(name, 0.01)).astype(dtype)
    return PolicyParams(arrays)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


class MultiDiscreteDist:
    """Independent categorical heads; every array has a leading batch axis."""

    def __init__(self, logits: Sequence[np.ndarray]):
        self.logits = [np.atleast_2d(z).astype(np.float64, copy=False) for z in logits]
        self.log_probs = [_log_softmax(z) for z in self.logits]
        self.probs = [np.exp(lp) for lp in self.log_probs]

    @classmethod
    def from_probs(cls, probs: Sequence[np.ndarray]) -> "MultiDiscreteDist":
        dist = cls.__new__(cls)
        dist.probs = [np.atleast_2d(np.asarray(p, dtype=np.float64)) for p in probs]
        with np.errstate(divide="ignore"):
            dist.log_probs = [np.log(p) for p in dist.probs]
        dist.logits = dist.log_probs
        return dist

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(p.shape[-1] for p in self.probs)

    def head_entropies(self) -> np.ndarray:
        """(batch, heads) entropies; 0 * log 0 counts as 0."""
        cols = [-np.multiply(p, lp, out=np.zeros_like(p), where=p > 0).sum(axis=-1)
                for p, lp in zip(self.probs, self.log_probs)]
        return np.stack(cols, axis=-1)

    def mode(self) -> np.ndarray:
        return np.stack([p.argmax(axis=-1) for p in self.probs], axis=-1)


def _forward(params: PolicyParams, obs: np.ndarray):
    obs = np.atleast_2d(obs)
    if obs.shape[1] != params.obs_size:
        raise ValueError(f"observation has {obs.shape[1]} features, network expects {params.obs_size}")
    obs = obs.astype(params.dtype, copy=False)
    h1 = np.tanh(obs @ params["w1"] + params["b1"])
    h2 = np.tanh(h1 @ params["w2"] + params["b2"])
    logits = [h2 @ params[f"w_{h}"] + params[f"b_{h}"] for h in HEADS]
    value = (h2 @ params["w_value"] + params["b_value"])[:, 0]
    return obs, h1, h2, logits, value


def forward(params: PolicyParams, obs: np.ndarray) -> tuple[MultiDiscreteDist, np.ndarray]:
    """Action distribution and state value for a single observation or a batch."""
    _, _, _, logits, value = _forward(params, obs)
    return MultiDiscreteDist(logits), value


def sample(dist: MultiDiscreteDist, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw one action per batch row; returns (actions (B, heads), log_probs (B,))."""
    batch = dist.probs[0].shape[0]
    u = 1.0 - rng.random((batch, len(dist.probs)))
    actions = np.empty((batch, len(dist.probs)), dtype=np.int64)
    for k, p in enumerate(dist.probs):
        cdf = np.cumsum(p, axis=-1)
        idx = (cdf < u[:, k:k + 1] * cdf[:, -1:]).sum(axis=-1)
        actions[:, k] = np.minimum(idx, p.shape[-1] - 1)
    log_prob, _ = log_prob_entropy(dist, actions)
    return actions, log_prob


def log_prob_entropy(dist: MultiDiscreteDist, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    actions = np.atleast_2d(np.asarray(actions))
    rows = np.arange(actions.shape[0])
    log_prob = np.zeros(actions.shape[0])
    for k, lp in enumerate(dist.log_probs):
        a = actions[:, k]
        if (a < 0).any() or (a >= lp.shape[-1]).any():
            raise ValueError(f"action component {HEADS[k]} out of range [0, {lp.shape[-1]})")
        log_prob = log_prob + lp[rows, a]
    return log_prob, dist.head_entropies().sum(axis=-1)


class Actor:
    """Read-only parameter snapshot with a fused single-observation path for rollouts.

    Produces the same distribution as :func:`forward`; sampling uses the same
    inverse-CDF rule as :func:`sample`.
    """

    def __init__(self, params: PolicyParams):
        self.w1, self.b1 = params["w1"], params["b1"]
        self.w2, self.b2 = params["w2"], params["b2"]
        self.sizes = params.head_sizes
        self.wh = np.concatenate([params[f"w_{h}"] for h in HEADS] + [params["w_value"]], axis=1)
        self.bh = np.concatenate([params[f"b_{h}"] for h in HEADS] + [params["b_value"]])
        self.offsets = np.cumsum((0,) + self.sizes[:-1])
        self.dtype = params.dtype

    def _heads(self, obs):
        h = np.tanh(obs.astype(self.dtype, copy=False) @ self.w1 + self.b1)
        h = np.tanh(h @ self.w2 + self.b2)
        out = (h @ self.wh + self.bh).astype(np.float64)
        logits, value = out[:-1], out[-1]
        z = logits - np.repeat(np.maximum.reduceat(logits, self.offsets), self.sizes)
        e = np.exp(z)
        sums = np.add.reduceat(e, self.offsets)
        logp = z - np.repeat(np.log(sums), self.sizes)
        return logp, float(value)

    def act(self, obs: np.ndarray, rng: np.random.Generator):
        """Sample one action; returns (action, log_prob, value)."""
        logp, value = self._heads(obs)
        u = 1.0 - rng.random((1, len(self.sizes)))
        action = np.empty(len(self.sizes), dtype=np.int64)
        total = 0.0
        for k, (o, n) in enumerate(zip(self.offsets, self.sizes)):
            lp = logp[o:o + n]
            cdf = np.cumsum(np.exp(lp))
            a = min(int((cdf < u[0, k] * cdf[-1]).sum()), n - 1)
            action[k] = a
            total += lp[a]
        return action, total, value

    def mode(self, obs: np.ndarray) -> np.ndarray:
        logp, _ = self._heads(obs)
        return np.array([int(np.argmax(logp[o:o + n])) for o, n in zip(self.offsets, self.sizes)])

    def value(self, obs: np.ndarray) -> float:
        return self._heads(obs)[1]


@dataclass
class Objective:
    """Clipped-surrogate actor-critic loss over a batch.

    ``clip_epsilon=inf`` disables clipping, which turns the surrogate into the
    plain advantage actor-critic objective at ratio 1.
    """

    actions: np.ndarray
    advantages: np.ndarray
    old_log_probs: np.ndarray
    returns: np.ndarray
    clip_epsilon: float = 0.2
    value_coef: float = 0.5
    entropy_coef: float = 0.01


def backward(params: PolicyParams, obs: np.ndarray, objective: Objective):
    """Loss statistics and analytic gradients of the scalar loss."""
    obs, h1, h2, logits, value = _forward(params, obs)
    dist = MultiDiscreteDist(logits)
    actions = np.atleast_2d(objective.actions)
    n = actions.shape[0]
    rows = np.arange(n)
    dtype = params.dtype

    log_prob, entropy = log_prob_entropy(dist, actions)
    head_entropy = dist.head_entropies()
    adv = np.asarray(objective.advantages, dtype=dtype)
    ratio = np.exp(log_prob - objective.old_log_probs)
    eps = objective.clip_epsilon
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1 - eps, 1 + eps) * adv
    surrogate = np.minimum(surr1, surr2)
    diff = value - objective.returns

    policy_loss = -surrogate.mean()
    value_loss = (diff ** 2).mean()
    loss = policy_loss + objective.value_coef * value_loss - objective.entropy_coef * entropy.mean()

    # dL/dlogpi: only the unclipped branch carries gradient
    d_logp = np.where(surr1 <= surr2, -surr1 / n, 0.0).astype(dtype)
    grads = {}
    d_h2 = np.zeros_like(h2)
    for k, head in enumerate(HEADS):
        p, lp = dist.probs[k], dist.log_probs[k]
        onehot = np.zeros_like(p)
        onehot[rows, actions[:, k]] = 1.0
        d_z = d_logp[:, None] * (onehot - p)
        d_z += (objective.entropy_coef / n) * p * (lp + head_entropy[:, k:k + 1])
        d_z = d_z.astype(dtype, copy=False)
        grads[f"w_{head}"] = h2.T @ d_z
        grads[f"b_{head}"] = d_z.sum(axis=0)
        d_h2 += d_z @ params[f"w_{head}"].T
    d_v = (2.0 * objective.value_coef / n * diff).astype(dtype)[:, None]
    grads["w_value"] = h2.T @ d_v
    grads["b_value"] = d_v.sum(axis=0)
    d_h2 += d_v @ params["w_value"].T

    d_z2 = d_h2 * (1 - h2 ** 2)
    grads["w2"] = h1.T @ d_z2
    grads["b2"] = d_z2.sum(axis=0)
    d_z1 = (d_z2 @ params["w2"].T) * (1 - h1 ** 2)
    grads["w1"] = obs.T @ d_z1
    grads["b1"] = d_z1.sum(axis=0)

    stats = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy.mean()),
        "approx_kl": float(np.mean(objective.old_log_probs - log_prob)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1) > eps)),
    }
    ordered = PolicyParams({k: grads[k].astype(dtype, copy=False) for k in params.names})
    return stats, ordered


def loss_value(params: PolicyParams, obs: np.ndarray, objective: Objective) -> float:
    """Forward-only evaluation of the same scalar loss that :func:`backward` differentiates."""
    dist, value = forward(params, obs)
    log_prob, entropy = log_prob_entropy(dist, objective.actions)
    ratio = np.exp(log_prob - objective.old_log_probs)
    eps = objective.clip_epsilon
    adv = objective.advantages
    surrogate = np.minimum(ratio * adv, np.clip(ratio, 1 - eps, 1 + eps) * adv)
    return float(-surrogate.mean()
                 + objective.value_coef * np.mean((value - objective.returns) ** 2)
                 - objective.entropy_coef * entropy.mean())


@dataclass
class AdamState:
    m: PolicyParams
    v: PolicyParams
    t: int = 0

    @classmethod
    def like(cls, params: PolicyParams) -> "AdamState":
        zeros = lambda: PolicyParams({k: np.zeros_like(a) for k, a in params.arrays.items()})
        return cls(zeros(), zeros(), 0)


def adam_step(params: PolicyParams, grads: PolicyParams, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update; returns (new_params, new_state)."""
    t = state.t + 1
    c1 = 1 - beta1 ** t
    c2 = 1 - beta2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.arrays.items():
        g = grads[k]
        m = beta1 * state.m[k] + (1 - beta1) * g
        v = beta2 * state.v[k] + (1 - beta2) * g * g
        step = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_p[k] = (p - step).astype(p.dtype, copy=False)
        new_m[k] = m.astype(p.dtype, copy=False)
        new_v[k] = v.astype(p.dtype, copy=False)
    return PolicyParams(new_p), AdamState(PolicyParams(new_m), PolicyParams(new_v), t)


def global_norm(grads: PolicyParams) -> float:
    return float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.arrays.values())))


def clip_by_global_norm(grads: PolicyParams, max_norm: float) -> PolicyParams:
    norm = global_norm(grads)
    if not np.isfinite(max_norm) or norm <= max_norm:
        return grads
    scale = max_norm / (norm + 1e-6)
    return PolicyParams({k: (g * scale).astype(g.dtype) for k, g in grads.arrays.items()})


CHECKPOINT_MAGIC = b"HPACKPOL"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: PolicyParams) -> None:
    """Header (magic, version, named shapes) then little-endian float32 arrays."""
    header = bytearray(CHECKPOINT_MAGIC)
    header += struct.pack("<II", CHECKPOINT_VERSION, len(params.arrays))
    for name, arr in params.arrays.items():
        encoded = name.encode()
        header += struct.pack("<I", len(encoded)) + encoded
        header += struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    body = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in params.arrays.values())
    Path(path).write_bytes(bytes(header) + body)


def load_checkpoint(path) -> PolicyParams:
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a policy checkpoint")
    version, count = struct.unpack_from("<II", data, 8)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    offset = 16
    shapes = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", data, offset)
        name = data[offset + 4:offset + 4 + nlen].decode()
        offset += 4 + nlen
        (ndim,) = struct.unpack_from("<I", data, offset)
        shape = struct.unpack_from(f"<{ndim}I", data, offset + 4)
        offset += 4 + 4 * ndim
        shapes.append((name, shape))
    arrays = {}
    for name, shape in shapes:
        size = int(np.prod(shape))
        arrays[name] = np.frombuffer(data, dtype="<f4", count=size, offset=offset).reshape(shape).astype(np.float32)
        offset += 4 * size
    if offset != len(data):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return PolicyParams(arrays)
