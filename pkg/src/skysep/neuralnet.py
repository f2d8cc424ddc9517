"""Attention actor-critic network with hand-written reverse-mode gradients.

The network is small and fixed-shape, so instead of a general autodiff
tape each forward records its intermediates and backward() applies the
exact adjoint of every stage. Gradients are validated against central
finite differences in the test suite.

Intruder sets are ragged: a batch packs all intruder rows into one flat
matrix plus an owner index per row (nondecreasing), so the cost of the
attention stage is linear in the number of intruders and no padding is
ever materialized.
"""
from __future__ import annotations

import math

import numpy as np

N_ACTIONS = 3
OBS_DIM = 4


class ParamTensor:
    """A named weight array with a matching gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int,
            dtype) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)


def _segment_reduce(op, x: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Apply a ufunc reduction over consecutive row segments of x.

    counts[k] rows belong to segment k; empty segments yield zero rows in
    the output (reduceat alone would misreport them, so they are filled
    separately).
    """
    out_shape = (len(counts),) + x.shape[1:]
    out = np.zeros(out_shape, dtype=x.dtype)
    nonzero = counts > 0
    if x.shape[0]:
        starts = (np.cumsum(counts) - counts)[nonzero]
        out[nonzero] = op.reduceat(x, starts, axis=0)
    return out


def segment_sum(x: np.ndarray, counts: np.ndarray) -> np.ndarray:
    return _segment_reduce(np.add, x, counts)


def segment_softmax(scores: np.ndarray, owner: np.ndarray,
                    counts: np.ndarray) -> np.ndarray:
    """Softmax over each owner segment of a flat score vector."""
    if scores.shape[0] == 0:
        return scores.copy()
    seg_max = _segment_reduce(np.maximum, scores, counts)
    e = np.exp(scores - seg_max[owner])
    denom = segment_sum(e, counts)
    return e / denom[owner]


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values produced at layer {name!r}")


class PolicyNetwork:
    """Ownship/intruder encoders, multiplicative attention, shared trunk,
    softmax actor head and scalar critic head.

    Default widths: 4 -> 64 encoders, 64x64 attention, 128 -> 128 -> 128
    trunk on the concatenated ownship encoding and attention context.
    """

    def __init__(self, enc_dim: int = 64, trunk_dim: int = 128,
                 obs_dim: int = OBS_DIM, n_actions: int = N_ACTIONS,
                 dtype=np.float32):
        self.enc_dim = enc_dim
        self.trunk_dim = trunk_dim
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.dtype = np.dtype(dtype)
        z = lambda *shape: np.zeros(shape, dtype=self.dtype)
        self.enc_own_W = ParamTensor("enc_own_W", z(obs_dim, enc_dim))
        self.enc_own_b = ParamTensor("enc_own_b", z(enc_dim))
        self.enc_int_W = ParamTensor("enc_int_W", z(obs_dim, enc_dim))
        self.enc_int_b = ParamTensor("enc_int_b", z(enc_dim))
        self.attn_W = ParamTensor("attn_W", z(enc_dim, enc_dim))
        self.trunk1_W = ParamTensor("trunk1_W", z(2 * enc_dim, trunk_dim))
        self.trunk1_b = ParamTensor("trunk1_b", z(trunk_dim))
        self.trunk2_W = ParamTensor("trunk2_W", z(trunk_dim, trunk_dim))
        self.trunk2_b = ParamTensor("trunk2_b", z(trunk_dim))
        self.actor_W = ParamTensor("actor_W", z(trunk_dim, n_actions))
        self.actor_b = ParamTensor("actor_b", z(n_actions))
        self.critic_W = ParamTensor("critic_W", z(trunk_dim, 1))
        self.critic_b = ParamTensor("critic_b", z(1))
        self._cache: dict | None = None

    def params(self) -> list[ParamTensor]:
        return [self.enc_own_W, self.enc_own_b, self.enc_int_W, self.enc_int_b,
                self.attn_W, self.trunk1_W, self.trunk1_b, self.trunk2_W,
                self.trunk2_b, self.actor_W, self.actor_b,
                self.critic_W, self.critic_b]

    def init_params(self, seed: int | np.random.SeedSequence) -> None:
        """Xavier-uniform weights, zero biases, in declared order."""
        rng = np.random.default_rng(seed)
        for p in self.params():
            if p.value.ndim == 2:
                p.value = _xavier(rng, *p.value.shape, self.dtype)
            else:
                p.value = np.zeros_like(p.value)
            p.grad = np.zeros_like(p.value)

    def zero_grads(self) -> None:
        for p in self.params():
            p.grad[...] = 0.0

    def forward(self, own: np.ndarray, intr: np.ndarray, owner: np.ndarray,
                record: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Action probabilities [B, n_actions] and values [B].

        own: [B, obs_dim]; intr: [M, obs_dim] flat intruder rows;
        owner: [M] nondecreasing batch index of each intruder row.
        With record=True the intermediates are kept for backward().
        """
        dt = self.dtype
        own = np.ascontiguousarray(own, dtype=dt)
        intr = intr.reshape(-1, self.obs_dim).astype(dt, copy=False)
        owner = np.asarray(owner, dtype=np.intp)
        B = own.shape[0]
        counts = np.bincount(owner, minlength=B)

        h_own = np.tanh(own @ self.enc_own_W.value + self.enc_own_b.value)
        _check_finite("ownship encoder", h_own)
        h_int = np.tanh(intr @ self.enc_int_W.value + self.enc_int_b.value)
        _check_finite("intruder encoder", h_int)

        scale = dt.type(1.0 / math.sqrt(self.enc_dim))
        u = h_own @ self.attn_W.value                     # [B, E]
        scores = np.einsum("me,me->m", u[owner], h_int) * scale
        weights = segment_softmax(scores, owner, counts)
        _check_finite("attention", weights)
        ctx = segment_sum(weights[:, None] * h_int, counts)

        z = np.concatenate([h_own, ctx], axis=1)
        t1 = np.tanh(z @ self.trunk1_W.value + self.trunk1_b.value)
        t2 = np.tanh(t1 @ self.trunk2_W.value + self.trunk2_b.value)
        _check_finite("trunk", t2)

        logits = t2 @ self.actor_W.value + self.actor_b.value
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        probs = e / e.sum(axis=1, keepdims=True)
        _check_finite("actor head", probs)
        values = (t2 @ self.critic_W.value)[:, 0] + self.critic_b.value[0]
        _check_finite("critic head", values)

        if record:
            self._cache = dict(own=own, intr=intr, owner=owner, counts=counts,
                               h_own=h_own, h_int=h_int, u=u, weights=weights,
                               ctx=ctx, z=z, t1=t1, t2=t2, probs=probs)
        return probs, values

    def backward(self, d_logits: np.ndarray, d_values: np.ndarray) -> None:
        """Accumulate parameter gradients for the recorded forward pass.

        d_logits and d_values seed the actor logits and critic output;
        the adjoints of every stage are applied in reverse.
        """
        if self._cache is None:
            raise RuntimeError("backward() called without a recorded forward pass")
        c = self._cache
        self._cache = None
        dt = self.dtype
        d_logits = np.ascontiguousarray(d_logits, dtype=dt)
        d_values = np.ascontiguousarray(d_values, dtype=dt)
        owner, counts = c["owner"], c["counts"]
        E = self.enc_dim

        t2 = c["t2"]
        self.actor_W.grad += t2.T @ d_logits
        self.actor_b.grad += d_logits.sum(axis=0)
        self.critic_W.grad += t2.T @ d_values[:, None]
        self.critic_b.grad += d_values.sum(keepdims=True)
        d_t2 = d_logits @ self.actor_W.value.T
        d_t2 += d_values[:, None] * self.critic_W.value[:, 0][None, :]

        d_y2 = d_t2 * (1.0 - t2 * t2)
        self.trunk2_W.grad += c["t1"].T @ d_y2
        self.trunk2_b.grad += d_y2.sum(axis=0)
        d_t1 = d_y2 @ self.trunk2_W.value.T

        d_y1 = d_t1 * (1.0 - c["t1"] * c["t1"])
        self.trunk1_W.grad += c["z"].T @ d_y1
        self.trunk1_b.grad += d_y1.sum(axis=0)
        d_z = d_y1 @ self.trunk1_W.value.T
        d_h_own = d_z[:, :E].copy()
        d_ctx = d_z[:, E:]

        h_int, weights, u = c["h_int"], c["weights"], c["u"]
        if h_int.shape[0]:
            d_ctx_rows = d_ctx[owner]
            d_w = np.einsum("me,me->m", d_ctx_rows, h_int)
            d_h_int = weights[:, None] * d_ctx_rows
            wdot = segment_sum(weights * d_w, counts)
            d_scores = weights * (d_w - wdot[owner])
            scale = dt.type(1.0 / math.sqrt(E))
            d_u = segment_sum(d_scores[:, None] * h_int, counts) * scale
            d_h_int += d_scores[:, None] * (u[owner] * scale)
            self.attn_W.grad += c["h_own"].T @ d_u
            d_h_own += d_u @ self.attn_W.value.T

            d_yi = d_h_int * (1.0 - h_int * h_int)
            self.enc_int_W.grad += c["intr"].T @ d_yi
            self.enc_int_b.grad += d_yi.sum(axis=0)

        d_yo = d_h_own * (1.0 - c["h_own"] * c["h_own"])
        self.enc_own_W.grad += c["own"].T @ d_yo
        self.enc_own_b.grad += d_yo.sum(axis=0)

    def get_flat_params(self) -> np.ndarray:
        return np.concatenate([p.value.ravel() for p in self.params()])

    def set_flat_params(self, flat: np.ndarray) -> None:
        i = 0
        for p in self.params():
            n = p.value.size
            p.value = flat[i:i + n].reshape(p.value.shape).astype(self.dtype)
            p.grad = np.zeros_like(p.value)
            i += n
        if i != flat.size:
            raise ValueError(f"expected {i} parameters, got {flat.size}")


def sample_actions(probs: np.ndarray, rng: np.random.Generator,
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Sample one action per row; returns (actions [B], log probs [B])."""
    cum = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])
    idx = np.sum(cum < u[:, None], axis=1)
    idx = np.minimum(idx, probs.shape[1] - 1)
    logp = np.log(probs[np.arange(probs.shape[0]), idx])
    return idx.astype(np.int64), logp


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> tuple[int, float]:
    """Sample a single action from one probability row."""
    idx, logp = sample_actions(probs.reshape(1, -1), rng)
    return int(idx[0]), float(logp[0])


def greedy_actions(probs: np.ndarray) -> np.ndarray:
    """Argmax per row; ties resolve to the lowest action index."""
    return probs.argmax(axis=1).astype(np.int64)
