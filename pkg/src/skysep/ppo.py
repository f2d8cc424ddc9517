"""Clipped-surrogate actor-critic updates over per-fleet episode buffers.

Each fleet trains its own network on its own transitions only. After
every episode the buffer is turned into one flat batch, advantages come
from generalized advantage estimation, and the network takes several
epochs of shuffled minibatch updates before the buffer is discarded.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .neuralnet import PolicyNetwork

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    clip_eps: float = 0.2
    entropy_beta: float = 1e-3
    gamma: float = 0.99
    gae_lambda: float = 0.95
    value_coef: float = 0.5
    batch_size: int = 512
    epochs: int = 8
    ratio_log_cap: float = 20.0
    max_grad_norm: float | None = None   # optional global-norm clip, off by default


def compute_gae(rewards, values, dones, gamma: float, lam: float,
                normalize: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over flat (possibly stitched) arrays.

    dones mark trajectory ends, so independent trajectories can be
    concatenated; the value beyond the array end is taken as 0. Returns
    (advantages, returns); returns are raw advantage + value, and the
    advantages are normalized to zero mean / unit variance over the whole
    batch unless normalize=False.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    d = np.asarray(dones, dtype=np.float64)
    if not (r.shape == v.shape == d.shape and r.ndim == 1):
        raise ValueError("rewards, values and dones must be equal-length 1-D arrays")
    n = r.shape[0]
    adv = np.zeros(n, dtype=np.float64)
    running = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 1.0 - d[t]
        next_value = v[t + 1] if t + 1 < n else 0.0
        delta = r[t] + gamma * next_value * nonterminal - v[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
    returns = adv + v
    if normalize and n > 0:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv, returns


@dataclass
class TrainBatch:
    """Flat transition batch with ragged intruder storage."""
    own: np.ndarray          # [N, obs_dim] float32
    intr_flat: np.ndarray    # [M, obs_dim] float32, rows grouped per transition
    intr_start: np.ndarray   # [N] first row of each transition's intruders
    intr_count: np.ndarray   # [N]
    actions: np.ndarray      # [N] int64
    logp_old: np.ndarray     # [N] float64
    advantages: np.ndarray   # [N] float64, already normalized
    returns: np.ndarray      # [N] float64

    @property
    def n(self) -> int:
        return self.own.shape[0]

    def select(self, idx: np.ndarray) -> "TrainBatch":
        """Gather a minibatch, re-packing the ragged intruder rows."""
        counts = self.intr_count[idx]
        total = int(counts.sum())
        if total:
            ends = np.cumsum(counts)
            local = np.arange(total) - np.repeat(ends - counts, counts)
            rows = np.repeat(self.intr_start[idx], counts) + local
            intr = self.intr_flat[rows]
        else:
            intr = self.intr_flat[:0]
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]]) if len(idx) else \
            np.zeros(0, dtype=np.intp)
        return TrainBatch(own=self.own[idx], intr_flat=intr,
                          intr_start=starts.astype(np.intp),
                          intr_count=counts, actions=self.actions[idx],
                          logp_old=self.logp_old[idx],
                          advantages=self.advantages[idx],
                          returns=self.returns[idx])

    def owner_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.n, dtype=np.intp), self.intr_count)


class FleetBuffer:
    """Per-agent transition storage for one fleet, cleared after training."""

    def __init__(self):
        self._trajectories: dict[int, list] = {}

    def add(self, agent_idx: int, own: np.ndarray, intr: np.ndarray,
            action: int, log_prob: float, value: float, reward: float,
            done: bool) -> None:
        self._trajectories.setdefault(agent_idx, []).append(
            (own, intr, action, log_prob, value, reward, done))

    def seal(self) -> None:
        """Mark the last stored transition of every trajectory terminal."""
        for steps in self._trajectories.values():
            if steps:
                last = steps[-1]
                steps[-1] = last[:6] + (True,)

    def __len__(self) -> int:
        return sum(len(s) for s in self._trajectories.values())

    def clear(self) -> None:
        self._trajectories.clear()

    def finalize(self, gamma: float, lam: float) -> TrainBatch | None:
        """Flatten trajectories (agent order), compute advantages/returns."""
        if not len(self):
            return None
        owns, intrs, acts, logps, vals, rews, dones = [], [], [], [], [], [], []
        counts = []
        for idx in sorted(self._trajectories):
            for own, intr, action, logp, value, reward, done in self._trajectories[idx]:
                owns.append(own)
                intrs.append(intr)
                counts.append(intr.shape[0])
                acts.append(action)
                logps.append(logp)
                vals.append(value)
                rews.append(reward)
                dones.append(done)
        counts = np.asarray(counts, dtype=np.intp)
        adv, ret = compute_gae(rews, vals, dones, gamma, lam, normalize=True)
        intr_flat = (np.concatenate(intrs, axis=0) if counts.sum()
                     else np.zeros((0, owns[0].shape[0]), dtype=np.float32))
        return TrainBatch(
            own=np.stack(owns).astype(np.float32),
            intr_flat=intr_flat.astype(np.float32),
            intr_start=(np.cumsum(counts) - counts).astype(np.intp),
            intr_count=counts,
            actions=np.asarray(acts, dtype=np.int64),
            logp_old=np.asarray(logps, dtype=np.float64),
            advantages=adv, returns=ret)


@dataclass
class PPOStats:
    policy_loss: float
    value_loss: float
    entropy: float
    total_loss: float
    n_skipped: int = 0


def ppo_loss(net: PolicyNetwork, batch: TrainBatch, cfg: TrainConfig,
             compute_grads: bool = True) -> PPOStats:
    """Clipped-surrogate loss over a minibatch.

    loss = -mean(min(ratio*A, clip(ratio)*A)) - beta*mean(entropy)
           + value_coef*mean((return - V)^2)

    Transitions whose |log prob difference| exceeds ratio_log_cap are
    skipped and counted instead of poisoning the update. When
    compute_grads is set the exact gradients are accumulated on the net.
    """
    dt = net.dtype
    probs, values = net.forward(batch.own, batch.intr_flat,
                                batch.owner_index(), record=compute_grads)
    n = batch.n
    arange = np.arange(n)
    logp_full = np.log(np.clip(probs, np.finfo(dt).tiny, None))
    logp_new = logp_full[arange, batch.actions]
    diff = logp_new.astype(np.float64) - batch.logp_old
    valid = np.abs(diff) <= cfg.ratio_log_cap
    n_valid = int(valid.sum())
    denom = max(n_valid, 1)

    adv = batch.advantages.astype(dt)
    ret = batch.returns.astype(dt)
    ratio = np.exp(diff.astype(dt))
    lo, hi = dt.type(1.0 - cfg.clip_eps), dt.type(1.0 + cfg.clip_eps)
    s1 = ratio * adv
    s2 = np.clip(ratio, lo, hi) * adv
    surr = np.minimum(s1, s2)
    entropy_rows = -(probs * logp_full).sum(axis=1)
    verr = ret - values

    vm = valid
    policy_loss = -float(surr[vm].sum() / denom)
    entropy = float(entropy_rows[vm].sum() / denom)
    value_loss = float((verr[vm] ** 2).sum() / denom)
    total = policy_loss - cfg.entropy_beta * entropy + cfg.value_coef * value_loss

    if compute_grads:
        take_s1 = s1 <= s2
        inside = (ratio > lo) & (ratio < hi)
        g_ratio = np.where(take_s1, adv, adv * inside)
        g_logp = np.where(vm, -g_ratio * ratio / denom, 0.0).astype(dt)
        d_logits = g_logp[:, None] * (-probs)
        d_logits[arange, batch.actions] += g_logp
        ent_seed = (cfg.entropy_beta / denom) * probs * \
            (logp_full + entropy_rows[:, None])
        d_logits += np.where(vm[:, None], ent_seed, 0.0).astype(dt)
        d_values = np.where(vm, -2.0 * cfg.value_coef * verr / denom, 0.0).astype(dt)
        net.backward(d_logits, d_values)

    return PPOStats(policy_loss=policy_loss, value_loss=value_loss,
                    entropy=entropy, total_loss=float(total),
                    n_skipped=n - n_valid)


class Adam:
    """Adam with bias correction; moments persist for the life of the net."""

    def __init__(self, net: PolicyNetwork, cfg: TrainConfig,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.net = net
        self.cfg = cfg
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in net.params()]
        self.v = [np.zeros_like(p.value) for p in net.params()]

    def step(self) -> bool:
        """Apply one update from the accumulated gradients; zero them after.

        A non-finite gradient skips the whole update (logged) rather than
        corrupting the parameters.
        """
        params = self.net.params()
        if any(not np.all(np.isfinite(p.grad)) for p in params):
            log.warning("skipping optimizer step: non-finite gradient")
            self.net.zero_grads()
            return False
        if self.cfg.max_grad_norm is not None:
            norm = float(np.sqrt(sum(float((p.grad ** 2).sum()) for p in params)))
            if norm > self.cfg.max_grad_norm:
                scale = self.cfg.max_grad_norm / norm
                for p in params:
                    p.grad *= scale
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(params, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.value -= self.cfg.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        self.net.zero_grads()
        return True


@dataclass
class UpdateStats:
    policy_loss: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    n_skipped: int = 0
    n_minibatches: int = 0


class PPOTrainer:
    """Owns one fleet's network, optimizer state, and update procedure."""

    def __init__(self, net: PolicyNetwork, cfg: TrainConfig):
        self.net = net
        self.cfg = cfg
        self.opt = Adam(net, cfg)

    def update(self, batch: TrainBatch, rng: np.random.Generator) -> UpdateStats:
        """Several epochs of shuffled minibatch updates over one episode batch."""
        stats = UpdateStats()
        for _ in range(self.cfg.epochs):
            perm = rng.permutation(batch.n)
            for start in range(0, batch.n, self.cfg.batch_size):
                mb = batch.select(perm[start:start + self.cfg.batch_size])
                res = ppo_loss(self.net, mb, self.cfg, compute_grads=True)
                self.opt.step()
                stats.policy_loss += res.policy_loss
                stats.value_loss += res.value_loss
                stats.entropy += res.entropy
                stats.n_skipped += res.n_skipped
                stats.n_minibatches += 1
        if stats.n_minibatches:
            stats.policy_loss /= stats.n_minibatches
            stats.value_loss /= stats.n_minibatches
            stats.entropy /= stats.n_minibatches
        return stats

    def train_episode(self, buffer: FleetBuffer,
                      rng: np.random.Generator) -> UpdateStats | None:
        """Finalize the episode buffer, run the update, clear the buffer.

        Returns None (and warns) when the buffer is empty.
        """
        batch = buffer.finalize(self.cfg.gamma, self.cfg.gae_lambda)
        if batch is None:
            log.warning("train_episode called with an empty buffer; skipping")
            return None
        stats = self.update(batch, rng)
        buffer.clear()
        return stats
