"""Training math: GAE against a brute-force oracle, loss hand cases,
finite-difference gradient checks, and optimizer behavior."""
import math

import numpy as np
import pytest

from skysep.neuralnet import PolicyNetwork
from skysep.ppo import (Adam, FleetBuffer, PPOTrainer, TrainBatch,
                        TrainConfig, compute_gae, ppo_loss)


def gae_brute_force(rewards, values, dones, gamma, lam):
    """Double-sum GAE: A_t = sum_l (gamma*lam)^l * delta_{t+l}, the sum
    stopping at the first done. Independent of the recursive form."""
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    d = np.asarray(dones, dtype=np.float64)
    n = r.shape[0]
    delta = np.zeros(n)
    for t in range(n):
        nxt = v[t + 1] if t + 1 < n else 0.0
        delta[t] = r[t] + gamma * nxt * (1.0 - d[t]) - v[t]
    adv = np.zeros(n)
    for t in range(n):
        acc, w = 0.0, 1.0
        for u in range(t, n):
            acc += w * delta[u]
            if d[u]:
                break
            w *= gamma * lam
        adv[t] = acc
    return adv, adv + v


def test_gae_hand_case():
    adv, ret = compute_gae([1.0, 0.0], [0.5, 0.2], [0.0, 1.0],
                           gamma=0.5, lam=0.5, normalize=False)
    # delta_0 = 1 + 0.5*0.2 - 0.5 = 0.6; delta_1 = 0 - 0.2
    # A_1 = -0.2; A_0 = 0.6 + 0.25*(-0.2) = 0.55
    assert adv == pytest.approx([0.55, -0.2], abs=1e-12)
    assert ret == pytest.approx([1.05, 0.0], abs=1e-12)


def test_gae_matches_brute_force_on_random_trajectories():
    rng = np.random.default_rng(20)
    for _ in range(200):
        n = int(rng.integers(1, 31))
        r = rng.normal(0.0, 1.0, n)
        v = rng.normal(0.0, 1.0, n)
        d = (rng.random(n) < 0.2).astype(float)
        gamma = float(rng.uniform(0.9, 1.0))
        lam = float(rng.uniform(0.8, 1.0))
        adv, ret = compute_gae(r, v, d, gamma, lam, normalize=False)
        b_adv, b_ret = gae_brute_force(r, v, d, gamma, lam)
        assert np.max(np.abs(adv - b_adv)) < 1e-9
        assert np.max(np.abs(ret - b_ret)) < 1e-9


def test_gae_normalization_stats():
    rng = np.random.default_rng(2)
    adv, _ = compute_gae(rng.normal(0, 1, 64), rng.normal(0, 1, 64),
                         np.zeros(64), 0.99, 0.95, normalize=True)
    assert adv.mean() == pytest.approx(0.0, abs=1e-12)
    assert adv.std() == pytest.approx(1.0, abs=1e-6)


def test_gae_done_isolates_trajectories():
    # two stitched trajectories must match the two computed separately
    r1, v1 = [1.0, -0.5, 0.2], [0.1, 0.4, -0.3]
    r2, v2 = [0.3, 0.7], [0.2, 0.0]
    joint_adv, _ = compute_gae(r1 + r2, v1 + v2, [0, 0, 1, 0, 1],
                               0.99, 0.95, normalize=False)
    a1, _ = compute_gae(r1, v1, [0, 0, 1], 0.99, 0.95, normalize=False)
    a2, _ = compute_gae(r2, v2, [0, 1], 0.99, 0.95, normalize=False)
    assert joint_adv == pytest.approx(np.concatenate([a1, a2]), abs=1e-12)


def test_gae_rejects_mismatched_shapes():
    with pytest.raises(ValueError):
        compute_gae([1.0], [1.0, 2.0], [0.0], 0.99, 0.95)


def _zero_net(dtype=np.float32):
    net = PolicyNetwork(enc_dim=8, trunk_dim=10, dtype=dtype)
    for p in net.params():
        p.value = np.zeros_like(p.value)
        p.grad = np.zeros_like(p.value)
    return net


def _batch(n, rng, adv, ret, logp_old):
    counts = rng.integers(0, 4, size=n).astype(np.intp)
    total = int(counts.sum())
    return TrainBatch(
        own=rng.uniform(-1, 1, (n, 4)).astype(np.float32),
        intr_flat=rng.uniform(-1, 1, (total, 4)).astype(np.float32),
        intr_start=(np.cumsum(counts) - counts).astype(np.intp),
        intr_count=counts,
        actions=rng.integers(0, 3, size=n).astype(np.int64),
        logp_old=np.asarray(logp_old, dtype=np.float64),
        advantages=np.asarray(adv, dtype=np.float64),
        returns=np.asarray(ret, dtype=np.float64))


def test_loss_hand_case_on_zero_network():
    # all-zero weights: uniform policy (entropy ln 3), V = 0, ratio = 1
    net = _zero_net()
    rng = np.random.default_rng(4)
    adv = [1.0, -1.0, 2.0, 0.5]
    ret = [1.0, 0.0, -1.0, 0.5]
    batch = _batch(4, rng, adv, ret, [math.log(1 / 3)] * 4)
    cfg = TrainConfig()
    stats = ppo_loss(net, batch, cfg, compute_grads=False)
    assert stats.policy_loss == pytest.approx(-0.625, abs=1e-6)
    assert stats.entropy == pytest.approx(math.log(3.0), abs=1e-6)
    assert stats.value_loss == pytest.approx(0.5625, abs=1e-6)
    expect = -0.625 - 1e-3 * math.log(3.0) + 0.5 * 0.5625
    assert stats.total_loss == pytest.approx(expect, abs=1e-6)
    assert stats.n_skipped == 0


def test_loss_skips_exploded_ratios():
    net = _zero_net()
    rng = np.random.default_rng(5)
    logp = [math.log(1 / 3) + 25.0] + [math.log(1 / 3)] * 3
    batch = _batch(4, rng, [1.0, -1.0, 2.0, 0.5], [1.0, 0.0, -1.0, 0.5], logp)
    stats = ppo_loss(net, batch, TrainConfig(), compute_grads=False)
    assert stats.n_skipped == 1
    # remaining three average over n_valid = 3
    assert stats.policy_loss == pytest.approx(-((-1.0) + 2.0 + 0.5) / 3,
                                              abs=1e-6)
    assert stats.value_loss == pytest.approx((0.0 + 1.0 + 0.25) / 3, abs=1e-6)


def _gradcheck_batch(net, rng, n=6):
    """Batch whose old log-probs keep every ratio away from the clip kinks."""
    counts = rng.integers(0, 4, size=n).astype(np.intp)
    total = int(counts.sum())
    own = rng.uniform(-1.0, 1.2, (n, 4))
    intr = rng.uniform(-1.0, 1.2, (total, 4))
    owner = np.repeat(np.arange(n, dtype=np.intp), counts)
    probs, values = net.forward(own, intr, owner)
    actions = np.array([rng.integers(0, 3) for _ in range(n)], dtype=np.int64)
    logp_new = np.log(probs[np.arange(n), actions])
    inside = rng.uniform(-0.15, 0.15, n)            # ratio in (0.86, 1.16)
    outside = rng.uniform(0.3, 0.6, n) * rng.choice([-1.0, 1.0], n)
    noise = np.where(rng.random(n) < 0.5, inside, outside)
    return TrainBatch(
        own=own, intr_flat=intr,
        intr_start=(np.cumsum(counts) - counts).astype(np.intp),
        intr_count=counts, actions=actions,
        logp_old=logp_new - noise,
        advantages=rng.normal(0.0, 1.0, n),
        returns=values + rng.normal(0.0, 0.5, n))


def test_loss_gradient_matches_finite_differences():
    cfg = TrainConfig()
    h = 1e-4
    worst = 0.0
    for trial in range(5):
        net = PolicyNetwork(enc_dim=8, trunk_dim=10, dtype=np.float64)
        net.init_params(trial)
        rng = np.random.default_rng(100 + trial)
        batch = _gradcheck_batch(net, rng)
        net.zero_grads()
        ppo_loss(net, batch, cfg, compute_grads=True)
        analytic = np.concatenate([p.grad.ravel() for p in net.params()])
        theta = net.get_flat_params()
        fd = np.zeros_like(theta)
        for k in range(theta.size):
            for sign in (1.0, -1.0):
                t = theta.copy()
                t[k] += sign * h
                net.set_flat_params(t)
                val = ppo_loss(net, batch, cfg, compute_grads=False).total_loss
                fd[k] += sign * val
            fd[k] /= 2 * h
        net.set_flat_params(theta)
        rel = np.abs(fd - analytic) / np.maximum(np.abs(fd) + np.abs(analytic),
                                                 1e-7)
        worst = max(worst, float(rel.max()))
    assert worst < 1e-4, f"max relative gradient error {worst:.2e}"


def test_adam_matches_reference_update():
    net = _zero_net(dtype=np.float64)
    cfg = TrainConfig(lr=0.01)
    opt = Adam(net, cfg)
    g0 = 0.5
    net.params()[0].grad[...] = g0
    assert opt.step()
    # first step with bias correction: m_hat = g, v_hat = g^2
    expect = -cfg.lr * g0 / (abs(g0) + 1e-8)
    assert net.params()[0].value.ravel()[0] == pytest.approx(expect, rel=1e-9)
    # grads are cleared afterwards
    assert np.all(net.params()[0].grad == 0.0)


def test_adam_skips_nonfinite_gradients():
    net = _zero_net(dtype=np.float64)
    opt = Adam(net, TrainConfig())
    net.params()[0].grad[...] = np.nan
    before = net.get_flat_params()
    assert not opt.step()
    assert np.array_equal(net.get_flat_params(), before)
    assert np.all(net.params()[0].grad == 0.0)


def test_buffer_seal_marks_last_transition_done():
    buf = FleetBuffer()
    own = np.zeros(4, dtype=np.float32)
    intr = np.zeros((0, 4), dtype=np.float32)
    buf.add(0, own, intr, 1, -1.0, 0.0, 0.5, False)
    buf.add(0, own, intr, 1, -1.0, 0.0, 0.5, False)
    buf.seal()
    batch = buf.finalize(0.99, 0.95)
    assert batch.n == 2
    # sealed done: second advantage has no bootstrap from beyond the episode
    _, ret = compute_gae([0.5, 0.5], [0.0, 0.0], [0.0, 1.0], 0.99, 0.95,
                         normalize=False)
    assert batch.returns == pytest.approx(ret, abs=1e-12)


def test_trainer_runs_and_clears_buffer():
    net = PolicyNetwork(enc_dim=8, trunk_dim=10)
    net.init_params(0)
    trainer = PPOTrainer(net, TrainConfig(batch_size=8, epochs=2))
    buf = FleetBuffer()
    rng = np.random.default_rng(0)
    for agent in range(3):
        for step in range(10):
            own = rng.uniform(-1, 1, 4).astype(np.float32)
            intr = rng.uniform(-1, 1, (int(rng.integers(0, 3)), 4)).astype(
                np.float32)
            probs, value = net.forward(own[None, :], intr,
                                       np.zeros(intr.shape[0], dtype=np.intp))
            a = int(rng.integers(0, 3))
            buf.add(agent, own, intr, a, float(np.log(probs[0, a])),
                    float(value[0]), float(rng.normal()), step == 9)
    before = net.get_flat_params().copy()
    stats = trainer.train_episode(buf, np.random.default_rng(1))
    assert stats is not None and stats.n_minibatches == 2 * 4
    assert len(buf) == 0
    assert not np.array_equal(net.get_flat_params(), before)


def test_trainer_empty_buffer_returns_none():
    net = PolicyNetwork(enc_dim=8, trunk_dim=10)
    net.init_params(0)
    trainer = PPOTrainer(net, TrainConfig())
    assert trainer.train_episode(FleetBuffer(), np.random.default_rng(0)) is None
