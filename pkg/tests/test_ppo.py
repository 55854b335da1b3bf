from __future__ import annotations

import numpy as np
import pytest

from seedgrow.env import EnvConfig, EnvState, SegmentEnv, Transition, rollout
from seedgrow.errors import DataError, FileFormatError
from seedgrow.grid import LN2, Mask, Volume, VoxelIndex
from seedgrow.ppo import (
    AgentTrainConfig,
    PolicyParams,
    PpoConfig,
    PpoPolicy,
    UniformRandomPolicy,
    act,
    action_distribution,
    cell_centre,
    clipped_surrogate,
    compute_gae,
    encode,
    encoded_size,
    init_policy,
    load_policy,
    policy_param_count,
    ppo_objective,
    ppo_update,
    save_policy,
    train_agent,
    voxel_cell,
)
from seedgrow.region_grow import GrowConfig
from seedgrow.rng import rng_from_seed


def _state(seed=0, dims=(16, 16, 16), channels=2, mask_frac=0.2):
    rng = rng_from_seed(seed)
    vol = Volume(rng.random((channels, *dims), dtype=np.float32))
    mask = Mask((rng.random(dims) < mask_frac).astype(np.uint8))
    return EnvState(volume=vol, mask=mask, step_index=0)


def _small_policy(channels=2, rng_seed=0):
    return init_policy(channels, pool=4, action_grid=4, hidden=8, rng_seed=rng_seed)


# ---------------------------------------------------------------------------
# Encoding and action mapping
# ---------------------------------------------------------------------------

def test_encode_shape_and_mask_channel():
    state = _state()
    params = _small_policy()
    e = encode(state, params.descriptor)
    assert e.shape == (encoded_size(params.descriptor),)
    # constant-one mask pools to ones in the final pool-cube block
    full = Mask(np.ones((16, 16, 16), dtype=np.uint8))
    state_full = EnvState(volume=state.volume, mask=full, step_index=0)
    e_full = encode(state_full, params.descriptor)
    assert np.allclose(e_full[-64:], 1.0)


def test_cell_voxel_round_trip():
    for dims in [(32, 32, 32), (16, 20, 24), (9, 11, 8)]:
        for g in (4, 8):
            n_cells = g ** 3
            for cell in range(n_cells):
                v = cell_centre(cell, g, dims)
                assert all(0 <= v[i] < dims[i] for i in range(3))
                if all(d >= g for d in dims):
                    assert voxel_cell(v, g, dims) == cell


def test_param_count_matches_unpack():
    params = _small_policy()
    w1, b1, wa, ba, ws, wc, bc = params.unpack()
    total = w1.size + b1.size + wa.size + ba.size + ws.size + wc.size + 1
    assert total == policy_param_count(params.descriptor) == params.theta.size


# ---------------------------------------------------------------------------
# Action distribution
# ---------------------------------------------------------------------------

def test_uniform_logits_greedy_picks_lowest_cell():
    state = _state()
    params = init_policy(2, pool=4, action_grid=4, hidden=8, rng_seed=3)
    # heads are zero-initialised: logits uniform
    action, logp, value = act(state, params, mode="greedy")
    assert action == cell_centre(0, 4, state.volume.dims)
    assert logp == pytest.approx(-np.log(64), abs=1e-9)
    assert value == 0.0


def test_logit_shift_invariance():
    # adding a constant to every actor logit (via the bias row) leaves the
    # distribution and the greedy argmax unchanged
    state = _state(1)
    params = _small_policy(rng_seed=2)
    rng = rng_from_seed(5)
    params.theta[:] += 0.05 * rng.standard_normal(params.theta.size)
    probs0 = action_distribution(state, params)
    d = params.descriptor
    e = encoded_size(d)
    h = d["hidden"]
    a = d["action_grid"] ** 3
    off = h * e + h + a * h
    shifted = params.theta.copy()
    shifted[off: off + a] += 7.3
    probs1 = action_distribution(state, PolicyParams(shifted, d))
    np.testing.assert_allclose(probs0, probs1, atol=1e-9)
    assert np.argmax(probs0) == np.argmax(probs1)


def test_saturated_logit_always_chosen():
    state = _state(2)
    params = _small_policy(rng_seed=1)
    d = params.descriptor
    e = encoded_size(d)
    h = d["hidden"]
    a = d["action_grid"] ** 3
    off = h * e + h + a * h
    params.theta[off + 17] = 1000.0  # actor bias of cell 17
    rng = rng_from_seed(0)
    for _ in range(50):
        action, logp, _ = act(state, params, rng=rng, mode="sample")
        assert voxel_cell(action, 4, state.volume.dims) == 17
        assert logp == pytest.approx(0.0, abs=1e-9)


def test_sampling_frequencies_match_softmax():
    state = _state(3)
    params = _small_policy(rng_seed=4)
    probs = action_distribution(state, params)
    rng = rng_from_seed(11)
    n = 10_000
    counts = np.zeros(probs.size)
    for _ in range(n):
        action, _, _ = act(state, params, rng=rng, mode="sample")
        counts[voxel_cell(action, 4, state.volume.dims)] += 1
    freq = counts / n
    sigma = np.sqrt(probs * (1 - probs) / n)
    assert np.all(np.abs(freq - probs) <= 3 * sigma + 1e-12)


def test_action_probabilities_sum_to_one():
    probs = action_distribution(_state(4), _small_policy(rng_seed=9))
    assert probs.sum() == pytest.approx(1.0, abs=1e-6)
    assert probs.min() >= 0


# ---------------------------------------------------------------------------
# GAE
# ---------------------------------------------------------------------------

def test_gae_lambda_zero_is_one_step_td():
    rewards = np.array([1.0, -0.5, 2.0])
    values = np.array([0.3, 0.1, -0.2, 0.7])
    dones = np.array([0.0, 0.0, 1.0])
    gamma = 0.9
    adv, ret = compute_gae(rewards, values, dones, gamma, lam=0.0)
    expected = np.array([
        rewards[0] + gamma * values[1] - values[0],
        rewards[1] + gamma * values[2] - values[1],
        rewards[2] - values[2],
    ])
    np.testing.assert_allclose(adv, expected, atol=1e-12)
    np.testing.assert_allclose(ret, expected + values[:-1], atol=1e-12)


def test_gae_lambda_one_is_return_minus_value():
    rewards = np.array([1.0, -0.5, 2.0])
    values = np.array([0.3, 0.1, -0.2, 0.7])
    dones = np.array([0.0, 0.0, 1.0])
    gamma = 0.9
    adv, _ = compute_gae(rewards, values, dones, gamma, lam=1.0)
    g2 = rewards[2]
    g1 = rewards[1] + gamma * g2
    g0 = rewards[0] + gamma * g1
    np.testing.assert_allclose(adv, [g0 - values[0], g1 - values[1], g2 - values[2]],
                               atol=1e-12)


def test_gae_closed_form_three_step():
    rewards = np.array([0.5, 0.25, 1.0])
    values = np.array([0.1, 0.2, 0.3, 0.0])
    dones = np.array([0.0, 0.0, 1.0])
    gamma, lam = 0.99, 0.95
    d0 = rewards[0] + gamma * values[1] - values[0]
    d1 = rewards[1] + gamma * values[2] - values[1]
    d2 = rewards[2] - values[2]
    expected = [d0 + gamma * lam * (d1 + gamma * lam * d2), d1 + gamma * lam * d2, d2]
    adv, _ = compute_gae(rewards, values, dones, gamma, lam)
    np.testing.assert_allclose(adv, expected, atol=1e-12)


# ---------------------------------------------------------------------------
# Clipped surrogate objective
# ---------------------------------------------------------------------------

def test_clipped_surrogate_branches():
    eps = 0.2
    # advantage > 0 and ratio beyond 1+eps: clipped branch exactly
    np.testing.assert_allclose(
        clipped_surrogate(np.array([1.5]), np.array([2.0]), eps), [1.2 * 2.0])
    # advantage < 0 and ratio below 1-eps: clipped branch
    np.testing.assert_allclose(
        clipped_surrogate(np.array([0.5]), np.array([-1.0]), eps), [0.8 * -1.0])
    # inside the clip range both branches agree
    np.testing.assert_allclose(
        clipped_surrogate(np.array([1.1]), np.array([3.0]), eps), [1.1 * 3.0])


def test_objective_gradient_matches_finite_differences():
    params = init_policy(1, pool=3, action_grid=3, hidden=6, rng_seed=6)
    rng = rng_from_seed(21)
    e = encoded_size(params.descriptor)
    a = params.descriptor["action_grid"] ** 3
    batch = {
        "enc": rng.random((3, e)),
        "cells": rng.integers(0, a, size=3),
        "old_logp": np.log(rng.uniform(0.005, 0.05, size=3)),
        "adv": rng.standard_normal(3),
        "returns": rng.standard_normal(3),
    }
    cfg = PpoConfig()
    _, analytic, _ = ppo_objective(params, batch, cfg)

    h = 1e-4
    theta0 = params.theta.copy()
    fd = np.zeros_like(theta0)
    for i in range(theta0.size):
        tp = theta0.copy(); tp[i] += h
        tm = theta0.copy(); tm[i] -= h
        lp, _, _ = ppo_objective(PolicyParams(tp, params.descriptor), batch, cfg)
        lm, _, _ = ppo_objective(PolicyParams(tm, params.descriptor), batch, cfg)
        fd[i] = (lp - lm) / (2 * h)
    denom = np.maximum(np.abs(fd), 1e-7)
    assert (np.abs(analytic - fd) / denom).max() < 1e-3


def test_zero_advantage_zero_policy_gradient():
    params = _small_policy(rng_seed=7)
    rng = rng_from_seed(22)
    e = encoded_size(params.descriptor)
    a = params.descriptor["action_grid"] ** 3
    batch = {
        "enc": rng.random((4, e)),
        "cells": rng.integers(0, a, size=4),
        "old_logp": np.full(4, -np.log(a)),
        "adv": np.zeros(4),
        "returns": np.zeros(4),
    }
    cfg = PpoConfig(value_coef=0.0, entropy_coef=0.0)
    loss, grad, _ = ppo_objective(params, batch, cfg)
    assert loss == pytest.approx(0.0, abs=1e-12)
    assert np.abs(grad).max() < 1e-12


# ---------------------------------------------------------------------------
# Updates and training
# ---------------------------------------------------------------------------

def _block_env(beta=0.0):
    dims = (8, 8, 8)
    vol = Volume(np.full((1, *dims), 0.5, dtype=np.float32))
    ent = np.full(dims, LN2)
    ent[2:4, 2:4, 2:4] = 0.0
    truth = Mask.zeros(dims)
    truth.data[2:4, 2:4, 2:4] = 1
    cfg = EnvConfig(beta=beta, horizon=5, grow=GrowConfig.desk(max_iters=50))
    return SegmentEnv(vol, ent, cfg, truth=truth)


def test_ppo_update_runs_and_changes_params():
    env = _block_env()
    params = init_policy(1, pool=4, action_grid=4, hidden=8, rng_seed=0)
    rng = rng_from_seed(31)
    episodes = [rollout(env, PpoPolicy(params), (2, 2, 2), rng) for _ in range(4)]
    cfg = PpoConfig(lr=1e-3, batch_size=8)
    new, stats = ppo_update(params, episodes, cfg)
    assert new.theta.shape == params.theta.shape
    assert np.isfinite(new.theta).all()
    assert not np.array_equal(new.theta, params.theta)
    assert "policy_loss" in stats and "value_loss" in stats


def test_ppo_update_rejects_empty_buffer():
    params = _small_policy()
    with pytest.raises(DataError):
        ppo_update(params, [], PpoConfig())


def test_policy_round_trip(tmp_path):
    params = init_policy(3, rng_seed=5)
    path = tmp_path / "p.ppm"
    save_policy(params, path)
    back = load_policy(path)
    assert back.descriptor == params.descriptor
    np.testing.assert_allclose(back.theta, params.theta, atol=1e-6)
    save_policy(back, tmp_path / "p2.ppm")
    assert (tmp_path / "p.ppm").read_bytes() == (tmp_path / "p2.ppm").read_bytes()


def test_policy_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "x.ppm"
    path.write_bytes(b'{"magic":"NO"}\n')
    with pytest.raises(FileFormatError):
        load_policy(path)


def test_train_agent_deterministic(bench_phantoms, bench_surrogate):
    samples = bench_phantoms[:4]
    env_cfg = EnvConfig(beta=0.8, horizon=4, grow=GrowConfig.desk(max_iters=100))
    ppo_cfg = PpoConfig(lr=3e-4, batch_size=16, total_steps=0)
    tc = AgentTrainConfig(updates=2, pool=4, action_grid=4, hidden=16)
    a = train_agent(samples, bench_surrogate, env_cfg, ppo_cfg, rng_seed=5, train_cfg=tc)
    b = train_agent(samples, bench_surrogate, env_cfg, ppo_cfg, rng_seed=5, train_cfg=tc)
    assert np.array_equal(a.theta, b.theta)
    c = train_agent(samples, bench_surrogate, env_cfg, ppo_cfg, rng_seed=6, train_cfg=tc)
    assert not np.array_equal(a.theta, c.theta)


def test_train_agent_writes_log(bench_phantoms, bench_surrogate, tmp_path):
    import json

    samples = bench_phantoms[:2]
    env_cfg = EnvConfig(beta=0.8, horizon=4, grow=GrowConfig.desk(max_iters=100))
    ppo_cfg = PpoConfig(lr=3e-4, batch_size=8)
    log = tmp_path / "train_log.jsonl"
    tc = AgentTrainConfig(updates=2, pool=4, action_grid=4, hidden=16,
                          log_path=str(log))
    train_agent(samples, bench_surrogate, env_cfg, ppo_cfg, rng_seed=1, train_cfg=tc)
    lines = [json.loads(l) for l in log.read_text().splitlines()]
    assert len(lines) == 2
    for rec in lines:
        assert {"update", "mean_return", "mean_final_dice",
                "policy_loss", "value_loss"} <= set(rec)
