"""Acceptance gate: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s`. The RL criteria share a
session bundle (benchmark phantoms, surrogate, and the three policies)
built once; budgets are the pinned desk-scale configuration.
"""

from __future__ import annotations

import hashlib
import json
import math
import time

import numpy as np
import pytest

from seedgrow.env import EnvConfig, SegmentEnv, rollout
from seedgrow.grid import LN2, Mask, Volume, binary_entropy, dice_loss, entropy_map
from seedgrow.infer import run_inference
from seedgrow.metrics import classify_negative, dice_score
from seedgrow.phantom import (
    PhantomSpec,
    generate,
    sample_perturbed_seed,
    sample_seed_in_gland,
    sample_seed_in_lesion,
)
from seedgrow.ppo import (
    AgentTrainConfig,
    PolicyParams,
    PpoConfig,
    UniformRandomPolicy,
    init_policy,
    ppo_objective,
    train_agent,
)
from seedgrow.region_grow import GrowConfig, grow, grow_oracle
from seedgrow.rng import rng_from_seed, substream
from seedgrow.surrogate import (
    SurrogateParams,
    SurrogateTrainConfig,
    entropy_of,
    featurize,
    init_params,
    loss_and_gradient,
    train,
)

# ---------------------------------------------------------------------------
# Pinned desk-scale acceptance configuration
# ---------------------------------------------------------------------------

BENCH_SEEDS = [900 + k for k in range(20)]
PROMPT_SEED = 5000
SURROGATE_CFG = SurrogateTrainConfig(rng_seed=1)
GROW_CFG = GrowConfig.desk(max_iters=200)
HORIZON = 10
AGENT_RNG_SEED = 7
AGENT_UPDATES = 1000
AGENT_LR = 1e-3
AGENT_GRID = 6
PROMPTS_PER_CASE = 3


def _pass(name: str, detail: str) -> None:
    print(f"\n[PASS] {name}: {detail}")


@pytest.fixture(scope="session")
def bench(train_phantoms, bench_phantoms, bench_surrogate):
    """Held-out benchmark + surrogate + per-beta policies + entropies.

    Policies train on the separate training phantoms; the benchmark is
    evaluation-only, mirroring the development/holdout protocol.
    """
    entropies = {k: entropy_of(s.volume, bench_surrogate)
                 for k, s in enumerate(bench_phantoms)}
    policies = {}
    for beta in (0.0, 0.4, 0.8):
        env_cfg = EnvConfig(beta=beta, horizon=HORIZON, grow=GROW_CFG)
        tc = AgentTrainConfig(updates=AGENT_UPDATES, pool=AGENT_GRID,
                              action_grid=AGENT_GRID)
        policies[beta] = train_agent(
            train_phantoms, bench_surrogate, env_cfg,
            PpoConfig(lr=AGENT_LR, batch_size=128),
            rng_seed=AGENT_RNG_SEED, train_cfg=tc)
    return {"samples": bench_phantoms, "surrogate": bench_surrogate,
            "entropies": entropies, "policies": policies}


def _mean_dice(bench_data, policy, protocol: str) -> float:
    samples = bench_data["samples"]
    ents = bench_data["entropies"]
    env_cfg = EnvConfig(beta=0.8, horizon=HORIZON, grow=GROW_CFG)
    dices = []
    for k, sample in enumerate(samples):
        for j in range(PROMPTS_PER_CASE):
            if protocol == "in-lesion":
                seed = sample_seed_in_lesion(sample, rng_seed=PROMPT_SEED + 97 * j + k)
            elif protocol == "perturbed":
                seed = sample_perturbed_seed(sample, 4, rng_seed=PROMPT_SEED + 97 * j + k)
            elif protocol == "gland-centre":
                on = np.argwhere(sample.gland.data > 0)
                seed = tuple(int(x) for x in np.round(on.mean(axis=0)))
            res = run_inference(sample.volume, ents[k], tuple(seed), policy, env_cfg)
            dices.append(dice_score(res.mask, sample.truth))
    return float(np.mean(dices))


# ---------------------------------------------------------------------------
# Criterion 1: region-growing oracle equivalence
# ---------------------------------------------------------------------------

def test_oracle_equivalence_200_randomized():
    t0 = time.time()
    trials = 200
    for k in range(trials):
        rng = rng_from_seed(40_000 + k)
        dims = (16, 16, 16)
        x = Volume((rng.random((1, *dims)) * 0.6).astype(np.float32))
        ent = rng.random(dims) * LN2
        radius = (1, 1, 1) if k % 4 else (2, 2, 2)
        cfg = GrowConfig(radius=radius,
                         tau_sigma=float(rng.uniform(0.05, 0.3)),
                         tau_e=float(rng.uniform(0.1, 0.6)),
                         max_iters=1000)
        seed = tuple(int(s) for s in rng.integers(0, 16, size=3))
        res = grow(x, ent, seed, cfg)
        assert res.converged, f"trial {k} hit the iteration cap"
        oracle = grow_oracle(x, ent, seed, cfg)
        assert np.array_equal(res.mask.data, oracle.data), f"trial {k} mismatch"
    elapsed = time.time() - t0
    assert elapsed < 30.0, f"oracle campaign took {elapsed:.1f}s (budget 30s)"
    _pass("oracle-equivalence",
          f"200/200 randomized 16^3 cases identical, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# Criterion 2: entropy correctness
# ---------------------------------------------------------------------------

def test_entropy_closed_form_grid():
    p = np.linspace(0.0, 1.0, 1000)
    ent = binary_entropy(p)
    closed = np.array([0.0 if q in (0.0, 1.0)
                       else -(q * math.log(q) + (1 - q) * math.log(1 - q))
                       for q in p])
    assert np.abs(ent - closed).max() < 1e-9
    assert binary_entropy(np.array([0.5]))[0] == pytest.approx(LN2, abs=1e-12)
    field = entropy_map(p.reshape(10, 10, 10))
    mirrored = entropy_map((1.0 - p).reshape(10, 10, 10))
    np.testing.assert_allclose(field.data, mirrored.data, atol=1e-12)
    _pass("entropy-correctness",
          "1000-point grid matches closed form to 1e-9; ln2 at p=0.5; symmetric")


# ---------------------------------------------------------------------------
# Criterion 3: gradient checks (surrogate and PPO)
# ---------------------------------------------------------------------------

def _fd_gradient(fun, theta, h=1e-4):
    out = np.zeros_like(theta)
    for i in range(theta.size):
        tp = theta.copy(); tp[i] += h
        tm = theta.copy(); tm[i] -= h
        out[i] = (fun(tp) - fun(tm)) / (2 * h)
    return out


def test_gradient_checks_match_finite_differences():
    # surrogate: 5-sample random batch
    rng = rng_from_seed(333)
    batch = []
    for _ in range(5):
        vol = Volume(rng.random((2, 4, 4, 4), dtype=np.float32))
        t = (rng.random((4, 4, 4)) < 0.3).astype(np.float64).reshape(-1)
        batch.append((featurize(vol).matrix(), t, (4, 4, 4)))
    sp = init_params(channels=2, hidden=6, rng_seed=3)
    _, analytic = loss_and_gradient(sp, batch)
    fd = _fd_gradient(lambda th: loss_and_gradient(
        SurrogateParams(th, sp.descriptor), batch)[0], sp.theta.copy())
    rel_s = (np.abs(analytic - fd) / np.maximum(np.abs(fd), 1e-8)).max()
    assert rel_s < 1e-3

    # ppo: 3-transition toy buffer
    pp = init_policy(1, pool=3, action_grid=3, hidden=6, rng_seed=6)
    rng = rng_from_seed(21)
    e = (pp.descriptor["channels"] + 1) * pp.descriptor["pool"] ** 3
    buf = {
        "enc": rng.random((3, e)),
        "cells": rng.integers(0, 27, size=3),
        "old_logp": np.log(rng.uniform(0.005, 0.05, size=3)),
        "adv": rng.standard_normal(3),
        "returns": rng.standard_normal(3),
    }
    cfg = PpoConfig()
    _, analytic_p, _ = ppo_objective(pp, buf, cfg)
    fd_p = _fd_gradient(lambda th: ppo_objective(
        PolicyParams(th, pp.descriptor), buf, cfg)[0], pp.theta.copy())
    rel_p = (np.abs(analytic_p - fd_p) / np.maximum(np.abs(fd_p), 1e-7)).max()
    assert rel_p < 1e-3
    _pass("gradient-checks",
          f"surrogate max rel err {rel_s:.2e}, ppo max rel err {rel_p:.2e} (< 1e-3)")


# ---------------------------------------------------------------------------
# Criterion 4: reward telescoping
# ---------------------------------------------------------------------------

def test_reward_telescoping_100_rollouts(bench_phantoms, bench_surrogate):
    worst = 0.0
    count = 0
    for k in range(100):
        sample = bench_phantoms[k % len(bench_phantoms)]
        ent = entropy_of(sample.volume, bench_surrogate)
        env = SegmentEnv(sample.volume, ent,
                         EnvConfig(beta=0.0, horizon=8, grow=GROW_CFG),
                         truth=sample.truth)
        seed = sample_seed_in_lesion(sample, rng_seed=60_000 + k)
        eps = rollout(env, UniformRandomPolicy(6), tuple(seed),
                      substream(61_000, k))
        total = sum(tr.reward for tr in eps)
        endpoint = (dice_loss(eps[0].state.mask, sample.truth)
                    - dice_loss(eps[-1].next_state.mask, sample.truth))
        worst = max(worst, abs(total - endpoint))
        count += 1
    assert count == 100
    assert worst < 1e-9
    _pass("reward-telescoping",
          f"100 rollouts, max |sum(dice terms) - endpoint| = {worst:.2e} (< 1e-9)")


# ---------------------------------------------------------------------------
# Criteria 5-7: learning signal, beta sweep, robustness
# ---------------------------------------------------------------------------

def test_learning_signal_orderings(bench):
    t0 = time.time()
    full = _mean_dice(bench, bench["policies"][0.8], "in-lesion")
    no_entropy = _mean_dice(bench, bench["policies"][0.0], "in-lesion")
    no_prompt = _mean_dice(bench, bench["policies"][0.8], "gland-centre")

    # uniform-random policy baseline through the same environments
    env_cfg = EnvConfig(beta=0.8, horizon=HORIZON, grow=GROW_CFG)
    rand = []
    for k, sample in enumerate(bench["samples"]):
        env = SegmentEnv(sample.volume, bench["entropies"][k], env_cfg,
                         truth=sample.truth)
        for j in range(PROMPTS_PER_CASE):
            seed = sample_seed_in_lesion(sample, rng_seed=PROMPT_SEED + 97 * j + k)
            eps = rollout(env, UniformRandomPolicy(AGENT_GRID), tuple(seed),
                          substream(62_000, k, j))
            rand.append(dice_score(eps[-1].next_state.mask, sample.truth))
    random_dice = float(np.mean(rand))
    elapsed = time.time() - t0

    assert full - random_dice >= 0.10, \
        f"trained {full:.3f} vs random {random_dice:.3f}"
    assert full - no_entropy >= 0.05, \
        f"full {full:.3f} vs no-entropy {no_entropy:.3f}"
    assert full - no_prompt >= 0.05, \
        f"full {full:.3f} vs no-prompt {no_prompt:.3f}"
    _pass("learning-signal",
          f"full {full:.3f} > no-entropy {no_entropy:.3f} and "
          f"no-prompt {no_prompt:.3f} by >= 0.05; random {random_dice:.3f}; "
          f"eval wall time {elapsed:.0f}s")


def test_beta_sweep_not_monotone_from_zero(bench):
    dices = {beta: _mean_dice(bench, pol, "in-lesion")
             for beta, pol in bench["policies"].items()}
    best_positive = max(dices[0.4], dices[0.8])
    assert best_positive - dices[0.0] >= 0.03, f"beta sweep {dices}"
    _pass("beta-sweep",
          " ".join(f"beta={b}: {d:.3f}" for b, d in sorted(dices.items()))
          + f" (best positive beta beats beta=0 by {best_positive - dices[0.0]:.3f})")


def test_robustness_direction(bench):
    full = bench["policies"][0.8]
    rl_lesion = _mean_dice(bench, full, "in-lesion")
    rl_pert = _mean_dice(bench, full, "perturbed")
    ss_lesion = _mean_dice(bench, None, "in-lesion")
    ss_pert = _mean_dice(bench, None, "perturbed")
    rl_drop = rl_lesion - rl_pert
    ss_drop = ss_lesion - ss_pert
    assert rl_drop <= 0.5 * ss_drop, \
        f"rl drop {rl_drop:.3f} vs single-shot drop {ss_drop:.3f}"
    _pass("robustness-direction",
          f"rl {rl_lesion:.3f}->{rl_pert:.3f} (drop {rl_drop:.3f}) vs single-shot "
          f"{ss_lesion:.3f}->{ss_pert:.3f} (drop {ss_drop:.3f})")


# ---------------------------------------------------------------------------
# Criterion 8: negative-case rule
# ---------------------------------------------------------------------------

def test_negative_case_rule(bench):
    env_cfg = EnvConfig(beta=0.8, horizon=HORIZON, grow=GROW_CFG)
    full = bench["policies"][0.8]
    surrogate = bench["surrogate"]

    negatives = 0
    for k in range(20):
        sample = generate(PhantomSpec(lesion_count=0, rng_seed=3000 + k))
        ent = entropy_of(sample.volume, surrogate)
        seed = sample_seed_in_gland(sample, rng_seed=PROMPT_SEED + k)
        res = run_inference(sample.volume, ent, tuple(seed), full, env_cfg)
        negatives += classify_negative(res.mask, env_cfg.grow)
    positives = 0
    for k, sample in enumerate(bench["samples"]):
        seed = sample_seed_in_lesion(sample, rng_seed=PROMPT_SEED + k)
        res = run_inference(sample.volume, bench["entropies"][k], tuple(seed),
                            full, env_cfg)
        positives += not classify_negative(res.mask, env_cfg.grow)
    assert negatives >= 18, f"only {negatives}/20 lesion-free scans negative"
    assert positives >= 18, f"only {positives}/20 lesion scans positive"
    _pass("negative-case-rule",
          f"{negatives}/20 lesion-free negative, {positives}/20 lesioned positive")


# ---------------------------------------------------------------------------
# Criterion 9: pipeline determinism
# ---------------------------------------------------------------------------

def _hash_file(path) -> str:
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def test_pipeline_determinism(tmp_path):
    from seedgrow.cli import main

    small = [
        "--set", "phantom.dims=[20,20,20]",
        "--set", "phantom.lesion_radius_min=3",
        "--set", "phantom.lesion_radius_max=5",
        "--set", "phantom.count=3",
        "--set", "surrogate.epochs=25",
        "--set", "ppo.updates=3",
        "--set", "ppo.batch_size=16",
        "--set", "ppo.pool=4",
        "--set", "ppo.action_grid=4",
        "--set", "ppo.hidden=8",
        "--set", "env.horizon=3",
    ]
    digests = []
    for run in ("r1", "r2"):
        base = tmp_path / run
        data = base / "data"
        assert main(["generate", "--out", str(data), "--seed", "9", *small]) == 0
        spm = base / "s.spm"
        assert main(["train-surrogate", "--data", str(data), "--out", str(spm),
                     "--seed", "9", *small]) == 0
        ppm = base / "p.ppm"
        assert main(["train-agent", "--data", str(data), "--surrogate", str(spm),
                     "--out", str(ppm), "--seed", "9", *small]) == 0
        manifest = json.loads((data / "manifest.json").read_text())
        centre = manifest["samples"][0]["lesion_centres"][0]
        mask = base / "m.svm"
        assert main(["infer", "--volume", str(data / "sample_0000.svf"),
                     "--prompt", ",".join(str(c) for c in centre),
                     "--policy", str(ppm), "--surrogate", str(spm),
                     "--out", str(mask), *small]) == 0
        digests.append({
            "volume": _hash_file(data / "sample_0000.svf"),
            "truth": _hash_file(data / "sample_0000.truth.svm"),
            "surrogate": _hash_file(spm),
            "policy": _hash_file(ppm),
            "mask": _hash_file(mask),
        })
    assert digests[0] == digests[1]
    _pass("determinism",
          "generate -> train-surrogate -> train-agent -> infer bit-identical "
          f"across two runs ({len(digests[0])} artifacts hashed)")
