"""Actor-critic seed-placement agent trained with clipped policy gradients.

The policy observes (volume, mask) states through a fixed average-pooling
encoder: mask stacked as an extra channel, each channel pooled to a G^3
grid and flattened, then a trainable fully connected trunk with an actor
head (categorical logits over a coarse Ga^3 action grid, each cell mapped
to its centre voxel) and a critic head (state value). Gradients are
analytic throughout so the update can be checked against finite
differences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, FileFormatError, NumericError
from .grid import Mask, Volume, VoxelIndex, as_voxel, dice_loss
from .rng import substream
from .surrogate import Adam

_LOGP_FLOOR = -80.0  # log-prob clamp to keep ratios finite on dead cells


@dataclass(frozen=True)
class PpoConfig:
    """Update hyper-parameters (reference defaults) plus desk-scale run
    budget. value_coef is a convention, not a reference value."""

    lr: float = 1e-4
    gamma: float = 0.99
    clip_eps: float = 0.2
    gae_lambda: float = 0.95
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    batch_size: int = 128
    updates_per_batch: int = 4
    total_steps: int = 20_000
    advantage_norm: bool = True

    def __post_init__(self):
        if not (0 <= self.gamma < 1):
            raise DataError(f"gamma must be in [0,1), got {self.gamma}")
        if self.clip_eps <= 0:
            raise DataError("clip_eps must be > 0")
        if not (0 <= self.gae_lambda <= 1):
            raise DataError(f"gae_lambda must be in [0,1], got {self.gae_lambda}")


# ---------------------------------------------------------------------------
# Parameters and encoding
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class PolicyParams:
    """Flat parameter vector, architecture descriptor, optimiser moments.

    theta layout: W1 (hidden x E) | b1 | Wa (A x hidden) | ba | Ws (A x E)
    | wc | bc, with E = (channels+1) * pool^3 and A = action_grid^3.

    Ws is a direct linear path from the encoding to the actor logits: the
    tanh trunk is a rank-`hidden` bottleneck, which cannot express the
    positional copy "seed where the current mask is" that a convolutional
    encoder gets for free; the skip path restores it.
    """

    theta: np.ndarray
    descriptor: dict
    opt_state: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64).ravel()
        if self.theta.size != policy_param_count(self.descriptor):
            raise DataError(
                f"theta has {self.theta.size} entries, descriptor implies "
                f"{policy_param_count(self.descriptor)}")
        if not np.all(np.isfinite(self.theta)):
            raise NumericError("non-finite policy parameters")

    def unpack(self) -> tuple:
        d = self.descriptor
        e = encoded_size(d)
        h = d["hidden"]
        a = d["action_grid"] ** 3
        t = self.theta
        off = 0
        w1 = t[off: off + h * e].reshape(h, e); off += h * e
        b1 = t[off: off + h]; off += h
        wa = t[off: off + a * h].reshape(a, h); off += a * h
        ba = t[off: off + a]; off += a
        ws = t[off: off + a * e].reshape(a, e); off += a * e
        wc = t[off: off + h]; off += h
        bc = t[off]
        return w1, b1, wa, ba, ws, wc, bc


def encoded_size(descriptor: dict) -> int:
    return (descriptor["channels"] + 1) * descriptor["pool"] ** 3


def policy_param_count(descriptor: dict) -> int:
    e = encoded_size(descriptor)
    h = descriptor["hidden"]
    a = descriptor["action_grid"] ** 3
    return h * e + h + a * h + a + a * e + h + 1


def init_policy(channels: int, pool: int = 8, action_grid: int = 8,
                hidden: int = 64, rng_seed: int = 0) -> PolicyParams:
    """Random trunk, zero heads: the initial policy is uniform and the
    initial value estimate is 0 everywhere."""
    descriptor = {"channels": channels, "pool": pool,
                  "action_grid": action_grid, "hidden": hidden}
    theta = np.zeros(policy_param_count(descriptor))
    e = encoded_size(descriptor)
    h = hidden
    rng = substream(rng_seed, 200)
    theta[: h * e] = rng.standard_normal(h * e) / math.sqrt(e)
    return PolicyParams(theta=theta, descriptor=descriptor)


def _axis_bounds(n: int, g: int) -> np.ndarray:
    """g+1 split points covering [0, n); every cell is nonempty for n >= 1."""
    pts = (np.arange(g + 1) * n) // g
    # for n < g some cells would be empty; widen them to one voxel
    for i in range(1, g + 1):
        if pts[i] <= pts[i - 1]:
            pts[i] = min(pts[i - 1] + 1, n)
    return pts


def _pool_axis(arr: np.ndarray, axis: int, g: int) -> np.ndarray:
    n = arr.shape[axis]
    pts = _axis_bounds(n, g)
    csum = np.cumsum(arr, axis=axis)
    csum = np.concatenate([np.zeros_like(np.take(csum, [0], axis=axis)), csum], axis=axis)
    hi = np.take(csum, np.minimum(pts[1:], n), axis=axis)
    lo = np.take(csum, np.minimum(pts[:-1], n), axis=axis)
    counts = np.maximum(pts[1:] - pts[:-1], 1).astype(np.float64)
    shape = [1] * arr.ndim
    shape[axis] = g
    return (hi - lo) / counts.reshape(shape)


def pool_volume(field3d: np.ndarray, g: int) -> np.ndarray:
    out = field3d.astype(np.float64)
    for axis in range(3):
        out = _pool_axis(out, axis, g)
    return out


# Pooling dominates encoding cost. Volumes are immutable, so their pooled
# planes are memoised by identity; masks are mutable, so theirs are keyed
# by content. Both caches reset when they outgrow their bound.
_VOL_POOL_CACHE: dict = {}
_MASK_POOL_CACHE: dict = {}
_POOL_CACHE_LIMIT = 4096


def _pooled_volume_planes(volume: Volume, g: int) -> np.ndarray:
    key = (id(volume), g)
    hit = _VOL_POOL_CACHE.get(key)
    if hit is None or hit[0] is not volume:
        if len(_VOL_POOL_CACHE) >= 256:
            _VOL_POOL_CACHE.clear()
        planes = np.concatenate([pool_volume(ch, g).reshape(-1) for ch in volume.data])
        hit = (volume, planes)
        _VOL_POOL_CACHE[key] = hit
    return hit[1]


def _pooled_mask_plane(mask: Mask, g: int) -> np.ndarray:
    key = (mask.data.tobytes(), mask.dims, g)
    hit = _MASK_POOL_CACHE.get(key)
    if hit is None:
        if len(_MASK_POOL_CACHE) >= _POOL_CACHE_LIMIT:
            _MASK_POOL_CACHE.clear()
        hit = pool_volume(mask.data.astype(np.float64), g).reshape(-1)
        _MASK_POOL_CACHE[key] = hit
    return hit


def encode(state, descriptor: dict) -> np.ndarray:
    """Flattened pooled (channels + mask) representation of a state."""
    g = descriptor["pool"]
    return np.concatenate([_pooled_volume_planes(state.volume, g),
                           _pooled_mask_plane(state.mask, g)])


def cell_centre(cell: int, action_grid: int, dims: tuple) -> VoxelIndex:
    """Centre voxel of a flat action cell (per-axis floor-midpoint).

    When an axis is shorter than the action grid the trailing cells are
    empty and collapse onto the last voxel.
    """
    g = action_grid
    ijk = np.unravel_index(cell, (g, g, g))
    out = []
    for axis, i in enumerate(ijk):
        n = dims[axis]
        pts = _axis_bounds(n, g)
        lo, hi = int(pts[i]), int(pts[i + 1])
        out.append(lo + (hi - lo) // 2 if hi > lo else min(lo, n - 1))
    return VoxelIndex(*out)


def voxel_cell(v, action_grid: int, dims: tuple) -> int:
    """Flat action cell containing a voxel (inverse of cell_centre)."""
    v = as_voxel(v)
    idx = []
    for axis, x in enumerate(v):
        pts = _axis_bounds(dims[axis], action_grid)
        idx.append(int(np.searchsorted(pts, x, side="right")) - 1)
    g = action_grid
    return int(np.ravel_multi_index(tuple(np.clip(idx, 0, g - 1)), (g, g, g)))


def _trunk(enc: np.ndarray, params: PolicyParams) -> tuple:
    w1, b1, wa, ba, ws, wc, bc = params.unpack()
    h = np.tanh(enc @ w1.T + b1)
    logits = h @ wa.T + enc @ ws.T + ba
    values = h @ wc + bc
    return h, logits, values


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def action_distribution(state, params: PolicyParams) -> np.ndarray:
    """Categorical probabilities over the action grid for one state."""
    enc = encode(state, params.descriptor)
    _, logits, _ = _trunk(enc[None, :], params)
    return np.exp(_log_softmax(logits))[0]


def act(state, params: PolicyParams, rng=None, mode: str = "sample") -> tuple:
    """Choose a seed voxel; returns (action, log_prob, value_estimate).

    Greedy mode takes the argmax with ties broken by lowest flat cell
    index; sampling inverts the CDF with one uniform draw.
    """
    enc = encode(state, params.descriptor)
    _, logits, values = _trunk(enc[None, :], params)
    logp = _log_softmax(logits)[0]
    probs = np.exp(logp)
    if mode == "greedy":
        cell = int(np.argmax(probs))
    elif mode == "sample":
        if rng is None:
            raise DataError("sampling mode requires an rng")
        u = float(rng.random())
        cell = int(np.searchsorted(np.cumsum(probs), u))
        cell = min(cell, probs.size - 1)
    else:
        raise DataError(f"unknown act mode {mode!r}")
    g = params.descriptor["action_grid"]
    action = cell_centre(cell, g, state.volume.dims)
    return action, float(max(logp[cell], _LOGP_FLOOR)), float(values[0])


class PpoPolicy:
    """Adapter giving PolicyParams the policy interface rollout expects."""

    def __init__(self, params: PolicyParams, mode: str = "sample"):
        self.params = params
        self.mode = mode

    def act(self, state, rng=None, mode: str | None = None):
        return act(state, self.params, rng=rng, mode=mode or self.mode)


class UniformRandomPolicy:
    """Baseline: uniform over action cells, mapped to cell centres."""

    def __init__(self, action_grid: int = 8):
        self.action_grid = action_grid

    def act(self, state, rng=None, mode: str = "sample"):
        n = self.action_grid ** 3
        if mode == "greedy":
            cell = 0
        else:
            if rng is None:
                raise DataError("sampling mode requires an rng")
            cell = int(rng.integers(0, n))
        action = cell_centre(cell, self.action_grid, state.volume.dims)
        return action, -math.log(n), 0.0


# ---------------------------------------------------------------------------
# Advantages
# ---------------------------------------------------------------------------

def compute_gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                gamma: float, lam: float) -> tuple:
    """Generalized advantage estimates and value targets for one episode.

    values has length T+1 (bootstrap last; ignored after a terminal step
    because dones masks it). lam=0 gives one-step TD errors, lam=1 the
    discounted-return-minus-value estimator.
    """
    T = len(rewards)
    adv = np.zeros(T)
    gae = 0.0
    for t in range(T - 1, -1, -1):
        cont = 1.0 - float(dones[t])
        delta = rewards[t] + gamma * values[t + 1] * cont - values[t]
        gae = delta + gamma * lam * cont * gae
        adv[t] = gae
    return adv, adv + values[:-1]


# ---------------------------------------------------------------------------
# Clipped-surrogate objective
# ---------------------------------------------------------------------------

def clipped_surrogate(ratio: np.ndarray, adv: np.ndarray, eps: float) -> np.ndarray:
    """Per-transition pessimistic surrogate min(r*A, clip(r)*A)."""
    return np.minimum(ratio * adv, np.clip(ratio, 1 - eps, 1 + eps) * adv)


def ppo_objective(params: PolicyParams, batch: dict, cfg: PpoConfig) -> tuple:
    """Total loss and its analytic gradient w.r.t. the flat theta.

    batch: enc (N,E), cells (N,), old_logp (N,), adv (N,), returns (N,).
    The loss is policy surrogate (negated) + value_coef * squared value
    error - entropy_coef * policy entropy.
    """
    enc = batch["enc"]
    cells = batch["cells"]
    old_logp = batch["old_logp"]
    adv = batch["adv"]
    rets = batch["returns"]
    n = enc.shape[0]

    w1, b1, wa, ba, ws, wc, bc = params.unpack()
    z1 = enc @ w1.T + b1
    h = np.tanh(z1)
    logits = h @ wa.T + enc @ ws.T + ba
    values = h @ wc + bc
    logp_all = _log_softmax(logits)
    probs = np.exp(logp_all)
    logp = logp_all[np.arange(n), cells]

    ratio = np.exp(np.clip(logp - old_logp, -60, 60))
    surr1 = ratio * adv
    clipped = np.clip(ratio, 1 - cfg.clip_eps, 1 + cfg.clip_eps)
    surr2 = clipped * adv
    take_unclipped = surr1 <= surr2
    policy_loss = -float(np.minimum(surr1, surr2).mean())

    verr = values - rets
    value_loss = float((verr * verr).mean())
    entropy = -(probs * logp_all).sum(axis=1)
    mean_entropy = float(entropy.mean())

    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * mean_entropy

    # d(policy_loss)/d(logp_taken): -(1/n) * ratio * adv on the active branch;
    # the clipped branch is constant in theta wherever the clip binds
    inside_clip = (ratio >= 1 - cfg.clip_eps) & (ratio <= 1 + cfg.clip_eps)
    g_logp = np.where(take_unclipped | inside_clip, ratio * adv, 0.0) * (-1.0 / n)
    one_hot = np.zeros_like(probs)
    one_hot[np.arange(n), cells] = 1.0
    g_logits = g_logp[:, None] * (one_hot - probs)
    # entropy bonus: d(-c*H)/dz = c * p * (logp + H)
    g_logits += (cfg.entropy_coef / n) * probs * (logp_all + entropy[:, None])
    g_values = (2.0 * cfg.value_coef / n) * verr

    g_wa = g_logits.T @ h
    g_ba = g_logits.sum(axis=0)
    g_ws = g_logits.T @ enc
    g_wc = h.T @ g_values
    g_bc = float(g_values.sum())
    g_h = g_logits @ wa + g_values[:, None] * wc[None, :]
    g_z1 = g_h * (1.0 - h * h)
    g_w1 = g_z1.T @ enc
    g_b1 = g_z1.sum(axis=0)

    grad = np.concatenate([g_w1.ravel(), g_b1, g_wa.ravel(), g_ba,
                           g_ws.ravel(), g_wc, [g_bc]])
    stats = {"policy_loss": policy_loss, "value_loss": value_loss,
             "entropy": mean_entropy}
    return loss, grad, stats


def _prepare_batch(params: PolicyParams, episodes: list, cfg: PpoConfig) -> dict:
    """Encode states and compute old log-probs/values/advantages under the
    incoming (pre-update) parameters, matching on-policy collection.

    Each episode contributes T state rows plus one bootstrap row (its
    final next_state) used only for the value baseline.
    """
    g = params.descriptor["action_grid"]
    enc_rows, ep_cells = [], []
    for ep in episodes:
        for tr in ep:
            enc_rows.append(encode(tr.state, params.descriptor))
        enc_rows.append(encode(ep[-1].next_state, params.descriptor))
        ep_cells.append([voxel_cell(tr.action, g, tr.state.volume.dims) for tr in ep])
    enc_full = np.stack(enc_rows)
    _, logits, values = _trunk(enc_full, params)
    logp_all = _log_softmax(logits)

    state_rows, cells, old_logp, advs, rets = [], [], [], [], []
    off = 0
    for ep, ep_c in zip(episodes, ep_cells):
        T = len(ep)
        rewards = np.array([tr.reward for tr in ep])
        dones = np.array([tr.done for tr in ep], dtype=np.float64)
        adv, ret = compute_gae(rewards, values[off: off + T + 1], dones,
                               cfg.gamma, cfg.gae_lambda)
        rows = np.arange(off, off + T)
        state_rows.append(rows)
        cells.extend(ep_c)
        old_logp.append(np.maximum(logp_all[rows, np.array(ep_c)], _LOGP_FLOOR))
        advs.append(adv)
        rets.append(ret)
        off += T + 1
    adv = np.concatenate(advs)
    if cfg.advantage_norm:
        std = adv.std()
        adv = (adv - adv.mean()) / (std if std > 1e-8 else 1.0)
    return {
        "enc": enc_full[np.concatenate(state_rows)],
        "cells": np.array(cells),
        "old_logp": np.concatenate(old_logp),
        "adv": adv,
        "returns": np.concatenate(rets),
    }


def ppo_update(params: PolicyParams, episodes: list, cfg: PpoConfig) -> tuple:
    """One batch update: GAE + several epochs of the clipped objective.

    Returns (new PolicyParams, stats of the last epoch).
    """
    if not episodes:
        raise DataError("ppo_update needs a nonempty episode buffer")
    batch = _prepare_batch(params, episodes, cfg)
    theta = params.theta.copy()
    opt = params.opt_state.get("adam")
    if opt is None:
        opt = Adam(theta.size)
    stats = {}
    work = replace_theta(params, theta)
    for _ in range(cfg.updates_per_batch):
        loss, grad, stats = ppo_objective(work, batch, cfg)
        if not np.isfinite(loss):
            raise NumericError("PPO loss became non-finite",
                               diagnostics={"batch_size": len(batch["cells"]),
                                            "stats": stats})
        theta = opt.step(theta, grad, cfg.lr)
        work = replace_theta(work, theta)
    new = PolicyParams(theta=theta, descriptor=dict(params.descriptor),
                       opt_state={"adam": opt})
    return new, stats


def replace_theta(params: PolicyParams, theta: np.ndarray) -> PolicyParams:
    return PolicyParams(theta=theta, descriptor=params.descriptor,
                        opt_state=params.opt_state)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AgentTrainConfig:
    """Desk-scale outer-loop budget around PpoConfig."""

    updates: int = 300
    pool: int = 8
    action_grid: int = 8
    hidden: int = 64
    checkpoint_every: int = 0
    log_path: str | None = None
    checkpoint_dir: str | None = None


def train_agent(samples: list, surrogate_params, env_cfg, ppo_cfg: PpoConfig,
                rng_seed: int, train_cfg: AgentTrainConfig | None = None,
                policy: PolicyParams | None = None) -> PolicyParams:
    """Outer loop: sample a case, roll out, update on full batches.

    samples: list of PhantomSample. The per-case entropy field is computed
    once from the frozen surrogate and cached with its environment.
    Deterministic given rng_seed. Writes one JSON line per update to
    train_cfg.log_path when set.
    """
    from .env import SegmentEnv, rollout
    from .phantom import sample_seed_in_lesion
    from .surrogate import entropy_of, save_params  # noqa: F401 (checkpoint path)

    train_cfg = train_cfg or AgentTrainConfig()
    if not samples:
        raise DataError("agent training needs a nonempty dataset")
    channels = samples[0].volume.channels
    if policy is None:
        policy = init_policy(channels, pool=train_cfg.pool,
                             action_grid=train_cfg.action_grid,
                             hidden=train_cfg.hidden, rng_seed=rng_seed)

    envs: dict[int, SegmentEnv] = {}
    case_rng = substream(rng_seed, 300)
    log_fh = open(train_cfg.log_path, "w") if train_cfg.log_path else None
    try:
        buffer: list = []
        buffer_steps = 0
        episode_id = 0
        for update in range(train_cfg.updates):
            returns, final_dices = [], []
            while buffer_steps < ppo_cfg.batch_size:
                idx = int(case_rng.integers(0, len(samples)))
                sample = samples[idx]
                env = envs.get(idx)
                if env is None:
                    ent = entropy_of(sample.volume, surrogate_params)
                    env = SegmentEnv(sample.volume, ent, env_cfg, truth=sample.truth)
                    envs[idx] = env
                seed = sample_seed_in_lesion(sample, rng_seed=(rng_seed << 16) + episode_id)
                ep_rng = substream(rng_seed, 301, episode_id)
                ep = rollout(env, PpoPolicy(policy), tuple(seed), ep_rng)
                episode_id += 1
                buffer.append(ep)
                buffer_steps += len(ep)
                returns.append(sum(tr.reward for tr in ep))
                final_dices.append(1.0 - dice_loss(ep[-1].next_state.mask, sample.truth))
            policy, stats = ppo_update(policy, buffer, ppo_cfg)
            buffer, buffer_steps = [], 0
            if log_fh:
                rec = {"update": update,
                       "episodes": len(returns),
                       "mean_return": float(np.mean(returns)),
                       "mean_final_dice": float(np.mean(final_dices)),
                       **{k: round(v, 6) for k, v in stats.items()}}
                log_fh.write(json.dumps(rec) + "\n")
            if (train_cfg.checkpoint_every and train_cfg.checkpoint_dir
                    and (update + 1) % train_cfg.checkpoint_every == 0):
                save_policy(policy, f"{train_cfg.checkpoint_dir}/policy_{update + 1:05d}.ppm")
    finally:
        if log_fh:
            log_fh.close()
    return policy


# ---------------------------------------------------------------------------
# Persistence (.ppm): JSON header line + little-endian f32 payload
# ---------------------------------------------------------------------------

def save_policy(params: PolicyParams, path) -> None:
    header = {
        "magic": "PPM1",
        "descriptor": params.descriptor,
        "n_params": int(params.theta.size),
        "dtype": "f32le",
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, separators=(",", ":")) + "\n").encode("utf-8"))
        fh.write(params.theta.astype("<f4").tobytes())


def load_policy(path) -> PolicyParams:
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FileFormatError(f"{path}: header is not a JSON line: {exc}", field="header")
        if header.get("magic") != "PPM1":
            raise FileFormatError(f"{path}: bad magic {header.get('magic')!r}", field="magic")
        if header.get("dtype") != "f32le":
            raise FileFormatError(f"{path}: unknown dtype {header.get('dtype')!r}", field="dtype")
        n = header.get("n_params")
        payload = fh.read()
    if not isinstance(n, int) or n <= 0:
        raise FileFormatError(f"{path}: n_params must be a positive int", field="n_params")
    if len(payload) != 4 * n:
        raise FileFormatError(f"{path}: payload is {len(payload)} bytes, expected {4 * n}",
                              field="payload")
    theta = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return PolicyParams(theta=theta, descriptor=header["descriptor"])
