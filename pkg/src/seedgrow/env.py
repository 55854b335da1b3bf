"""The sequential decision process around region growing.

A state is (volume, current mask); an action is a seed voxel; the
transition replaces the mask with the region grown from that seed; the
reward is the drop in Dice loss against the ground truth plus a
beta-weighted mean-entropy bonus over the new mask. Episodes end when the
mask stabilises or the horizon is reached.

The entropy field is computed once per episode from the frozen surrogate
and cached, as is the admissibility field used by region growing.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, FileFormatError
from .grid import EntropyField, Mask, Volume, VoxelIndex, as_voxel, dice_loss, mask_l1_diff
from .region_grow import GrowConfig, admissible_field, grow


@dataclass(frozen=True)
class EnvConfig:
    """Episode parameters. beta weighs exploration; horizon caps steps."""

    beta: float = 0.8
    horizon: int = 10
    grow: GrowConfig = field(default_factory=GrowConfig.desk)

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta >= 0):
            raise DataError(f"beta must be finite and >= 0, got {self.beta}")
        if self.horizon < 1:
            raise DataError("horizon must be >= 1")


@dataclass(frozen=True, eq=False)
class EnvState:
    volume: Volume
    mask: Mask
    step_index: int


@dataclass(frozen=True, eq=False)
class Transition:
    state: EnvState
    action: VoxelIndex
    reward: float
    next_state: EnvState
    done: bool


def reward_of(y_t: Mask, y_next: Mask, truth: Mask, entropy, beta: float) -> float:
    """Dice improvement plus beta * mean entropy over the new mask.

    The expectation over an empty mask is defined as 0: a degenerate
    action earns no exploration bonus.
    """
    ent = entropy.data if isinstance(entropy, EntropyField) else np.asarray(entropy)
    dice_term = dice_loss(y_t, truth) - dice_loss(y_next, truth)
    on = y_next.bool()
    bonus = float(ent[on].mean()) if on.any() else 0.0
    return dice_term + beta * bonus


class SegmentEnv:
    """One episode context: a volume, its cached entropy, and the truth.

    Training needs `truth`; at inference the policy is frozen and no
    reward is computed, so truth may be omitted (step() then reports
    reward 0).
    """

    def __init__(self, volume: Volume, entropy, cfg: EnvConfig,
                 truth: Mask | None = None):
        ent = entropy.data if isinstance(entropy, EntropyField) else np.asarray(entropy)
        if ent.shape != volume.dims:
            raise DataError(f"entropy dims {ent.shape} != volume dims {volume.dims}")
        if truth is not None and truth.dims != volume.dims:
            raise DataError(f"truth dims {truth.dims} != volume dims {volume.dims}")
        self.volume = volume
        self.entropy = ent
        self.truth = truth
        self._truth_sum = float(truth.data.sum()) if truth is not None else 0.0
        self.cfg = cfg
        # static gates: precompute once per episode context
        self.admissible = admissible_field(volume, ent, cfg.grow)
        self._grow_cache: dict = {}

    def grow_from(self, seed) -> Mask:
        """Region growing with per-context memoisation (the result depends
        only on the static fields and the seed)."""
        return self._grow_stats(seed)[0]

    def grow_details(self, seed) -> tuple:
        """(mask, iterations_run, converged) for UI-facing summaries."""
        stats = self._grow_stats(seed)
        return stats[0], stats[4], stats[5]

    def _grow_stats(self, seed) -> tuple:
        """(mask, count, truth overlap, mean entropy, iterations, converged)."""
        seed = as_voxel(seed)
        hit = self._grow_cache.get(seed)
        if hit is None:
            res = grow(self.volume, self.entropy, seed, self.cfg.grow,
                       admissible=self.admissible)
            mask = res.mask
            on = mask.bool()
            count = float(on.sum())
            inter = float(self.truth.data[on].sum()) if self.truth is not None else 0.0
            ent_mean = float(self.entropy[on].mean()) if count else 0.0
            hit = (mask, count, inter, ent_mean, res.iterations_run, res.converged)
            self._grow_cache[seed] = hit
        return hit

    def _loss_vs_truth(self, count: float, inter: float, eps: float = 1e-6) -> float:
        # same arithmetic as grid.dice_loss on the cached sums
        return 1.0 - (2.0 * inter + eps) / (count + self._truth_sum + eps)

    def reset(self, initial_seed) -> EnvState:
        seed = self.volume.check_inside(initial_seed)
        y0 = self.grow_from(seed)
        return EnvState(volume=self.volume, mask=y0, step_index=0)

    def step(self, state: EnvState, action) -> Transition:
        if state.step_index >= self.cfg.horizon:
            raise DataError(f"stepping a terminal state (t={state.step_index})")
        action = self.volume.check_inside(action)
        y_next, count, inter, ent_mean, _, _ = self._grow_stats(action)
        if self.truth is not None:
            prev = state.mask.bool()
            prev_count = float(prev.sum())
            prev_inter = float(self.truth.data[prev].sum())
            reward = (self._loss_vs_truth(prev_count, prev_inter)
                      - self._loss_vs_truth(count, inter)
                      + self.cfg.beta * (ent_mean if count else 0.0))
        else:
            reward = 0.0
        t_next = state.step_index + 1
        done = (mask_l1_diff(y_next, state.mask) == 0) or (t_next == self.cfg.horizon)
        nxt = EnvState(volume=self.volume, mask=y_next, step_index=t_next)
        return Transition(state=state, action=action, reward=reward,
                          next_state=nxt, done=done)


def rollout(env: SegmentEnv, policy, initial_seed, rng) -> list:
    """Sample one episode with the given policy; at most horizon steps."""
    state = env.reset(initial_seed)
    transitions: list[Transition] = []
    while True:
        action = policy.act(state, rng=rng, mode="sample")[0]
        tr = env.step(state, action)
        transitions.append(tr)
        if tr.done:
            return transitions
        state = tr.next_state


def discounted_return(transitions: list, gamma: float) -> float:
    return float(sum(tr.reward * gamma ** i for i, tr in enumerate(transitions)))


# ---------------------------------------------------------------------------
# Episode log (.epl): JSON header line, then per-transition packed records
# ---------------------------------------------------------------------------
# Record layout (little endian): t u16 | action a,b,c u16 x3 | reward f64 |
# done u8 | mask_t bits | mask_next bits. Masks are packed with np.packbits
# over the flattened (H,W,D) grid.

_EPL_MAGIC = "EPL1"


def _mask_nbytes(dims) -> int:
    n = dims[0] * dims[1] * dims[2]
    return (n + 7) // 8


def write_episode(transitions: list, path, volume_ref: str = "") -> None:
    if not transitions:
        raise DataError("cannot write an empty episode")
    dims = transitions[0].state.volume.dims
    header = {
        "magic": _EPL_MAGIC,
        "dims": list(dims),
        "count": len(transitions),
        "volume_ref": volume_ref,
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, separators=(",", ":")) + "\n").encode("utf-8"))
        for tr in transitions:
            fh.write(struct.pack("<HHHH", tr.state.step_index, *tr.action))
            fh.write(struct.pack("<d?", tr.reward, tr.done))
            fh.write(np.packbits(tr.state.mask.data.reshape(-1)).tobytes())
            fh.write(np.packbits(tr.next_state.mask.data.reshape(-1)).tobytes())


def read_episode(path, volume: Volume) -> list:
    """Rehydrate transitions against the volume they were logged for."""
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FileFormatError(f"{path}: header is not a JSON line: {exc}", field="header")
        if header.get("magic") != _EPL_MAGIC:
            raise FileFormatError(f"{path}: bad magic {header.get('magic')!r}", field="magic")
        dims = tuple(header.get("dims", ()))
        if dims != volume.dims:
            raise FileFormatError(
                f"{path}: episode dims {dims} do not match volume dims {volume.dims}",
                field="dims")
        nbytes = _mask_nbytes(dims)
        nvox = dims[0] * dims[1] * dims[2]
        out = []
        for _ in range(header.get("count", 0)):
            head = fh.read(8 + 9)
            if len(head) != 17:
                raise FileFormatError(f"{path}: truncated transition record", field="payload")
            t, a, b, c = struct.unpack("<HHHH", head[:8])
            reward, done = struct.unpack("<d?", head[8:])
            m0 = np.unpackbits(np.frombuffer(fh.read(nbytes), dtype=np.uint8))[:nvox]
            m1 = np.unpackbits(np.frombuffer(fh.read(nbytes), dtype=np.uint8))[:nvox]
            out.append(Transition(
                state=EnvState(volume=volume, mask=Mask(m0.reshape(dims)), step_index=t),
                action=VoxelIndex(a, b, c),
                reward=reward,
                next_state=EnvState(volume=volume, mask=Mask(m1.reshape(dims)),
                                    step_index=t + 1),
                done=bool(done)))
    return out
