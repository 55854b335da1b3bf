"""Prompt-to-segmentation inference shared by the CLI and the service.

From the user's point prompt, region growing produces the first mask;
the frozen policy then greedily relocates the seed, each new growth
REPLACING the mask, until the mask stabilises or the step budget runs
out. Both front ends drive this engine, so their results are identical
by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .env import EnvConfig, EnvState, SegmentEnv
from .errors import DataError
from .grid import Mask, Volume, VoxelIndex, as_voxel, mask_l1_diff
from .ppo import PolicyParams, act


@dataclass(frozen=True, eq=False)
class StepRecord:
    seed: VoxelIndex
    added: int
    removed: int
    mask_voxels: int
    stabilised: bool


@dataclass(frozen=True, eq=False)
class InferenceResult:
    mask: Mask
    prompt: VoxelIndex
    steps: list
    converged: bool

    @property
    def steps_run(self) -> int:
        return len(self.steps)


class InferenceEngine:
    """Stateful stepping for one volume/prompt; supports incremental use."""

    def __init__(self, volume: Volume, entropy, policy: PolicyParams | None,
                 env_cfg: EnvConfig):
        self.env = SegmentEnv(volume, entropy, env_cfg)
        self.policy = policy
        self.horizon = env_cfg.horizon
        self.prompt: VoxelIndex | None = None
        self.mask: Mask | None = None
        self.steps: list[StepRecord] = []
        self.stabilised = False

    def start(self, prompt) -> Mask:
        prompt = self.env.volume.check_inside(prompt)
        self.prompt = prompt
        self.mask = self.env.grow_from(prompt)
        self.steps = []
        self.stabilised = False
        return self.mask

    @property
    def done(self) -> bool:
        return self.stabilised or len(self.steps) >= self.horizon

    def step(self) -> StepRecord:
        """One greedy policy step with mask replacement."""
        if self.mask is None:
            raise DataError("step() before start(prompt)")
        if self.policy is None:
            raise DataError("no policy loaded; refinement unavailable")
        if self.done:
            raise DataError("inference already finished")
        state = EnvState(volume=self.env.volume, mask=self.mask,
                         step_index=len(self.steps))
        action, _, _ = act(state, self.policy, mode="greedy")
        y_next = self.env.grow_from(action)
        prev = self.mask.bool()
        new = y_next.bool()
        added = int((new & ~prev).sum())
        removed = int((prev & ~new).sum())
        self.stabilised = mask_l1_diff(y_next, self.mask) == 0
        self.mask = y_next
        rec = StepRecord(seed=as_voxel(action), added=added, removed=removed,
                         mask_voxels=y_next.count(), stabilised=self.stabilised)
        self.steps.append(rec)
        return rec

    def run_auto(self) -> InferenceResult:
        while not self.done:
            self.step()
        return self.result()

    def result(self) -> InferenceResult:
        if self.mask is None or self.prompt is None:
            raise DataError("result() before start(prompt)")
        return InferenceResult(mask=self.mask, prompt=self.prompt,
                               steps=list(self.steps), converged=self.stabilised)


def run_inference(volume: Volume, entropy, prompt, policy: PolicyParams | None,
                  env_cfg: EnvConfig) -> InferenceResult:
    """Full prompt-to-final-mask pass (policy=None means single-shot grow)."""
    engine = InferenceEngine(volume, entropy, policy, env_cfg)
    engine.start(prompt)
    if policy is None:
        return engine.result()
    return engine.run_auto()
