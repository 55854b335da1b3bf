"""Seed-placement agent: train briefly, then watch it rescue a bad prompt.

Run:  python demos/05_rl_refinement.py   (a couple of minutes)
"""

import numpy as np

from seedgrow.env import EnvConfig
from seedgrow.grid import dice_loss
from seedgrow.infer import InferenceEngine
from seedgrow.phantom import PhantomSpec, generate, sample_perturbed_seed
from seedgrow.ppo import AgentTrainConfig, PpoConfig, train_agent
from seedgrow.region_grow import GrowConfig
from seedgrow.surrogate import SurrogateTrainConfig, entropy_of, train

samples = [generate(PhantomSpec(rng_seed=500 + k)) for k in range(12)]
surrogate = train([(s.volume, s.truth) for s in samples],
                  SurrogateTrainConfig(rng_seed=0))
print(f"surrogate ready (loss {surrogate.metadata['final_loss']:.3f})")

env_cfg = EnvConfig(beta=0.8, horizon=10, grow=GrowConfig.desk(max_iters=200))
policy = train_agent(samples, surrogate, env_cfg,
                     PpoConfig(lr=1e-3, batch_size=128),
                     rng_seed=3,
                     train_cfg=AgentTrainConfig(updates=400, pool=6, action_grid=6))
print("policy trained: 400 clipped-surrogate updates")

probe = samples[3]
ent = entropy_of(probe.volume, surrogate)
bad_prompt = sample_perturbed_seed(probe, 4, rng_seed=1)  # outside the lesion

engine = InferenceEngine(probe.volume, ent, policy, env_cfg)
engine.start(tuple(bad_prompt))
print(f"\nprompt {tuple(bad_prompt)} lies outside the lesion")
print(f"  initial grow: {engine.mask.count()} voxels, "
      f"dice {1 - dice_loss(engine.mask, probe.truth):.3f}")
while not engine.done:
    rec = engine.step()
    print(f"  step {len(engine.steps)}: seed {tuple(rec.seed)} "
          f"+{rec.added}/-{rec.removed} -> {rec.mask_voxels} voxels "
          f"dice {1 - dice_loss(engine.mask, probe.truth):.3f}"
          + ("  [stabilised]" if rec.stabilised else ""))
result = engine.result()
print(f"final: {result.mask.count()} voxels, converged={result.converged}, "
      f"dice {1 - dice_loss(result.mask, probe.truth):.3f}")
print("each step REPLACES the mask with a fresh growth from the new seed")
