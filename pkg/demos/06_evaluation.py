"""Evaluation harness: protocols, negative-case rule, mini ablation table.

Run:  python demos/06_evaluation.py   (a few minutes)
"""

from seedgrow.env import EnvConfig
from seedgrow.metrics import (
    AblationVariant,
    ablation_sweep,
    eval_suite,
    paired_t,
    prompt_variability,
)
from seedgrow.phantom import PhantomSpec, generate
from seedgrow.ppo import AgentTrainConfig, PpoConfig, train_agent
from seedgrow.region_grow import GrowConfig
from seedgrow.surrogate import SurrogateTrainConfig, entropy_of, train

samples = [generate(PhantomSpec(rng_seed=500 + k)) for k in range(12)]
negatives = [generate(PhantomSpec(lesion_count=0, rng_seed=800 + k)) for k in range(6)]
surrogate = train([(s.volume, s.truth) for s in samples],
                  SurrogateTrainConfig(rng_seed=0))
env_cfg = EnvConfig(beta=0.8, horizon=10, grow=GrowConfig.desk(max_iters=200))
policy = train_agent(samples, surrogate, env_cfg,
                     PpoConfig(lr=1e-3, batch_size=128), rng_seed=3,
                     train_cfg=AgentTrainConfig(updates=400, pool=6, action_grid=6))
entropies = {k: entropy_of(s.volume, surrogate) for k, s in enumerate(samples)}

print("== protocols ==")
for protocol in ("in-lesion", "perturbed"):
    rep = eval_suite(samples, policy, surrogate, env_cfg, protocol=protocol,
                     rng_seed=1, entropies=entropies)
    a = rep.aggregate()
    print(f"{protocol:10s}: dice {a['dice_mean']:.3f} +/- {a['dice_std']:.3f}, "
          f"FPR {a['fpr_mean']:.4f}, sensitivity {a['sensitivity_mean']:.3f}")

rep_neg = eval_suite(negatives, policy, surrogate, env_cfg,
                     protocol="gland-negative", rng_seed=1)
a = rep_neg.aggregate()
print(f"lesion-free scans classified negative: "
      f"{a['negatives_classified_negative']}/{a['negatives_total']}")

print("\n== prompt variability (std of dice across prompts) ==")
var = prompt_variability(samples[:6], policy, surrogate, env_cfg,
                         n_prompts_per_case=4, rng_seed=2, entropies=entropies)
print(f"mean per-case std: {var['mean_std']:.3f}")

print("\n== mini ablation table ==")
variants = [
    AblationVariant(name="full", policy=policy),
    AblationVariant(name="no-prompting", policy=policy, protocol="gland-centre"),
    AblationVariant(name="single-shot", policy=None),
]
reports = ablation_sweep(samples, variants, surrogate, env_cfg, rng_seed=1,
                         entropies=entropies)
dice_by_name = {}
for name, rep in reports.items():
    a = rep.aggregate()
    dice_by_name[name] = [r.dice for r in rep.rows]
    print(f"{name:13s}: dice {a['dice_mean']:.3f} +/- {a['dice_std']:.3f}")

t, p = paired_t(dice_by_name["full"], dice_by_name["no-prompting"])
print(f"paired t-test full vs no-prompting: t={t:.2f}, p={p:.4f}")
