"""Evaluation harness: segmentation metrics, negative-case classification,
prompt protocols, robustness and ablation sweeps, and report emission.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as scipy_stats

from .env import EnvConfig
from .errors import DataError
from .grid import Mask, dice_loss
from .infer import run_inference
from .phantom import (
    PhantomSample,
    sample_perturbed_seed,
    sample_seed_in_gland,
    sample_seed_in_lesion,
)
from .region_grow import GrowConfig
from .surrogate import entropy_of


def dice_score(pred: Mask, truth: Mask) -> float:
    """Overlap score, the complement of dice_loss."""
    return 1.0 - dice_loss(pred, truth)


def fpr_sensitivity(pred: Mask, truth: Mask) -> tuple:
    """Voxel-wise (false positive rate, sensitivity).

    Sensitivity is undefined for empty truth and returned as None; such
    cases are excluded from sensitivity aggregation.
    """
    p = pred.bool()
    t = truth.bool()
    if p.shape != t.shape:
        raise DataError(f"pred dims {p.shape} != truth dims {t.shape}")
    tp = int((p & t).sum())
    fp = int((p & ~t).sum())
    tn = int((~p & ~t).sum())
    fn = int((~p & t).sum())
    fpr = fp / (fp + tn) if (fp + tn) else 0.0
    sens = tp / (tp + fn) if (tp + fn) else None
    return fpr, sens


def classify_negative(final: Mask, cfg: GrowConfig, threshold: int | None = None) -> bool:
    """Negative iff the final mask does not exceed a minimum size.

    The default threshold is the region-growing neighbourhood window
    volume prod(2*r_i + 1), with "<= threshold" counting as negative.
    """
    limit = cfg.window_voxels() if threshold is None else int(threshold)
    return final.count() <= limit


def paired_t(a, b) -> tuple:
    """Paired t-test (t statistic, p value) over per-case metric pairs."""
    res = scipy_stats.ttest_rel(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return float(res.statistic), float(res.pvalue)


# ---------------------------------------------------------------------------
# Report structures
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class CaseRow:
    case: int
    prompt: tuple
    protocol: str
    dice: float | None
    fpr: float
    sensitivity: float | None
    mask_voxels: int
    steps_run: int
    converged: bool
    negative: bool
    truth_empty: bool


@dataclass(eq=False)
class EvalReport:
    protocol: str
    rows: list = field(default_factory=list)

    def dices(self) -> list:
        return [r.dice for r in self.rows if r.dice is not None]

    def aggregate(self) -> dict:
        dices = self.dices()
        senss = [r.sensitivity for r in self.rows if r.sensitivity is not None]
        fprs = [r.fpr for r in self.rows]
        neg_rows = [r for r in self.rows if r.truth_empty]
        pos_rows = [r for r in self.rows if not r.truth_empty]
        return {
            "protocol": self.protocol,
            "cases": len(self.rows),
            "dice_mean": float(np.mean(dices)) if dices else None,
            "dice_std": float(np.std(dices)) if dices else None,
            "fpr_mean": float(np.mean(fprs)) if fprs else None,
            "sensitivity_mean": float(np.mean(senss)) if senss else None,
            "negatives_total": len(neg_rows),
            "negatives_classified_negative": sum(r.negative for r in neg_rows),
            "positives_total": len(pos_rows),
            "positives_classified_positive": sum(not r.negative for r in pos_rows),
        }

    def to_json(self, path) -> None:
        doc = {"aggregate": self.aggregate(),
               "rows": [vars(r) for r in self.rows]}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)

    def to_markdown(self) -> str:
        agg = self.aggregate()
        lines = [f"## Protocol: {self.protocol}", ""]
        if agg["dice_mean"] is not None:
            lines.append(f"- Dice: {agg['dice_mean']:.3f} +/- {agg['dice_std']:.3f} "
                         f"over {agg['cases']} cases")
        if agg["sensitivity_mean"] is not None:
            lines.append(f"- FPR {agg['fpr_mean']:.4f}, sensitivity {agg['sensitivity_mean']:.3f}")
        if agg["negatives_total"]:
            lines.append(f"- negative cases classified negative: "
                         f"{agg['negatives_classified_negative']}/{agg['negatives_total']}")
        if agg["positives_total"]:
            lines.append(f"- positive cases classified positive: "
                         f"{agg['positives_classified_positive']}/{agg['positives_total']}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Protocol runners
# ---------------------------------------------------------------------------

def _pick_prompt(sample: PhantomSample, protocol: str, max_offset: int, rng_seed: int):
    if protocol == "in-lesion":
        return sample_seed_in_lesion(sample, rng_seed)
    if protocol == "perturbed":
        return sample_perturbed_seed(sample, max_offset, rng_seed)
    if protocol == "gland-negative":
        return sample_seed_in_gland(sample, rng_seed)
    raise DataError(f"unknown protocol {protocol!r}")


def _eval_one_case(k, sample, policy, surrogate, env_cfg, protocol,
                   max_offset, rng_seed, entropies) -> CaseRow:
    ent = (entropies or {}).get(k)
    if ent is None:
        ent = entropy_of(sample.volume, surrogate)
    prompt = _pick_prompt(sample, protocol, max_offset, rng_seed * 100_003 + k)
    res = run_inference(sample.volume, ent, tuple(prompt), policy, env_cfg)
    truth_empty = sample.truth.count() == 0
    fpr, sens = fpr_sensitivity(res.mask, sample.truth)
    return CaseRow(
        case=k,
        prompt=tuple(int(x) for x in prompt),
        protocol=protocol,
        dice=None if truth_empty else dice_score(res.mask, sample.truth),
        fpr=fpr,
        sensitivity=sens,
        mask_voxels=res.mask.count(),
        steps_run=res.steps_run,
        converged=res.converged,
        negative=classify_negative(res.mask, env_cfg.grow),
        truth_empty=truth_empty,
    )


def eval_suite(dataset: list, policy, surrogate, env_cfg: EnvConfig,
               protocol: str = "in-lesion", max_offset: int = 4,
               rng_seed: int = 0, entropies: dict | None = None,
               workers: int = 1) -> EvalReport:
    """Run full inference per case under a prompt protocol and aggregate.

    Deterministic given (dataset, params, rng_seed): cases are independent
    and rows stay ordered by case index whatever `workers` is. `entropies`
    lets callers reuse cached per-case entropy fields.
    """
    report = EvalReport(protocol=protocol)
    if workers and workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_eval_one_case, k, s, policy, surrogate,
                                   env_cfg, protocol, max_offset, rng_seed, entropies)
                       for k, s in enumerate(dataset)]
            report.rows = [f.result() for f in futures]
    else:
        report.rows = [_eval_one_case(k, s, policy, surrogate, env_cfg,
                                      protocol, max_offset, rng_seed, entropies)
                       for k, s in enumerate(dataset)]
    return report


def prompt_variability(dataset: list, policy, surrogate, env_cfg: EnvConfig,
                       n_prompts_per_case: int = 5, rng_seed: int = 0,
                       entropies: dict | None = None) -> dict:
    """Std of Dice across repeated in-lesion prompts, per case."""
    per_case = {}
    for k, sample in enumerate(dataset):
        if sample.truth.count() == 0:
            continue
        ent = (entropies or {}).get(k)
        if ent is None:
            ent = entropy_of(sample.volume, surrogate)
        dices = []
        for j in range(n_prompts_per_case):
            prompt = sample_seed_in_lesion(sample, rng_seed * 7919 + k * 101 + j)
            res = run_inference(sample.volume, ent, tuple(prompt), policy, env_cfg)
            dices.append(dice_score(res.mask, sample.truth))
        per_case[k] = float(np.std(dices))
    return {"per_case_std": per_case,
            "mean_std": float(np.mean(list(per_case.values()))) if per_case else None}


@dataclass(eq=False)
class AblationVariant:
    """One ablation row: which policy to run, how to prompt, what inputs.

    single_channel restricts inference to channel 0 (the
    no-multi-parametric row); it then needs its own single-channel
    surrogate (and usually policy) via the `surrogate` override.
    """

    name: str
    policy: object | None
    protocol: str = "in-lesion"
    env_cfg: EnvConfig | None = None
    single_channel: bool = False
    surrogate: object | None = None


def ablation_sweep(dataset: list, variants: list, surrogate, base_env: EnvConfig,
                   rng_seed: int = 0, entropies: dict | None = None) -> dict:
    """Evaluate each variant; 'no prompting' variants use the gland-centre
    heuristic seed instead of a user prompt."""
    from .grid import Volume

    out = {}
    for var in variants:
        env_cfg = var.env_cfg or base_env
        var_surrogate = var.surrogate or surrogate
        rep = EvalReport(protocol=var.name)
        for k, sample in enumerate(dataset):
            if var.single_channel:
                volume = Volume(sample.volume.data[:1],
                                spacing_mm=sample.volume.spacing_mm)
                ent = entropy_of(volume, var_surrogate)
            else:
                volume = sample.volume
                ent = (entropies or {}).get(k) if var.surrogate is None else None
                if ent is None:
                    ent = entropy_of(volume, var_surrogate)
            if var.protocol == "gland-centre":
                on = np.argwhere(sample.gland.data > 0)
                prompt = tuple(int(x) for x in np.round(on.mean(axis=0)))
            else:
                prompt = tuple(_pick_prompt(sample, var.protocol, 4,
                                            rng_seed * 100_003 + k))
            res = run_inference(volume, ent, prompt, var.policy, env_cfg)
            truth_empty = sample.truth.count() == 0
            fpr, sens = fpr_sensitivity(res.mask, sample.truth)
            rep.rows.append(CaseRow(
                case=k, prompt=prompt, protocol=var.name,
                dice=None if truth_empty else dice_score(res.mask, sample.truth),
                fpr=fpr, sensitivity=sens, mask_voxels=res.mask.count(),
                steps_run=res.steps_run, converged=res.converged,
                negative=classify_negative(res.mask, env_cfg.grow),
                truth_empty=truth_empty,
            ))
        out[var.name] = rep
    return out


def write_report_bundle(reports: dict, json_path, md_path) -> None:
    """Emit report.json (full rows) and report.md (aggregate tables)."""
    doc = {name: {"aggregate": rep.aggregate(), "rows": [vars(r) for r in rep.rows]}
           for name, rep in reports.items()}
    with open(json_path, "w") as fh:
        json.dump(doc, fh, indent=1)
    parts = ["# Evaluation report", ""]
    parts.append("| variant | cases | Dice (mean +/- std) | FPR | sensitivity |")
    parts.append("|---|---|---|---|---|")
    for name, rep in reports.items():
        a = rep.aggregate()
        dice = (f"{a['dice_mean']:.3f} +/- {a['dice_std']:.3f}"
                if a["dice_mean"] is not None else "-")
        fpr = f"{a['fpr_mean']:.4f}" if a["fpr_mean"] is not None else "-"
        sens = (f"{a['sensitivity_mean']:.3f}"
                if a["sensitivity_mean"] is not None else "-")
        parts.append(f"| {name} | {a['cases']} | {dice} | {fpr} | {sens} |")
    parts.append("")
    for rep in reports.values():
        parts.append(rep.to_markdown())
    with open(md_path, "w") as fh:
        fh.write("\n".join(parts))
