"""Single executable for the full workflow: phantom generation, surrogate
and agent training, region growing, inference, evaluation, ablations, and
the HTTP service.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
Errors print one machine-parsable line to stderr:
    error code=<code> message="..."
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import phantom as ph
from .config import RunConfig, config_to_dict, dump_config, load_config
from .env import EnvConfig
from .errors import ConfigError, DataError, NumericError, SeedgrowError
from .grid import Mask, as_voxel, read_mask, read_volume, write_mask, write_volume
from .infer import run_inference
from .metrics import (
    AblationVariant,
    ablation_sweep,
    classify_negative,
    dice_score,
    eval_suite,
    write_report_bundle,
)
from .ppo import load_policy, save_policy, train_agent
from .region_grow import grow
from .rng import substream
from .surrogate import entropy_of, load_params, save_params, train

MANIFEST = "manifest.json"


# ---------------------------------------------------------------------------
# Dataset files
# ---------------------------------------------------------------------------

def write_dataset(out_dir: Path, cfg: RunConfig) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    total = cfg.phantom.count + cfg.phantom.negative_count
    for k in range(total):
        lesion_count = 0 if k >= cfg.phantom.count else None
        spec = cfg.phantom.spec(rng_seed=cfg.rng_seed * 1_000_003 + k,
                                lesion_count=lesion_count)
        sample = ph.generate(spec)
        stem = f"sample_{k:04d}"
        write_volume(sample.volume, out_dir / f"{stem}.svf")
        write_mask(sample.truth, out_dir / f"{stem}.truth.svm")
        write_mask(sample.gland, out_dir / f"{stem}.gland.svm")
        entries.append({
            "id": k,
            "volume": f"{stem}.svf",
            "truth": f"{stem}.truth.svm",
            "gland": f"{stem}.gland.svm",
            "lesion_centres": [list(c) for c in sample.lesion_centres],
            "spec": {
                "dims": list(spec.dims), "channels": spec.channels,
                "lesion_count": spec.lesion_count,
                "lesion_radius_range": list(spec.lesion_radius_range),
                "lesion_contrast": spec.lesion_contrast,
                "heterogeneity": spec.heterogeneity,
                "noise_std": spec.noise_std, "rng_seed": spec.rng_seed,
            },
        })
    manifest = {"format": "seedgrow-dataset-v1", "rng_seed": cfg.rng_seed,
                "samples": entries}
    with open(out_dir / MANIFEST, "w") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest


def load_dataset(data_dir: Path) -> list:
    path = data_dir / MANIFEST
    if not path.exists():
        raise DataError(f"{path} not found; run `seedgrow generate` first")
    with open(path) as fh:
        manifest = json.load(fh)
    samples = []
    for entry in manifest.get("samples", []):
        samples.append(ph.PhantomSample(
            volume=read_volume(data_dir / entry["volume"]),
            truth=read_mask(data_dir / entry["truth"]),
            gland=read_mask(data_dir / entry["gland"]),
            lesion_centres=[as_voxel(c) for c in entry.get("lesion_centres", [])],
        ))
    return samples


def _positive(samples):
    return [s for s in samples if s.truth.count() > 0]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.seed is not None:
        cfg.rng_seed = args.seed
    manifest = write_dataset(Path(args.out), cfg)
    print(json.dumps({"samples": len(manifest["samples"]), "out": args.out}))
    return 0


def cmd_train_surrogate(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.seed is not None:
        cfg.rng_seed = args.seed
    samples = _positive(load_dataset(Path(args.data)))
    params = train([(s.volume, s.truth) for s in samples],
                   cfg.surrogate.train_config(cfg.rng_seed))
    save_params(params, args.out)
    print(json.dumps({"out": args.out,
                      "final_loss": params.metadata["final_loss"],
                      "epochs": params.metadata["epochs_run"]}))
    return 0


def cmd_train_agent(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.seed is not None:
        cfg.rng_seed = args.seed
    if args.beta is not None:
        cfg.env.beta = args.beta
    if args.updates is not None:
        cfg.ppo.updates = args.updates
    samples = _positive(load_dataset(Path(args.data)))
    surrogate = load_params(args.surrogate)
    out = Path(args.out)
    log_path = args.log or str(out.with_suffix(".train_log.jsonl"))
    policy = train_agent(
        samples, surrogate,
        cfg.env.env_config(cfg.grow),
        cfg.ppo.ppo_config(),
        rng_seed=cfg.rng_seed,
        train_cfg=cfg.ppo.agent_config(
            log_path=log_path,
            checkpoint_dir=args.checkpoint_dir),
    )
    save_policy(policy, out)
    print(json.dumps({"out": str(out), "train_log": log_path,
                      "updates": cfg.ppo.updates}))
    return 0


def cmd_grow(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.tau_sigma is not None:
        cfg.grow.tau_sigma = args.tau_sigma
    if args.tau_e is not None:
        cfg.grow.tau_e = args.tau_e
    if args.radius is not None:
        cfg.grow.radius = [args.radius] * 3
    if args.max_iters is not None:
        cfg.grow.max_iters = args.max_iters
    volume = read_volume(args.volume)
    if args.entropy:
        ent = read_volume(args.entropy).data[0].astype(float)
    elif args.surrogate:
        ent = entropy_of(volume, load_params(args.surrogate)).data
    else:
        raise ConfigError("grow needs --entropy or --surrogate")
    seed = _parse_voxel(args.seed)
    res = grow(volume, ent, seed, cfg.grow.grow_config())
    write_mask(res.mask, args.out)
    print(json.dumps({"out": args.out, "voxels": res.mask.count(),
                      "iterations": res.iterations_run,
                      "converged": res.converged}))
    return 0


def cmd_infer(args) -> int:
    cfg = load_config(args.config, args.set)
    prompt = _parse_voxel(args.prompt)
    volume = read_volume(args.volume)
    surrogate = load_params(args.surrogate)
    policy = load_policy(args.policy) if args.policy else None
    ent = entropy_of(volume, surrogate)
    env_cfg = cfg.env.env_config(cfg.grow)

    from .infer import InferenceEngine

    engine = InferenceEngine(volume, ent, policy, env_cfg)
    engine.start(prompt)
    trace_dir = Path(args.trace_dir) if args.trace_dir else None
    if trace_dir:
        trace_dir.mkdir(parents=True, exist_ok=True)
        write_mask(engine.mask, trace_dir / "mask_000.svm")
    step_no = 0
    while policy is not None and not engine.done:
        engine.step()
        step_no += 1
        if trace_dir:
            write_mask(engine.mask, trace_dir / f"mask_{step_no:03d}.svm")
    result = engine.result()
    write_mask(result.mask, args.out)
    summary = {
        "out": args.out,
        "prompt": list(result.prompt),
        "steps_run": result.steps_run,
        "converged": result.converged,
        "mask_voxels": result.mask.count(),
        "classification": ("negative" if classify_negative(result.mask, env_cfg.grow)
                           else "positive"),
    }
    if args.truth:
        summary["dice"] = dice_score(result.mask, read_mask(args.truth))
    if trace_dir:
        with open(trace_dir / "trace.json", "w") as fh:
            json.dump([vars(s) for s in result.steps], fh, indent=1, default=list)
        summary["trace_dir"] = str(trace_dir)
    print(json.dumps(summary))
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.seed is not None:
        cfg.rng_seed = args.seed
    if args.protocol:
        cfg.eval.protocol = args.protocol
    samples = load_dataset(Path(args.data))
    if cfg.eval.protocol != "gland-negative":
        samples = _positive(samples)
    surrogate = load_params(args.surrogate)
    policy = load_policy(args.policy) if args.policy else None
    env_cfg = cfg.env.env_config(cfg.grow)
    report = eval_suite(samples, policy, surrogate, env_cfg,
                        protocol=cfg.eval.protocol,
                        max_offset=cfg.eval.max_offset,
                        rng_seed=cfg.rng_seed, workers=args.threads)
    out_dir = Path(args.report_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report_bundle({cfg.eval.protocol: report},
                        out_dir / "report.json", out_dir / "report.md")
    print(json.dumps(report.aggregate()))
    return 0


def cmd_ablate(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.seed is not None:
        cfg.rng_seed = args.seed
    samples = _positive(load_dataset(Path(args.data)))
    surrogate = load_params(args.surrogate)
    env_cfg = cfg.env.env_config(cfg.grow)
    out_dir = Path(args.report_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def policy_for(beta: float, explicit: str | None):
        if explicit:
            return load_policy(explicit)
        e_cfg = EnvConfig(beta=beta, horizon=cfg.env.horizon,
                          grow=cfg.grow.grow_config())
        pol = train_agent(samples, surrogate, e_cfg, cfg.ppo.ppo_config(),
                          rng_seed=cfg.rng_seed,
                          train_cfg=cfg.ppo.agent_config(
                              log_path=str(out_dir / f"train_beta{beta}.jsonl")))
        save_policy(pol, out_dir / f"policy_beta{beta}.ppm")
        return pol

    full = policy_for(cfg.env.beta, args.policy_full)
    no_entropy = policy_for(0.0, args.policy_no_entropy)
    variants = [
        AblationVariant(name="full", policy=full),
        AblationVariant(name="no-entropy-reward", policy=no_entropy),
        AblationVariant(name="no-prompting", policy=full, protocol="gland-centre"),
        AblationVariant(name="single-shot", policy=None),
    ]
    if args.single_channel:
        from .grid import Volume

        mono = [ph.PhantomSample(
                    volume=Volume(s.volume.data[:1], spacing_mm=s.volume.spacing_mm),
                    truth=s.truth, gland=s.gland,
                    lesion_centres=s.lesion_centres)
                for s in samples]
        mono_surr = train([(s.volume, s.truth) for s in mono],
                          cfg.surrogate.train_config(cfg.rng_seed))
        save_params(mono_surr, out_dir / "surrogate_mono.spm")
        e_cfg = EnvConfig(beta=cfg.env.beta, horizon=cfg.env.horizon,
                          grow=cfg.grow.grow_config())
        mono_pol = train_agent(mono, mono_surr, e_cfg, cfg.ppo.ppo_config(),
                               rng_seed=cfg.rng_seed,
                               train_cfg=cfg.ppo.agent_config(
                                   log_path=str(out_dir / "train_mono.jsonl")))
        save_policy(mono_pol, out_dir / "policy_mono.ppm")
        variants.append(AblationVariant(name="no-multi-parametric", policy=mono_pol,
                                        single_channel=True, surrogate=mono_surr))
    for beta_spec in args.beta or []:
        beta_str, _, path = beta_spec.partition("=")
        beta = float(beta_str)
        pol = policy_for(beta, path or None)
        variants.append(AblationVariant(name=f"beta={beta}", policy=pol))
    reports = ablation_sweep(samples, variants, surrogate, env_cfg,
                             rng_seed=cfg.rng_seed)
    write_report_bundle(reports, out_dir / "report.json", out_dir / "report.md")
    print(json.dumps({name: rep.aggregate().get("dice_mean")
                      for name, rep in reports.items()}))
    return 0


def cmd_serve(args) -> int:
    from .service import ServiceState, serve

    cfg = load_config(args.config, args.set)
    state = ServiceState(env_cfg=cfg.env.env_config(cfg.grow))
    if args.surrogate:
        state.add_surrogate("default", load_params(args.surrogate))
    if args.policy:
        state.add_policy("default", load_policy(args.policy))
    for vol_path in args.volume or []:
        vid = state.add_volume(read_volume(vol_path), source=vol_path)
        print(json.dumps({"volume_loaded": vol_path, "volume_id": vid}))
    serve(state, host=args.host, port=args.port,
          static_dir=args.static_dir)
    return 0


def cmd_print_config(args) -> int:
    cfg = load_config(args.config, args.set)
    print(dump_config(cfg))
    return 0


def _parse_voxel(text: str):
    try:
        a, b, c = (int(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"voxel {text!r} must look like a,b,c")
    return (a, b, c)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seedgrow",
        description="Entropy-gated region growing with RL-driven prompt refinement.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("-c", "--config", help="JSON config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key, e.g. env.beta=0.4")
        p.add_argument("--seed", type=int, help="override rng_seed")
        p.add_argument("--threads", type=int, default=1,
                       help="max parallel workers where supported")

    p = sub.add_parser("generate", help="generate a phantom dataset")
    common(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-surrogate", help="fit the probability model")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-agent", help="train the seed-placement policy")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--surrogate", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beta", type=float)
    p.add_argument("--updates", type=int)
    p.add_argument("--log")
    p.add_argument("--checkpoint-dir")

    p = sub.add_parser("grow", help="single region growing pass")
    common(p)
    p.add_argument("--volume", required=True)
    p.add_argument("--entropy", help="entropy field as single-channel .svf")
    p.add_argument("--surrogate", help="surrogate params to derive entropy")
    p.add_argument("--seed-voxel", dest="seed", required=True, metavar="A,B,C")
    p.add_argument("--tau-sigma", type=float)
    p.add_argument("--tau-e", type=float)
    p.add_argument("--radius", type=int)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("infer", help="prompt-to-segmentation inference")
    common(p)
    p.add_argument("--volume", required=True)
    p.add_argument("--prompt", required=True, metavar="A,B,C")
    p.add_argument("--policy")
    p.add_argument("--surrogate", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", help="report Dice against this mask")
    p.add_argument("--trace-dir", help="write per-step masks here")

    p = sub.add_parser("eval", help="evaluate a policy over a dataset")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--surrogate", required=True)
    p.add_argument("--policy")
    p.add_argument("--protocol",
                   choices=["in-lesion", "perturbed", "gland-negative"])
    p.add_argument("--report-dir", required=True)

    p = sub.add_parser("ablate", help="run the ablation table")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--surrogate", required=True)
    p.add_argument("--report-dir", required=True)
    p.add_argument("--policy-full", help="pretrained full-method policy")
    p.add_argument("--policy-no-entropy", help="pretrained beta=0 policy")
    p.add_argument("--beta", action="append", metavar="B[=POLICY]",
                   help="extra beta row, optionally with a pretrained policy")
    p.add_argument("--single-channel", action="store_true",
                   help="add the no-multi-parametric row (trains a channel-0 "
                        "surrogate and policy)")

    p = sub.add_parser("serve", help="run the HTTP service")
    common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8571)
    p.add_argument("--surrogate")
    p.add_argument("--policy")
    p.add_argument("--volume", action="append",
                   help="preload a volume (repeatable)")
    p.add_argument("--static-dir", help="serve UI assets from this directory")

    p = sub.add_parser("print-config", help="print the effective config")
    common(p)

    return parser


_COMMANDS = {
    "generate": cmd_generate,
    "train-surrogate": cmd_train_surrogate,
    "train-agent": cmd_train_agent,
    "grow": cmd_grow,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "serve": cmd_serve,
    "print-config": cmd_print_config,
}

_EXIT_CODES = {ConfigError: 2, DataError: 3, NumericError: 4}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except SeedgrowError as exc:
        code = 3
        for klass, value in _EXIT_CODES.items():
            if isinstance(exc, klass):
                code = value
                break
        message = str(exc).replace('"', "'")
        print(f'error code={exc.code} message="{message}"', file=sys.stderr)
        return code
    except OSError as exc:
        message = str(exc).replace('"', "'")
        print(f'error code=io message="{message}"', file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
