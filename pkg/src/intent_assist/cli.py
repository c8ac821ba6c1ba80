"""Command line entry point: intent-assist preprocess|train|rollout|eval|serve."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .errors import TrajectoryFormatError
from .experiments import (
    PERTURB_MASK,
    ExperimentConfig,
    ExpertStepPolicy,
    AssistStepPolicy,
    estimate_loss_decomposition,
    rollout_assisted,
    run_budget_ablation,
    run_cross_operator,
    run_noise_ablation,
    train_policy,
    write_episode_log,
    RolloutRecord,
)
from .keyframe import extract_keyframes
from .perturb import build_kernel, sample_perturbed, truncate_random
from .policy import load_checkpoint, save_checkpoint
from .seeding import derive_seed
from .simenv import PROFILES, TASKS, expert_rollout, operator_rollout
from .trajio import read_trajectories, write_trajectories


def _load_config(path: str | None, seed: int | None) -> ExperimentConfig:
    config = ExperimentConfig.from_json(path) if path else ExperimentConfig()
    if seed is not None:
        config = replace(config, seed=seed)
    return config


def _cmd_preprocess(args: argparse.Namespace) -> int:
    sources = read_trajectories(args.input)
    dataset = []
    summary_rows = []
    for idx, source in enumerate(sources):
        mask = PERTURB_MASK if source.dim == 3 else None
        bounds = None
        if source.task_id in TASKS and source.dim == 3:
            task = TASKS[source.task_id]
            bounds = ((task.bounds_lo[0], task.bounds_lo[1], 0.0), (task.bounds_hi[0], task.bounds_hi[1], 1.0))
        kernel = build_kernel(len(source), source.dim, args.sigma, mask=mask)
        source_id = source.meta.get("id", f"{source.task_id or 'traj'}:{idx}")
        for copy in range(args.samples):
            seed = derive_seed(args.seed, idx, copy)
            sample = sample_perturbed(source, kernel, seed, bounds=bounds, source_id=source_id)
            truncated = truncate_random(sample.trajectory, args.truncate_min_frac, derive_seed(seed, 1))
            ks = extract_keyframes(truncated, args.eta, mask=None)
            out = truncated.with_points(
                truncated.points,
                source_id=source_id,
                sigma=f"{args.sigma:g}",
                seed=str(seed),
                truncated_len=str(len(truncated)),
            )
            dataset.append(out)
            summary_rows.append(
                {
                    "source_id": source_id,
                    "copy": copy,
                    "n_points": len(truncated),
                    "keyframe_count": len(ks.indices),
                    "achieved_error": ks.achieved_error,
                    "eta": args.eta,
                    "sigma": args.sigma,
                }
            )
    write_trajectories(args.out, dataset)
    summary_path = args.summary or str(Path(args.out).with_suffix("")) + "_summary.csv"
    with open(summary_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(summary_rows[0].keys()))
        writer.writeheader()
        writer.writerows(summary_rows)
    print(f"wrote {len(dataset)} trajectories to {args.out}; summary in {summary_path}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    config = _load_config(args.config, args.seed)
    task = TASKS[args.task] if args.task else config.primary_task
    sigma = args.sigma if args.sigma is not None else config.sigma
    eta = args.eta if args.eta is not None else config.eta
    policy, result, info = train_policy(config, task, sigma=sigma, eta=eta)
    save_checkpoint(args.out, policy, config.train_config())
    print(
        f"trained on {info['n_pairs']} pairs ({task.task_id}, sigma={sigma:g}, eta={eta:g}); "
        f"loss {result.loss_history[0]:.4f} -> {result.loss_history[-1]:.4f}; checkpoint: {args.out}"
    )
    return 0


def _cmd_rollout(args: argparse.Namespace) -> int:
    config = _load_config(args.config, args.seed)
    task = TASKS[args.task]
    records = []
    demos = []
    policy = None
    if args.checkpoint:
        policy, _ = load_checkpoint(args.checkpoint)
    for r in range(args.n):
        layout_seed = derive_seed(config.seed, 91, r)
        if args.profile == "scripted":
            trace = expert_rollout(task, layout_seed)
            records.append(
                RolloutRecord(
                    task_id=task.task_id, seed=layout_seed, profile="scripted",
                    operator_steps=trace.n_steps, rollout_steps=0, success=trace.success,
                    keyframe_count=0, sigma=0.0, eta=args.eta,
                )
            )
            demos.append(trace.trajectory)
        elif policy is None:
            trace = operator_rollout(task, PROFILES[args.profile], layout_seed)
            records.append(
                RolloutRecord(
                    task_id=task.task_id, seed=layout_seed, profile=args.profile,
                    operator_steps=trace.n_steps, rollout_steps=0, success=trace.success,
                    keyframe_count=0, sigma=0.0, eta=args.eta,
                )
            )
            demos.append(trace.trajectory)
        else:
            outcome = rollout_assisted(policy, task, PROFILES[args.profile], layout_seed, eta=args.eta)
            records.append(outcome.record)
    if args.out:
        write_episode_log(args.out, records)
    if args.write_demos and demos:
        write_trajectories(args.write_demos, demos)
        print(f"wrote {len(demos)} demos to {args.write_demos}")
    rate = float(np.mean([rec.success for rec in records]))
    mode = "assisted" if policy is not None else "replay"
    print(f"{mode} {task.task_id} x{args.n} ({args.profile}): success rate {rate:.3f}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    config = _load_config(args.config, args.seed)
    out_dir = Path(args.out or config.out_dir or "results")
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.experiment == "shift":
        task = config.primary_task
        seeds = [derive_seed(config.seed, 92, i) for i in range(args.n)]
        expert = ExpertStepPolicy(task)
        rows = [{"policy": "expert", **estimate_loss_decomposition(expert, expert, task, args.n, seeds)}]
        if args.checkpoint:
            policy, _ = load_checkpoint(args.checkpoint)
            stepper = AssistStepPolicy(policy, task, eta=config.eta)
            rows.append({"policy": "checkpoint", **estimate_loss_decomposition(stepper, expert, task, args.n, seeds)})
        path = out_dir / "loss_decomposition.csv"
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
        for row in rows:
            print(row)
        print(f"wrote {path}")
        return 0
    runner = {
        "noise": run_noise_ablation,
        "budget": run_budget_ablation,
        "operators": run_cross_operator,
    }[args.experiment]
    table = runner(config)
    table.to_csv(out_dir / f"{table.label}.csv")
    write_episode_log(out_dir / f"{table.label}_episodes.jsonl", table.records)
    summary = table.summary()
    (out_dir / f"{table.label}_summary.txt").write_text(summary + "\n", encoding="utf-8")
    print(summary)
    print(f"wrote {out_dir}/{table.label}.csv")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .server import create_app

    app = create_app(
        checkpoint_path=args.checkpoint,
        task_id=args.task,
        eta=args.eta,
        default_seed=args.seed or 0,
        frontend_dir=args.frontend,
    )
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="intent-assist", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="perturb + truncate demos into a training dataset")
    p.add_argument("--input", required=True, help="clean demonstration file (trajectory JSONL)")
    p.add_argument("--out", required=True, help="output dataset file (trajectory JSONL)")
    p.add_argument("--summary", default=None, help="summary CSV path (default: <out>_summary.csv)")
    p.add_argument("--eta", type=float, default=0.04)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truncate-min-frac", type=float, default=0.6)
    p.add_argument("--samples", type=int, default=1, help="perturbed copies per source trajectory")
    p.set_defaults(func=_cmd_preprocess)

    t = sub.add_parser("train", help="train a policy and write a checkpoint")
    t.add_argument("--config", default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--task", default=None, choices=sorted(TASKS))
    t.add_argument("--sigma", type=float, default=None)
    t.add_argument("--eta", type=float, default=None)
    t.set_defaults(func=_cmd_train)

    r = sub.add_parser("rollout", help="run episodes; raw replay without --checkpoint")
    r.add_argument("--config", default=None)
    r.add_argument("--checkpoint", default=None)
    r.add_argument("--task", default="transfer", choices=sorted(TASKS))
    r.add_argument("--profile", default="novice", choices=[*sorted(PROFILES), "scripted"])
    r.add_argument("--n", type=int, default=20)
    r.add_argument("--eta", type=float, default=0.04)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", default=None, help="episode log path (JSONL)")
    r.add_argument("--write-demos", default=None, help="also dump demos as trajectory JSONL")
    r.set_defaults(func=_cmd_rollout)

    e = sub.add_parser("eval", help="run an experiment and write tables")
    e.add_argument("--experiment", required=True, choices=["noise", "budget", "operators", "shift"])
    e.add_argument("--config", default=None)
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--out", default=None, help="output directory")
    e.add_argument("--checkpoint", default=None, help="for shift: policy to diagnose")
    e.add_argument("--n", type=int, default=20, help="for shift: episodes")
    e.set_defaults(func=_cmd_eval)

    s = sub.add_parser("serve", help="serve the HTTP API for the teleop UI")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--task", default="transfer", choices=sorted(TASKS))
    s.add_argument("--eta", type=float, default=0.04)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8008)
    s.add_argument("--frontend", default=None, help="static UI directory to mount at /")
    s.set_defaults(func=_cmd_serve)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrajectoryFormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
