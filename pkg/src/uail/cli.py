"""Command-line entry point orchestrating every workflow.

One executable, subcommand per workflow, one JSON summary line on
standard output per run. Artifacts land in a fresh run directory named
by config digest plus timestamp, so any file traces back to its exact
settings. Configs load from a JSON file; repeated `--set key=value`
flags override file values and always win.

Exit codes: 0 success, 1 verification failure (replay mismatch),
2 config or usage error, 3 expert failure, 4 training divergence,
5 degenerate ROC (single-class labels).
"""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys
import time

import numpy as np

from . import rng
from .aggregation import (
    MIX_SEGMENT_TICKS,
    UailLoopDiverged,
    collect_bc,
    collect_mixing,
    collect_noise,
    collect_uail,
    run_uail_loop,
)
from .config import ConfigError, RunConfig, apply_overrides, load_config, save_config
from .data import Dataset, training_arrays
from .evaluation import (
    SIGNAL_NAMES,
    UndefinedRocError,
    compare_signals,
    label_with_buffer,
    roc,
    roc_table,
    run_benchmark,
    scenario_medians,
    scenario_table,
    signal_table,
    signal_traces,
)
from .expert import ExpertLostError, oracle_action
from .experiments import _fresh_policy, _train_hyper, _uail_kwargs, reference_tracks
from .jsonio import canonical_dumps
from .policy import TrainingDivergedError, load as load_policy, save as save_policy, train
from .replay import replay_dataset
from .teleop import TeleopSession, serve_session
from .track import generate_benchmark_suite, save_track

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_EXPERT = 3
EXIT_TRAINING = 4
EXIT_ROC = 5


def _parse_overrides(pairs: list[str]) -> dict:
    overrides = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw  # bare strings like activation=tanh
        overrides[key] = value
    return overrides


def _load_run_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    return apply_overrides(config, _parse_overrides(args.set))


def _make_run_dir(args, config: RunConfig) -> str:
    stamp = time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())
    path = os.path.join(args.out, f"{config.digest()}-{stamp}")
    os.makedirs(path, exist_ok=True)
    save_config(config, os.path.join(path, "config.json"))
    return path


def _emit(summary: dict) -> None:
    print(canonical_dumps(summary))


def _load_datasets(paths: list[str]) -> list[Dataset]:
    return [Dataset.load(p) for p in paths]


def _parse_eta(raw: str) -> float:
    if raw == "inf":
        return float("inf")
    try:
        return float(raw)
    except ValueError as e:
        raise ConfigError(f"--eta must be a number or 'inf', got {raw!r}") from e


# -- subcommands --


def cmd_gen_tracks(args, config: RunConfig, run_dir: str) -> dict:
    world = reference_tracks(config, config.seed)
    track_dir = os.path.join(run_dir, "tracks")
    os.makedirs(track_dir, exist_ok=True)
    names = {}
    for designation, tracks in world.items():
        names[designation] = []
        for track in tracks:
            save_track(track, os.path.join(track_dir, f"{track.name}.json"))
            names[designation].append(track.name)
    return {"command": "gen-tracks", "tracks": names, "dir": track_dir}


def cmd_train(args, config: RunConfig, run_dir: str) -> dict:
    x, y = training_arrays(_load_datasets(args.data))
    policy, curve = train(
        _fresh_policy(config, config.seed, "train"),
        x,
        y,
        seed=rng.derive_seed(config.seed, "train", "cli"),
        **_train_hyper(config),
    )
    path = os.path.join(run_dir, "policy.json")
    save_policy(policy, path)
    return {
        "command": "train",
        "frames": int(x.shape[0]),
        "epochs": len(curve),
        "final_loss": curve[-1],
        "policy": path,
    }


def cmd_collect(args, config: RunConfig, run_dir: str) -> dict:
    tracks = reference_tracks(config, config.seed)["seen"]
    seed = rng.derive_seed(config.seed, "collect", args.strategy)
    shared = {
        "cfg": config.vehicle,
        "max_episode_ticks": config.max_episode_ticks,
        "config_digest": config.digest(),
    }
    if args.strategy in ("mixing", "uail") and not args.policy:
        raise ConfigError(f"--policy is required for strategy {args.strategy!r}")
    if args.strategy == "bc":
        ds = collect_bc(tracks, config.budget_frames, seed, **shared)
    elif args.strategy == "mixing":
        ds = collect_mixing(
            load_policy(args.policy),
            tracks,
            config.budget_frames,
            config.mix_p,
            seed,
            segment_ticks=args.segment_ticks,
            **shared,
        )
    elif args.strategy == "noise":
        ds = collect_noise(
            tracks, config.budget_frames, config.noise_period, config.noise_bound, seed, **shared
        )
    else:
        eta = _parse_eta(args.eta) if args.eta is not None else config.eta
        ds = collect_uail(
            load_policy(args.policy),
            tracks,
            eta,
            config.window_size,
            config.n_samples,
            config.budget_frames,
            seed,
            sd_weight=config.sd_weight,
            alpha=config.alpha,
            steer_bins=config.steer_bins,
            throttle_bins=config.throttle_bins,
            **shared,
        )
    path = os.path.join(run_dir, f"dataset-{args.strategy}.jsonl")
    ds.save(path)
    return {
        "command": "collect",
        "strategy": args.strategy,
        "frames": ds.n_frames,
        "stats": ds.metadata["stats"],
        "dataset": path,
    }


def cmd_uail_loop(args, config: RunConfig, run_dir: str) -> dict:
    starter = _load_datasets(args.data)
    tracks = reference_tracks(config, config.seed)["seen"]
    policy, datasets, metrics = run_uail_loop(
        load_policy(args.policy),
        tracks,
        starter,
        config.loop_iterations,
        config.batch_frames,
        _train_hyper(config),
        rng.derive_seed(config.seed, "loop"),
        eta=config.eta,
        config_digest=config.digest(),
        **_uail_kwargs(config),
    )
    policy_path = os.path.join(run_dir, "policy.json")
    save_policy(policy, policy_path)
    collected = []
    for i, ds in enumerate(datasets[len(starter):]):
        path = os.path.join(run_dir, f"dataset-iter{i}.jsonl")
        ds.save(path)
        collected.append(path)
    return {
        "command": "uail-loop",
        "iterations": config.loop_iterations,
        "metrics": metrics,
        "policy": policy_path,
        "datasets": collected,
    }


def cmd_eval_roc(args, config: RunConfig, run_dir: str) -> dict:
    datasets = _load_datasets(args.data)
    traces = signal_traces(datasets, args.signal)
    curve = roc(label_with_buffer(traces, args.k))
    table_path = os.path.join(run_dir, "roc.txt")
    with open(table_path, "w") as fh:
        fh.write(roc_table(curve))
        fh.write("\n\n")
        fh.write(signal_table(compare_signals(datasets, tuple(config.buffers))))
        fh.write("\n")
    return {
        "command": "eval-roc",
        "signal": args.signal,
        "k": args.k,
        "auc": curve.auc,
        "points": len(curve.points),
        "table": table_path,
    }


def cmd_benchmark(args, config: RunConfig, run_dir: str) -> dict:
    suite = generate_benchmark_suite(
        rng.derive_seed(config.seed, "suite"),
        cases_per_type=config.cases_per_type,
        obstacle_density=config.obstacle_density,
    )
    policy = "oracle" if args.policy == "oracle" else load_policy(args.policy)
    report = _benchmark_jobs(
        policy, suite, config.bench_seeds, config, max(1, args.jobs)
    )
    path = os.path.join(run_dir, "benchmark.json")
    with open(path, "w") as fh:
        fh.write(canonical_dumps(report.to_dict()))
        fh.write("\n")
    return {
        "command": "benchmark",
        "success_rate": report.success_rate,
        "success_ci": report.success_ci,
        "infractions": report.infractions,
        "cases": len(suite),
        "report": path,
    }


def _bench_one_seed(payload):
    policy, suite, seed, vehicle, max_ticks = payload
    controller = (
        (lambda sim: oracle_action(sim)) if isinstance(policy, str) else policy
    )
    return run_benchmark(
        controller, suite, [seed], cfg=vehicle, max_ticks=max_ticks
    )


def _merge_seed_reports(reports):
    """Rebuild the aggregate exactly as a single sequential run would."""
    from .evaluation import BenchmarkReport, _mean_ci

    by_seed = [r.by_seed[0] for r in reports]
    per_type: dict[str, list[float]] = {}
    for seat in by_seed:
        cases = seat["cases"]
        for turn in sorted({c["turn_type"] for c in cases}):
            sub = [c["success"] for c in cases if c["turn_type"] == turn]
            per_type.setdefault(turn, []).append(sum(sub) / len(sub))
    success_rate, success_ci = _mean_ci([s["success_rate"] for s in by_seed])
    by_turn_type = {}
    for turn, rates in sorted(per_type.items()):
        mean, ci = _mean_ci(rates)
        by_turn_type[turn] = {"success_rate": mean, "ci": ci}
    total_meters = sum(s["meters"] for s in by_seed)
    infractions = sum(s["infractions"] for s in by_seed)
    return BenchmarkReport(
        suite=reports[0].suite,
        seeds=[s["seed"] for s in by_seed],
        success_rate=success_rate,
        success_ci=success_ci,
        total_meters=total_meters,
        infractions=infractions,
        meters_per_infraction=total_meters / infractions if infractions else None,
        by_turn_type=by_turn_type,
        by_seed=by_seed,
    )


def _benchmark_jobs(policy, suite, seeds, config: RunConfig, jobs: int):
    if jobs <= 1 or len(seeds) <= 1:
        controller = (
            (lambda sim: oracle_action(sim)) if isinstance(policy, str) else policy
        )
        return run_benchmark(
            controller, suite, seeds, cfg=config.vehicle, max_ticks=config.bench_max_ticks
        )
    # Deterministic seed splitting: one worker per seed, merged in seed
    # order no matter which finishes first.
    from concurrent.futures import ProcessPoolExecutor

    payloads = [
        (policy, suite, seed, config.vehicle, config.bench_max_ticks) for seed in seeds
    ]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        reports = list(pool.map(_bench_one_seed, payloads))
    return _merge_seed_reports(reports)


def cmd_scenario_table(args, config: RunConfig, run_dir: str) -> dict:
    conditions = {}
    for pair in args.data:
        name, sep, path = pair.partition("=")
        if not sep:
            raise ConfigError(f"scenario-table expects NAME=PATH, got {pair!r}")
        conditions[name] = Dataset.load(path)
    medians = scenario_medians(conditions, min_frames=args.min_frames)
    path = os.path.join(run_dir, "scenarios.txt")
    with open(path, "w") as fh:
        fh.write(scenario_table(medians))
        fh.write("\n")
    return {"command": "scenario-table", "conditions": medians, "table": path}


def cmd_serve(args, config: RunConfig, run_dir: str) -> dict:
    session = TeleopSession(
        load_policy(args.policy),
        reference_tracks(config, config.seed)["seen"],
        eta=config.eta,
        budget_frames=config.budget_frames,
        seed=rng.derive_seed(config.seed, "teleop"),
        window_size=config.window_size,
        n_samples=config.n_samples,
        sd_weight=config.sd_weight,
        alpha=config.alpha,
        steer_bins=config.steer_bins,
        throttle_bins=config.throttle_bins,
        cfg=config.vehicle,
        max_episode_ticks=config.max_episode_ticks,
        config_digest=config.digest(),
    )
    print(f"serving teleop on ws://{args.host}:{args.port}", file=sys.stderr)
    ds = asyncio.run(serve_session(session, host=args.host, port=args.port))
    path = os.path.join(run_dir, "dataset-teleop.jsonl")
    ds.save(path)
    return {
        "command": "serve",
        "frames": ds.n_frames,
        "pause_events": ds.metadata["pause_events"],
        "stats": ds.metadata["stats"],
        "dataset": path,
    }


def cmd_replay(args, config: RunConfig, run_dir: str) -> dict:
    report = replay_dataset(Dataset.load(args.data), load_policy(args.policy))
    return {"command": "replay", **report.to_dict()}


def cmd_export(args, config: RunConfig, run_dir: str) -> dict:
    datasets = _load_datasets(args.data)
    x, y = training_arrays(datasets)
    if args.format == "npz":
        path = os.path.join(run_dir, "export.npz")
        np.savez(path, x=x, y=y)
    else:
        path = os.path.join(run_dir, "export.csv")
        header = [f"x{i}" for i in range(x.shape[1])] + ["steer", "throttle"]
        np.savetxt(
            path,
            np.hstack([x, y]),
            delimiter=",",
            header=",".join(header),
            comments="",
        )
    return {
        "command": "export",
        "rows": int(x.shape[0]),
        "columns": int(x.shape[1] + y.shape[1]),
        "path": path,
    }


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; defaults apply when omitted")
    common.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (JSON value or bare string); repeatable",
    )
    common.add_argument("--out", default="runs", help="base directory for run artifacts")

    parser = argparse.ArgumentParser(
        prog="uail",
        description="Uncertainty-gated imitation learning workbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-tracks", parents=[common], help="generate the reference track set")

    p = sub.add_parser("train", parents=[common], help="train a policy on stored datasets")
    p.add_argument("--data", nargs="+", required=True, help="dataset files")

    p = sub.add_parser("collect", parents=[common], help="run one collection strategy")
    p.add_argument("--strategy", choices=["bc", "mixing", "noise", "uail"], required=True)
    p.add_argument("--policy", help="policy checkpoint (mixing and uail)")
    p.add_argument("--eta", help="takeover threshold; a number or 'inf'")
    p.add_argument(
        "--segment-ticks",
        type=int,
        default=MIX_SEGMENT_TICKS,
        help="mixing handover mean length; 0 flips a coin every frame",
    )

    p = sub.add_parser(
        "uail-loop", parents=[common], help="alternate training and gated collection"
    )
    p.add_argument("--policy", required=True, help="starter policy checkpoint")
    p.add_argument("--data", nargs="+", required=True, help="starter dataset files")

    p = sub.add_parser("eval-roc", parents=[common], help="score infraction prediction")
    p.add_argument("--data", nargs="+", required=True, help="scored dataset files")
    p.add_argument("--signal", choices=list(SIGNAL_NAMES), default="total_u")
    p.add_argument("--k", type=int, default=5, help="lookahead buffer in frames")

    p = sub.add_parser("benchmark", parents=[common], help="closed-loop intersection suite")
    p.add_argument("--policy", required=True, help="policy checkpoint, or 'oracle'")
    p.add_argument("--jobs", type=int, default=1, help="parallel evaluation workers")

    p = sub.add_parser(
        "scenario-table", parents=[common], help="median uncertainty per condition"
    )
    p.add_argument(
        "--data", nargs="+", required=True, metavar="NAME=PATH", help="labeled datasets"
    )
    p.add_argument("--min-frames", type=int, default=1000)

    p = sub.add_parser("serve", parents=[common], help="host a live teleop session")
    p.add_argument("--policy", required=True, help="policy checkpoint")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)

    p = sub.add_parser("replay", parents=[common], help="re-verify a dataset's stored scores")
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--policy", required=True, help="policy checkpoint it was collected with")

    p = sub.add_parser("export", parents=[common], help="dump training arrays")
    p.add_argument("--data", nargs="+", required=True, help="dataset files")
    p.add_argument("--format", choices=["npz", "csv"], default="npz")

    return parser


HANDLERS = {
    "gen-tracks": cmd_gen_tracks,
    "train": cmd_train,
    "collect": cmd_collect,
    "uail-loop": cmd_uail_loop,
    "eval-roc": cmd_eval_roc,
    "benchmark": cmd_benchmark,
    "scenario-table": cmd_scenario_table,
    "serve": cmd_serve,
    "replay": cmd_replay,
    "export": cmd_export,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_run_config(args)
        run_dir = _make_run_dir(args, config)
        summary = HANDLERS[args.command](args, config, run_dir)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ExpertLostError as e:
        print(f"expert failure: {e}", file=sys.stderr)
        return EXIT_EXPERT
    except (TrainingDivergedError, UailLoopDiverged) as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return EXIT_TRAINING
    except UndefinedRocError as e:
        print(f"degenerate ROC: {e}", file=sys.stderr)
        return EXIT_ROC
    summary["run_dir"] = run_dir
    summary["config_digest"] = config.digest()
    _emit(summary)
    if args.command == "replay" and not summary["certified"]:
        return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
