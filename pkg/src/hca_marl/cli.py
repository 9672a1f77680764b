"""Command-line entry point: train, eval, compare.

Exit codes: 0 success, 2 usage/config error, 3 runtime failure. The
``HCA_MARL_THREADS`` environment variable caps how many seed jobs run in
parallel (default 1; seeds are independent and bit-reproducible either way).
"""

from __future__ import annotations

import argparse
import dataclasses
import glob
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import load_config, serialize_config
from .errors import ConfigError
from .harness import compare_runs, evaluate, run_single_seed

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _parse_seed_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise ConfigError(f"--seeds: {exc}") from exc


def _max_workers() -> int:
    raw = os.environ.get("HCA_MARL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"HCA_MARL_THREADS must be an integer, got {raw!r}")


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seeds:
        cfg = dataclasses.replace(cfg, seeds=_parse_seed_list(args.seeds))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved_config.yaml").write_text(serialize_config(cfg))

    workers = _max_workers()
    if workers > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(run_single_seed, [cfg] * len(cfg.seeds), cfg.seeds,
                         [out_dir] * len(cfg.seeds))
            )
    else:
        results = [run_single_seed(cfg, seed, out_dir) for seed in cfg.seeds]

    failed = [r for r in results if r.failed]
    for r in results:
        status = f"FAILED ({r.failure_reason})" if r.failed else "ok"
        print(f"seed {r.seed}: {status} -> {r.metrics_path}")
    if failed:
        print(f"error: {len(failed)}/{len(results)} seed runs failed", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_eval(args) -> int:
    summary = evaluate(args.checkpoint, args.scenario, args.episodes, args.seed)
    print(f"mean_cumulative_reward={summary.mean_cumulative_reward!r}")
    print(f"mean_episode_length={summary.mean_episode_length!r}")
    return EXIT_OK


def cmd_compare(args) -> int:
    paths = sorted(glob.glob(args.runs))
    if not paths:
        raise ConfigError(f"no metrics files match {args.runs!r}")
    result = compare_runs(paths, smooth=args.smooth)
    print(result.table())
    out = Path(args.out)
    out.write_text(json.dumps(result.to_dict(), sort_keys=True, indent=1) + "\n")
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hca-marl",
        description="Self-play PPO / hierarchical-critic training harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a training experiment from a config file")
    p_train.add_argument("--config", required=True, help="YAML experiment config")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--seeds", default=None,
                         help="comma-separated seed override, e.g. 1,2,3")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint with the deterministic policy")
    p_eval.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p_eval.add_argument("--scenario", required=True)
    p_eval.add_argument("--episodes", type=int, required=True)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.set_defaults(func=cmd_eval)

    p_cmp = sub.add_parser("compare", help="aggregate and compare metrics files")
    p_cmp.add_argument("--runs", required=True, help="glob over metrics CSV files")
    p_cmp.add_argument("--smooth", type=float, default=0.8,
                       help="display smoothing weight (0 disables)")
    p_cmp.add_argument("--out", default="comparison.json",
                       help="structured output path")
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failures keep a one-line reason
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
