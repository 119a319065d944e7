"""Command line entry points.

    plkg run --config cfg.json [--seed K] [--out DIR]
    plkg sweep --config cfg.json --axis lambda_k --values 0,0.5,1 [...]
    plkg baseline --config cfg.json --kind random|oracle-svd [...]
    plkg predict-train --config cfg.json [...]

PLKG_SEED and PLKG_OUT environment variables override the config file;
explicit flags override both.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .baselines import BaselineKind
from .experiment import (
    ConfigError,
    SWEEP_AXES,
    load_config,
    parse_axis_values,
    pretrain_predictor,
    resolve_seed_and_out,
    run_experiment,
    sweep,
)


def _add_common(parser):
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the run seed")
    parser.add_argument("--out", default=None, help="override the output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plkg",
        description="Beamforming experiments for joint key generation and data transmission",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train the SAC agents")
    _add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="run one experiment per axis value")
    _add_common(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated axis values")

    p_base = sub.add_parser("baseline", help="evaluate a reference policy")
    _add_common(p_base)
    p_base.add_argument("--kind", required=True,
                        choices=[k.value for k in BaselineKind])

    p_pred = sub.add_parser("predict-train",
                            help="pretrain the adversary predictor only")
    _add_common(p_pred)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg = resolve_seed_and_out(cfg, args.seed, args.out)
        if args.command == "run":
            summary = run_experiment(cfg)
            print(f"run complete: out={cfg.run.out_dir} "
                  f"converged_reward={summary['converged']['mean_reward']}")
        elif args.command == "sweep":
            values = parse_axis_values(args.axis, args.values)
            results = sweep(cfg, args.axis, values)
            failed = [r for r in results if r["error"] is not None]
            print(f"sweep complete: {len(results) - len(failed)}/{len(results)} "
                  f"points ok, table in {cfg.run.out_dir}")
            if failed:
                for r in failed:
                    print(f"  point {r['axis_value']} failed: {r['error']}",
                          file=sys.stderr)
                return 1
        elif args.command == "baseline":
            summary = run_experiment(cfg, baseline_kind=BaselineKind(args.kind))
            print(f"baseline {args.kind}: "
                  f"mean_reward={summary['converged']['mean_reward']}")
        elif args.command == "predict-train":
            out = Path(cfg.run.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            _, metrics = pretrain_predictor(cfg, out)
            print(f"predictor: accuracy={metrics.mode_accuracy} "
                  f"r2={metrics.channel_r2}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # surface a diagnostic, nonzero exit
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
