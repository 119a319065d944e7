#!/usr/bin/env python3
"""Key-rate / data-rate trade-off sweep over the weighting factor.

Runs one desk-scale training per lambda_k value and prints the merged
table path. Equivalent to:

    plkg sweep --config configs/desk.json --axis lambda_k \
        --values 0,0.25,0.5,0.75,0.9,1.0
"""

import sys
from pathlib import Path

from plkg.experiment import load_config, sweep

ROOT = Path(__file__).resolve().parent.parent


def main():
    config_path = sys.argv[1] if len(sys.argv) > 1 else ROOT / "configs" / "desk.json"
    cfg = load_config(config_path)
    cfg.run.out_dir = str(Path(cfg.run.out_dir).parent / "sweep_lambda")
    results = sweep(cfg, "lambda_k", [0.0, 0.25, 0.5, 0.75, 0.9, 1.0])
    for r in results:
        if r["error"]:
            print(f"lambda_k={r['axis_value']}: FAILED {r['error']}")
        else:
            conv = r["summary"]["converged"]
            print(f"lambda_k={r['axis_value']}: reward={conv['mean_reward']:.3f} "
                  f"rk={conv['mean_rk']:.3f} rd={conv['mean_rd']:.3f}")
    print(f"merged table: {cfg.run.out_dir}/sweep_lambda_k.csv")


if __name__ == "__main__":
    main()
