#!/usr/bin/env python3
"""Desk-scale training run plus baseline references.

Equivalent to `plkg run --config configs/desk.json`; prints the converged
summary and the gap over the random baseline.
"""

import json
import sys
from pathlib import Path

from plkg.experiment import load_config, run_experiment

ROOT = Path(__file__).resolve().parent.parent


def main():
    config_path = sys.argv[1] if len(sys.argv) > 1 else ROOT / "configs" / "desk.json"
    cfg = load_config(config_path)
    summary = run_experiment(cfg)
    print(json.dumps(summary, indent=2, sort_keys=True))
    conv = summary["converged"]["mean_reward"]
    rand = summary["baselines"]["random"]["mean_reward"]
    print(f"\nconverged/random reward ratio: {conv / rand:.3f}")


if __name__ == "__main__":
    main()
