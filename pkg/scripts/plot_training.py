#!/usr/bin/env python3
"""Render a training_log.csv as PNG curves (requires matplotlib).

Plotting is a convenience on top of the CSV outputs, not part of the test
surface.

    python scripts/plot_training.py runs/desk/training_log.csv out.png
"""

import csv
import sys


def main():
    if len(sys.argv) < 2:
        print(__doc__)
        return 1
    log_path = sys.argv[1]
    out_path = sys.argv[2] if len(sys.argv) > 2 else "training.png"
    with open(log_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    episodes = [int(r["episode"]) for r in rows]
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(2, 2, figsize=(10, 7), sharex=True)
    panels = (
        ("mean_reward", "reward"),
        ("mean_rk", "key rate [bits/slot]"),
        ("mean_rd", "data rate [bits/s/Hz]"),
        ("alpha", "entropy temperature"),
    )
    for ax, (col, label) in zip(axes.ravel(), panels):
        ax.plot(episodes, [float(r[col]) for r in rows], lw=1)
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    for ax in axes[-1]:
        ax.set_xlabel("episode")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    print(f"wrote {out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
