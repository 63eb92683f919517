#!/usr/bin/env python3
"""Render quick-look figures from lanekeep trace CSVs.

Usage: python3 scripts/plot_traces.py out/circle-r10 [fig.png]

Untested companion utility; all measured logic lives in the Rust crate.
"""
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def load(path):
    cols = {}
    with open(path) as f:
        header = None
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                cols = {name: [] for name in header}
                continue
            for name, val in zip(header, line.split(",")):
                cols[name].append(float(val))
    return cols


def main():
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    scenario_dir = Path(sys.argv[1])
    out_path = Path(sys.argv[2]) if len(sys.argv) > 2 else scenario_dir / "traces.png"
    traces = {p.stem: load(p) for p in sorted(scenario_dir.glob("*.csv")) if p.stem != "metrics"}
    if not traces:
        sys.exit(f"no trace CSVs in {scenario_dir}")

    fig, axes = plt.subplots(3, 1, figsize=(9, 10), sharex=True)
    for name, t in traces.items():
        axes[0].plot(t["t"], t["e1"], label=name, linewidth=0.8)
        axes[1].plot(t["t"], t["e2"], label=name, linewidth=0.8)
    axes[0].set_ylabel("e1 (m)")
    axes[0].set_ylim(-2, 2)
    axes[1].set_ylabel("e2 (rad)")
    axes[1].set_ylim(-0.5, 0.5)

    # learned vs true uncertainty for the adaptive controllers
    for name in ("neural-l1", "l1", "deep-mrac"):
        if name not in traces:
            continue
        t = traces[name]
        est = [
            dh + z1 * x1 + z2 * x2 + z3 * x3 + z4 * x4
            for dh, z1, z2, z3, z4, x1, x2, x3, x4 in zip(
                t["delta_hat"], t["zh1"], t["zh2"], t["zh3"], t["zh4"],
                t["e1"], t["e1_dot"], t["e2"], t["e2_dot"],
            )
        ]
        axes[2].plot(t["t"], est, label=f"{name} estimate", linewidth=0.8)
    first = next(iter(traces.values()))
    axes[2].plot(first["t"], first["dist_total"], "k", label="true", linewidth=0.6, alpha=0.6)
    axes[2].set_ylabel("matched uncertainty (rad)")
    axes[2].set_xlabel("t (s)")
    axes[2].set_ylim(-1.5, 1.5)
    for ax in axes:
        ax.legend(loc="upper right", fontsize=7)
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    print(out_path)


if __name__ == "__main__":
    main()
