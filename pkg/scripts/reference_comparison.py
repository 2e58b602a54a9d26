#!/usr/bin/env python3
"""Three-seed comparison of ours / finetune / kd_only on the reference setting.

Writes one run directory per (method, seed), a summary CSV and the four SVG
figures for seed 0.

    python scripts/reference_comparison.py --out runs/compare
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from gradreweight.cli import write_run_outputs
from gradreweight.config import load_config, reference_config
from gradreweight.plotting import render_all
from gradreweight.trainer import run_experiment, summary

METHODS = ("ours", "finetune", "kd_only")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="base config (default: built-in reference)")
    ap.add_argument("--out", default="runs/compare")
    ap.add_argument("--seeds", type=int, default=3)
    args = ap.parse_args()

    base = load_config(args.config) if args.config else reference_config()
    out = Path(args.out)
    rows = []
    for method in METHODS:
        for seed in range(args.seeds):
            cfg = base.replace(train={"method": method, "seed": seed}, output={"label": method})
            run = run_experiment(cfg)
            write_run_outputs(run, out / method / f"seed{seed}")
            s = summary(run)
            rows.append((method, seed, s["ACC"], s["forgetting"], run.wall_clock))
            print(f"{method:9s} seed {seed}: ACC {100 * s['ACC']:6.2f}  F {100 * s['forgetting']:6.2f}")

    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("method", "seed", "ACC", "forgetting", "wall_clock_s"))
        w.writerows(rows)

    print("\nmean over seeds")
    for method in METHODS:
        acc = np.mean([r[2] for r in rows if r[0] == method])
        f = np.mean([r[3] for r in rows if r[0] == method])
        print(f"  {method:9s} ACC {100 * acc:6.2f}  F {100 * f:6.2f}")
    render_all([out / m / "seed0" for m in METHODS], out / "figures")


if __name__ == "__main__":
    main()
