#!/usr/bin/env python3
"""Component ablation on the reference setting via the ``ablate`` subcommand.

    python scripts/ablation_sweep.py --out runs/ablation --seeds 3 --jobs 1
"""
import argparse
import sys
import tempfile
from pathlib import Path

from gradreweight.cli import main as cli
from gradreweight.config import dump_config, reference_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/ablation")
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--toggles", default="dakd,dgr,rs,reweight-kd")
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        cfg = Path(tmp) / "reference.yaml"
        cfg.write_text(dump_config(reference_config()))
        return cli(["ablate", "--config", str(cfg), "--out", args.out, "--seeds", str(args.seeds),
                    "--jobs", str(args.jobs), "--toggles", args.toggles])


if __name__ == "__main__":
    sys.exit(main())
