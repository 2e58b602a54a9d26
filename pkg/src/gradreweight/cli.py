"""Command-line front-end: ``gradreweight {gen-data,run,ablate,plot}``.

Exit codes: 0 ok, 2 configuration or input error, 3 numeric divergence.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, dump_config, load_config
from .errors import FormatError, NumericalError, ParameterError
from .trainer import TRACE_HEADER, build_datasets, run_experiment, summary

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("gradreweight")

# toggle name -> (train field, value when off)
TOGGLES = {
    "dakd": ("use_dakd", False),
    "dgr": ("use_dgr", False),
    "rs": ("rs_enabled", False),
    "reweight-kd": ("reweight_kd", False),
}


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["train"] = {"seed": args.seed}
    out = {}
    if getattr(args, "out", None):
        out["directory"] = args.out
    if getattr(args, "trace", False):
        out["trace"] = True
    if out:
        updates["output"] = out
    return cfg.replace(**updates) if updates else cfg


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def write_run_outputs(run, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(run.log.to_csv())
    manifest = {
        "label": run.config.label,
        "config": run.config.to_dict(),
        "schedule": [list(p) for p in run.schedule.phases],
        "class_counts": list(run.train.class_counts),
        "a_seen": list(run.acc.a_seen),
        "acc_matrix": run.acc.a,
        "wall_clock_s": getattr(run, "wall_clock", None),
    }
    manifest.update({k: v for k, v in summary(run).items() if k in ("ACC", "forgetting")})
    _write_json(out / "manifest.json", manifest)
    if run.config.output.trace:
        with open(out / "trace.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_HEADER)
            for row in run.trace:
                w.writerow([row[0], row[1], row[2], row[3], repr(float(row[4])), repr(float(row[5])),
                            repr(float(row[6])), repr(float(row[7]))])
    return manifest


def cmd_gen_data(args):
    cfg = _resolve_config(args)
    out = Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    train, test = build_datasets(cfg)
    for split in (train, test):
        np.savez(out / f"{split.split_tag}.npz", features=split.features, labels=split.labels,
                 num_classes=np.int64(split.num_classes))
    _write_json(out / "counts.json", {"train": list(train.class_counts), "test": list(test.class_counts),
                                      "d_in": train.d_in})
    print(f"wrote {len(train)} train / {len(test)} test rows to {out}")
    return EXIT_OK


def cmd_run(args):
    cfg = _resolve_config(args)
    out = Path(cfg.output.directory)
    try:
        run = run_experiment(cfg)
    except NumericalError as err:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "divergence.json", {"error": str(err), "state": err.state})
        raise
    manifest = write_run_outputs(run, out)
    f = manifest.get("forgetting")
    print(f"{manifest['label']}: ACC={manifest['ACC']:.4f}" + (f" F={f:.4f}" if f is not None else ""))
    return EXIT_OK


def ablation_variants(base: ExperimentConfig, toggles):
    """(name, config) pairs: both baselines, then every on/off combination of ``toggles`` for ours."""
    unknown = [t for t in toggles if t not in TOGGLES]
    if unknown:
        raise ParameterError(f"unknown toggle(s): {', '.join(unknown)}; choose from {', '.join(TOGGLES)}")
    variants = [
        ("finetune", base.replace(train={"method": "finetune"}, output={"label": "finetune"})),
        ("kd_only", base.replace(train={"method": "kd_only"}, output={"label": "kd_only"})),
    ]
    defaults = {"use_dakd": True, "use_dgr": True, "rs_enabled": True, "reweight_kd": False}
    for states in itertools.product((True, False), repeat=len(toggles)):
        train = {"method": "ours", **defaults}
        parts = []
        for name, on in zip(toggles, states):
            key, _ = TOGGLES[name]
            # reweight-kd is the deliberately wrong variant, so "on" means enabled
            train[key] = on
            parts.append(f"{name}={'on' if on else 'off'}")
        label = "ours[" + ",".join(parts) + "]" if parts else "ours"
        variants.append((label, base.replace(train=train, output={"label": label})))
    return variants


def _run_one(job):
    name, cfg, out_dir = job
    run = run_experiment(cfg)
    write_run_outputs(run, out_dir)
    s = summary(run)
    return name, cfg.train.seed, s["ACC"], s.get("forgetting", float("nan"))


def cmd_ablate(args):
    base = _resolve_config(args)
    toggles = [t for t in (args.toggles.split(",") if args.toggles else []) if t]
    out = Path(base.output.directory)
    seeds = [base.train.seed + i for i in range(args.seeds)]
    jobs = []
    for name, cfg in ablation_variants(base, toggles):
        for seed in seeds:
            run_dir = out / _slug(name) / f"seed{seed}"
            jobs.append((name, cfg.replace(train={"seed": seed}, output={"directory": str(run_dir)}), run_dir))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]

    table = {}
    for name, seed, acc, f in results:
        table.setdefault(name, []).append((acc, f))
    out.mkdir(parents=True, exist_ok=True)
    lines = ["variant,ACC,forgetting,n_seeds"]
    md = ["| variant | ACC | F |", "|---|---|---|"]
    for name, vals in table.items():
        acc = float(np.mean([v[0] for v in vals]))
        f = float(np.mean([v[1] for v in vals]))
        lines.append(f"{name},{acc!r},{f!r},{len(vals)}")
        md.append(f"| {name} | {100 * acc:.2f} | {100 * f:.2f} |")
    (out / "ablation.csv").write_text("\n".join(lines) + "\n")
    (out / "ablation.md").write_text("\n".join(md) + "\n")
    print("\n".join(md))
    return EXIT_OK


def _slug(name):
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in name).strip("_")


def cmd_plot(args):
    from .plotting import render_all

    written = render_all(args.inputs, args.out or ".")
    for p in written:
        print(p)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="gradreweight", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trace=True):
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        p.add_argument("--seed", type=int, help="override train.seed")
        if trace:
            p.add_argument("--trace", action="store_true", help="write per-iteration ratios to trace.csv")

    p = sub.add_parser("gen-data", help="materialize the dataset as train.npz / test.npz")
    common(p, trace=False)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("run", help="one class-incremental run")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="baselines plus on/off variants of the method components")
    common(p)
    p.add_argument("--toggles", default="dakd,dgr,rs,reweight-kd",
                   help="comma-separated subset of: " + ", ".join(TOGGLES))
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds per variant")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("plot", help="SVG figures from metrics CSVs or run directories")
    p.add_argument("inputs", nargs="*", help="metrics.csv files or run directories")
    p.add_argument("--out", help="directory for the SVG files (default: current directory)")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ParameterError, FormatError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as err:
        print(f"numeric error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
