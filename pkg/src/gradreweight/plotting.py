"""SVG figures from metrics CSVs. Output bytes depend only on the inputs."""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import ParameterError  # noqa: E402
from .metrics import MetricsLog, read_metrics_csv  # noqa: E402

FIGURES = ("accuracy", "forgetting", "weight_norm", "grad_mag")

_RC = {
    "svg.hashsalt": "gradreweight",
    "svg.fonttype": "none",
    "figure.figsize": (6.0, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def run_label(csv_path) -> str:
    """Legend label: manifest ``label`` next to the CSV, else the parent directory name."""
    path = Path(csv_path)
    manifest = path.parent / "manifest.json"
    if manifest.exists():
        try:
            label = json.loads(manifest.read_text()).get("label")
        except (json.JSONDecodeError, AttributeError):
            label = None
        if label:
            return str(label)
    return path.parent.name or path.stem


def load_runs(paths):
    if not paths:
        raise ParameterError("no metrics CSV given")
    runs = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            p = p / "metrics.csv"
        if not p.exists():
            raise ParameterError(f"{p}: no such file")
        runs.append((run_label(p), read_metrics_csv(p)))
    return runs


def _series(log: MetricsLog, metric):
    rows = log.select(metric)
    phases = sorted({r[0] for r in rows})
    return phases, rows


def accuracy_curve(log: MetricsLog):
    phases, rows = _series(log, "acc_seen")
    by_phase = {r[0]: r[3] for r in rows}
    return phases, [by_phase[t] for t in phases]


def forgetting_curve(log: MetricsLog):
    """Mean drop on earlier tasks after each phase, starting from phase 1."""
    task = {}
    for t, _, u, v in log.select("acc_task"):
        task[(t, int(u))] = v
    phases = sorted({t for t, _ in task})
    xs, ys = [], []
    for t in phases[1:]:
        drops = [task[(u, u)] - task[(t, u)] for u in range(t) if (u, u) in task and (t, u) in task]
        if drops:
            xs.append(t)
            ys.append(float(np.mean(drops)))
    return xs, ys


def final_vector(log: MetricsLog, metric):
    rows = log.select(metric)
    if not rows:
        return [], []
    last = max(r[0] for r in rows)
    rows = sorted((r for r in rows if r[0] == last), key=lambda r: int(r[2]))
    return [int(r[2]) for r in rows], [r[3] for r in rows]


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def _lines(runs, curve, ylabel, title, path):
    fig, ax = plt.subplots()
    for label, log in runs:
        xs, ys = curve(log)
        ax.plot(np.asarray(xs) + 1, ys, marker="o", label=label)
    ax.set_xlabel("phase")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    _save(fig, path)


def _bars(runs, metric, ylabel, title, path):
    fig, ax = plt.subplots()
    width = 0.8 / len(runs)
    for i, (label, log) in enumerate(runs):
        keys, vals = final_vector(log, metric)
        ax.bar(np.arange(len(keys)) + i * width, vals, width=width, label=label)
        ax.set_xticks(np.arange(len(keys)) + 0.4 - width / 2, [str(k) for k in keys])
    ax.set_xlabel("class")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    _save(fig, path)


def render_all(paths, out_dir):
    runs = load_runs(paths)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    with plt.rc_context(_RC):
        _lines(runs, accuracy_curve, "accuracy on seen classes", "Accuracy per phase", out / "accuracy.svg")
        _lines(runs, forgetting_curve, "mean drop on earlier tasks", "Forgetting per phase", out / "forgetting.svg")
        _bars(runs, "weight_norm", "||W^j||", "Classifier weight norms (final phase)", out / "weight_norm.svg")
        _bars(runs, "grad_mag", "mean ||grad CE||", "Gradient magnitude per class (final phase)", out / "grad_mag.svg")
    for name in FIGURES:
        written.append(out / f"{name}.svg")
    return written
