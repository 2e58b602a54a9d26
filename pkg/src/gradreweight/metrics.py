"""Evaluation metrics and the append-only metrics log.

Phases are stored 0-indexed. The textbook formulas count tasks from 1;
``forgetting`` does that translation in one place.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

CSV_HEADER = ("phase", "metric", "key", "value")


@dataclass
class AccMatrix:
    """``a[t][u]``: accuracy on phase-``u`` classes after phase ``t`` (``u <= t``).
    ``a_seen[t]``: accuracy on all classes seen through phase ``t``."""

    n_phases: int
    a: list = field(default_factory=list)
    a_seen: list = field(default_factory=list)

    def record(self, t, per_task, seen):
        if t != len(self.a):
            raise ParameterError(f"phase {t} recorded out of order")
        if len(per_task) != t + 1:
            raise ParameterError(f"phase {t} needs {t + 1} per-task accuracies")
        self.a.append([float(v) for v in per_task])
        self.a_seen.append(float(seen))

    @property
    def complete(self):
        return len(self.a) == self.n_phases


def average_accuracy(acc: AccMatrix) -> float:
    if not acc.complete:
        raise ParameterError(f"only {len(acc.a_seen)} of {acc.n_phases} phases recorded")
    return float(np.mean(acc.a_seen))


def forgetting(acc: AccMatrix, n_phases=None) -> float:
    """Mean drop on earlier tasks at the end of the run (positive = forgot)."""
    N = acc.n_phases if n_phases is None else n_phases
    if N < 2:
        raise ParameterError("forgetting needs at least 2 phases")
    if len(acc.a) < N:
        raise ParameterError(f"only {len(acc.a)} of {N} phases recorded")
    final = acc.a[N - 1]
    # task t (1-indexed) lives at row/column t - 1
    drops = [final[t - 1] - acc.a[t - 1][t - 1] for t in range(1, N)]
    return float(-sum(drops) / (N - 1))


def per_class_forgetting(history: dict) -> dict:
    """``history`` maps class id to its accuracy per phase since first seen.
    Classes seen in fewer than two phases are left out."""
    return {k: float(v[0] - v[-1]) for k, v in history.items() if len(v) >= 2}


def weight_norm_stats(W):
    norms = np.sqrt((np.asarray(W, dtype=np.float64) ** 2).sum(axis=0))
    return norms, float(norms.mean()), float(norms.std())


def gradient_magnitude_log(acc) -> np.ndarray:
    """Average per-iteration ``||grad_ce(W^j)||`` over the phase."""
    return acc.phi / max(acc.iteration, 1)


@dataclass
class MetricsLog:
    rows: list = field(default_factory=list)

    def add(self, phase, metric, key, value):
        self.rows.append((int(phase), str(metric), str(key), float(value)))

    def add_vector(self, phase, metric, keys, values):
        for k, v in zip(keys, values):
            self.add(phase, metric, k, v)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for phase, metric, key, value in self.rows:
            w.writerow((phase, metric, key, repr(value)))
        return buf.getvalue()

    def select(self, metric, phase=None):
        return [r for r in self.rows if r[1] == metric and (phase is None or r[0] == phase)]


def read_metrics_csv(path) -> MetricsLog:
    """Parse a metrics CSV; malformed rows raise ParameterError naming the row number."""
    log = MetricsLog()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise ParameterError(f"{path}: row 1: expected header {','.join(CSV_HEADER)}")
        for rowno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise ParameterError(f"{path}: row {rowno}: expected 4 fields, got {len(row)}")
            try:
                log.add(int(row[0]), row[1], row[2], float(row[3]))
            except ValueError:
                raise ParameterError(f"{path}: row {rowno}: bad phase or value") from None
    return log
