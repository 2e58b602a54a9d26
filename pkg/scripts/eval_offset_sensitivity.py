#!/usr/bin/env python3
"""Accuracy with raw logits (the default) vs. logits shifted by log priors.

Priors are the training priors of the phase being evaluated. Under growing
memory every later-phase count is capped at n_eps, so the offset is only
informative for the first phase and for fixed budgets.
"""
import argparse

import numpy as np

from gradreweight.config import reference_config
from gradreweight.model import class_priors, forward
from gradreweight.trainer import prepare_run, run_phase


def _both_ways(run, t):
    learner = run.learner
    cls = np.asarray(learner.classes)
    new = set(run.schedule.phases[t])
    counts = [run.train.class_counts[k] if k in new else run.store.retained(k) for k in cls]
    pi = class_priors(counts, run.store.per_class_cap(len(cls)), t)
    test = run.test.restrict(cls)
    z = forward(learner, test.features)
    raw = (cls[z.argmax(1)] == test.labels).mean()
    shifted = (cls[(z + np.log(pi)).argmax(1)] == test.labels).mean()
    return raw, shifted


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=3)
    args = ap.parse_args()
    for seed in range(args.seeds):
        run = prepare_run(reference_config(train={"seed": seed}))
        cells = []
        for t in range(run.schedule.n_phases):
            run_phase(run, t)
            raw, shifted = _both_ways(run, t)
            cells.append(f"t={t} {raw:.3f}/{shifted:.3f}")
        print(f"seed {seed} (raw/offset): " + "  ".join(cells))


if __name__ == "__main__":
    main()
