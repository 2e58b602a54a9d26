"""Exemplar memory with herding selection (growing or fixed budget)."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .datagen import LongTailDataset
from .errors import ParameterError


def herding_select(features, k: int) -> list[int]:
    """Greedy herding: repeatedly add the row that brings the running mean of
    the selection closest to the class mean. Ties go to the lowest index."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = len(x)
    if not 0 <= k <= n:
        raise ParameterError(f"cannot select {k} exemplars from {n} rows")
    mu = x.mean(axis=0)
    chosen = []
    running = np.zeros(x.shape[1])
    available = np.ones(n, dtype=bool)
    for m in range(1, k + 1):
        cand = (running + x) / m
        dist = np.sqrt(((mu - cand) ** 2).sum(axis=1))
        dist[~available] = np.inf
        i = int(np.argmin(dist))
        chosen.append(i)
        available[i] = False
        running += x[i]
    return chosen


@dataclass
class ExemplarStore:
    regime: str = "growing"
    n_eps: int | None = 20
    budget: int | None = None
    # class id -> source sample ids / feature rows, in herding order
    sample_ids: dict = field(default_factory=dict)
    bank: dict = field(default_factory=dict)
    original_counts: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.regime == "growing":
            if self.n_eps is None or self.n_eps < 0:
                raise ParameterError("growing memory needs n_eps >= 0")
        elif self.regime == "fixed":
            if self.budget is None or self.budget < 0:
                raise ParameterError("fixed memory needs budget >= 0")
        else:
            raise ParameterError(f"memory regime must be growing or fixed, got {self.regime!r}")

    @property
    def classes(self):
        return sorted(self.sample_ids)

    def per_class_cap(self, c_seen=None):
        if self.regime == "growing":
            return self.n_eps
        c_seen = len(self.sample_ids) if c_seen is None else c_seen
        return self.budget // c_seen if c_seen else self.budget

    def retained(self, class_id):
        return len(self.sample_ids.get(class_id, ()))

    @property
    def total_retained(self):
        return sum(len(v) for v in self.sample_ids.values())

    @property
    def lost_counts(self):
        return {j: self.original_counts[j] - self.retained(j) for j in self.classes}

    def as_dataset(self, num_classes, d_in=None) -> LongTailDataset:
        if not self.sample_ids:
            return LongTailDataset(np.zeros((0, d_in or 0)), np.zeros(0, np.int64), num_classes)
        ks = self.classes
        return LongTailDataset(
            np.concatenate([self.bank[j] for j in ks]),
            np.concatenate([np.full(len(self.sample_ids[j]), j) for j in ks]),
            num_classes,
            "train",
            np.concatenate([self.sample_ids[j] for j in ks]),
        )

    def to_json(self):
        return {
            "regime": self.regime,
            "n_eps": self.n_eps,
            "budget": self.budget,
            "classes": {
                str(j): {
                    "sample_ids": [int(i) for i in self.sample_ids[j]],
                    "original_count": int(self.original_counts[j]),
                    "retained": self.retained(j),
                }
                for j in self.classes
            },
        }

    @classmethod
    def from_json(cls, payload, train: LongTailDataset):
        """Rebuild a store; features are looked up in ``train`` by sample id."""
        store = cls(payload["regime"], payload["n_eps"], payload["budget"])
        pos = {int(i): r for r, i in enumerate(train.sample_ids)}
        for key, entry in payload["classes"].items():
            j = int(key)
            ids = np.asarray(entry["sample_ids"], dtype=np.int64)
            store.sample_ids[j] = ids
            store.bank[j] = train.features[[pos[int(i)] for i in ids]]
            store.original_counts[j] = int(entry["original_count"])
        return store


def update_store(store: ExemplarStore, phase_data: LongTailDataset, feature_fn, phase: int) -> ExemplarStore:
    """Add the classes of ``phase_data`` to a copy of ``store``.

    New classes are selected by herding on ``feature_fn`` embeddings. Under a
    fixed budget, existing classes are cut back to the new per-class cap by
    keeping the prefix of their herding order.
    """
    new = copy.copy(store)
    new.sample_ids = dict(store.sample_ids)
    new.bank = dict(store.bank)
    new.original_counts = dict(store.original_counts)

    present = [j for j, n in enumerate(phase_data.class_counts) if n > 0]
    fresh = [j for j in present if j not in new.sample_ids]
    cap = new.per_class_cap(len(new.sample_ids) + len(fresh))

    if new.regime == "fixed":
        for j in list(new.sample_ids):
            new.sample_ids[j] = new.sample_ids[j][:cap]
            new.bank[j] = new.bank[j][:cap]

    for j in fresh:
        rows = np.flatnonzero(phase_data.labels == j)
        x = phase_data.features[rows]
        emb = np.asarray(feature_fn(x), dtype=np.float64)
        sel = herding_select(emb, min(len(rows), cap))
        new.sample_ids[j] = phase_data.sample_ids[rows[sel]]
        new.bank[j] = x[sel]
        new.original_counts[j] = len(rows)
    return new


def replay_union(store: ExemplarStore, phase_data: LongTailDataset) -> LongTailDataset:
    if not store.sample_ids:
        return phase_data
    old = store.as_dataset(phase_data.num_classes)
    return LongTailDataset.concat([old, phase_data], phase_data.num_classes)
