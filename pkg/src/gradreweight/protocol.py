"""Class-to-phase schedules for the LFS and LFH protocols."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import LongTailDataset
from .errors import ParameterError

DEFAULT_ORDER_SEED = 1993


@dataclass(frozen=True)
class TaskSchedule:
    class_order: tuple
    phases: tuple  # tuple of tuples of global class ids
    protocol_tag: str
    order_tag: str

    @property
    def n_phases(self):
        return len(self.phases)

    @property
    def num_classes(self):
        return len(self.class_order)

    def phase_of(self, class_id):
        for t, classes in enumerate(self.phases):
            if class_id in classes:
                return t
        raise ParameterError(f"class {class_id} is not scheduled")


def build_schedule(c, protocol, n_tasks, order="shuffled", class_counts=None, seed=DEFAULT_ORDER_SEED):
    """Split ``c`` classes into incremental phases.

    LFS cuts the class order into ``n_tasks`` equal phases. LFH puts the first
    half of the classes in a base phase and splits the rest into ``n_tasks``
    equal phases. ``ordered`` sorts classes by descending training count.
    """
    if c < 1 or n_tasks < 1:
        raise ParameterError("need c >= 1 and n_tasks >= 1")
    if protocol == "LFS":
        if c % n_tasks:
            raise ParameterError(f"LFS needs c divisible by n_tasks={n_tasks}; got c={c}")
        sizes = [c // n_tasks] * n_tasks
    elif protocol == "LFH":
        if c % 2 or (c // 2) % n_tasks:
            raise ParameterError(
                f"LFH needs c even and c/2 divisible by n_tasks={n_tasks}; got c={c}"
            )
        sizes = [c // 2] + [c // 2 // n_tasks] * n_tasks
    else:
        raise ParameterError(f"protocol must be LFS or LFH, got {protocol!r}")

    if order == "shuffled":
        class_order = np.random.default_rng(seed).permutation(c)
    elif order == "ordered":
        if class_counts is None or len(class_counts) != c:
            raise ParameterError("ordered class order needs one count per class")
        # stable sort on negated counts keeps ties in ascending id order
        class_order = np.argsort(-np.asarray(class_counts), kind="stable")
    else:
        raise ParameterError(f"order must be shuffled or ordered, got {order!r}")

    class_order = tuple(int(k) for k in class_order)
    bounds = np.cumsum([0] + sizes)
    phases = tuple(class_order[a:b] for a, b in zip(bounds[:-1], bounds[1:]))
    return TaskSchedule(class_order, phases, protocol, order)


def phase_view(schedule: TaskSchedule, dataset: LongTailDataset, t: int) -> LongTailDataset:
    if not 0 <= t < schedule.n_phases:
        raise ParameterError(f"phase {t} out of range [0, {schedule.n_phases})")
    view = dataset.restrict(schedule.phases[t])
    if dataset.split_tag == "train":
        empty = [k for k in schedule.phases[t] if view.class_counts[k] == 0]
        assert not empty, f"classes {empty} have no training samples"
    return view


def seen_classes(schedule: TaskSchedule, t: int) -> list[int]:
    if not 0 <= t < schedule.n_phases:
        raise ParameterError(f"phase {t} out of range [0, {schedule.n_phases})")
    return [k for phase in schedule.phases[: t + 1] for k in phase]
