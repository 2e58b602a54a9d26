"""Long-tailed dataset construction: profiles, subsampling, synthetic data, IDX files."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LongTailDataset:
    """Feature rows with integer labels.

    ``sample_ids`` identify rows in the dataset the samples were drawn from,
    so subsets (phase views, exemplars) can be traced back to the source.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    split_tag: str = "train"
    sample_ids: np.ndarray | None = None
    class_counts: tuple = field(init=False)

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2 or labels.ndim != 1 or len(features) != len(labels):
            raise ParameterError(
                f"features {features.shape} and labels {labels.shape} do not line up"
            )
        if self.split_tag not in ("train", "test"):
            raise ParameterError(f"split_tag must be train or test, got {self.split_tag!r}")
        if len(labels) and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ParameterError(f"labels must lie in [0, {self.num_classes})")
        ids = np.arange(len(labels)) if self.sample_ids is None else np.asarray(self.sample_ids, np.int64)
        if ids.shape != labels.shape:
            raise ParameterError("sample_ids must have one entry per row")
        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "sample_ids", _frozen(ids))
        counts = np.bincount(labels, minlength=self.num_classes)
        object.__setattr__(self, "class_counts", tuple(int(n) for n in counts))

    def __len__(self):
        return len(self.labels)

    @property
    def d_in(self):
        return self.features.shape[1]

    def subset(self, mask_or_index):
        """Rows selected by a boolean mask or an index array, labels unchanged."""
        return LongTailDataset(
            self.features[mask_or_index],
            self.labels[mask_or_index],
            self.num_classes,
            self.split_tag,
            self.sample_ids[mask_or_index],
        )

    def restrict(self, classes):
        return self.subset(np.isin(self.labels, np.asarray(list(classes), dtype=np.int64)))

    @staticmethod
    def concat(parts, num_classes, split_tag="train"):
        parts = [p for p in parts if len(p)]
        if not parts:
            return LongTailDataset(np.zeros((0, 0)), np.zeros(0, np.int64), num_classes, split_tag)
        return LongTailDataset(
            np.concatenate([p.features for p in parts]),
            np.concatenate([p.labels for p in parts]),
            num_classes,
            split_tag,
            np.concatenate([p.sample_ids for p in parts]),
        )


@dataclass(frozen=True)
class ImbalanceProfile:
    rho: float
    n_max: int
    num_classes: int

    def __post_init__(self):
        if not self.rho >= 1:
            raise ParameterError(f"rho must be >= 1, got {self.rho}")
        if self.n_max < 1:
            raise ParameterError(f"n_max must be >= 1, got {self.n_max}")
        if self.num_classes < 1:
            raise ParameterError(f"num_classes must be >= 1, got {self.num_classes}")


def make_profile_counts(profile: ImbalanceProfile) -> list[int]:
    """Exponentially decaying per-class counts, ``n_max * rho ** (-j / (c - 1))``.

    Counts are rounded to the nearest integer and floored at 1.
    """
    c = profile.num_classes
    if c == 1:
        return [int(profile.n_max)]
    j = np.arange(c)
    raw = profile.n_max * profile.rho ** (-j / (c - 1))
    return [max(1, int(n)) for n in np.floor(raw + 0.5)]


def subsample_longtail(dataset: LongTailDataset, counts, seed: int) -> LongTailDataset:
    counts = [int(n) for n in counts]
    if len(counts) != dataset.num_classes:
        raise ParameterError(f"expected {dataset.num_classes} counts, got {len(counts)}")
    rng = np.random.default_rng(seed)
    keep = []
    for j, n in enumerate(counts):
        rows = np.flatnonzero(dataset.labels == j)
        if n < 0 or n > len(rows):
            raise ParameterError(f"class {j}: requested {n} samples but only {len(rows)} available")
        keep.append(np.sort(rng.choice(rows, size=n, replace=False)))
    return dataset.subset(np.sort(np.concatenate(keep)))


def class_means(c: int, d_in: int, separation: float, rng) -> np.ndarray:
    """Random means rescaled so the closest pair sits exactly ``separation`` apart."""
    means = rng.standard_normal((c, d_in))
    diff = means[:, None, :] - means[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    closest = dist[np.triu_indices(c, 1)].min()
    return means * (separation / closest)


def make_synthetic_gaussian(c, d_in, counts, separation, seed, test_per_class=100, offset=0.0):
    """Isotropic unit-variance Gaussian clusters; long-tailed train, balanced test.

    ``offset`` shifts every cluster by the same vector of that length along
    the all-ones direction, giving the features a shared mean component the
    way non-negative deep features have one.
    """
    if c < 2 or d_in < 2:
        raise ParameterError(f"need c >= 2 and d_in >= 2, got c={c}, d_in={d_in}")
    if not separation > 0:
        raise ParameterError(f"separation must be positive, got {separation}")
    counts = [int(n) for n in counts]
    if len(counts) != c or min(counts) < 0:
        raise ParameterError(f"counts must be {c} non-negative integers")
    if test_per_class < 1:
        raise ParameterError("test_per_class must be >= 1")

    rng = np.random.default_rng(seed)
    means = class_means(c, d_in, separation, rng) + offset / np.sqrt(d_in)

    def draw(per_class, tag):
        labels = np.repeat(np.arange(c), per_class)
        x = means[labels] + rng.standard_normal((len(labels), d_in))
        return LongTailDataset(x, labels, c, tag)

    train = draw(counts, "train")
    test = draw([test_per_class] * c, "test")
    return train, test


def _read_idx(path, magic, what):
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise FormatError(f"{what} file {path} is truncated in the header", offset=len(data))
    got = struct.unpack(">I", data[:4])[0]
    if got != magic:
        raise FormatError(f"{what} file {path}: bad magic 0x{got:08x}, expected 0x{magic:08x}", offset=0)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(data) < header:
        raise FormatError(f"{what} file {path} is truncated in the header", offset=len(data))
    dims = struct.unpack(f">{ndim}I", data[4:header])
    size = int(np.prod(dims))
    if len(data) < header + size:
        raise FormatError(
            f"{what} file {path} is truncated: expected {size} data bytes, found {len(data) - header}",
            offset=len(data),
        )
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=header).reshape(dims), header


def load_idx(images_path, labels_path, num_classes=None, split_tag="train") -> LongTailDataset:
    """Read an IDX image/label pair (MNIST layout). Pixels are scaled to [0, 1]."""
    images, _ = _read_idx(images_path, IDX_IMAGES_MAGIC, "images")
    labels, label_header = _read_idx(labels_path, IDX_LABELS_MAGIC, "labels")
    if len(images) != len(labels):
        raise FormatError(
            f"count mismatch: {len(images)} images but {len(labels)} labels", offset=4
        )
    labels = labels.astype(np.int64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if len(labels) else 0
    elif len(labels) and labels.max() >= num_classes:
        bad = int(np.argmax(labels >= num_classes))
        raise FormatError(f"label {labels[bad]} out of range", offset=label_header + bad)
    features = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return LongTailDataset(features, labels, num_classes, split_tag)


def write_idx(images, labels, images_path, labels_path):
    """Write uint8 images (n, rows, cols) and labels (n,) in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())
