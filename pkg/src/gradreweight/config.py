"""Experiment configuration: dataclass sections with YAML round-tripping."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ParameterError

METHODS = ("ours", "finetune", "kd_only")


@dataclass
class DatasetConfig:
    source: str = "synthetic"  # synthetic | idx | npz
    rho: float = 100.0
    n_max: int = 500
    num_classes: int = 10
    d_in: int = 16
    separation: float = 3.0
    offset: float = 0.0
    test_per_class: int = 100
    seed: int | None = None  # None: follow train.seed
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    npz_dir: str | None = None


@dataclass
class ProtocolConfig:
    protocol: str = "LFS"
    n_tasks: int = 5
    order: str = "shuffled"
    seed: int = 1993


@dataclass
class MemoryConfig:
    regime: str = "growing"
    n_eps: int | None = 20
    budget: int | None = None


@dataclass
class TrainConfig:
    epochs_per_phase: int = 20
    batch_size: int = 128
    lr_init: float = 0.1
    lr_drops: list = field(default_factory=lambda: [[10, 10.0], [15, 10.0]])
    gamma: float = 1.0
    lambda_b: float = 1.0
    tau: float = 2.0
    rs_enabled: bool = True
    method: str = "ours"
    seed: int = 0
    hidden_dim: int | None = None  # None: linear head on raw inputs
    bias: bool = False
    use_dakd: bool = True
    use_dgr: bool = True
    reweight_kd: bool = False
    prior_source: str = "counts"  # counts | gradients


@dataclass
class OutputConfig:
    directory: str = "runs/default"
    trace: bool = False
    label: str | None = None


SECTIONS = {
    "dataset": DatasetConfig,
    "protocol": ProtocolConfig,
    "memory": MemoryConfig,
    "train": TrainConfig,
    "output": OutputConfig,
}


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def data_seed(self):
        return self.train.seed if self.dataset.seed is None else self.dataset.seed

    @property
    def label(self):
        return self.output.label or self.train.method

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, payload):
        payload = payload or {}
        if not isinstance(payload, dict):
            raise ParameterError("config must be a mapping of sections")
        unknown = set(payload) - set(SECTIONS)
        if unknown:
            raise ParameterError(f"unknown config section(s): {', '.join(sorted(unknown))}")
        sections = {}
        for name, kind in SECTIONS.items():
            body = payload.get(name) or {}
            if not isinstance(body, dict):
                raise ParameterError(f"section {name} must be a mapping")
            known = {f.name for f in dataclasses.fields(kind)}
            extra = set(body) - known
            if extra:
                raise ParameterError(f"unknown key(s) in {name}: {', '.join(sorted(extra))}")
            sections[name] = kind(**body)
        cfg = cls(**sections)
        try:
            cfg.validate()
        except TypeError as exc:
            raise ParameterError(f"config value has the wrong type ({exc})") from None
        return cfg

    def replace(self, **sections):
        """Copy with some fields overridden, e.g. ``replace(train={"method": "finetune"})``."""
        payload = self.to_dict()
        for name, updates in sections.items():
            payload[name].update(updates)
        return ExperimentConfig.from_dict(payload)

    def validate(self):
        d, p, m, t = self.dataset, self.protocol, self.memory, self.train

        def need(ok, field_name, msg):
            if not ok:
                raise ParameterError(f"{field_name}: {msg}")

        need(d.source in ("synthetic", "idx", "npz"), "dataset.source", "must be synthetic, idx or npz")
        need(isinstance(d.rho, (int, float)) and d.rho >= 1, "dataset.rho", f"must be >= 1, got {d.rho}")
        need(d.n_max >= 1, "dataset.n_max", "must be >= 1")
        need(d.num_classes >= 2, "dataset.num_classes", "must be >= 2")
        need(d.test_per_class >= 1, "dataset.test_per_class", "must be >= 1")
        if d.source == "synthetic":
            need(d.d_in >= 2, "dataset.d_in", "must be >= 2")
            need(d.separation > 0, "dataset.separation", "must be positive")
        if d.source == "idx":
            for key in ("train_images", "train_labels", "test_images", "test_labels"):
                need(getattr(d, key), f"dataset.{key}", "required for idx source")
        if d.source == "npz":
            need(d.npz_dir, "dataset.npz_dir", "required for npz source")

        need(p.protocol in ("LFS", "LFH"), "protocol.protocol", "must be LFS or LFH")
        need(p.order in ("shuffled", "ordered"), "protocol.order", "must be shuffled or ordered")
        need(p.n_tasks >= 1, "protocol.n_tasks", "must be >= 1")
        c = d.num_classes
        if p.protocol == "LFS":
            need(c % p.n_tasks == 0, "protocol.n_tasks", f"must divide num_classes={c}")
        else:
            need(c % 2 == 0 and (c // 2) % p.n_tasks == 0, "protocol.n_tasks",
                 f"must divide num_classes/2 (num_classes={c})")

        need(m.regime in ("growing", "fixed"), "memory.regime", "must be growing or fixed")
        if m.regime == "growing":
            need(m.n_eps is not None and m.n_eps >= 1, "memory.n_eps", "must be >= 1")
        else:
            need(m.budget is not None and m.budget >= 1, "memory.budget", "must be >= 1")

        need(t.method in METHODS, "train.method", f"must be one of {', '.join(METHODS)}")
        need(t.epochs_per_phase >= 1, "train.epochs_per_phase", "must be >= 1")
        need(t.batch_size >= 1, "train.batch_size", "must be >= 1")
        need(t.lr_init > 0, "train.lr_init", "must be positive")
        need(t.tau > 0, "train.tau", "must be positive")
        need(t.gamma >= 0, "train.gamma", "must be non-negative")
        need(t.lambda_b >= 0, "train.lambda_b", "must be non-negative")
        need(t.prior_source in ("counts", "gradients"), "train.prior_source", "must be counts or gradients")
        need(t.hidden_dim is None or t.hidden_dim >= 1, "train.hidden_dim", "must be >= 1 or null")
        for drop in t.lr_drops:
            need(isinstance(drop, (list, tuple)) and len(drop) == 2 and drop[1] > 0,
                 "train.lr_drops", "entries must be [epoch, divisor] with divisor > 0")


def load_config(path) -> ExperimentConfig:
    try:
        payload = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ParameterError(f"{path}: not valid YAML ({exc})") from None
    except OSError as exc:
        raise ParameterError(f"{path}: {exc.strerror}") from None
    return ExperimentConfig.from_dict(payload)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


# Desk-scale reference setting used by the acceptance suite and scripts/.
# Optimizer settings are the stock defaults; only the data geometry, the
# hidden layer and the exemplar count are pinned here.
REFERENCE_OVERRIDES = {
    "dataset": {"d_in": 32, "separation": 3.0},
    "memory": {"n_eps": 5},
    "train": {"hidden_dim": 64},
}


def reference_config(**sections) -> ExperimentConfig:
    cfg = ExperimentConfig().replace(**REFERENCE_OVERRIDES)
    return cfg.replace(**sections) if sections else cfg
