"""Class-incremental training loop.

One ``ExperimentRun`` walks the task schedule phase by phase: train on new
data plus replayed exemplars, evaluate on all seen classes, snapshot the
teacher, then refresh exemplar memory.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import losses
from .config import ExperimentConfig, TrainConfig
from .datagen import (
    ImbalanceProfile,
    LongTailDataset,
    load_idx,
    make_profile_counts,
    make_synthetic_gaussian,
    subsample_longtail,
)
from .errors import NumericalError, ParameterError
from .memory import ExemplarStore, replay_union, update_store
from .metrics import AccMatrix, MetricsLog, average_accuracy, forgetting, per_class_forgetting, weight_norm_stats
from .model import LearnerState, add_classes, backward, class_priors, extract, init_state
from .protocol import TaskSchedule, build_schedule, phase_view, seen_classes
from .reweight import (
    GradAccumulator,
    ReweightRatios,
    accumulate,
    alpha_ratios,
    backbone_update,
    beta_ratio,
    dgr_update,
    task_ratios,
)

TRACE_HEADER = ("phase", "epoch", "iteration", "class", "phi", "alpha", "r", "beta")


def lr_at(cfg: TrainConfig, epoch: int) -> float:
    """Step schedule: divide by each divisor whose drop epoch has been reached."""
    lr = cfg.lr_init
    for at, divisor in cfg.lr_drops:
        if epoch >= at:
            lr /= divisor
    return lr


def load_npz(path, split_tag):
    with np.load(path) as z:
        return LongTailDataset(z["features"], z["labels"], int(z["num_classes"]), split_tag)


def build_datasets(cfg: ExperimentConfig):
    d = cfg.dataset
    counts = make_profile_counts(ImbalanceProfile(d.rho, d.n_max, d.num_classes))
    if d.source == "synthetic":
        return make_synthetic_gaussian(
            d.num_classes, d.d_in, counts, d.separation, cfg.data_seed, d.test_per_class, d.offset
        )
    if d.source == "npz":
        root = Path(d.npz_dir)
        return load_npz(root / "train.npz", "train"), load_npz(root / "test.npz", "test")
    full_train = load_idx(d.train_images, d.train_labels, d.num_classes, "train")
    full_test = load_idx(d.test_images, d.test_labels, d.num_classes, "test")
    train = subsample_longtail(full_train, counts, cfg.data_seed)
    test = subsample_longtail(full_test, [d.test_per_class] * d.num_classes, cfg.data_seed + 1)
    return train, test


@dataclass
class ExperimentRun:
    config: ExperimentConfig
    schedule: TaskSchedule
    train: LongTailDataset
    test: LongTailDataset
    store: ExemplarStore
    learner: LearnerState | None = None
    teacher: LearnerState | None = None
    acc: AccMatrix | None = None
    log: MetricsLog = field(default_factory=MetricsLog)
    trace: list = field(default_factory=list)
    class_history: dict = field(default_factory=dict)
    grad_history: list = field(default_factory=list)
    phases_done: int = 0
    teacher_checks: list = field(default_factory=list)

    def __post_init__(self):
        if self.acc is None:
            self.acc = AccMatrix(self.schedule.n_phases)
        seq = np.random.SeedSequence(self.config.train.seed)
        init_seq, *phase_seqs = seq.spawn(1 + self.schedule.n_phases)
        self._init_rng = np.random.default_rng(init_seq)
        self._phase_seqs = phase_seqs


def prepare_run(cfg: ExperimentConfig, datasets=None) -> ExperimentRun:
    train, test = datasets if datasets is not None else build_datasets(cfg)
    p = cfg.protocol
    schedule = build_schedule(train.num_classes, p.protocol, p.n_tasks, p.order, train.class_counts, p.seed)
    m = cfg.memory
    store = ExemplarStore(m.regime, m.n_eps, m.budget)
    return ExperimentRun(cfg, schedule, train, test, store)


def evaluate(learner: LearnerState, test: LongTailDataset, classes):
    """Top-1 accuracy on ``classes`` using raw logits over the active columns.

    Returns (accuracy, {class id: accuracy}).
    """
    view = test.restrict(classes)
    if len(view) == 0:
        raise ParameterError("empty test set")
    feats, _ = extract(learner, view.features)
    z = feats @ learner.W
    if learner.b is not None:
        z = z + learner.b
    pred = np.asarray(learner.classes)[z.argmax(axis=1)]
    hit = pred == view.labels
    per_class = {int(k): float(hit[view.labels == k].mean()) for k in classes if (view.labels == k).any()}
    return float(hit.mean()), per_class


def _fc(learner):
    """Classifier weights with the bias stacked as the last row, if present."""
    if learner.b is None:
        return learner.W
    return np.vstack([learner.W, learner.b])


def _set_fc(learner, Wa):
    if learner.b is None:
        learner.W = Wa
    else:
        learner.W, learner.b = Wa[:-1], Wa[-1]


def _with_ones(feats, learner):
    if learner.b is None:
        return feats
    return np.hstack([feats, np.ones((len(feats), 1))])


def run_phase(run: ExperimentRun, t: int) -> ExperimentRun:
    cfg = run.config.train
    if t != run.phases_done:
        raise ParameterError(f"phase {t} requested but {run.phases_done} phases completed")
    schedule = run.schedule
    new_classes = list(schedule.phases[t])
    old_classes = seen_classes(schedule, t - 1) if t > 0 else []
    seen = old_classes + new_classes

    if run.learner is None:
        run.learner = init_state(run.train.d_in, new_classes, run._init_rng, cfg.hidden_dim, cfg.bias)
    else:
        add_classes(run.learner, new_classes, run._init_rng)
    learner = run.learner

    phase_data = phase_view(schedule, run.train, t)
    data = replay_union(run.store, phase_data)
    y_cols = learner.columns(data.labels)
    old_cols = learner.columns(old_classes) if old_classes else np.zeros(0, np.int64)
    new_cols = learner.columns(new_classes)
    all_cols = np.arange(learner.c_active)

    method = cfg.method
    ours = method == "ours"
    distill = t > 0 and method != "finetune"
    rs_on = ours and cfg.rs_enabled

    full_counts = {k: run.train.class_counts[k] for k in seen}
    effective = [full_counts[k] if k in new_classes else run.store.retained(k) for k in learner.classes]
    cap = run.store.per_class_cap(len(seen))
    priors = class_priors(effective, cap, t) if rs_on else None

    lam = sigma = 0.0
    s = None
    if distill:
        n_old = sum(full_counts[k] for k in old_classes)
        n_new = sum(full_counts[k] for k in new_classes)
        lam = losses.lambda_weight(n_old, n_new, cfg.lambda_b)
        lost = run.store.lost_counts
        s = np.array([lost[k] for k in old_classes], dtype=np.float64)
        sigma = losses.sigma_from_lost(s) if (ours and cfg.use_dakd) else 1.0
        n_obs_old, n_obs_total = n_old, n_old + n_new
    run.log.add(t, "sigma", "all", sigma if distill else 1.0)
    run.log.add(t, "lambda", "all", lam)

    acc = GradAccumulator.zeros(learner.c_active)
    rng = np.random.default_rng(run._phase_seqs[t])
    trace_on = run.config.output.trace
    n = len(data)
    for epoch in range(cfg.epochs_per_phase):
        eta = lr_at(cfg, epoch)
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            X, y = data.features[idx], y_cols[idx]
            feats, pre = extract(learner, X)
            fa = _with_ones(feats, learner)
            Wa = _fc(learner)
            Z = fa @ Wa

            if rs_on and cfg.prior_source == "gradients" and (acc.phi > 0).all():
                priors = acc.phi / acc.phi.sum()
            l_ce, G_ce = losses.ce_loss(Z, y, priors, rs_on)

            G_kd = None
            l_kd = 0.0
            if distill:
                Z_hat = _teacher_logits(run.teacher, X)
                if ours and cfg.use_dakd:
                    part = losses.dakd_loss(Z[:, old_cols], Z_hat, s, cfg.tau, sigma)
                    l_kd, g_old = part.l_dakd, part.grad_logits_dakd
                else:
                    l_kd, g_old = losses.kd_loss(Z[:, old_cols], Z_hat, cfg.tau)
                G_kd = np.zeros_like(Z)
                G_kd[:, old_cols] = g_old

            if not (np.isfinite(l_ce) and np.isfinite(l_kd)):
                raise NumericalError(
                    f"non-finite loss in phase {t}, epoch {epoch}",
                    {
                        "phase": t,
                        "epoch": epoch,
                        "iteration": acc.iteration,
                        "l_ce": l_ce,
                        "l_kd": l_kd,
                        "weight_norms": np.linalg.norm(learner.W, axis=0).tolist(),
                    },
                )

            gW_ce = fa.T @ G_ce
            gW_kd = fa.T @ G_kd if distill else None
            accumulate(acc, gW_ce)

            # extractor gradient uses the pre-update classifier
            ext_grads = None
            if learner.has_extractor:
                dZ = G_ce if not distill else G_ce + lam * G_kd
                ext_grads = backward(learner, X, dZ, feats, pre)

            if ours:
                if distill and cfg.use_dgr:
                    alpha = alpha_ratios(acc.phi, [old_cols, new_cols])
                    r = task_ratios(acc.phi, old_cols, new_cols, n_obs_old, n_obs_total, cfg.gamma)
                else:
                    alpha = alpha_ratios(acc.phi, [all_cols])
                    r = np.ones(learner.c_active)
                beta = 0.0
                kd_step = None
                if distill:
                    kd_step = gW_kd * (alpha * r) if cfg.reweight_kd else gW_kd
                    beta = beta_ratio(gW_ce, alpha, r, kd_step)
                ratios = ReweightRatios(alpha, r, beta, cfg.gamma, eta)
                if trace_on:
                    _check_trace_invariants(gW_ce, kd_step, ratios, t, acc.iteration)
                    for k, col in zip(learner.classes, all_cols):
                        run.trace.append(
                            (t, epoch, acc.iteration, k, acc.phi[col], alpha[col], r[col], beta)
                        )
                _set_fc(learner, dgr_update(Wa, gW_ce, kd_step, ratios))
            else:
                step = gW_ce if not distill else gW_ce + lam * gW_kd
                Wa = Wa - eta * step
                if not np.isfinite(Wa).all():
                    raise NumericalError(f"non-finite classifier update in phase {t}", {"phase": t})
                _set_fc(learner, Wa)

            if ext_grads is not None:
                upd = backbone_update({"W1": learner.W1, "b1": learner.b1}, ext_grads, eta)
                learner.W1, learner.b1 = upd["W1"], upd["b1"]

    _finish_phase(run, t, acc, seen)
    return run


def _teacher_logits(teacher, X):
    feats, _ = extract(teacher, X)
    z = feats @ teacher.W
    return z if teacher.b is None else z + teacher.b


def _check_trace_invariants(gW_ce, kd_step, ratios, t, it):
    a, r = ratios.alpha, ratios.r
    if not ((a > 0).all() and (a <= 1).all() and (r > 0).all() and (r <= 1).all()):
        raise AssertionError(f"phase {t} iteration {it}: alpha or r left (0, 1]")
    if kd_step is not None and np.linalg.norm(kd_step) > 0:
        lhs = np.linalg.norm(ratios.beta * kd_step)
        rhs = np.linalg.norm(gW_ce * (a * r))
        if abs(lhs - rhs) > 1e-12:
            raise AssertionError(f"phase {t} iteration {it}: |beta*kd| - |ce| = {lhs - rhs:.3e}")


def _finish_phase(run: ExperimentRun, t: int, acc: GradAccumulator, seen):
    learner = run.learner
    schedule = run.schedule
    a_seen, per_class = evaluate(learner, run.test, seen)
    per_task = [evaluate(learner, run.test, schedule.phases[u])[0] for u in range(t + 1)]
    run.acc.record(t, per_task, a_seen)

    log = run.log
    log.add(t, "acc_seen", "all", a_seen)
    for u, v in enumerate(per_task):
        log.add(t, "acc_task", u, v)
    for k in seen:
        log.add(t, "class_acc", k, per_class[k])
        run.class_history.setdefault(k, []).append(per_class[k])
    norms, mean, std = weight_norm_stats(learner.W)
    log.add_vector(t, "weight_norm", learner.classes, norms)
    log.add(t, "weight_norm_mean", "all", mean)
    log.add(t, "weight_norm_std", "all", std)
    grad_mag = acc.average()
    log.add_vector(t, "grad_mag", learner.classes, grad_mag)
    run.grad_history.append(dict(zip(learner.classes, grad_mag.tolist())))

    run.teacher = learner.snapshot()
    run.teacher_checks.append(t)
    feature_fn = lambda x: extract(learner, x)[0]  # noqa: E731
    run.store = update_store(run.store, phase_view(schedule, run.train, t), feature_fn, t)
    for k in schedule.phases[t]:
        log.add(t, "retained", k, run.store.retained(k))
    run.phases_done = t + 1

    if run.phases_done == schedule.n_phases:
        log.add(t, "ACC", "all", average_accuracy(run.acc))
        if schedule.n_phases >= 2:
            log.add(t, "forgetting", "all", forgetting(run.acc))
        for k, f in sorted(per_class_forgetting(run.class_history).items()):
            log.add(t, "class_forgetting", k, f)


def run_experiment(cfg: ExperimentConfig, datasets=None) -> ExperimentRun:
    run = prepare_run(cfg, datasets)
    start = time.perf_counter()
    # divergence is caught explicitly as NumericalError; silence the duplicate warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(run.schedule.n_phases):
            run_phase(run, t)
    run.wall_clock = time.perf_counter() - start
    return run


def summary(run: ExperimentRun) -> dict:
    out = {
        "label": run.config.label,
        "a_seen": list(run.acc.a_seen),
        "ACC": average_accuracy(run.acc),
    }
    if run.schedule.n_phases >= 2:
        out["forgetting"] = forgetting(run.acc)
    return out
