"""Per-class gradient accumulation and the reweighted classifier update.

Column ``j`` of every matrix here is the classifier weight vector of the
``j``-th active class. Cross-entropy gradients are scaled per class by a
class-balance ratio ``alpha`` (group minimum of accumulated magnitude over
the class's own) and a task-balance ratio ``r`` (old vs. new classes). The
distillation gradient is never scaled per class; a single scalar ``beta``
matches its Frobenius norm to that of the reweighted cross-entropy gradient.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ParameterError


@dataclass
class GradAccumulator:
    phi: np.ndarray
    iteration: int = 0

    @classmethod
    def zeros(cls, c_active):
        return cls(np.zeros(c_active))

    def average(self):
        """Mean per-iteration column-gradient magnitude so far."""
        return self.phi / max(self.iteration, 1)


@dataclass
class ReweightRatios:
    alpha: np.ndarray
    r: np.ndarray
    beta: float = 0.0
    gamma: float = 1.0
    eta: float = 0.1
    extras: dict = field(default_factory=dict)


def column_norms(M):
    return np.sqrt((np.asarray(M) ** 2).sum(axis=0))


def accumulate(acc: GradAccumulator, grad_ce_fc) -> GradAccumulator:
    grad_ce_fc = np.asarray(grad_ce_fc)
    if grad_ce_fc.shape[1] != len(acc.phi):
        raise ParameterError(f"gradient has {grad_ce_fc.shape[1]} columns, accumulator {len(acc.phi)}")
    norms = column_norms(grad_ce_fc)
    if not np.isfinite(norms).all():
        raise NumericalError("non-finite cross-entropy gradient", {"column_norms": norms.tolist()})
    acc.phi = acc.phi + norms
    acc.iteration += 1
    return acc


_TINY = np.finfo(np.float64).smallest_subnormal


def _fro(x):
    # Frobenius norm without squaring tiny entries into underflow
    m = np.abs(x).max(initial=0.0)
    return 0.0 if m == 0 else float(m * np.linalg.norm(x / m))


def alpha_ratios(phi, groups) -> np.ndarray:
    """Within each group of columns: ``min(phi over group) / phi_j`` (1 where phi_j is 0)."""
    phi = np.asarray(phi, dtype=np.float64)
    alpha = np.ones_like(phi)
    for g in groups:
        g = np.asarray(g, dtype=np.int64)
        if g.size == 0:
            continue
        vals = phi[g]
        positive = vals > 0
        if not positive.any():
            continue
        # a zero entry makes the group minimum zero; treat unsampled classes as absent
        lo = vals[positive].min()
        # the ratio can underflow when phi spans the subnormal range; keep alpha > 0
        alpha[g[positive]] = np.maximum(lo / vals[positive], _TINY)
    return alpha


def task_ratios(phi, old_cols, new_cols, n_observed_old, n_observed_total, gamma=1.0) -> np.ndarray:
    """Old classes get ``min(1, 1/r_phi)``, new classes ``min(1, r_phi * exp(-gamma * old/total))``,
    where ``r_phi`` is mean accumulated magnitude of old over new classes."""
    old_cols = np.asarray(old_cols, dtype=np.int64)
    new_cols = np.asarray(new_cols, dtype=np.int64)
    if old_cols.size == 0 or new_cols.size == 0:
        raise ParameterError("task ratios need both old and new classes; use alpha_ratios alone")
    if n_observed_total <= 0 or n_observed_old < 0:
        raise ParameterError("observed data totals must be positive")
    phi = np.asarray(phi, dtype=np.float64)
    mean_old = phi[old_cols].mean()
    mean_new = phi[new_cols].mean()
    r_phi = 1.0 if mean_new == 0 else mean_old / mean_new
    r = np.ones_like(phi)
    r[old_cols] = 1.0 if r_phi == 0 else min(1.0, 1.0 / r_phi)
    attenuation = np.exp(-gamma * n_observed_old / n_observed_total)
    r[new_cols] = min(1.0, r_phi * attenuation)
    # r_phi == 0 (old classes not yet sampled) would zero the new-class step
    if r_phi == 0:
        r[new_cols] = 1.0
    return r


def beta_ratio(grad_ce_fc, alpha, r, grad_dakd_fc) -> float:
    """Scalar that gives ``beta * grad_dakd`` the Frobenius norm of the reweighted CE gradient."""
    grad_ce_fc = np.asarray(grad_ce_fc)
    grad_dakd_fc = np.asarray(grad_dakd_fc)
    if grad_ce_fc.shape != grad_dakd_fc.shape:
        raise ParameterError(f"shapes differ: {grad_ce_fc.shape} vs {grad_dakd_fc.shape}")
    denom = _fro(grad_dakd_fc)
    if denom == 0:
        return 0.0
    beta = _fro(grad_ce_fc * (alpha * r)) / denom
    # a KD gradient this small is numerically absent
    return beta if np.isfinite(beta) else 0.0


def dgr_update(W, grad_ce_fc, grad_dakd_fc, ratios: ReweightRatios):
    """One reweighted SGD step on the classifier.

    ``grad_dakd_fc`` is None in the first phase; otherwise it has zero
    columns for the new classes.
    """
    W = np.asarray(W)
    step = grad_ce_fc * (ratios.alpha * ratios.r)
    if grad_dakd_fc is not None:
        if grad_dakd_fc.shape != W.shape:
            raise ParameterError(f"distillation gradient {grad_dakd_fc.shape} vs W {W.shape}")
        step = step + ratios.beta * grad_dakd_fc
    new_W = W - ratios.eta * step
    if not np.isfinite(new_W).all():
        raise NumericalError("non-finite classifier update", {"beta": ratios.beta})
    return new_W


def backbone_update(params: dict, grads: dict, eta: float) -> dict:
    """Plain SGD on the feature extractor with the unweighted total-loss gradient."""
    out = {}
    for name, p in params.items():
        new = p - eta * grads[name]
        if not np.isfinite(new).all():
            raise NumericalError(f"non-finite extractor update for {name}")
        out[name] = new
    return out
