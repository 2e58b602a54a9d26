"""Cross-entropy, temperature distillation and distribution-aware distillation.

Each loss returns its batch mean together with the gradient of that mean with
respect to the logits (row ``k`` belongs to sample ``k``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .model import grad_ce_logits, log_softmax, regularized_softmax, softmax


@dataclass(frozen=True)
class DakdConfig:
    tau: float = 2.0
    lambda_b: float = 1.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ParameterError(f"tau must be positive, got {self.tau}")
        if self.lambda_b < 0:
            raise ParameterError(f"lambda_b must be non-negative, got {self.lambda_b}")


@dataclass
class LossBreakdown:
    l_ce: float
    l_kd_balanced: float = 0.0
    l_kd_imbalanced: float = 0.0
    l_dakd: float = 0.0
    sigma: float = 1.0
    lam: float = 0.0
    grad_logits_ce: np.ndarray | None = None
    grad_logits_dakd: np.ndarray | None = None  # over old-class columns only

    @property
    def total(self):
        return self.l_ce + self.lam * self.l_dakd


def ce_loss(logits, labels, pi=None, rs_enabled=True):
    """Mean ``-log p_y`` with ``p`` the (optionally prior-offset) softmax.

    ``labels`` are column positions into ``logits``.
    """
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.atleast_1d(np.asarray(labels))
    if len(y) != len(z):
        raise ParameterError(f"{len(y)} labels for {len(z)} logit rows")
    if y.size and (y.min() < 0 or y.max() >= z.shape[1]):
        raise ParameterError(f"labels must lie in [0, {z.shape[1]})")
    if rs_enabled and pi is not None:
        pi = np.asarray(pi, dtype=np.float64)
        if np.any(pi <= 0):
            raise ParameterError("class priors must be strictly positive")
        z = z + np.log(pi)
    logp = log_softmax(z)
    n = len(y)
    loss = -logp[np.arange(n), y].mean()
    grad = grad_ce_logits(np.exp(logp), y) / n
    return float(loss), grad


def kd_loss(student, teacher, tau=2.0, old_cols=None):
    """Distillation ``-mean sum_j q_j log softmax(z/tau)_j`` with ``q = softmax(z_hat/tau)``.

    Softmaxes run over the old-class logits only. When ``old_cols`` is given,
    ``student`` holds all active columns and the returned gradient is full
    width with zeros outside ``old_cols``.
    """
    if not tau > 0:
        raise ParameterError(f"tau must be positive, got {tau}")
    full = np.atleast_2d(np.asarray(student, dtype=np.float64))
    z = full if old_cols is None else full[:, old_cols]
    z_hat = np.atleast_2d(np.asarray(teacher, dtype=np.float64))
    if z.shape != z_hat.shape:
        raise ParameterError(f"student logits {z.shape} and teacher logits {z_hat.shape} differ")
    q = softmax(z_hat / tau)
    logp = log_softmax(z / tau)
    n = len(z)
    loss = float(-(q * logp).sum(axis=1).mean())
    # same softmax routine for both sides so equal logits give an exactly zero gradient
    grad = (softmax(z / tau) - q) / (tau * n)
    if old_cols is not None:
        out = np.zeros_like(full)
        out[:, old_cols] = grad
        grad = out
    return loss, grad


def sigma_from_lost(s) -> float:
    """Normalised entropy of the lost-sample distribution (1 = evenly lost)."""
    s = np.asarray(s, dtype=np.float64)
    if np.any(s < 0):
        raise ParameterError("lost counts must be non-negative")
    total = s.sum()
    if total == 0 or len(s) <= 1:
        return 1.0
    v = s[s > 0] / total
    return float(-(v * np.log(v)).sum() / np.log(len(s)))


def lost_weights(s):
    s = np.asarray(s, dtype=np.float64)
    total = s.sum()
    if total <= 0:
        raise ParameterError("lost counts sum to zero; use the balanced term only")
    return s / total


def calibrated_logits(z, z_hat, s):
    """Blend student and teacher logits per class by its share of lost data."""
    w = lost_weights(s)
    return w * np.asarray(z, dtype=np.float64) + (1.0 - w) * np.asarray(z_hat, dtype=np.float64)


def dakd_loss(student, teacher, s, tau=2.0, sigma=None):
    """Mix of plain distillation and distillation on calibrated logits.

    Returns a LossBreakdown carrying only the distillation fields; its
    ``grad_logits_dakd`` is over the old-class columns of ``student``.
    ``sigma`` may be passed in when it was computed once per phase.
    """
    z = np.atleast_2d(np.asarray(student, dtype=np.float64))
    z_hat = np.atleast_2d(np.asarray(teacher, dtype=np.float64))
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (z.shape[1],):
        raise ParameterError(f"{s.shape} lost counts for {z.shape[1]} old classes")
    if sigma is None:
        sigma = sigma_from_lost(s)
    l_bal, g_bal = kd_loss(z, z_hat, tau)
    if sigma == 1.0:
        return LossBreakdown(0.0, l_bal, 0.0, l_bal, 1.0, grad_logits_dakd=g_bal)
    w = lost_weights(s)
    l_imb, g_imb = kd_loss(w * z + (1.0 - w) * z_hat, z_hat, tau)
    g_imb = g_imb * w  # chain factor dz~/dz
    l_dakd = sigma * l_bal + (1.0 - sigma) * l_imb
    grad = sigma * g_bal + (1.0 - sigma) * g_imb
    return LossBreakdown(0.0, l_bal, l_imb, l_dakd, sigma, grad_logits_dakd=grad)


def lambda_weight(n_old_total, n_new_total, lambda_b=1.0) -> float:
    """Distillation weight ``lambda_b * sqrt(n_old / n_new)``; grows as more data has been seen."""
    if n_new_total <= 0:
        raise ParameterError("n_new_total must be positive")
    if n_old_total < 0:
        raise ParameterError("n_old_total must be non-negative")
    return float(lambda_b * np.sqrt(n_old_total / n_new_total))
