"""Linear classifier head with an optional one-hidden-layer ReLU extractor.

Everything is float64 with hand-written gradients so the finite-difference
oracle can check them to ~1e-9.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ParameterError


@dataclass
class LearnerState:
    """Column ``k`` of ``W`` scores global class ``classes[k]``."""

    W: np.ndarray  # (d_f, c_active)
    classes: list
    b: np.ndarray | None = None
    W1: np.ndarray | None = None  # (d_in, d_f)
    b1: np.ndarray | None = None

    @property
    def c_active(self):
        return self.W.shape[1]

    @property
    def d_f(self):
        return self.W.shape[0]

    @property
    def d_in(self):
        return self.d_f if self.W1 is None else self.W1.shape[0]

    @property
    def has_extractor(self):
        return self.W1 is not None

    def columns(self, class_ids):
        """Map global class ids to column positions."""
        lookup = {k: i for i, k in enumerate(self.classes)}
        try:
            return np.array([lookup[int(k)] for k in np.atleast_1d(class_ids)], dtype=np.int64)
        except KeyError as exc:
            raise ParameterError(f"class {exc.args[0]} has no classifier column") from None

    def params(self):
        out = {"W": self.W}
        if self.b is not None:
            out["b"] = self.b
        if self.W1 is not None:
            out["W1"] = self.W1
            out["b1"] = self.b1
        return out

    def is_finite(self):
        return all(np.isfinite(p).all() for p in self.params().values())

    def snapshot(self) -> "LearnerState":
        """Frozen deep copy, used as the distillation teacher."""
        snap = copy.deepcopy(self)
        for p in snap.params().values():
            p.setflags(write=False)
        return snap

    def to_json(self):
        return {
            "classes": [int(k) for k in self.classes],
            "params": {
                name: {"shape": list(p.shape), "values": p.ravel().tolist()}
                for name, p in self.params().items()
            },
        }

    @classmethod
    def from_json(cls, payload):
        arrays = {
            name: np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
            for name, entry in payload["params"].items()
        }
        return cls(classes=list(payload["classes"]), **arrays)


def init_state(d_in, classes, rng, d_f=None, bias=False) -> LearnerState:
    """``d_f=None`` means no extractor (the head reads raw inputs)."""
    if d_f is None:
        W1 = b1 = None
        d_f = d_in
    else:
        bound = 1.0 / np.sqrt(d_in)
        W1 = rng.uniform(-bound, bound, size=(d_in, d_f))
        b1 = rng.uniform(-bound, bound, size=d_f)
    state = LearnerState(np.zeros((d_f, 0)), [], np.zeros(0) if bias else None, W1, b1)
    add_classes(state, classes, rng)
    return state


def add_classes(state: LearnerState, new_classes, rng):
    """Append freshly initialised columns for ``new_classes`` in place."""
    new_classes = [int(k) for k in new_classes if int(k) not in state.classes]
    bound = 1.0 / np.sqrt(state.d_f)
    cols = rng.uniform(-bound, bound, size=(state.d_f, len(new_classes)))
    state.W = np.concatenate([state.W, cols], axis=1)
    if state.b is not None:
        state.b = np.concatenate([state.b, np.zeros(len(new_classes))])
    state.classes = state.classes + new_classes
    return state


def extract(state: LearnerState, X):
    """Return (features, hidden pre-activation or None)."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != state.d_in:
        raise ParameterError(f"input dimension {X.shape[-1]} does not match d_in={state.d_in}")
    if state.W1 is None:
        return X, None
    pre = X @ state.W1 + state.b1
    return np.maximum(pre, 0.0), pre


def forward(state: LearnerState, x):
    """Logits ``W^T f(x) (+ b)`` for one input vector or a batch of rows."""
    feats, _ = extract(state, x)
    z = feats @ state.W
    if state.b is not None:
        z = z + state.b
    return z


def log_softmax(z, axis=-1):
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax(z, axis=-1):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def regularized_softmax(z, pi=None, enabled=True):
    """Softmax of ``z + log(pi)``; plain softmax when disabled or ``pi`` is None."""
    if not enabled or pi is None:
        return softmax(z)
    pi = np.asarray(pi, dtype=np.float64)
    if np.any(pi <= 0):
        raise ParameterError("class priors must be strictly positive")
    if pi.shape[-1] != np.shape(z)[-1]:
        raise ParameterError(f"{pi.shape[-1]} priors for {np.shape(z)[-1]} logits")
    return softmax(np.asarray(z) + np.log(pi))


def class_priors(counts, n_eps=None, phase=0):
    """Per-class priors from training counts.

    In the first phase (``phase == 0``) priors are proportional to the counts.
    Later phases cap every count at the per-class exemplar budget first.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 0):
        raise ParameterError("counts must be non-negative")
    if phase > 0:
        if n_eps is None:
            raise ParameterError("n_eps is required after the first phase")
        counts = np.minimum(counts, n_eps)
    total = counts.sum()
    if total <= 0:
        raise ParameterError("class counts are all zero")
    return counts / total


def grad_ce_logits(p, y):
    """d(-log p_y)/dz: ``p - onehot(y)``. Works row-wise on batches."""
    g = np.array(p, dtype=np.float64, copy=True)
    if g.ndim == 1:
        g[y] -= 1.0
    else:
        g[np.arange(len(g)), np.asarray(y)] -= 1.0
    return g


def grad_fc(x_feat, g_logits, W=None):
    """Outer product ``x_feat g^T`` and, if ``W`` is given, the feature gradient ``W g``."""
    x_feat = np.asarray(x_feat, dtype=np.float64)
    g_logits = np.asarray(g_logits, dtype=np.float64)
    if x_feat.ndim != 1 or g_logits.ndim != 1:
        raise ParameterError("grad_fc expects one feature vector and one logit gradient")
    gW = np.outer(x_feat, g_logits)
    if W is None:
        return gW, None
    if W.shape != gW.shape:
        raise ParameterError(f"W shape {W.shape} does not match gradient shape {gW.shape}")
    return gW, W @ g_logits


def backward(state: LearnerState, X, dZ, feats=None, pre=None):
    """Parameter gradients for an arbitrary upstream logit gradient ``dZ``."""
    if feats is None:
        feats, pre = extract(state, X)
    grads = {"W": feats.T @ dZ}
    if state.b is not None:
        grads["b"] = dZ.sum(axis=0)
    if state.W1 is not None:
        dH = (dZ @ state.W.T) * (pre > 0)  # relu subgradient at 0 is 0
        grads["W1"] = np.asarray(X).T @ dH
        grads["b1"] = dH.sum(axis=0)
    return grads


def finite_difference_check(loss_fn, params, analytic, epsilon=1e-5, tolerance=None):
    """Max relative error between ``analytic`` and central differences of ``loss_fn``.

    ``params`` maps names to arrays that ``loss_fn()`` reads; each entry is
    perturbed in place and restored. Entries whose true gradient is tiny are
    compared against ``1e-6 * max|analytic|`` instead of their own magnitude.
    """
    worst = 0.0
    scale = max(max(np.abs(g).max(initial=0.0) for g in analytic.values()), 1e-12)
    for name, p in params.items():
        a = np.asarray(analytic[name], dtype=np.float64)
        if a.shape != p.shape:
            raise ParameterError(f"gradient for {name} has shape {a.shape}, expected {p.shape}")
        flat = p.reshape(-1)
        numeric = np.empty(flat.size)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + epsilon
            f_plus = loss_fn()
            flat[i] = keep - epsilon
            f_minus = loss_fn()
            flat[i] = keep
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericalError(f"non-finite loss while perturbing {name}[{i}]")
            numeric[i] = (f_plus - f_minus) / (2 * epsilon)
        a = a.reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-6 * scale)
        worst = max(worst, float((np.abs(a - numeric) / denom).max(initial=0.0)))
    if tolerance is not None and worst > tolerance:
        raise AssertionError(f"gradient check failed: max relative error {worst:.3e} > {tolerance:.1e}")
    return worst
