import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from gradreweight.errors import NumericalError, ParameterError
from gradreweight.reweight import (
    GradAccumulator,
    ReweightRatios,
    accumulate,
    alpha_ratios,
    backbone_update,
    beta_ratio,
    dgr_update,
    task_ratios,
)

pos = st.floats(1e-6, 1e3, allow_nan=False)


def test_accumulate_examples():
    acc = GradAccumulator.zeros(2)
    accumulate(acc, np.zeros((3, 2)))
    assert acc.phi.tolist() == [0.0, 0.0]
    acc = GradAccumulator.zeros(2)
    M = np.array([[3.0, 0.0], [0.0, 4.0]])
    accumulate(acc, M)
    assert acc.phi.tolist() == [3.0, 4.0]
    accumulate(acc, M)
    assert acc.phi.tolist() == [6.0, 8.0] and acc.iteration == 2


def test_accumulate_rejects_nan():
    with pytest.raises(NumericalError):
        accumulate(GradAccumulator.zeros(1), np.array([[np.nan]]))


def test_alpha_examples():
    np.testing.assert_allclose(alpha_ratios([10.0, 2.0], [[0, 1]]), [0.2, 1.0])
    np.testing.assert_array_equal(alpha_ratios([3.0, 3.0, 3.0], [[0, 1, 2]]), [1.0, 1.0, 1.0])
    np.testing.assert_array_equal(alpha_ratios([10.0, 2.0], [[0], [1]]), [1.0, 1.0])


def test_alpha_ignores_unsampled_columns():
    np.testing.assert_allclose(alpha_ratios([0.0, 4.0, 2.0], [[0, 1, 2]]), [1.0, 0.5, 1.0])


def test_task_ratio_examples():
    phi = np.array([4.0, 4.0, 2.0, 2.0])  # r_phi = 2
    r = task_ratios(phi, [0, 1], [2, 3], 50, 100, gamma=1.0)
    assert r[0] == 0.5 and r[2] == 1.0  # 2 e^-0.5 > 1
    r = task_ratios(np.ones(4), [0, 1], [2, 3], 30, 100, gamma=0.0)
    np.testing.assert_array_equal(r, [1, 1, 1, 1])
    phi = np.array([1.0, 4.0])  # r_phi = 0.25
    r = task_ratios(phi, [0], [1], 80, 100, gamma=1.0)
    assert r[0] == 1.0
    assert r[1] == pytest.approx(0.25 * math.exp(-0.8))
    assert r[1] == pytest.approx(0.112, abs=5e-4)


def test_beta_examples():
    ce = np.array([[3.0, 0.0]])
    kd = np.array([[0.0, 6.0]])
    assert beta_ratio(ce, np.ones(2), np.ones(2), kd) == 0.5
    assert beta_ratio(ce, np.ones(2), np.ones(2), np.zeros((1, 2))) == 0.0


@given(arrays(np.float64, (4, 3), elements=st.floats(-5, 5)), arrays(np.float64, (4, 3), elements=st.floats(-5, 5)),
       arrays(np.float64, 3, elements=st.floats(0.01, 1)), arrays(np.float64, 3, elements=st.floats(0.01, 1)))
def test_beta_balances_norms(ce, kd, alpha, r):
    beta = beta_ratio(ce, alpha, r, kd)
    kd_norm = math.hypot(*kd.ravel())
    rhs = math.hypot(*(ce * (alpha * r)).ravel())
    if kd_norm == 0 or math.isinf(rhs / kd_norm):
        assert beta == 0.0
    else:
        assert beta * kd_norm == pytest.approx(rhs, rel=1e-12, abs=1e-300)


@given(arrays(np.float64, st.integers(1, 10), elements=st.floats(0, 1e3)), st.integers(1, 4))
def test_alpha_in_unit_interval(phi, n_groups):
    groups = np.array_split(np.arange(len(phi)), n_groups)
    a = alpha_ratios(phi, groups)
    assert ((a > 0) & (a <= 1)).all()
    for g in groups:
        if (phi[g] > 0).any():
            assert a[g][phi[g] > 0].max() == 1.0


@given(arrays(np.float64, 6, elements=st.floats(0, 1e3)), st.integers(1, 5), st.integers(0, 1000),
       st.integers(1, 1000), st.floats(0, 5))
def test_task_ratios_in_unit_interval(phi, split, n_old, n_new, gamma):
    r = task_ratios(phi, list(range(split)), list(range(split, 6)), n_old, n_old + n_new, gamma)
    assert ((r > 0) & (r <= 1)).all()


def test_dgr_update_example():
    W = np.zeros((2, 1))
    ratios = ReweightRatios(np.array([0.5]), np.array([1.0]), beta=1.0, eta=0.1)
    out = dgr_update(W, np.array([[2.0], [0.0]]), np.array([[0.0], [1.0]]), ratios)
    np.testing.assert_allclose(out, [[-0.1], [-0.1]])


@given(arrays(np.float64, (3, 4), elements=st.floats(-5, 5)), arrays(np.float64, (3, 4), elements=st.floats(-5, 5)),
       st.floats(1e-4, 1))
def test_dgr_reduces_to_sgd(W, g, eta):
    ratios = ReweightRatios(np.ones(4), np.ones(4), eta=eta)
    assert np.abs(dgr_update(W, g, None, ratios) - (W - eta * g)).max() <= 1e-12
    assert np.array_equal(dgr_update(W, np.zeros_like(W), None, ratios), W)


def test_dgr_balanced_degenerates_to_scaled_sgd(rng):
    # identical phi and gamma=0: alpha = r = 1, beta matches norms
    W = rng.standard_normal((3, 4))
    ce, kd = rng.standard_normal((2, 3, 4))
    phi = np.full(4, 2.5)
    alpha = alpha_ratios(phi, [[0, 1], [2, 3]])
    r = task_ratios(phi, [0, 1], [2, 3], 100, 200, gamma=0.0)
    beta = beta_ratio(ce, alpha, r, kd)
    out = dgr_update(W, ce, kd, ReweightRatios(alpha, r, beta, eta=0.1))
    expected = W - 0.1 * (ce + np.linalg.norm(ce) / np.linalg.norm(kd) * kd)
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-12)


def test_backbone_update_examples():
    p = {"W1": np.ones((2, 2)), "b1": np.zeros(2)}
    zero = {"W1": np.zeros((2, 2)), "b1": np.zeros(2)}
    out = backbone_update(p, zero, 0.3)
    assert all(np.array_equal(out[k], p[k]) for k in p)
    g = {"W1": np.full((2, 2), 2.0), "b1": np.ones(2)}
    d1 = backbone_update(p, g, 0.1)["W1"] - p["W1"]
    d2 = backbone_update(p, g, 0.2)["W1"] - p["W1"]
    np.testing.assert_allclose(d2, 2 * d1)


def test_task_ratios_need_both_groups():
    with pytest.raises(ParameterError):
        task_ratios(np.ones(2), [], [0, 1], 0, 1)
