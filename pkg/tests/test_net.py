"""Tests for the hand-rolled feed-forward network and its gradients."""

from __future__ import annotations

import numpy as np
import pytest

from intent_assist.errors import ContractViolation, NumericFault
from intent_assist.net import VectorFieldNet, flatten_grads
from intent_assist.seeding import rng_from


def finite_difference_grad(net, x, y, coords, h=1e-5):
    flat = net.get_flat_params()
    out = {}
    for i in coords:
        p = flat.copy()
        p[i] += h
        net.set_flat_params(p)
        lp, _ = net.mse_loss_and_grad(x, y)
        p[i] -= 2 * h
        net.set_flat_params(p)
        lm, _ = net.mse_loss_and_grad(x, y)
        out[i] = (lp - lm) / (2 * h)
    net.set_flat_params(flat)
    return out


def test_forward_shapes_and_determinism():
    net = VectorFieldNet(5, 3, hidden=(8, 8), seed=1)
    x = rng_from(0).standard_normal((4, 5))
    out1 = net.forward(x)
    out2 = net.forward(x)
    assert out1.shape == (4, 3)
    assert np.array_equal(out1, out2)
    # single-row and batched paths may round differently in BLAS
    row = net.forward(x[0])
    assert row.shape == (3,)
    assert np.allclose(row, out1[0], rtol=1e-12, atol=0)


def test_same_seed_same_init():
    a = VectorFieldNet(5, 3, hidden=(8,), seed=42)
    b = VectorFieldNet(5, 3, hidden=(8,), seed=42)
    assert np.array_equal(a.get_flat_params(), b.get_flat_params())
    c = VectorFieldNet(5, 3, hidden=(8,), seed=43)
    assert not np.array_equal(a.get_flat_params(), c.get_flat_params())


def test_input_width_checked():
    net = VectorFieldNet(5, 3, hidden=(8,), seed=1)
    with pytest.raises(ContractViolation):
        net.forward(np.zeros((2, 4)))


def test_gradient_matches_finite_differences():
    net = VectorFieldNet(6, 4, hidden=(16, 16), seed=3)
    rng = rng_from(10)
    x = rng.standard_normal((5, 6))
    y = rng.standard_normal((5, 4))
    _, grads = net.mse_loss_and_grad(x, y)
    flat_g = flatten_grads(grads)
    coords = rng.choice(net.n_params(), size=80, replace=False)
    fd = finite_difference_grad(net, x, y, coords)
    for i, g_fd in fd.items():
        rel = abs(g_fd - flat_g[i]) / max(abs(g_fd), abs(flat_g[i]), 1e-8)
        assert rel < 1e-4


def test_loss_is_batch_mean_of_squared_norm():
    net = VectorFieldNet(3, 2, hidden=(4,), seed=0)
    x = np.zeros((2, 3))
    pred = net.forward(x)
    y = pred + np.array([[1.0, 0.0], [0.0, 2.0]])
    loss, _ = net.mse_loss_and_grad(x, y)
    assert loss == pytest.approx((1.0 + 4.0) / 2)


def test_duplicating_batch_rows_changes_nothing():
    net = VectorFieldNet(4, 3, hidden=(8,), seed=2)
    rng = rng_from(11)
    x = rng.standard_normal((3, 4))
    y = rng.standard_normal((3, 3))
    loss1, grads1 = net.mse_loss_and_grad(x, y)
    loss2, grads2 = net.mse_loss_and_grad(np.vstack([x, x]), np.vstack([y, y]))
    assert loss2 == pytest.approx(loss1, rel=1e-12)
    assert np.allclose(flatten_grads(grads1), flatten_grads(grads2), atol=1e-12)


def test_numeric_fault_carries_batch_index():
    net = VectorFieldNet(3, 2, hidden=(4,), seed=0)
    net.weights[-1][:] = np.inf
    x = np.zeros((3, 3))
    y = np.zeros((3, 2))
    with np.errstate(invalid="ignore"), pytest.raises(NumericFault) as err:
        net.mse_loss_and_grad(x, y)
    assert err.value.batch_index == 0


def test_sgd_zero_learning_rate_is_identity():
    net = VectorFieldNet(4, 2, hidden=(6,), seed=5)
    before = net.get_flat_params()
    x = rng_from(1).standard_normal((4, 4))
    y = rng_from(2).standard_normal((4, 2))
    _, grads = net.mse_loss_and_grad(x, y)
    net.sgd_step(grads, learning_rate=0.0)
    assert np.array_equal(net.get_flat_params(), before)


def test_sgd_step_reduces_loss():
    net = VectorFieldNet(4, 2, hidden=(12,), seed=5)
    rng = rng_from(3)
    x = rng.standard_normal((16, 4))
    y = rng.standard_normal((16, 2))
    loss0, grads = net.mse_loss_and_grad(x, y)
    net.sgd_step(grads, learning_rate=0.01)
    loss1, _ = net.mse_loss_and_grad(x, y)
    assert loss1 < loss0


def test_flat_params_round_trip():
    net = VectorFieldNet(4, 2, hidden=(6, 5), seed=7)
    flat = net.get_flat_params()
    clone = VectorFieldNet(4, 2, hidden=(6, 5), seed=99)
    clone.set_flat_params(flat)
    x = rng_from(4).standard_normal((3, 4))
    assert np.array_equal(net.forward(x), clone.forward(x))
    with pytest.raises(ContractViolation):
        clone.set_flat_params(flat[:-1])


def test_copy_is_independent():
    net = VectorFieldNet(4, 2, hidden=(6,), seed=8)
    dup = net.copy()
    dup.weights[0][0, 0] += 1.0
    assert net.weights[0][0, 0] != dup.weights[0][0, 0]
