"""
Gradient checks for the reverse-mode engine against central differences
"""

import numpy as np
import pytest

from learning import autodiff as ad
from learning.autodiff import Tensor
from utils.errors import UnsupportedOperatorError


def numeric_grad(fn, leaf: Tensor, step: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(leaf.data)
    for idx in np.ndindex(leaf.data.shape):
        original = leaf.data[idx]
        leaf.data[idx] = original + step
        plus = float(fn().data)
        leaf.data[idx] = original - step
        minus = float(fn().data)
        leaf.data[idx] = original
        grad[idx] = (plus - minus) / (2 * step)
    return grad


def check(fn, *leaves):
    for leaf in leaves:
        leaf.zero_grad()
    fn().backward()
    for leaf in leaves:
        np.testing.assert_allclose(leaf.grad, numeric_grad(fn, leaf), atol=1e-6, rtol=1e-5)


@pytest.fixture
def weights(rng):
    return Tensor(rng.normal(size=(2, 3, 4)))


def leaf(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def test_add_mul_broadcast(rng, weights):
    a, b = leaf(rng, 2, 3, 4), leaf(rng, 1, 1, 4)
    check(lambda: ad.reduce_sum(ad.mul(ad.add(ad.mul(a, b), b), weights)), a, b)


def test_affine(rng, weights):
    x, W, bias = leaf(rng, 2, 3, 5), leaf(rng, 5, 4), leaf(rng, 4)
    check(lambda: ad.reduce_sum(ad.mul(ad.affine(x, W, bias), weights)), x, W, bias)


def test_activations(rng, weights):
    x = leaf(rng, 2, 3, 4)
    check(lambda: ad.reduce_sum(ad.mul(ad.shifted_softplus(x), weights)), x)
    check(lambda: ad.reduce_sum(ad.mul(ad.relu(ad.scale(x, 2.0)), weights)), x)


def test_shifted_softplus_at_zero():
    assert float(ad.shifted_softplus(Tensor(0.0)).data) == pytest.approx(0.0)


def test_concat_reshape_sum(rng):
    a, b = leaf(rng, 2, 3), leaf(rng, 2, 5)
    target = rng.normal(size=(2, 2, 4))
    check(lambda: ad.reduce_sum(ad.mul(ad.reshape(ad.concat([a, b]), (2, 2, 4)), target)), a, b)
    check(lambda: ad.reduce_sum(ad.mul(ad.reduce_sum(a, axis=1), np.array([1.0, -2.0]))), a)


def test_gather_repeated_rows(rng):
    x = leaf(rng, 2, 4, 3)
    batch_index = np.array([[0, 0, 0], [1, 1, 1]])
    rows = np.array([[0, 2, 2], [3, 1, 0]])
    target = rng.normal(size=(2, 3, 3))
    check(lambda: ad.reduce_sum(ad.mul(ad.gather(x, batch_index, rows), target)), x)


def test_masked_mse(rng):
    pred = leaf(rng, 2, 3)
    target = rng.normal(size=(2, 3))
    mask = np.array([[1.0, 1.0, 0.0], [1.0, 0.0, 0.0]])
    loss = ad.masked_mse(pred, target, mask)
    expected = ((pred.data - target) ** 2 * mask).sum() / 3.0
    assert float(loss.data) == pytest.approx(expected)
    check(lambda: ad.masked_mse(pred, target, mask), pred)
    assert pred.grad[0, 2] == 0.0


def test_shared_node_accumulates(rng):
    x = leaf(rng, 3)
    y = ad.mul(x, x)
    ad.reduce_sum(ad.add(y, y)).backward()
    np.testing.assert_allclose(x.grad, 4.0 * x.data)


def test_backward_needs_scalar(rng):
    with pytest.raises(ValueError):
        ad.mul(leaf(rng, 3), 2.0).backward()


def test_constants_get_no_gradient(rng):
    x = leaf(rng, 3)
    c = Tensor(np.ones(3))
    ad.reduce_sum(ad.mul(x, c)).backward()
    assert c.grad is None
    np.testing.assert_allclose(x.grad, np.ones(3))


def test_apply_by_name(rng):
    x = leaf(rng, 3)
    np.testing.assert_allclose(ad.apply("relu", x).data, np.maximum(x.data, 0.0))
    with pytest.raises(UnsupportedOperatorError):
        ad.apply("conv2d", x)
