import numpy as np
import pytest

from darkspot.gcn import autodiff as ad
from darkspot.gcn.autodiff import Tensor


def fd_check(fn, *arrays, step=1e-6, rtol=1e-5):
    """Central-difference check of fn's gradient w.r.t. every input array."""
    params = [ad.parameter(a.copy()) for a in arrays]
    out = fn(*params)
    out.backward()
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = float(fn(*params).value)
            flat[i] = orig - step
            lo = float(fn(*params).value)
            flat[i] = orig
            fd = (hi - lo) / (2 * step)
            a = analytic.reshape(-1)[i]
            assert a == pytest.approx(fd, rel=rtol, abs=1e-8), f"index {i}: {a} vs {fd}"


def test_add_mul_broadcast():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4,))
    fd_check(lambda x, y: ad.tsum((x + y) * (x * 0.5 + 2.0)), a, b)


def test_sub_div():
    rng = np.random.default_rng(1)
    a = rng.uniform(1, 2, size=(3, 3))
    b = rng.uniform(1, 2, size=(3, 3))
    fd_check(lambda x, y: ad.tsum((x - y) / (y + 1.0)), a, b)


def test_matmul():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    fd_check(lambda x, y: ad.tsum(x @ y), a, b)


def test_relu_exp_log_sqrt():
    rng = np.random.default_rng(3)
    a = rng.uniform(0.5, 2.0, size=(5,))
    fd_check(lambda x: ad.tsum(ad.sqrt(ad.exp(ad.log(x)) + 1.0)), a)
    b = rng.normal(size=(6,))
    fd_check(lambda x: ad.tsum(ad.relu(x) * 3.0), b)


def test_sum_axis_keepdims():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(4, 3))
    fd_check(lambda x: ad.tsum(ad.tsum(x, axis=1, keepdims=True) * x), a)


def test_gather_and_segment_sum():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(4, 2))
    idx = np.array([0, 2, 2, 1, 3, 0])
    seg = np.array([0, 0, 1, 1, 2, 2])
    fd_check(lambda x: ad.tsum(ad.segment_sum(ad.gather_rows(x, idx), seg, 3) * 1.5), a)


def test_gradient_accumulates_over_reuse():
    x = ad.parameter(np.array([2.0]))
    y = x * x + x * 3.0  # dy/dx = 2x + 3 = 7
    y.backward()
    assert x.grad[0] == pytest.approx(7.0)


def test_diamond_graph():
    x = ad.parameter(np.array([1.5]))
    a = x * 2.0
    b = x + 1.0
    out = ad.tsum(a * b)  # d/dx (2x(x+1)) = 4x + 2 = 8
    out.backward()
    assert x.grad[0] == pytest.approx(8.0)


def test_dtype_preserved_float32():
    x = ad.parameter(np.ones((2, 2), dtype=np.float32))
    out = ad.tsum(ad.relu(x * 2.0 + 1.0))
    out.backward()
    assert x.grad.dtype == np.float32
