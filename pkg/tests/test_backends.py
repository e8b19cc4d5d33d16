"""Compiled and numpy backends must agree bit-for-bit."""

import numpy as np
import pytest

from cdtikit.backends import BACKEND_NAME, get_backend

ref = get_backend("numpy")
try:
    fast = get_backend("compiled")
except ImportError:
    fast = None

needs_compiled = pytest.mark.skipif(fast is None, reason="compiled core not built")

CASES = [
    ((2, 3, 6, 7), (3, 3), (1, 1)),
    ((2, 3, 9, 9), (3, 3), (2, 2)),
    ((1, 2, 8, 8), (2, 2), (2, 2)),
    ((2, 1, 4, 6, 6), (2, 3, 3), (1, 2, 2)),
    ((1, 2, 2, 8, 8), (2, 2, 2), (1, 2, 2)),
    ((2, 4, 10), (3,), (2,)),
]


def _data(shape, complex_, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape)
    if complex_:
        x = x + 1j * rng.standard_normal(shape)
    return x


@needs_compiled
class TestParity:
    @pytest.mark.parametrize("shape,kernel,stride", CASES)
    @pytest.mark.parametrize("complex_", [False, True], ids=["real", "complex"])
    def test_im2col_col2im(self, shape, kernel, stride, complex_):
        x = _data(shape, complex_)
        a = ref.im2col(x, kernel, stride)
        b = fast.im2col(x, kernel, stride)
        np.testing.assert_array_equal(a, b)
        back_a = ref.col2im(a, kernel, stride, shape[2:], shape[0])
        back_b = fast.col2im(b, kernel, stride, shape[2:], shape[0])
        np.testing.assert_array_equal(back_a, back_b)

    @pytest.mark.parametrize("complex_", [False, True], ids=["real", "complex"])
    def test_maxpool(self, complex_):
        x = _data((2, 3, 8, 8), complex_, seed=1)
        va, ia = ref.maxpool_mag_forward(x, (2, 2), (2, 2))
        vb, ib = fast.maxpool_mag_forward(x, (2, 2), (2, 2))
        np.testing.assert_array_equal(va, vb)
        np.testing.assert_array_equal(ia, ib)
        g = _data(va.shape, complex_, seed=2)
        sa = ref.maxpool_scatter(g, ia, (8, 8), False)
        sb = fast.maxpool_scatter(g, ib, (8, 8), False)
        np.testing.assert_array_equal(sa, sb)

    def test_overlapping_pool_scatter(self):
        x = _data((1, 2, 6, 6), True, seed=3)
        v, idx = ref.maxpool_mag_forward(x, (3, 3), (1, 1))
        g = _data(v.shape, True, seed=4)
        sa = ref.maxpool_scatter(g, idx, (6, 6), True)
        sb = fast.maxpool_scatter(g, idx, (6, 6), True)
        np.testing.assert_allclose(sa, sb, atol=1e-15)


class TestAdjointness:
    @pytest.mark.parametrize("shape,kernel,stride", CASES)
    def test_col2im_is_im2col_adjoint(self, shape, kernel, stride):
        # <im2col(x), c> == <x, col2im(c)> under the complex inner product
        x = _data(shape, True, seed=5)
        cols = ref.im2col(x, kernel, stride)
        c = _data(cols.shape, True, seed=6)
        lhs = np.vdot(c, ref.im2col(x, kernel, stride))
        rhs = np.vdot(ref.col2im(c, kernel, stride, shape[2:], shape[0]), x)
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))


class TestSelection:
    def test_active_backend_reported(self):
        assert BACKEND_NAME in ("compiled", "numpy")
        assert get_backend("active") is get_backend(BACKEND_NAME)

    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            get_backend("cuda")
