"""Network operators: forward values, oracles, gradients, reduction property."""

import numpy as np
import pytest

from cdtikit import tensor as T
from cdtikit.nn import functional as F
from cdtikit.tensor import ShapeError, Tensor

from gradcheck import check_gradients


# ---- direct sliding-window oracles (independent of the im2col implementation) ----


def conv_oracle(x, w, stride, pad):
    b, cin = x.shape[:2]
    cout = w.shape[0]
    kernel = w.shape[2:]
    xp = np.pad(x, ((0, 0), (0, 0)) + tuple((p, p) for p in pad))
    out = tuple(
        (s + 2 * p - k) // st + 1
        for s, p, k, st in zip(x.shape[2:], pad, kernel, stride)
    )
    y = np.zeros((b, cout) + out, dtype=np.result_type(x, w))
    for bi in range(b):
        for oc in range(cout):
            for pos in np.ndindex(*out):
                acc = 0.0
                for ic in range(cin):
                    for off in np.ndindex(*kernel):
                        ipos = tuple(p * st + o for p, st, o in zip(pos, stride, off))
                        acc += w[(oc, ic) + off] * xp[(bi, ic) + ipos]
                y[(bi, oc) + pos] = acc
    return y


def tconv_real_oracle(x, w, stride, trim):
    b, cin = x.shape[:2]
    cout = w.shape[1]
    kernel = w.shape[2:]
    full = tuple((s - 1) * st + k for s, st, k in zip(x.shape[2:], stride, kernel))
    y = np.zeros((b, cout) + full)
    for bi in range(b):
        for ic in range(cin):
            for pos in np.ndindex(*x.shape[2:]):
                for oc in range(cout):
                    for off in np.ndindex(*kernel):
                        opos = tuple(p * st + o for p, st, o in zip(pos, stride, off))
                        y[(bi, oc) + opos] += w[(ic, oc) + off] * x[(bi, ic) + pos]
    sl = (slice(None), slice(None)) + tuple(slice(0, f - t) for f, t in zip(full, trim))
    return y[sl]


def tconv_complex_oracle(x, w_r, w_i, stride, trim):
    a, b = x.real, x.imag
    re = tconv_real_oracle(a, w_r, stride, trim) + tconv_real_oracle(b, w_i, stride, trim)
    im = tconv_real_oracle(a, w_i, stride, trim) - tconv_real_oracle(b, w_r, stride, trim)
    return re + 1j * im


def _cx(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestComplexConv:
    def test_1x1_kernel_i(self):
        x = Tensor(np.full((1, 1, 1, 1), 1 + 0j))
        w_r = Tensor(np.zeros((1, 1, 1, 1)))
        w_i = Tensor(np.ones((1, 1, 1, 1)))
        y = F.complex_conv(x, w_r, w_i)
        assert y.data[0, 0, 0, 0] == 1j

    def test_1x1_kernel_1_plus_i(self):
        x = Tensor(np.full((1, 1, 1, 1), 1 - 1j))
        y = F.complex_conv(x, Tensor(np.ones((1, 1, 1, 1))), Tensor(np.ones((1, 1, 1, 1))))
        assert y.data[0, 0, 0, 0] == 2 + 0j

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_sliding_window_oracle(self, seed):
        rng = np.random.default_rng(seed)
        x = _cx(rng, (1, 1, 8, 8))
        w = _cx(rng, (2, 1, 3, 3))
        y = F.conv(Tensor(x), Tensor(w), stride=1, padding=1).data
        ref = conv_oracle(x, w, (1, 1), (1, 1))
        assert np.max(np.abs(y - ref)) / np.max(np.abs(ref)) < 1e-12

    def test_strided_multichannel_oracle(self):
        rng = np.random.default_rng(99)
        x = _cx(rng, (2, 3, 9, 7))
        w = _cx(rng, (4, 3, 3, 3))
        y = F.conv(Tensor(x), Tensor(w), stride=2, padding=1).data
        ref = conv_oracle(x, w, (2, 2), (1, 1))
        np.testing.assert_allclose(y, ref, rtol=1e-12, atol=1e-12)

    def test_3d_oracle(self):
        rng = np.random.default_rng(5)
        x = _cx(rng, (1, 2, 2, 6, 6))
        w = _cx(rng, (2, 2, 3, 3, 3))
        y = F.conv(Tensor(x), Tensor(w), stride=1, padding=1).data
        ref = conv_oracle(x, w, (1, 1, 1), (1, 1, 1))
        np.testing.assert_allclose(y, ref, rtol=1e-12, atol=1e-12)

    def test_channel_mismatch_raises(self):
        x = Tensor(np.zeros((1, 3, 4, 4)))
        w = Tensor(np.zeros((2, 2, 3, 3)))
        with pytest.raises(ShapeError):
            F.conv(x, w)

    def test_output_extent_validation(self):
        with pytest.raises(ShapeError):
            F.ConvSpec(1, 1, (5, 5)).output_shape((3, 3))
        assert F.ConvSpec(1, 1, (3, 3), 2, 1).output_shape((9, 9)) == (5, 5)


class TestComplexTransposeConv:
    # The split formula (tc_r(a) + tc_i(b)) + 1j(tc_i(a) - tc_r(b)) equals
    # w * conj(z): the operator conjugates its input relative to complex_conv.
    # Kept exactly as formulated, not "corrected" to match the conv rule.

    def test_real_unit_kernel_conjugates(self):
        # w_r = 1, w_i = 0: re = tc_r(a) = a, im = -tc_r(b) = -b -> conj(z)
        x = Tensor(np.full((1, 1, 1, 1), 2 + 3j))
        y = F.complex_conv_transpose(
            x, Tensor(np.ones((1, 1, 1, 1))), Tensor(np.zeros((1, 1, 1, 1))), stride=1
        )
        assert y.data[0, 0, 0, 0] == 2 - 3j

    def test_pure_imaginary_kernel_sign_pattern(self):
        # w_r = 0, w_i = 1: re = tc_i(b) = b, im = tc_i(a) = a -> b + ia
        x = Tensor(np.full((1, 1, 1, 1), 3 + 5j))
        y = F.complex_conv_transpose(
            x, Tensor(np.zeros((1, 1, 1, 1))), Tensor(np.ones((1, 1, 1, 1))), stride=1
        )
        assert y.data[0, 0, 0, 0] == 5 + 3j

    def test_real_input_real_kernel_reduces(self):
        # with w_i = 0 and a real input the sign quirk is invisible
        rng = np.random.default_rng(21)
        x = rng.standard_normal((1, 2, 3, 3))
        w = rng.standard_normal((2, 2, 2, 2))
        real_out = F.conv_transpose(Tensor(x), Tensor(w), stride=2).data
        cx_out = F.complex_conv_transpose(
            Tensor(x + 0j), Tensor(w), Tensor(np.zeros_like(w)), stride=2
        ).data
        np.testing.assert_allclose(cx_out.real, real_out, atol=1e-14)
        assert np.max(np.abs(cx_out.imag)) == 0

    def test_stride2_doubles_extent(self):
        # shape rule: (in - 1) * stride + kernel = (4-1)*2 + 2 = 8
        rng = np.random.default_rng(0)
        x = Tensor(rng.standard_normal((1, 1, 4, 4)))
        w = Tensor(rng.standard_normal((1, 1, 2, 2)))
        y = F.conv_transpose(x, w, stride=2)
        assert y.shape == (1, 1, 8, 8)

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_scatter_oracle(self, seed):
        rng = np.random.default_rng(10 + seed)
        x = _cx(rng, (2, 2, 4, 4))
        w_r = rng.standard_normal((2, 3, 2, 2))
        w_i = rng.standard_normal((2, 3, 2, 2))
        y = F.complex_conv_transpose(
            Tensor(x), Tensor(w_r), Tensor(w_i), stride=2
        ).data
        ref = tconv_complex_oracle(x, w_r, w_i, (2, 2), (0, 0))
        np.testing.assert_allclose(y, ref, rtol=1e-12, atol=1e-12)

    def test_slice_axis_trim(self):
        # stride 1 with kernel 2 and trailing trim keeps the axis extent
        rng = np.random.default_rng(3)
        x = _cx(rng, (1, 2, 2, 4, 4))
        w_r = rng.standard_normal((2, 1, 2, 2, 2))
        w_i = rng.standard_normal((2, 1, 2, 2, 2))
        y = F.complex_conv_transpose(
            Tensor(x), Tensor(w_r), Tensor(w_i), stride=(1, 2, 2),
            output_trim=(1, 0, 0),
        ).data
        assert y.shape == (1, 1, 2, 8, 8)
        ref = tconv_complex_oracle(x, w_r, w_i, (1, 2, 2), (1, 0, 0))
        np.testing.assert_allclose(y, ref, rtol=1e-12, atol=1e-12)


class TestSplitSigmoid:
    def test_zero(self):
        y = F.split_sigmoid(Tensor([0 + 0j]))
        assert y.data[0] == 0.5 + 0.5j

    def test_real_input_gets_half_imag(self):
        y = F.split_sigmoid(Tensor([2.0]))
        expected = 1 / (1 + np.exp(-2.0))
        np.testing.assert_allclose(y.data[0], expected + 0.5j, rtol=1e-15)

    def test_ln3(self):
        z = np.log(3.0) * (1 + 1j)
        y = F.split_sigmoid(Tensor([z]))
        np.testing.assert_allclose(y.data[0], 0.75 + 0.75j, rtol=1e-14)

    def test_range(self):
        rng = np.random.default_rng(0)
        y = F.split_sigmoid(Tensor(_cx(rng, (100,)) * 10)).data
        assert np.all((y.real > 0) & (y.real < 1) & (y.imag > 0) & (y.imag < 1))


class TestModRelu:
    def test_zero_bias_passthrough(self):
        y = F.mod_relu(Tensor([3 + 4j]), Tensor([0.0]))
        assert y.data[0] == 3 + 4j

    def test_negative_bias_kills(self):
        y = F.mod_relu(Tensor([3 + 4j]), Tensor([-6.0]))
        assert y.data[0] == 0

    def test_shrinks_magnitude_keeps_phase(self):
        y = F.mod_relu(Tensor([0 + 2j]), Tensor([-1.0]))
        np.testing.assert_allclose(y.data[0], 0 + 1j, rtol=1e-15)

    def test_zero_input_defined_as_zero(self):
        y = F.mod_relu(Tensor([0 + 0j]), Tensor([1.0]))
        assert y.data[0] == 0

    def test_phase_equivariance(self):
        rng = np.random.default_rng(1)
        z = _cx(rng, (50,))
        b = Tensor(rng.standard_normal(50) * 0.5)
        for phi in (0.3, -1.2, 2.9):
            rot = np.exp(1j * phi)
            lhs = F.mod_relu(Tensor(rot * z), b).data
            rhs = rot * F.mod_relu(Tensor(z), b).data
            np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestComplexDropout:
    def test_p_zero_identity(self):
        z = Tensor([1 + 2j, 3 - 1j])
        assert F.complex_dropout(z, 0.0, np.random.default_rng(0)) is z

    def test_eval_mode_identity(self):
        z = Tensor([1 + 2j])
        assert F.complex_dropout(z, 0.7, np.random.default_rng(0), training=False) is z

    def test_shared_mask_never_splits_re_im(self):
        rng = np.random.default_rng(2)
        z = _cx(rng, (1000,)) + (1 + 1j)  # keep parts away from zero
        y = F.complex_dropout(Tensor(z), 0.4, rng).data
        dropped = y == 0
        scaled = np.isclose(y, z / 0.6)
        assert np.all(dropped | scaled)

    def test_survivor_fraction(self):
        rng = np.random.default_rng(3)
        z = Tensor(np.ones(100_000) + 1j)
        y = F.complex_dropout(z, 0.5, rng).data
        frac = np.mean(y != 0)
        assert abs(frac - 0.5) < 0.01

    def test_invalid_p(self):
        with pytest.raises(ValueError):
            F.complex_dropout(Tensor([1.0]), 1.0, np.random.default_rng(0))


class TestPooling:
    def test_magnitude_beats_value(self):
        x = Tensor(np.array([1 + 0j, 0 + 2j]).reshape(1, 1, 2))
        y = F.magnitude_max_pool(x, (2,))
        assert y.data[0, 0, 0] == 2j

    def test_negative_real_wins_on_magnitude(self):
        x = Tensor(np.array([-3 + 0j, 2 + 2j]).reshape(1, 1, 2))
        y = F.magnitude_max_pool(x, (2,))
        assert y.data[0, 0, 0] == -3 + 0j

    def test_tie_lowest_index(self):
        x = Tensor(np.array([1 + 0j, 0 + 1j]).reshape(1, 1, 2))
        y = F.magnitude_max_pool(x, (2,))
        assert y.data[0, 0, 0] == 1 + 0j

    def test_selection_membership(self):
        rng = np.random.default_rng(4)
        x = _cx(rng, (2, 3, 8, 8))
        y = F.magnitude_max_pool(Tensor(x), (2, 2)).data
        for elem in y.reshape(-1):
            assert elem in x

    def test_window_too_large(self):
        with pytest.raises(ShapeError):
            F.magnitude_max_pool(Tensor(np.zeros((1, 1, 2, 2), complex)), (3, 3))

    def test_avg_pool_pair(self):
        x = Tensor(np.array([1 + 1j, 3 + 3j]).reshape(1, 1, 2))
        assert F.avg_pool(x, (2,)).data[0, 0, 0] == 2 + 2j

    def test_avg_pool_constant(self):
        x = Tensor(np.full((1, 1, 4, 4), 2 - 1j))
        y = F.avg_pool(x, (2, 2)).data
        np.testing.assert_allclose(y, np.full((1, 1, 2, 2), 2 - 1j))

    def test_avg_pool_hand_enumeration(self):
        rng = np.random.default_rng(6)
        x = _cx(rng, (1, 1, 4, 4))
        y = F.avg_pool(Tensor(x), (2, 2), (2, 2)).data
        for i in range(2):
            for j in range(2):
                window = x[0, 0, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2]
                np.testing.assert_allclose(y[0, 0, i, j], window.sum() / 4, rtol=1e-15)


class TestBatchNorm:
    def test_symmetric_pair(self):
        x = Tensor(np.array([1 + 1j, -1 - 1j]).reshape(2, 1, 1))
        mu, var = F.batch_norm_stats(x)
        out = F.batch_norm_apply(x, mu, var, None, None, 0.0)
        np.testing.assert_allclose(
            out.data.reshape(2), np.array([1 + 1j, -1 - 1j]) / np.sqrt(2), rtol=1e-14
        )

    def test_constant_batch_zeros(self):
        x = Tensor(np.full((4, 2, 3), 5 - 2j))
        mu, var = F.batch_norm_stats(x)
        out = F.batch_norm_apply(x, mu, var, None, None, 1e-12)
        assert np.max(np.abs(out.data)) == 0

    def test_random_batch_statistics(self):
        rng = np.random.default_rng(8)
        x = Tensor(_cx(rng, (64, 3, 5, 5)) * 2.0 + (1 - 0.5j))
        mu, var = F.batch_norm_stats(x)
        out = F.batch_norm_apply(x, mu, var, None, None, 0.0).data
        mean = out.mean(axis=(0, 2, 3))
        msq = np.mean(np.abs(out) ** 2, axis=(0, 2, 3))
        assert np.max(np.abs(mean)) < 1e-10
        np.testing.assert_allclose(msq, 1.0, atol=1e-10)


class TestMagnitudeLoss:
    def test_equal_inputs_zero(self):
        rng = np.random.default_rng(9)
        z = Tensor(_cx(rng, (3, 3)))
        assert F.magnitude_loss(z, z, "l1").item() == 0

    def test_l1_345(self):
        y = Tensor([3 + 4j])
        z = Tensor([0 + 0j])
        assert F.magnitude_loss(y, z, "l1").item() == 5.0

    def test_l2_hand(self):
        y = Tensor([1.0, 2.0])
        z = Tensor([0.0, 0.0])
        assert F.magnitude_loss(y, z, "l2").item() == 2.5

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            F.magnitude_loss(Tensor([1.0]), Tensor([1.0, 2.0]))


class TestInnerProduct:
    def test_bilinear_no_conjugation(self):
        w = Tensor([1 + 1j])
        z = Tensor([1 + 1j])
        assert F.inner_product(w, z).item() == 2j  # Hermitian form would give 2


class TestReductionToRealOperators:
    """Zero imaginary parts reproduce the real operators within 1e-14."""

    @pytest.mark.parametrize("case", range(20))
    def test_conv_reduction(self, case):
        rng = np.random.default_rng(case)
        x = rng.standard_normal((1, 2, 6, 6))
        w = rng.standard_normal((3, 2, 3, 3))
        real_out = F.conv(Tensor(x), Tensor(w), padding=1).data
        cx_out = F.complex_conv(
            Tensor(x + 0j), Tensor(w), Tensor(np.zeros_like(w)), padding=1
        ).data
        assert np.max(np.abs(cx_out.imag)) == 0
        np.testing.assert_allclose(cx_out.real, real_out, atol=1e-14)

    @pytest.mark.parametrize("case", range(5))
    def test_tconv_pool_bn_loss_reduction(self, case):
        rng = np.random.default_rng(100 + case)
        x = rng.standard_normal((2, 2, 4, 4))
        w = rng.standard_normal((2, 2, 2, 2))
        real_t = F.conv_transpose(Tensor(x), Tensor(w), stride=2).data
        cx_t = F.complex_conv_transpose(
            Tensor(x + 0j), Tensor(w), Tensor(np.zeros_like(w)), stride=2
        ).data
        np.testing.assert_allclose(cx_t.real, real_t, atol=1e-14)
        assert np.max(np.abs(cx_t.imag)) == 0

        pos = np.abs(x)  # non-negative, where signed and magnitude max agree
        np.testing.assert_allclose(
            F.magnitude_max_pool(Tensor(pos + 0j), (2, 2)).data.real,
            F.max_pool(Tensor(pos), (2, 2)).data,
            atol=1e-14,
        )
        np.testing.assert_allclose(
            F.avg_pool(Tensor(x + 0j), (2, 2)).data.real,
            F.avg_pool(Tensor(x), (2, 2)).data,
            atol=1e-14,
        )

        xt_c, xt_r = Tensor(x + 0j), Tensor(x)
        mu_c, var_c = F.batch_norm_stats(xt_c)
        mu_r, var_r = F.batch_norm_stats(xt_r)
        out_c = F.batch_norm_apply(xt_c, mu_c, var_c, None, None, 1e-5).data
        out_r = F.batch_norm_apply(xt_r, mu_r, var_r, None, None, 1e-5).data
        np.testing.assert_allclose(out_c.real, out_r, atol=1e-14)

        y2 = rng.standard_normal(x.shape)
        for kind in ("l1", "l2"):
            np.testing.assert_allclose(
                F.magnitude_loss(Tensor(x + 0j), Tensor(y2 + 0j), kind).item(),
                F.magnitude_loss(Tensor(x), Tensor(y2), kind).item(),
                atol=1e-14,
            )

    def test_dropout_reduction_shared_seed(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((4, 4))
        out_r = F.complex_dropout(Tensor(x), 0.3, np.random.default_rng(55)).data
        out_c = F.complex_dropout(Tensor(x + 0j), 0.3, np.random.default_rng(55)).data
        np.testing.assert_allclose(out_c.real, out_r, atol=1e-14)
        assert np.max(np.abs(out_c.imag)) == 0


class TestOperatorGradients:
    """Finite-difference checks at random differentiable points."""

    def test_conv_real_and_complex(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.standard_normal((1, 1, 4, 4)), requires_grad=True)
        w = Tensor(rng.standard_normal((2, 1, 3, 3)), requires_grad=True)

        def loss():  # mean-abs of conv output
            return T.tmean(T.magnitude(F.conv(x, w, padding=1)))

        check_gradients(loss, [x, w], rng, samples_per_tensor=5)

        zr = Tensor(rng.standard_normal((1, 2, 4, 4)), requires_grad=True)
        zi = Tensor(rng.standard_normal((1, 2, 4, 4)), requires_grad=True)
        wr = Tensor(rng.standard_normal((2, 2, 3, 3)), requires_grad=True)
        wi = Tensor(rng.standard_normal((2, 2, 3, 3)), requires_grad=True)

        def loss_c():
            z = T.make_complex(zr, zi)
            return T.tmean(T.magnitude(F.complex_conv(z, wr, wi, padding=1)))

        check_gradients(loss_c, [zr, zi, wr, wi], rng, samples_per_tensor=3)

    def test_conv3d_gradient(self):
        rng = np.random.default_rng(1)
        x = Tensor(_cx(rng, (1, 1, 2, 4, 4)), requires_grad=True)
        wr = Tensor(rng.standard_normal((1, 1, 3, 3, 3)), requires_grad=True)
        wi = Tensor(rng.standard_normal((1, 1, 3, 3, 3)), requires_grad=True)

        def loss():
            return T.tmean(T.magnitude(F.complex_conv(x, wr, wi, padding=1)))

        check_gradients(loss, [x, wr, wi], rng, samples_per_tensor=3)

    def test_tconv_gradient(self):
        rng = np.random.default_rng(2)
        x = Tensor(_cx(rng, (1, 2, 3, 3)), requires_grad=True)
        wr = Tensor(rng.standard_normal((2, 1, 2, 2)), requires_grad=True)
        wi = Tensor(rng.standard_normal((2, 1, 2, 2)), requires_grad=True)

        def loss():
            y = F.complex_conv_transpose(x, wr, wi, stride=2)
            return T.tmean(T.magnitude_sq(y))

        check_gradients(loss, [x, wr, wi], rng, samples_per_tensor=4)

    def test_mod_relu_gradient(self):
        rng = np.random.default_rng(3)
        z = Tensor(_cx(rng, (2, 3, 4)) * 2.0, requires_grad=True)
        b = Tensor(rng.standard_normal(3) * 0.3, requires_grad=True)

        def loss():
            return T.tmean(T.magnitude_sq(F.mod_relu(z, T.reshape(b, (1, 3, 1)))))

        check_gradients(loss, [z, b], rng, samples_per_tensor=5)

    def test_split_sigmoid_gradient(self):
        rng = np.random.default_rng(4)
        z = Tensor(_cx(rng, (3, 3)), requires_grad=True)

        def loss():
            return T.tmean(T.magnitude_sq(F.split_sigmoid(z)))

        check_gradients(loss, [z], rng, samples_per_tensor=5)

    def test_pool_gradients(self):
        rng = np.random.default_rng(5)
        z = Tensor(_cx(rng, (1, 2, 4, 4)), requires_grad=True)

        def loss_max():
            return T.tmean(T.magnitude_sq(F.magnitude_max_pool(z, (2, 2))))

        check_gradients(loss_max, [z], rng, samples_per_tensor=5)

        def loss_avg():
            return T.tmean(T.magnitude_sq(F.avg_pool(z, (2, 2))))

        check_gradients(loss_avg, [z], rng, samples_per_tensor=5)

        r = Tensor(rng.standard_normal((1, 2, 4, 4)), requires_grad=True)

        def loss_real_max():
            return T.tmean(T.square(F.max_pool(r, (2, 2))))

        check_gradients(loss_real_max, [r], rng, samples_per_tensor=5)

    def test_batch_norm_gradient(self):
        rng = np.random.default_rng(6)
        z = Tensor(_cx(rng, (4, 2, 3)), requires_grad=True)
        gamma = Tensor(rng.random(2) + 0.5, requires_grad=True)
        br = Tensor(rng.standard_normal(2), requires_grad=True)
        bi = Tensor(rng.standard_normal(2), requires_grad=True)

        def loss():
            mu, var = F.batch_norm_stats(z)
            out = F.batch_norm_apply(
                z, mu, var,
                T.reshape(gamma, (1, 2, 1)),
                T.reshape(T.make_complex(br, bi), (1, 2, 1)),
                1e-5,
            )
            return T.tmean(T.magnitude_sq(out))

        check_gradients(loss, [z, gamma, br, bi], rng, samples_per_tensor=4)

    def test_loss_gradients(self):
        rng = np.random.default_rng(7)
        y = Tensor(_cx(rng, (3, 3)), requires_grad=True)
        z = Tensor(_cx(rng, (3, 3)))
        for kind in ("l1", "l2"):
            def loss(kind=kind):
                return F.magnitude_loss(y, z, kind)

            check_gradients(loss, [y], rng, samples_per_tensor=5)

    def test_dropout_gradient_fixed_mask(self):
        rng = np.random.default_rng(8)
        z = Tensor(_cx(rng, (6, 6)), requires_grad=True)

        def loss():
            return T.tmean(T.magnitude_sq(
                F.complex_dropout(z, 0.4, np.random.default_rng(123))
            ))

        check_gradients(loss, [z], rng, samples_per_tensor=5)
