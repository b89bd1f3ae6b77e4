import math
import warnings

import mpmath as mp
import numpy as np
import pytest

from mfgp import operators as ops
from mfgp.checks import catalog, random_params, relative_diff
from mfgp.kernels import KernelParams, se_eval, se_matrix

CLOSED_FORM = [op for op in catalog()] + [ops.laplacian(2)]


def _ids(op):
    return f"{op.variant}-{op.dim}-{op.lower_bound:g}"


# ---------------------------------------------------------------------------
# spec validation
# ---------------------------------------------------------------------------


def test_alpha_outside_open_interval_rejected():
    for alpha in (0.0, 2.0, 2.5, -0.1, float("nan")):
        with pytest.raises(ValueError, match=r"\(0, 2\)"):
            ops.fractional(alpha)


def test_variant_dimension_rules():
    with pytest.raises(ValueError):
        ops.LinearOperatorSpec("first_derivative", 2)
    with pytest.raises(ValueError):
        ops.LinearOperatorSpec("advection_diffusion_reaction", 1)
    with pytest.raises(ValueError, match="unknown operator"):
        ops.LinearOperatorSpec("curl", 3)
    with pytest.raises(ValueError):
        ops.laplacian(0)
    assert ops.laplacian(4).dim == 4


def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        ops.QuadratureSpec(node_count=4)
    with pytest.raises(ValueError):
        ops.QuadratureSpec(frequency_cutoff=-1.0)
    q = ops.QuadratureSpec(100, 8.0).refined()
    assert (q.node_count, q.frequency_cutoff) == (200, 16.0)


def test_spec_dict_roundtrip():
    for op in CLOSED_FORM + [ops.fractional(0.7, ops.QuadratureSpec(64, 12.0))]:
        assert ops.LinearOperatorSpec.from_dict(op.to_dict()) == op


# ---------------------------------------------------------------------------
# 1D Gaussian derivative family
# ---------------------------------------------------------------------------


def test_antiderivatives_differentiate_down():
    r = np.linspace(-2, 2, 41)
    w, h = 1.7, 1e-5
    for m in (-2, -1, 0, 1, 2):
        fd = (ops.gaussian_derivative(m, r + h, w) - ops.gaussian_derivative(m, r - h, w)) / (2 * h)
        assert np.allclose(fd, ops.gaussian_derivative(m + 1, r, w), atol=1e-8)
    assert ops.gaussian_derivative(-1, 0.0, w) == 0.0


def test_heat_identity_for_log_weight():
    r = np.linspace(-2, 2, 17)
    w, h = 0.9, 1e-6
    for m in range(-2, 5):
        fd = (ops.gaussian_derivative(m, r, w * math.exp(h)) - ops.gaussian_derivative(m, r, w * math.exp(-h))) / (2 * h)
        exact = -ops.gaussian_derivative(m + 2, r, w) / (2 * w) - 0.5 * ops.gaussian_derivative(m, r, w)
        assert np.allclose(fd, exact, rtol=1e-7, atol=1e-9)


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def test_identity_kernels_equal_base_kernel():
    rng = np.random.default_rng(0)
    for dim in (1, 3):
        op = ops.identity(dim)
        p = random_params(rng, dim)
        for _ in range(10):
            x, y = rng.normal(size=dim), rng.normal(size=dim)
            assert ops.op_kernel_ff(op, p, x, y) == se_eval(x, y, p)
            assert ops.op_kernel_uf(op, p, x, y) == se_eval(x, y, p)
            assert ops.op_kernel_numeric_oracle(op, p, x, y) == pytest.approx(se_eval(x, y, p), rel=1e-14)


def test_first_derivative_by_hand():
    op = ops.first_derivative()
    p = KernelParams(1.0, (1.0,))
    assert ops.op_kernel_ff(op, p, 0.4, 0.4) == pytest.approx(1.0, rel=1e-15)
    assert ops.op_kernel_uf(op, p, 0.4, 0.4) == 0.0
    for x, y in ((0.0, 0.3), (0.5, -1.1), (2.0, 0.1)):
        r = x - y
        hand = (1 - r * r) * math.exp(-0.5 * r * r)
        assert ops.op_kernel_ff(op, p, x, y) == pytest.approx(hand, rel=1e-12)
        assert relative_diff(ops.op_kernel_numeric_oracle(op, p, x, y), hand) < 1e-6


@pytest.mark.parametrize("op", CLOSED_FORM, ids=_ids)
def test_closed_form_matches_oracle(op):
    rng = np.random.default_rng(abs(hash(_ids(op))) % 2**32)
    for _ in range(8):
        p = random_params(rng, op.dim)
        x, y = rng.uniform(size=op.dim), rng.uniform(size=op.dim)
        assert relative_diff(ops.op_kernel_ff(op, p, x, y), ops.op_kernel_numeric_oracle(op, p, x, y)) < 1e-5
        assert relative_diff(ops.op_kernel_uf(op, p, x, y),
                             ops.op_kernel_numeric_oracle(op, p, x, y, "right")) < 1e-5
        fu = float(ops.kernel_matrix(op, p, x[None], y[None], "fu")[0, 0])
        assert relative_diff(fu, ops.op_kernel_numeric_oracle(op, p, x, y, "left")) < 1e-5


def test_integral_vanishes_at_lower_bound():
    op = ops.integro_differential(0.2)
    p = KernelParams(1.3, (2.0,))
    deriv_only = ops.op_kernel_numeric_oracle(ops.first_derivative(), p, 0.7, 0.2, "right")
    assert ops.op_kernel_numeric_oracle(op, p, 0.7, 0.2, "right") == pytest.approx(deriv_only, rel=1e-12)
    assert ops.op_kernel_uf(op, p, 0.7, 0.2) == pytest.approx(deriv_only, rel=1e-10)


@pytest.mark.parametrize("op", CLOSED_FORM, ids=_ids)
def test_fu_is_transposed_uf(op):
    rng = np.random.default_rng(5)
    p = random_params(rng, op.dim)
    X, Y = rng.uniform(size=(4, op.dim)), rng.uniform(size=(3, op.dim))
    uf = ops.kernel_matrix(op, p, Y, X, "uf")
    fu = ops.kernel_matrix(op, p, X, Y, "fu")
    assert np.allclose(fu, uf.T, rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("op", CLOSED_FORM + [ops.fractional(0.3), ops.fractional(1.4)], ids=_ids)
def test_ff_gram_is_symmetric_psd(op):
    rng = np.random.default_rng(6)
    p = random_params(rng, op.dim)
    X = rng.uniform(size=(25, op.dim))
    K = ops.kernel_matrix(op, p, X, X, "ff")
    assert np.allclose(K, K.T, rtol=1e-12, atol=1e-12 * np.abs(K).max())
    assert np.linalg.eigvalsh(K).min() > -1e-8 * np.abs(K).max()
    assert np.allclose(np.diag(K), ops.kernel_diag(op, p, X, "ff"), rtol=1e-12)


@pytest.mark.parametrize("op", CLOSED_FORM + [ops.fractional(0.3)], ids=_ids)
@pytest.mark.parametrize("kind", ops.KINDS)
def test_kernel_log_gradients(op, kind):
    rng = np.random.default_rng(7)
    p = random_params(rng, op.dim)
    X, Y = rng.uniform(size=(3, op.dim)), rng.uniform(size=(4, op.dim))
    _, g = ops.kernel_matrix_and_grads(op, p, X, Y, kind)
    v, h = p.to_log(), 1e-5
    for i in range(len(v)):
        e = np.zeros_like(v)
        e[i] = h
        fd = (ops.kernel_matrix(op, KernelParams.from_log(v + e), X, Y, kind)
              - ops.kernel_matrix(op, KernelParams.from_log(v - e), X, Y, kind)) / (2 * h)
        scale = max(np.abs(g[i]).max(), 1e-8)
        assert np.abs(fd - g[i]).max() / scale < 1e-6


@pytest.mark.parametrize("dim", [2, 3, 10])
@pytest.mark.parametrize("kind", ops.KINDS)
def test_separable_laplacian_matches_term_algebra(dim, kind):
    rng = np.random.default_rng(dim)
    op = ops.laplacian(dim)
    p = random_params(rng, dim)
    X, Y = rng.uniform(size=(5, dim)), rng.uniform(size=(6, dim))
    v1, g1 = ops._laplacian_block(p, X, Y, kind, True)
    v2, g2 = ops._generic_block(op, p, X, Y, kind, True)
    assert np.allclose(v1, v2, rtol=1e-12, atol=1e-12 * np.abs(v2).max())
    assert np.allclose(g1, g2, rtol=1e-12, atol=1e-12 * np.abs(g2).max())


def test_oracle_rejects_fractional_and_bad_side():
    p = KernelParams(1.0, (1.0,))
    with pytest.raises(ValueError):
        ops.op_kernel_numeric_oracle(ops.fractional(0.5), p, 0.1, 0.2)
    with pytest.raises(ValueError):
        ops.op_kernel_numeric_oracle(ops.identity(), p, 0.1, 0.2, side="middle")


def test_kernel_dimension_mismatch():
    with pytest.raises(ValueError):
        ops.kernel_matrix(ops.laplacian(2), KernelParams(1.0, (1.0,)), np.zeros((2, 2)), np.zeros((2, 2)))


# ---------------------------------------------------------------------------
# fractional operator
# ---------------------------------------------------------------------------


def test_fractional_order_zero_vanishes():
    p = KernelParams(1.4, (2.0,))
    for x, y in ((0.1, 0.1), (0.2, 0.9), (-1.0, 0.5)):
        assert ops.fractional_kernel_ff(0.0, p, x, y) == 0.0
        assert ops.fractional_kernel_uf(0.0, p, x, y) == 0.0


def test_fractional_order_one_matches_first_order_minus_identity():
    # L = d/dx - I by hand: ff = g (w (1 - w r^2) + 1), uf = g (w r - 1), r = x_u - x_f
    rng = np.random.default_rng(8)
    for _ in range(10):
        s2, w = rng.uniform(0.5, 2), rng.uniform(0.5, 5)
        p = KernelParams(s2, (w,))
        x, y = rng.uniform(size=2)
        r = x - y
        g = s2 * math.exp(-0.5 * w * r * r)
        ff = g * (w * (1 - w * r * r) + 1)
        uf = g * (w * r - 1)
        scale = s2 * (w + 1)
        assert abs(ops.fractional_kernel_ff(1.0, p, x, y) - ff) / scale < 1e-4
        assert abs(ops.fractional_kernel_uf(1.0, p, x, y) - uf) / scale < 1e-4


def test_fractional_self_refinement():
    p = KernelParams(1.0, (1.0,))
    quad = ops.QuadratureSpec()
    base = ops.fractional_kernel_ff(0.3, p, 0.5, 0.5, quad)
    fine = ops.fractional_kernel_ff(0.3, p, 0.5, 0.5, quad.refined())
    assert abs(base - fine) / abs(fine) < 1e-6
    X = np.linspace(0, 1, 9)
    assert ops.fractional_refinement_change(0.3, p, X) < 1e-6


def test_fractional_imaginary_part_cancels():
    rng = np.random.default_rng(9)
    for alpha in (0.3, 0.8, 1.5):
        p = random_params(rng, 1)
        for kind in ops.KINDS:
            z = ops.fractional_kernel_complex(alpha, p, 0.2, 0.7, kind=kind)
            assert abs(z.imag) <= 1e-12 * max(1.0, abs(z.real))


@pytest.mark.parametrize("alpha", [0.3, 0.7])
def test_fractional_branch_matches_riemann_liouville_from_minus_infinity(alpha):
    # D^alpha h(x) = 1/Gamma(1-alpha) int_0^inf h'(x - t) t^-alpha dt for 0 < alpha < 1,
    # applied to h(s) = g(x_u, s): an independent real-axis evaluation of the uf kernel
    s2, w = 1.3, 2.2
    p = KernelParams(s2, (w,))
    x_u, x_f = 0.35, 0.8
    with mp.workdps(30):
        def dh(s):
            return s2 * w * (x_u - s) * mp.exp(-w * (x_u - s) ** 2 / 2)

        integral = mp.quad(lambda t: dh(x_f - t) * t ** (-alpha), [0, 0.5, 2, mp.inf])
        rl = integral / mp.gamma(1 - alpha) - s2 * mp.exp(-w * (x_u - x_f) ** 2 / 2)
    assert ops.fractional_kernel_uf(alpha, p, x_u, x_f) == pytest.approx(float(rl), rel=1e-8, abs=1e-10)


def test_quadrature_warning_on_coarse_rule():
    op = ops.fractional(0.3, ops.QuadratureSpec(node_count=16, frequency_cutoff=2.0))
    with pytest.warns(ops.QuadratureWarning):
        msg = ops.check_quadrature(op, KernelParams(1.0, (1.0,)), np.linspace(0, 1, 5))
    assert "not converged" in msg
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert ops.check_quadrature(ops.fractional(0.3), KernelParams(1.0, (1.0,)), np.linspace(0, 1, 5)) is None


def test_uu_block_is_base_kernel_for_every_variant():
    rng = np.random.default_rng(10)
    for op in CLOSED_FORM + [ops.fractional(0.5)]:
        p = random_params(rng, op.dim)
        X = rng.uniform(size=(4, op.dim))
        tol = 1e-12 if op.variant != "fractional" else 1e-8
        assert np.allclose(ops.kernel_matrix(op, p, X, X, "uu"), se_matrix(X, X, p), rtol=tol, atol=tol)
