"""Kernel operators against high-precision finite differences of the plain multiquadric."""

from fractions import Fraction

import mpmath
import numpy as np
import pytest

from rbfcontrol.kernels import (
    Kernel,
    OperatorSpec,
    OpTag,
    PolyBasis,
    eval_kernel_op,
    eval_poly_op,
    kernel_matrix,
    poly_matrix,
    reconstruction_row,
)
from rbfcontrol.linalg import Precision, as_float

EXT = Precision.EXTENDED

SPECS = {
    "poisson": OperatorSpec.poisson("1e-6"),
    "convection": OperatorSpec.convection(Fraction(1, 200), Fraction("2.4"), "1e-4"),
}


def _fd_reference(op, spec, c, x, xj):
    """Apply ``op`` to sqrt(c + |x - xj|^2) by mpmath numerical differentiation."""
    with mpmath.workdps(50):
        c = mpmath.mpf(Fraction(c).numerator) / Fraction(c).denominator
        a, b = mpmath.mpf(float(xj[0])), mpmath.mpf(float(xj[1]))
        eps = mpmath.mpf(Fraction(spec.eps).numerator) / Fraction(spec.eps).denominator
        w1, w2 = (mpmath.mpf(w) if not isinstance(w, Fraction) else mpmath.mpf(w.numerator) / w.denominator
                  for w in spec.omega)
        beta = mpmath.mpf(Fraction(spec.beta).numerator) / Fraction(spec.beta).denominator

        def phi(s, t):
            return mpmath.sqrt(c + (s - a) ** 2 + (t - b) ** 2)

        p = (mpmath.mpf(float(x[0])), mpmath.mpf(float(x[1])))

        def d(i, j):
            return mpmath.diff(phi, p, (i, j))

        lap = d(2, 0) + d(0, 2)
        conv = w1 * d(1, 0) + w2 * d(0, 1)
        conv2 = w1 * w1 * d(2, 0) + 2 * w1 * w2 * d(1, 1) + w2 * w2 * d(0, 2)
        bilap = d(4, 0) + 2 * d(2, 2) + d(0, 4)
        estar_e = eps * eps * bilap - conv2
        table = {
            OpTag.IDENTITY: phi(*p),
            OpTag.DIRICHLET: phi(*p),
            OpTag.LAPLACIAN: lap,
            OpTag.BILAPLACIAN: bilap,
            OpTag.CONVECTION: conv,
            OpTag.CONVECTION2: conv2,
            OpTag.DX1: d(1, 0),
            OpTag.DX2: d(0, 1),
            OpTag.E: -eps * lap + conv,
            OpTag.ESTAR: -eps * lap - conv,
            OpTag.BETA_ESTAR: beta * (-eps * lap - conv),
            OpTag.ESTAR_E: estar_e,
            OpTag.M: phi(*p) + beta * estar_e,
        }
        return table[op]


CASES = [
    (Fraction(1), (0.31, 0.62), (0.5, 0.45)),
    (Fraction(1, 10), (0.9, 0.1), (0.7, 0.3)),
    (Fraction(5), (0.2, 0.2), (0.8, 0.9)),
    (Fraction(4, 1000), (0.51, 0.49), (0.5, 0.5)),
]


@pytest.mark.parametrize("op", list(OpTag))
@pytest.mark.parametrize("name", list(SPECS))
def test_kernel_operator_matches_finite_differences(op, name):
    spec = SPECS[name]
    for c, x, xj in CASES:
        k = Kernel(c)
        ref = float(_fd_reference(op, spec, c, x, xj))
        got_d = float(eval_kernel_op(op, spec, k, np.array(x), np.array(xj)))
        got_e = float(eval_kernel_op(op, spec, k, np.array(x), np.array(xj), EXT))
        scale = max(abs(ref), 1e-300)
        assert abs(got_d - ref) <= 1e-6 * scale, (op, c, got_d, ref)
        assert abs(got_e - ref) <= 1e-6 * scale, (op, c, got_e, ref)


def test_extended_kernel_tracks_mpmath_closely():
    spec = SPECS["convection"]
    k = Kernel("0.004")
    x, xj = np.array([0.51, 0.49]), np.array([0.5, 0.5])
    got = eval_kernel_op(OpTag.M, spec, k, x, xj, EXT)
    ref = _fd_reference(OpTag.M, spec, k.c, x, xj)
    with mpmath.workdps(50):
        assert abs(got.to_mpf() - ref) <= mpmath.mpf("1e-25") * abs(ref)


def test_kernel_at_center_and_symmetry():
    spec = SPECS["poisson"]
    k = Kernel(Fraction(1, 4))
    x = np.array([0.3, 0.3])
    assert float(eval_kernel_op(OpTag.IDENTITY, spec, k, x, x)) == 0.5
    a, b = np.array([0.1, 0.7]), np.array([0.6, 0.2])
    for op in (OpTag.LAPLACIAN, OpTag.BILAPLACIAN, OpTag.M):
        assert float(eval_kernel_op(op, spec, k, a, b)) == float(eval_kernel_op(op, spec, k, b, a))


@pytest.mark.parametrize("name", list(SPECS))
def test_poly_operators(name):
    spec = SPECS[name]
    w1, w2 = (float(w) for w in spec.omega)
    x = np.array([[0.25, 0.75], [0.5, 0.1]])
    expect = {
        OpTag.IDENTITY: [1.0, None, None],
        OpTag.M: [1.0, None, None],
        OpTag.E: [0.0, w1, w2],
        OpTag.ESTAR: [0.0, -w1, -w2],
        OpTag.BETA_ESTAR: [0.0, -float(spec.beta) * w1, -float(spec.beta) * w2],
        OpTag.LAPLACIAN: [0.0, 0.0, 0.0],
        OpTag.ESTAR_E: [0.0, 0.0, 0.0],
    }
    for op, vals in expect.items():
        for p, v in enumerate(vals):
            got = as_float(eval_poly_op(op, spec, p, x))
            want = x[:, p - 1] if v is None else np.full(2, v)
            assert np.allclose(got, want, rtol=1e-15, atol=0), (op, p)
    with pytest.raises(ValueError):
        eval_poly_op(OpTag.E, spec, 3, x)


def test_matrix_shapes_and_rows():
    spec = SPECS["convection"]
    k = Kernel(1)
    x = np.random.default_rng(0).uniform(size=(6, 2))
    K = kernel_matrix(OpTag.E, spec, k, x, x, EXT)
    assert K.shape == (6, 6)
    P = poly_matrix(OpTag.E, spec, PolyBasis(1), x, EXT)
    assert P.shape == (6, 3)
    assert poly_matrix(OpTag.E, spec, PolyBasis(None), x).shape == (6, 0)
    row = reconstruction_row(OpTag.E, spec, k, PolyBasis(1), x[0], x, EXT)
    assert np.array_equal(as_float(row[:6]), as_float(K[0]))
    assert np.array_equal(as_float(row[6:]), as_float(P[0]))
    with pytest.raises(ValueError):
        reconstruction_row(OpTag.E, spec, k, PolyBasis(1), x[0], x[:0])


@pytest.mark.parametrize("c,expect", [
    (5, Fraction("5.001")),
    ("0.4", Fraction("0.4001")),
    (10, Fraction("10.01")),
    (1, Fraction("1.001")),
    ("0.001", Fraction("0.001001")),
    ("0.0099", Fraction("0.009901")),
])
def test_perturbed_shape_parameter(c, expect):
    assert Kernel(c).perturbed().c == expect


def test_decimal_input_stays_exact():
    assert Kernel(0.1).c == Fraction(1, 10)
    assert OperatorSpec.poisson(1e-10).beta == Fraction(1, 10**10)
    assert EXT.scalar(Kernel(0.1).c).lo != 0.0


def test_validation():
    with pytest.raises(ValueError):
        Kernel(0)
    with pytest.raises(ValueError):
        PolyBasis(2)
    with pytest.raises(ValueError):
        OperatorSpec(Fraction(1, 200), (1, 1), 1)
    with pytest.raises(ValueError):
        OperatorSpec(1, (0, 0), -1)
    spec = OperatorSpec.convection(Fraction(1, 200), Fraction("2.4"), 1)
    assert abs(float(spec.omega[0]) ** 2 + float(spec.omega[1]) ** 2 - 1.0) < 1e-15
    assert spec.with_beta("1e-6").beta == Fraction(1, 10**6)
    assert OperatorSpec.poisson(1).is_poisson and not spec.is_poisson
