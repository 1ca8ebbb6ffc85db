import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracgreen.kernels import (
    FourierResolutionError,
    KernelError,
    KernelQuery,
    KernelSingularityError,
    SPDOperator,
    default_sigma,
    envelope_y0,
    envelope_z0,
    fourier_oracle_z0,
    rho,
    spd,
    y0_derivative,
    y0_eval,
    z0_derivative,
    z0_eval,
    z0_time_derivative,
)
from fracgreen.profiles import kernel_values

# Wright-function series summed term by term in mpmath (80 digits): in one dimension
#   Z0 = t^(-a/2) W(-a/2, 1 - a/2; -|x| t^(-a/2)) / 2
#   Y0 = t^(a/2 - 1) W(-a/2, a/2; -|x| t^(-a/2)) / 2
# and in three dimensions Z0 = -(d/dr Z0_1d) / (2 pi r).
Z0_1D = [
    (0.5, 1.0, 0.3, 0.3295702090483397104),
    (0.5, 0.1, 1.2, 0.1267514347979461367),
    (0.3, 2.0, 0.05, 0.38969869365960186901),
    (0.8, 0.5, 2.5, 0.029639847359469312702),
]
Y0_1D = [
    (0.5, 1.0, 0.3, 0.13391748170925092866),
    (0.8, 0.5, 2.5, 0.038659219332410789942),
    (0.3, 2.0, 0.7, 0.039382633032408670468),
]
Z0_3D = [
    (0.5, 1.0, 0.7, 0.04322708742308373125),
    (0.8, 0.3, 1.5, 0.01758486919010399391),
]

ID1, ID2, ID3 = (SPDOperator.identity(n) for n in (1, 2, 3))


@pytest.mark.parametrize("alpha, t, x, expected", Z0_1D)
def test_z0_one_dimension_matches_wright_series(alpha, t, x, expected):
    assert z0_eval(ID1, KernelQuery(alpha, t, [x])) == pytest.approx(expected, rel=1e-11)


@pytest.mark.parametrize("alpha, t, x, expected", Y0_1D)
def test_y0_one_dimension_matches_wright_series(alpha, t, x, expected):
    assert y0_eval(ID1, KernelQuery(alpha, t, [x])) == pytest.approx(expected, rel=1e-11)


@pytest.mark.parametrize("alpha, t, r, expected", Z0_3D)
def test_z0_three_dimensions_matches_radial_reduction(alpha, t, r, expected):
    x = np.array([r, 0.0, 0.0])
    assert z0_eval(ID3, KernelQuery(alpha, t, x)) == pytest.approx(expected, rel=1e-10)
    rot = np.array([0.6, 0.0, 0.8]) * r
    assert z0_eval(ID3, KernelQuery(alpha, t, rot)) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("n", [1, 2])
def test_fourier_oracle_agrees(n):
    rng = np.random.default_rng(7)
    op = spd(np.diag([1.0, 4.0][:n]))
    for _ in range(5):
        t = float(np.exp(rng.uniform(-3, 0.5)))
        x = rng.normal(size=n) * t**0.25
        direct = z0_eval(op, KernelQuery(0.5, t, x))
        assert fourier_oracle_z0(op, 0.5, t, x) == pytest.approx(direct, rel=1e-5)


@given(st.floats(0.05, 0.95), st.floats(1e-3, 10.0), st.floats(-5.0, 5.0), st.floats(0.2, 5.0))
@settings(max_examples=60, deadline=None)
def test_self_similarity(alpha, t, x, lam):
    # Z0(lam^(2/a) t, lam x) = Z0(t, x) / lam in one dimension
    a = z0_eval(ID1, KernelQuery(alpha, t, [x]))
    b = z0_eval(ID1, KernelQuery(alpha, lam ** (2 / alpha) * t, [lam * x]))
    assert b == pytest.approx(a / lam, rel=1e-9, abs=1e-300)


@given(st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=40, deadline=None)
def test_even_and_positive(x1, x2):
    if math.hypot(x1, x2) < 1e-8:
        return
    q1 = KernelQuery(0.6, 0.7, [x1, x2])
    q2 = KernelQuery(0.6, 0.7, [-x1, -x2])
    v = z0_eval(ID2, q1)
    assert v > 0
    assert z0_eval(ID2, q2) == v


def test_anisotropic_kernel_is_a_linear_image():
    a = np.array([[2.0, 0.3], [0.3, 1.0]])
    op = spd(a)
    w, v = np.linalg.eigh(a)
    root_inv = v @ np.diag(w**-0.5) @ v.T
    x = np.array([0.4, -0.9])
    got = z0_eval(op, KernelQuery(0.5, 0.8, x))
    ref = z0_eval(ID2, KernelQuery(0.5, 0.8, root_inv @ x)) / math.sqrt(np.linalg.det(a))
    assert got == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("kind", ["z", "y"])
@pytest.mark.parametrize("n, x", [(1, [0.7]), (2, [0.5, -0.4]), (3, [0.3, 0.2, 0.6])])
def test_first_and_second_derivatives_match_differences(kind, n, x):
    op = SPDOperator.identity(n)
    value = z0_eval if kind == "z" else y0_eval
    deriv = z0_derivative if kind == "z" else y0_derivative
    x = np.array(x)
    h = 1e-4
    e = np.zeros(n)
    e[0] = h

    def f(p):
        return value(op, KernelQuery(0.5, 0.9, p))

    m1 = (1,) + (0,) * (n - 1)
    m2 = (2,) + (0,) * (n - 1)
    fd1 = (f(x + e) - f(x - e)) / (2 * h)
    fd2 = (f(x + e) - 2 * f(x) + f(x - e)) / h**2
    assert deriv(op, KernelQuery(0.5, 0.9, x, m1)) == pytest.approx(fd1, rel=1e-6)
    assert deriv(op, KernelQuery(0.5, 0.9, x, m2)) == pytest.approx(fd2, rel=1e-4)


def test_mixed_derivative_matches_differences():
    op = spd([[1.5, 0.2], [0.2, 0.8]])
    x = np.array([0.6, 0.3])
    h = 1e-4

    def f(p):
        return z0_eval(op, KernelQuery(0.4, 1.2, p))

    fd = (f(x + [h, h]) - f(x + [h, -h]) - f(x + [-h, h]) + f(x - [h, h])) / (4 * h * h)
    assert z0_derivative(op, KernelQuery(0.4, 1.2, x, (1, 1))) == pytest.approx(fd, rel=1e-4)


def test_time_derivative_matches_differences():
    op = ID3
    x = np.array([0.5, 0.1, -0.2])
    t, h = 0.8, 1e-5
    fd = (z0_eval(op, KernelQuery(0.5, t + h, x)) - z0_eval(op, KernelQuery(0.5, t - h, x))) / (2 * h)
    assert z0_time_derivative(op, KernelQuery(0.5, t, x)) == pytest.approx(fd, rel=1e-6)


def test_one_dimensional_kernel_is_finite_at_origin():
    v = z0_eval(ID1, KernelQuery(0.5, 1.0, [0.0]))
    # Z0(t, 0) = t^(-a/2) / (2 Gamma(1 - a/2))
    assert v == pytest.approx(0.5 / math.gamma(0.75), rel=1e-12)


@pytest.mark.parametrize("n", [2, 3])
def test_origin_is_singular_in_higher_dimensions(n):
    with pytest.raises(KernelSingularityError):
        z0_eval(SPDOperator.identity(n), KernelQuery(0.5, 1.0, np.zeros(n)))


def test_tabulated_profiles_match_direct_evaluation():
    rng = np.random.default_rng(3)
    op = spd([[1.3, 0.3], [0.3, 1.0]])
    t = np.exp(rng.uniform(-4, 0, 50))
    d = rng.normal(size=(50, 2))
    ainv = np.repeat(op.a_inv[None], 50, axis=0)
    det = np.full(50, op.det_a)
    for kind, fn in (("z", z0_eval), ("y", y0_eval)):
        vals, _, _ = kernel_values(kind, 0.5, t, d, ainv, det)
        ref = np.array([fn(op, KernelQuery(0.5, ti, di)) for ti, di in zip(t, d)])
        assert np.allclose(vals, ref, rtol=1e-7, atol=1e-14 * ref.max())


@pytest.mark.parametrize("bad", [
    dict(alpha=1.0, t=1.0, x=[0.1]),
    dict(alpha=0.5, t=0.0, x=[0.1]),
    dict(alpha=0.5, t=1.0, x=[np.inf]),
    dict(alpha=0.5, t=1.0, x=[0.1], m=(4,)),
    dict(alpha=0.5, t=1.0, x=[0.1, 0.2], m=(1,)),
])
def test_invalid_queries(bad):
    with pytest.raises(KernelError):
        KernelQuery(**bad)


@pytest.mark.parametrize("a", [[[1.0, 0.5], [0.4, 1.0]], [[1.0, 2.0], [2.0, 1.0]], [[np.nan]]])
def test_invalid_operators(a):
    with pytest.raises(KernelError):
        spd(a)


def test_dimension_mismatch_rejected():
    with pytest.raises(KernelError):
        z0_eval(ID2, KernelQuery(0.5, 1.0, [0.1]))


def test_eval_and_derivative_entry_points_are_separate():
    with pytest.raises(KernelError):
        z0_eval(ID1, KernelQuery(0.5, 1.0, [0.1], (1,)))
    with pytest.raises(KernelError):
        y0_derivative(ID1, KernelQuery(0.5, 1.0, [0.1]))


def test_envelopes_dominate_kernels_up_to_constant():
    sigma = default_sigma(0.5)
    ratios = []
    for t in (0.01, 0.1, 1.0):
        for r in (0.05, 0.5, 2.0, 6.0):
            q = KernelQuery(0.5, t, [r])
            ratios.append(z0_eval(ID1, q) / envelope_z0(1, 0.5, (0,), t, [r], sigma))
            ratios.append(abs(y0_eval(ID1, q)) / envelope_y0(1, 0.5, (0,), t, [r], sigma))
    assert max(ratios) < 10.0


def test_rho_distance():
    assert rho(1.0, [0.0], 0.0, [0.0], 0.25) == 0.0
    assert rho(2.0, [1.0, 1.0], 1.0, [0.0, 0.0], 0.5) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        rho(1.0, [0.0], 1.0, [0.0], 0.5)


def test_fourier_resolution_error_type():
    assert issubclass(FourierResolutionError, ArithmeticError)
