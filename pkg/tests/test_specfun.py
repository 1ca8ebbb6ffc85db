import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from fracgreen.kernels import kernel_spec
from fracgreen.specfun import (
    ContourParams,
    GammaPoleError,
    HFunctionSpec,
    RegimeThresholds,
    complex_gamma,
    complex_loggamma,
    hfun_contour,
    hfun_eval,
    hfun_large_z,
    hfun_shift_derivative,
    hfun_small_z,
    loggamma_array,
    mittag_leffler,
    mittag_leffler_neg,
)

# mpmath at 40 digits, frozen
GAMMA_REFERENCE = [
    ((0.5, 0.0), (1.7724538509055160273, 0.0)),
    ((3.7, 1.2), (0.48030991567412313172, 3.3176635199002855494)),
    ((-2.5, 0.3), (-0.61382299743774149045, -0.21123261493704177661)),
    ((12.25, -4.0), (-33053542.396448896235, 18334099.605804889609)),
]

ML_REFERENCE = [
    (0.5, -2.0, 0.25539567631050574387),
    (0.5, 1.5, 18.653886256262733939),
    (0.8, -10.0, 0.024902819761976532186),
    (0.3, -0.5, 0.63264900594359902246),
    (0.9, 3.0, 32.921897176850824779),
]


@pytest.mark.parametrize("z, expected", GAMMA_REFERENCE)
def test_complex_gamma_matches_reference(z, expected):
    got = complex_gamma(complex(*z))
    ref = complex(*expected)
    assert abs(got - ref) <= 1e-13 * abs(ref)


@given(st.complex_numbers(min_magnitude=0.1, max_magnitude=30, allow_nan=False, allow_infinity=False))
@settings(max_examples=200, deadline=None)
def test_gamma_recurrence(z):
    if abs(z.imag) < 1e-3 and abs(z.real - round(z.real)) < 1e-3 and z.real < 0.5:
        return
    lhs = complex_loggamma(z + 1)
    rhs = complex_loggamma(z) + cmath.log(z)
    # equal modulo 2 pi i
    d = lhs - rhs
    assert abs(d.real) <= 1e-11 * max(1.0, abs(lhs.real))
    assert abs((d.imag + math.pi) % (2 * math.pi) - math.pi) <= 1e-10


@given(st.floats(-20, 20), st.floats(0.01, 20))
@settings(max_examples=200, deadline=None)
def test_gamma_reflection(x, y):
    z = complex(x, y)
    lhs = complex_gamma(z) * complex_gamma(1 - z)
    rhs = math.pi / cmath.sin(math.pi * z)
    assert abs(lhs - rhs) <= 1e-11 * abs(rhs)


def test_loggamma_array_agrees_with_scipy():
    z = np.array([0.3 + 0.1j, 5.0 - 7.0j, -3.3 + 2.0j, 40.0 + 0.5j])
    assert np.allclose(loggamma_array(z), special.loggamma(z), rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("z", [0.0, -1.0, -7.0])
def test_gamma_pole_raises(z):
    with pytest.raises(GammaPoleError):
        complex_gamma(z)


@pytest.mark.parametrize("alpha, z, expected", ML_REFERENCE)
def test_mittag_leffler_matches_series_reference(alpha, z, expected):
    assert mittag_leffler(alpha, z).real == pytest.approx(expected, rel=1e-11)


@given(st.floats(0.0, 25.0))
@settings(max_examples=100, deadline=None)
def test_mittag_leffler_half_is_scaled_erfc(x):
    # E_{1/2}(-x) = exp(x^2) erfc(x)
    assert mittag_leffler(0.5, -x).real == pytest.approx(special.erfcx(x), rel=1e-11, abs=1e-15)


def test_mittag_leffler_order_one_is_exponential():
    for z in (-3.0, 0.5, 2.0 + 1.0j):
        assert mittag_leffler(1.0, z) == pytest.approx(cmath.exp(z), rel=1e-15)


def test_mittag_leffler_rejects_order_out_of_range():
    with pytest.raises(ValueError):
        mittag_leffler(1.5, 0.1)
    with pytest.raises(ValueError):
        mittag_leffler_neg(0.0, [1.0])


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
def test_vectorised_negative_axis_matches_scalar(alpha):
    x = np.concatenate([[0.0], np.logspace(-3, 3, 40)])
    vec = mittag_leffler_neg(alpha, x)
    ref = np.array([mittag_leffler(alpha, -v).real for v in x])
    assert np.allclose(vec, ref, rtol=1e-10, atol=1e-16)


def test_mittag_leffler_neg_rejects_negative_input():
    with pytest.raises(ValueError):
        mittag_leffler_neg(0.5, [-1.0])


# H-functions with closed forms


@pytest.mark.parametrize("z", [0.05, 0.4, 2.0, 9.0, 30.0])
def test_h_single_gamma_is_exponential(z):
    spec = HFunctionSpec.build([], [(0.0, 1.0)])
    assert hfun_eval(spec, z).value == pytest.approx(math.exp(-z), rel=1e-11)


@pytest.mark.parametrize("z", [0.1, 0.45, 1.0, 3.0])
def test_h_shifted_gamma_is_power_times_exponential(z):
    spec = HFunctionSpec.build([], [(0.5, 1.0)])
    assert hfun_eval(spec, z).value == pytest.approx(math.sqrt(z) * math.exp(-z), rel=1e-11)


@pytest.mark.parametrize("z", [0.1, 0.3, 1.0, 2.5])
def test_h_with_upper_pair_is_complementary_error_function(z):
    # residue sum  sum (-z)^k / (k! Gamma(1 - k/2)) = erfc(z/2)
    spec = HFunctionSpec.build([(1.0, 0.5)], [(0.0, 1.0)])
    assert hfun_eval(spec, z).value == pytest.approx(special.erfc(0.5 * z), rel=1e-10)


@pytest.mark.parametrize("kind", ["z", "y"])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_shift_derivative_matches_finite_difference(kind, n):
    spec = kernel_spec(kind, n, 0.5)
    shifted = hfun_shift_derivative(spec)
    z, h = 1.3, 1e-4
    fd = (hfun_contour(spec, z + h).value - hfun_contour(spec, z - h).value) / (2 * h)
    assert -hfun_contour(shifted, z).value / z == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("kind", ["z", "y"])
@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_series_and_contour_overlap(kind, n):
    spec = kernel_spec(kind, n, 0.5)
    for z in (0.1, 0.3):
        a = hfun_small_z(spec, z).value
        b = hfun_contour(spec, z).value
        assert a == pytest.approx(b, rel=1e-9)


def test_regime_selection():
    spec = kernel_spec("z", 1, 0.5)
    assert hfun_eval(spec, 0.2).regime == "series"
    assert hfun_eval(spec, 3.0).regime == "contour"
    assert hfun_eval(spec, 40.0).regime == "asymptotic"
    wide = RegimeThresholds(series_max=0.05, asymptotic_min=100.0)
    assert hfun_eval(spec, 0.2, wide).regime == "contour"


def test_contour_is_stable_under_parameter_changes():
    spec = kernel_spec("y", 2, 0.7)
    base = hfun_contour(spec, 2.0).value
    other = hfun_contour(spec, 2.0, ContourParams(sigma=0.3)).value
    assert other == pytest.approx(base, rel=1e-10)


def test_large_z_within_one_percent_of_contour():
    spec = kernel_spec("z", 3, 0.5)
    assert hfun_large_z(spec, 50.0).value == pytest.approx(hfun_contour(spec, 50.0).value, rel=1e-2)


def test_invalid_specs_rejected():
    with pytest.raises(ValueError):
        HFunctionSpec(1, 0, 1, 1, ((1.0, 0.5),), ((0.0, -1.0),))
    with pytest.raises(ValueError):
        HFunctionSpec(1, 0, 2, 1, ((1.0, 0.5),), ((0.0, 1.0),))
    with pytest.raises(ValueError):
        hfun_eval(kernel_spec("z", 1, 0.5), -1.0)
