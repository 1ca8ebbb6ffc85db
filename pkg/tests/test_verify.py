import json
import math

import numpy as np
import pytest

from fracgreen.kernels import SPDOperator, rho
from fracgreen.verify import (
    CheckReport,
    NonnegativityCase,
    check_envelopes,
    check_lemma1,
    check_msd,
    check_nonnegativity,
    check_normalization,
    check_zero_mass,
    kernel_integral,
    reports_to_json,
    standard_operators,
)


def test_normalization_anisotropic_plane():
    rep = check_normalization(SPDOperator(np.diag([1.0, 4.0])), 0.5, (1.0,))
    assert rep.passed and rep.measured <= 1e-6


def test_normalization_short_time_line():
    rep = check_normalization(SPDOperator(np.eye(1)), 0.8, (0.1,))
    assert rep.passed


def test_four_dimensions_reported_unsupported():
    for check in (check_normalization, check_zero_mass):
        rep = check(SPDOperator(np.eye(4)), 0.5)
        assert not rep.passed and "unsupported" in rep.details and math.isnan(rep.measured)


def test_zero_mass_reports_closed_form_mass():
    # the measured mass is t^(a-1)/Gamma(a), so the check fails honestly
    rep = check_zero_mass(SPDOperator(np.diag([1.0, 4.0])), 0.5, (1.0, 0.25))
    closed = rep.details["closed_form_t^(a-1)/Gamma(a)"]
    assert np.allclose(rep.details["integrals"], closed, rtol=1e-8)
    assert not rep.passed


def test_dimension_mismatch_is_reported():
    rep = check_normalization(SPDOperator(np.eye(2)), 0.5, n=3)
    assert not rep.passed and "unsupported" in rep.details


def test_kernel_integral_of_time_derivative_vanishes():
    assert abs(kernel_integral(SPDOperator(np.eye(3)), 0.5, 1.0, time_derivative=True)) <= 1e-6


def test_standard_operators_are_spd():
    for n in (1, 2, 3):
        for op in standard_operators(n).values():
            assert op.dim == n and np.all(np.linalg.eigvalsh(op.a) > 0)


def test_rho_triangle_inequality_at_half_alpha():
    rep = check_lemma1(100_000, beta=0.25)
    assert rep.passed and rep.measured == 0.0
    assert rep.details["admissible"] > 99_000


def test_rho_triangle_inequality_with_steep_exponent():
    assert check_lemma1(20_000, beta=0.9).passed


def test_rho_triangle_check_rejects_bad_exponent():
    rep = check_lemma1(10, beta=1.0)
    assert not rep.passed and "unsupported" in rep.details


def test_collinear_points_give_equality():
    x = [0.4, -0.1]
    lhs = rho(1.0, x, 0.6, x, 0.25) + rho(0.6, x, 0.2, x, 0.25)
    assert lhs == rho(1.0, x, 0.2, x, 0.25) == 0.0


@pytest.mark.parametrize("alpha, n", [(0.5, 1), (0.8, 2), (0.99, 1)])
def test_mean_squared_displacement(alpha, n):
    rep = check_msd((alpha,), n=n)
    fit = rep.details[str(alpha)]
    assert rep.passed
    assert fit["slope"] == pytest.approx(alpha, abs=1e-3)
    assert fit["intercept_factor"] == pytest.approx(2 * n / math.gamma(1 + alpha), rel=1e-3)


def test_envelope_second_derivative_three_dimensions_near():
    assert check_envelopes("Z0", 3, 0.5, m=2, branch="near").passed


def test_envelope_y0_second_derivative_line():
    assert check_envelopes("Y0", 1, 0.5, m=2).passed


@pytest.mark.parametrize("kernel_id", ["M", "K", "M_diff"])
def test_levi_pointwise_envelopes(kernel_id):
    rep = check_envelopes(kernel_id, 1, 0.5, samples=100)
    assert rep.passed
    if kernel_id.endswith("_diff"):
        assert rep.details["epsilon"] == pytest.approx(0.5)


def test_levi_q_envelope():
    assert check_envelopes("Q", 1, 0.5).passed


@pytest.mark.parametrize("kwargs, reason", [
    (dict(kernel_id="W", n=1), "unknown"),
    (dict(kernel_id="Z0_dt", n=2), "n >= 3"),
    (dict(kernel_id="M", n=2), "n = 1"),
    (dict(kernel_id="Z0", n=1, m=4), "not implemented"),
])
def test_unsupported_envelopes(kwargs, reason):
    rep = check_envelopes(alpha=0.5, **kwargs)
    assert not rep.passed and reason in rep.details["unsupported"]


def test_nonnegativity_cases():
    rng = np.random.default_rng(0)
    good = [NonnegativityCase("positive", rng.uniform(0, 1, 50)),
            NonnegativityCase("zero", np.zeros(10)),
            NonnegativityCase("tiny dip", np.array([1.0, -5e-7]))]
    assert check_nonnegativity(good).passed
    bad = good + [NonnegativityCase("dip", np.array([1.0, -1e-3]))]
    rep = check_nonnegativity(bad)
    assert not rep.passed and rep.measured == pytest.approx(-1e-3)


def test_json_is_sorted_and_reproducible():
    reports = [check_lemma1(2000, seed=5), check_msd((0.5,)), check_lemma1(2000, beta=0.5, seed=5)]
    text = reports_to_json(reports)
    items = json.loads(text)
    assert [i["check_name"] for i in items] == ["lemma1", "lemma1", "msd"]
    assert all("pass" in i and "passed" not in i for i in items)
    again = [check_lemma1(2000, seed=5), check_msd((0.5,)), check_lemma1(2000, beta=0.5, seed=5)]
    strip = [{k: v for k, v in i.items() if k != "runtime_seconds"} for i in items]
    strip2 = [{k: v for k, v in i.items() if k != "runtime_seconds"} for i in json.loads(reports_to_json(again))]
    assert strip == strip2


def test_report_is_plain_data():
    rep = CheckReport("x", {"alpha": np.float64(0.5)}, np.float64(1.0), 2.0, True, 0.0)
    assert json.loads(reports_to_json([rep]))[0]["parameters"]["alpha"] == 0.5
