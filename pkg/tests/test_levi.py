import math

import numpy as np
import pytest

from fracgreen.fractional import TimeGrid
from fracgreen.kernels import (
    KernelQuery,
    SPDOperator,
    y0_derivative,
    z0_derivative,
    z0_eval,
)
from fracgreen.levi import (
    CoefficientField,
    DiagonalSingularityError,
    EllipticityError,
    GreenMatrixTable,
    GridError,
    LeviConvergenceError,
    LeviError,
    OperatorSpec,
    SpaceTimeGrid,
    assemble_Y,
    assemble_Z,
    green_tables,
    levi_K,
    levi_M,
    neumann_iterates,
    solve_Psi,
    solve_Q,
)
from fracgreen.solver import initial_potential

ALPHA = 0.5


@pytest.fixture(scope="module")
def desk():
    op = OperatorSpec.isotropic(ALPHA, 1, CoefficientField.trig(1.0, 0.3, [1.0], holder_gamma=1.0))
    grid = SpaceTimeGrid.periodic_box(TimeGrid.graded(1.0, 6, 2.0 / ALPHA), [-math.pi], [math.pi], [16])
    return op, grid


@pytest.fixture(scope="module")
def q_table(desk):
    op, grid = desk
    return solve_Q(op, grid, grid.points[5])


# coefficient fields and operators


def test_field_families_evaluate():
    pts = np.array([[0.0], [math.pi / 2]])
    assert np.allclose(CoefficientField.constant(2.5).evaluate(pts), 2.5)
    assert np.allclose(CoefficientField.trig(1.0, 0.3, [1.0]).evaluate(pts), [1.0, 1.3])
    bump = CoefficientField.bump(1.0, 0.5, [0.0], 1.0)
    vals = bump.evaluate(pts)
    assert vals[0] == pytest.approx(1.5) and 1.0 < vals[1] < 1.5


def test_field_bounds_and_holder_ratio():
    f = CoefficientField.trig(1.0, 0.3, [2.0], holder_gamma=0.6)
    assert f.sup_bound == pytest.approx(1.3)
    assert not f.is_constant
    # |0.3 sin(2x) - 0.3 sin(2y)| <= 0.6 |x - y| and |x - y| <= ~0.5 here
    assert f.holder_ratio(1) < 0.6
    assert CoefficientField.trig(1.0, 0.0, [2.0]).is_constant


@pytest.mark.parametrize("bad", [
    dict(family="spline", params=(1.0,)),
    dict(family="constant", params=(1.0,), holder_gamma=1.5),
    dict(family="radial_bump", params=(1.0, 0.5, -1.0, 0.0)),
])
def test_invalid_fields(bad):
    with pytest.raises(ValueError):
        CoefficientField(**bad)


def test_operator_rejects_loss_of_ellipticity():
    with pytest.raises(EllipticityError):
        OperatorSpec.isotropic(ALPHA, 1, CoefficientField.trig(0.2, 0.5, [1.0]))
    with pytest.raises(EllipticityError):
        # sampled minimum is 0.7, below the declared bound
        OperatorSpec(ALPHA, ((CoefficientField.trig(1.0, 0.3, [1.0]),),), delta=0.9)


def test_operator_rejects_asymmetry_and_bad_alpha():
    one, half = CoefficientField.constant(1.0), CoefficientField.constant(0.5)
    with pytest.raises(ValueError):
        OperatorSpec(ALPHA, ((one, half), (CoefficientField.constant(0.4), one)))
    with pytest.raises(ValueError):
        OperatorSpec.from_matrix(1.0, np.eye(1))


def test_operator_properties():
    op = OperatorSpec.isotropic(ALPHA, 2, CoefficientField.trig(1.0, 0.2, [1.0, 0.0], holder_gamma=0.7))
    assert op.n == 2 and op.gamma == 0.7
    assert not op.constant_principal and op.lower_order_zero
    assert op.lam_max == pytest.approx(1.2)
    a, b, c = op.evaluate([[math.pi / 2, 0.0]])
    assert np.allclose(a[0], 1.2 * np.eye(2)) and np.all(b == 0) and np.all(c == 0)


# grids


def test_window_needs_cutoff_radius():
    tg = TimeGrid.graded(1.0, 4, 2.0)
    with pytest.raises(GridError):
        SpaceTimeGrid.window(tg, [0.0], 3.0, [16], ALPHA)
    g = SpaceTimeGrid.window(tg, [0.0], 6.5, [16], ALPHA)
    assert g.cutoff_radius == pytest.approx(6.5)


def test_grid_checks_and_coarsening(desk):
    op, grid = desk
    assert grid.coarsened().times.size == 4
    op2 = OperatorSpec.from_matrix(ALPHA, np.eye(2))
    with pytest.raises(GridError):
        grid.check(op2)
    with pytest.raises(GridError):
        SpaceTimeGrid(grid.time, [0.0], [1.0], [3])


def test_three_dimensions_need_experimental_flag():
    op = OperatorSpec.from_matrix(ALPHA, np.eye(3), c=0.1)
    tg = TimeGrid.graded(0.1, 2, 2.0)
    grid = SpaceTimeGrid.periodic_box(tg, [-1.0] * 3, [1.0] * 3, [4] * 3)
    with pytest.raises(LeviError):
        solve_Q(op, grid, [0.0, 0.0, 0.0])


# pointwise kernels


def test_reaction_only_kernels_are_scaled_parametrix():
    op = OperatorSpec.from_matrix(ALPHA, np.eye(1), c=0.4)
    q = KernelQuery(ALPHA, 0.7, [0.3])
    assert levi_M(op, 0.7, [0.3], [0.0])[0] == pytest.approx(0.4 * z0_eval(SPDOperator.identity(1), q), rel=1e-7)


def test_m_and_k_follow_frozen_coefficient_definition():
    field = CoefficientField.trig(1.0, 0.3, [1.0])
    op = OperatorSpec.isotropic(ALPHA, 1, field)
    x, xi, t = 0.9, 0.2, 0.4
    frozen = SPDOperator(np.array([[field.evaluate([[xi]])[0]]]))
    diff = field.evaluate([[x]])[0] - field.evaluate([[xi]])[0]
    q = KernelQuery(ALPHA, t, [x - xi], (2,))
    assert levi_M(op, t, [x], [xi])[0] == pytest.approx(diff * z0_derivative(frozen, q), rel=1e-6)
    assert levi_K(op, t, [x], [xi])[0] == pytest.approx(diff * y0_derivative(frozen, q), rel=1e-6)


def test_diagonal_singularity_in_two_dimensions():
    op = OperatorSpec.isotropic(ALPHA, 2, CoefficientField.trig(1.0, 0.2, [1.0, 0.0]))
    with pytest.raises(DiagonalSingularityError):
        levi_M(op, 0.5, [[0.1, 0.2]], [0.1, 0.2])


# Volterra tables


def test_constant_coefficients_give_zero_tables():
    op = OperatorSpec.from_matrix(ALPHA, np.eye(1))
    grid = SpaceTimeGrid.periodic_box(TimeGrid.graded(1.0, 4, 4.0), [-math.pi], [math.pi], [16])
    tab = solve_Q(op, grid, [0.0])
    assert np.all(tab.values[1:] == 0.0)
    z = assemble_Z(op, grid, [0.0], tab)
    assert np.all(z.correction[1:] == 0.0)


def test_q_table_satisfies_its_equation(q_table):
    assert q_table.residual_norm <= 1e-6
    assert math.isnan(q_table.values[0, 0])
    assert np.allclose(q_table.values[1:], q_table.source[1:] + q_table.remainder[1:])


def test_picard_and_marching_agree(desk, q_table):
    op, grid = desk
    pic = solve_Q(op, grid, grid.points[5], method="picard")
    scale = np.max(np.abs(q_table.remainder[1:]))
    assert np.max(np.abs(pic.remainder[1:] - q_table.remainder[1:])) <= 1e-5 * scale


def test_picard_reports_non_convergence(desk):
    op, grid = desk
    with pytest.raises(LeviConvergenceError):
        solve_Q(op, grid, grid.points[5], method="picard", max_iterations=1, tol=1e-14)


def test_neumann_series_sums_to_remainder(desk, q_table):
    op, grid = desk
    terms = neumann_iterates(op, grid, grid.points[5], terms=6)
    partial = sum(terms)
    rem = q_table.remainder[1:]
    assert np.max(np.abs(partial[1:] - rem)) <= 1e-3 * np.max(np.abs(rem))
    norms = [np.max(np.abs(t[1:])) for t in terms]
    assert all(b < a for a, b in zip(norms, norms[1:]))


def test_psi_table(desk):
    op, grid = desk
    tab = solve_Psi(op, grid, grid.points[5])
    assert tab.kind == "Psi" and tab.residual_norm <= 1e-6
    assert np.all(np.isfinite(tab.values[1:]))


def test_assembled_z_is_immutable_and_consistent(desk, q_table):
    op, grid = desk
    z = assemble_Z(op, grid, grid.points[5], q_table)
    assert isinstance(z, GreenMatrixTable)
    assert np.array_equal(z.values_Z - z.parametrix, z.values_VZ, equal_nan=True)
    with pytest.raises(ValueError):
        z.parametrix[1, 0] = 0.0
    vals = z.values[1:]
    assert vals.min() >= -1e-6 * vals.max()


@pytest.mark.slow
def test_z_tables_integrate_to_one(desk):
    op, grid = desk
    tabs = green_tables(op, grid, grid.points)
    u = initial_potential(tabs, CoefficientField.constant(1.0), grid).u
    assert np.max(np.abs(u[1:] - 1.0)) <= 5e-3
    z = np.stack([t.values for t in tabs], axis=-1)[1:]
    assert z.min() >= -1e-6 * z.max()


def test_y_table_assembles(desk):
    op, grid = desk
    y = assemble_Y(op, grid, grid.points[5])
    assert y.kind == "Y" and np.all(np.isfinite(y.values[1:]))
