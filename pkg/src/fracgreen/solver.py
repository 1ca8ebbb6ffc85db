"""Cauchy problem D^alpha u = B u + f, u(0) = u0, on a space-time grid.

The solution is

    u = int Z(t,x;xi) u0(xi) dxi + int_0^t int Y(t-l,x;y) f(l,y) dy dl.

Rather than building Z and Y for every source point, the solver uses that
both corrections are potentials of Y0: u = int Z0 u0 + P[phi], where the
density phi solves one Volterra equation per problem,

    phi = f + int M(.,.;xi) u0(xi) dxi + K * phi.

For constant coefficients without lower-order terms K = M = 0 and phi = f.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .fractional import SampledFunction, TimeGrid, caputo_derivative
from .kernels import SPDOperator
from .levi import (
    CoefficientField,
    GreenMatrixTable,
    GridError,
    LeviError,
    OperatorSpec,
    SpaceTimeGrid,
    _volterra,
    engine_for,
)

__all__ = [
    "CauchyProblem",
    "SolutionGrid",
    "SolverError",
    "heat_potential",
    "initial_potential",
    "residual",
    "solve_cauchy",
]


class SolverError(RuntimeError):
    pass


Source = CoefficientField | Callable[[float, np.ndarray], np.ndarray] | None


@dataclass(frozen=True, eq=False)
class CauchyProblem:
    """Data of the Cauchy problem.

    ``f`` is a time-independent :class:`CoefficientField`, a callable
    ``f(t, points) -> values`` (sampled at the grid nodes) or None.
    ``f_bound`` is the declared sup bound of a callable source.
    """

    alpha: float
    T: float
    op: OperatorSpec | SPDOperator
    u0: CoefficientField
    f: Source = None
    f_bound: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if isinstance(self.op, OperatorSpec) and self.op.alpha != self.alpha:
            raise ValueError("operator alpha differs from the problem alpha")
        if not isinstance(self.u0, CoefficientField):
            raise TypeError("u0 must be a CoefficientField")

    @property
    def spec(self) -> OperatorSpec:
        if isinstance(self.op, OperatorSpec):
            return self.op
        cached = self.__dict__.get("_spec")
        if cached is None:
            cached = OperatorSpec.from_spd(self.alpha, self.op)
            object.__setattr__(self, "_spec", cached)
        return cached

    @property
    def n(self) -> int:
        return self.spec.n

    def sample_source(self, times: np.ndarray, points: np.ndarray) -> np.ndarray | None:
        if self.f is None:
            return None
        if isinstance(self.f, CoefficientField):
            row = self.f.evaluate(points)
            return np.repeat(row[None, :], times.size, axis=0)
        out = np.array([np.asarray(self.f(float(t), points), dtype=float).reshape(-1) for t in times])
        if out.shape != (times.size, points.shape[0]) or not np.all(np.isfinite(out)):
            raise SolverError("source samples must be finite with one value per grid point")
        if self.f_bound is not None and np.max(np.abs(out)) > self.f_bound * (1 + 1e-12):
            raise SolverError("source exceeds its declared sup bound")
        return out


@dataclass(frozen=True, eq=False)
class SolutionGrid:
    """Values u[k, j] at (t_k, x_j); row 0 holds the initial datum."""

    grid: SpaceTimeGrid
    u: np.ndarray
    error_estimate: float = 0.0

    def __post_init__(self) -> None:
        u = np.asarray(self.u, dtype=float)
        if u.shape != (self.grid.times.size, self.grid.lattice.size):
            raise SolverError("solution array does not match the grid")
        if not (self.error_estimate >= 0 or math.isnan(self.error_estimate)):
            raise SolverError("error estimate must be nonnegative")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def points(self) -> np.ndarray:
        return self.grid.points

    def sup_norm(self) -> float:
        """max |u| over the finite entries (residual grids mark skipped nodes NaN)."""
        vals = np.abs(self.u[np.isfinite(self.u)])
        return float(vals.max()) if vals.size else 0.0

    def field(self, k: int) -> np.ndarray:
        """Level k reshaped to the lattice shape."""
        return self.u[k].reshape(self.grid.counts)


# ---------------------------------------------------------------------------
# potentials


def _grid_spec(kernel, grid: SpaceTimeGrid, alpha: float | None) -> OperatorSpec:
    if isinstance(kernel, OperatorSpec):
        return kernel
    if isinstance(kernel, SPDOperator):
        if alpha is None:
            raise ValueError("alpha is required with a closed-form operator")
        return OperatorSpec.from_spd(alpha, kernel)
    raise TypeError("expected an OperatorSpec, SPDOperator or a list of Green tables")


def _check_tables(tables: Sequence[GreenMatrixTable], grid: SpaceTimeGrid, kind: str) -> None:
    if len(tables) != grid.lattice.size:
        raise LeviError("need one table per lattice node as source point")
    for tab, xi in zip(tables, grid.points):
        if tab.kind != kind or tab.grid is not grid or not np.array_equal(tab.xi, xi):
            raise LeviError("tables must be assembled on this grid, ordered like its points")


def initial_potential(kernel, u0: CoefficientField, grid: SpaceTimeGrid,
                      alpha: float | None = None) -> SolutionGrid:
    """int Z(t, x; xi) u0(xi) dxi on the grid.

    ``kernel`` is an SPDOperator (needs ``alpha``), an OperatorSpec, or the
    list of assembled Z tables for every lattice node of ``grid``.
    """
    times, pts = grid.times, grid.points
    out = np.zeros((times.size, pts.shape[0]))
    out[0] = u0.evaluate(pts)
    fam, par = u0.packed()
    if isinstance(kernel, (list, tuple)):
        _check_tables(kernel, grid, "Z")
        eng = engine_for(kernel[0].op, grid)
        weights = out[0] * grid.lattice.hvol
        corr = np.stack([t.correction for t in kernel], axis=-1)
        for k in range(1, times.size):
            out[k] = eng.initial(k, fam, par, False) + corr[k] @ weights
        return SolutionGrid(grid, out)
    op = _grid_spec(kernel, grid, alpha)
    eng = engine_for(op, grid)
    if not (op.constant_principal and op.lower_order_zero):
        # Z differs from the frozen kernel; the density solve adds P[int Q u0]
        return solve_cauchy(CauchyProblem(op.alpha, grid.time.T, op, u0), grid, estimate_error=False)
    for k in range(1, times.size):
        out[k] = eng.initial(k, fam, par, False)
    return SolutionGrid(grid, out)


def heat_potential(kernel, f: Source, grid: SpaceTimeGrid, alpha: float | None = None) -> SolutionGrid:
    """int_0^t int Y(t - l, x; y) f(l, y) dy dl on the grid.

    ``kernel`` as in :func:`initial_potential` (Y tables for the list form).
    With tables the lag integral uses the trapezoid rule over the grid
    lags with the source evaluated at t - lag.
    """
    times, pts = grid.times, grid.points
    if isinstance(kernel, (list, tuple)):
        _check_tables(kernel, grid, "Y")
        op = kernel[0].op
        problem = CauchyProblem(op.alpha, grid.time.T, op, CoefficientField.constant(0.0), f)
        # frozen part through the engine, correction through the tables
        base = _density_solution(problem, grid, frozen_only=True)
        corr = np.stack([t.correction for t in kernel], axis=-1)
        out = base.copy()
        hvol = grid.lattice.hvol
        for k in range(1, times.size):
            lags = times[1 : k + 1]
            src = problem.sample_source(times[k] - lags, pts)
            vals = np.einsum("lxj,lj->lx", corr[1 : k + 1], src) * hvol
            vals = np.concatenate([np.zeros((1, pts.shape[0])), vals])
            out[k] += np.trapezoid(vals, np.concatenate([[0.0], lags]), axis=0)
        return SolutionGrid(grid, out)
    op = _grid_spec(kernel, grid, alpha)
    zero = CoefficientField.constant(0.0)
    return solve_cauchy(CauchyProblem(op.alpha, grid.time.T, op, zero, f), grid, estimate_error=False)


# ---------------------------------------------------------------------------
# solver


def _density_solution(problem: CauchyProblem, grid: SpaceTimeGrid, frozen_only: bool = False) -> np.ndarray:
    op = problem.spec
    eng = engine_for(op, grid)
    times, pts = grid.times, grid.points
    nt = times.size
    fam, par = problem.u0.packed()
    u0_zero = problem.u0.is_constant and problem.u0.params[0] == 0.0
    src = problem.sample_source(times, pts)
    dens = np.zeros((nt, pts.shape[0])) if src is None else src.copy()
    exact_parametrix = frozen_only or (op.constant_principal and op.lower_order_zero)
    if not exact_parametrix:
        if not u0_zero:
            for k in range(1, nt):
                dens[k] += eng.initial(k, fam, par, True)
        if np.any(dens[1:]):
            dens, _, _ = _volterra(eng, dens, 1e-6, 50, "march")
            dens[0] = 0.0
    out = np.zeros((nt, pts.shape[0]))
    out[0] = problem.u0.evaluate(pts)
    active = bool(np.any(dens[1:]))
    for k in range(1, nt):
        if not u0_zero:
            out[k] = eng.initial(k, fam, par, False)
        if active:
            pot, _ = eng.convolve(k, dens, "y", False, implicit=False)
            out[k] += pot
    return out


def _coarse(grid: SpaceTimeGrid) -> tuple[SpaceTimeGrid, np.ndarray]:
    nodes = grid.times
    idx = np.arange(0, nodes.size, 2)
    if idx[-1] != nodes.size - 1:
        idx = np.append(idx, nodes.size - 1)
    time = TimeGrid(nodes[idx], grid.time.grading_exponent)
    coarse = SpaceTimeGrid(time, grid.lower, grid.upper, grid.counts, grid.periodic, grid.base_point)
    return coarse, idx


def solve_cauchy(problem: CauchyProblem, grid: SpaceTimeGrid, estimate_error: bool = True) -> SolutionGrid:
    """Solution on ``grid``; ``error_estimate`` compares with a solve on every other time node."""
    if abs(grid.time.T - problem.T) > 1e-12 * problem.T:
        raise GridError("grid horizon differs from the problem horizon")
    if grid.n != problem.n:
        raise GridError("grid dimension differs from the problem dimension")
    u = _density_solution(problem, grid)
    est = 0.0
    if estimate_error and grid.times.size >= 5:
        coarse, idx = _coarse(grid)
        uc = _density_solution(problem, coarse)
        est = float(np.max(np.abs(uc[1:] - u[idx[1:]])))
    if not np.all(np.isfinite(u)):
        raise SolverError("non-finite values in the solution")
    return SolutionGrid(grid, u, est)


# ---------------------------------------------------------------------------
# residual

_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


def _diff(field: np.ndarray, axis: int, h: float, stencil: np.ndarray, order: int,
          periodic: bool) -> np.ndarray:
    out = np.zeros_like(field)
    for w, s in zip(stencil, range(-2, 3)):
        if w:
            out += w * np.roll(field, -s, axis=axis)
    out /= h**order
    if not periodic:
        sl = [slice(None)] * field.ndim
        for edge in (slice(0, 2), slice(-2, None)):
            sl[axis] = edge
            out[tuple(sl)] = np.nan
    return out


def residual(problem: CauchyProblem, solution: SolutionGrid, t_min_fraction: float = 0.1,
             margin: int = 2) -> SolutionGrid:
    """D^alpha u - B u - f on the interior subgrid (NaN elsewhere).

    Time derivative by product integration (power basis) along each
    lattice node; space derivatives by fourth-order centred differences.
    The interior drops t < t_min_fraction * T and, on windows, ``margin``
    cells beyond the stencil width at each face.
    """
    grid = solution.grid
    counts = grid.counts
    if min(counts) < 5 or grid.times.size < 4:
        raise GridError("grid too coarse for the residual stencils")
    op = problem.spec
    h = grid.lattice.h
    periodic = grid.periodic
    n = grid.n
    u = solution.u
    nt, nx = u.shape
    caputo = np.empty_like(u)
    for j in range(nx):
        caputo[:, j] = caputo_derivative(SampledFunction(grid.time, u[:, j]), problem.alpha, "power").values
    a, b, c = op.evaluate(grid.points)
    src = problem.sample_source(grid.times, grid.points)
    out = np.full_like(u, np.nan)
    keep_t = grid.times >= t_min_fraction * grid.time.T
    keep_t[0] = False
    mask = np.ones(counts, dtype=bool)
    if not periodic:
        for ax in range(n):
            sl = [slice(None)] * n
            for edge in (slice(0, 2 + margin), slice(-(2 + margin), None)):
                sl[ax] = edge
                mask[tuple(sl)] = False
    mask = mask.ravel()
    for k in np.nonzero(keep_t)[0]:
        fld = u[k].reshape(counts)
        bu = c * u[k]
        for i in range(n):
            di = _diff(fld, i, h[i], _D1, 1, periodic)
            bu = bu + b[:, i] * di.ravel()
            bu = bu + a[:, i, i] * _diff(fld, i, h[i], _D2, 2, periodic).ravel()
            for j in range(i + 1, n):
                dij = _diff(di, j, h[j], _D1, 1, periodic).ravel()
                bu = bu + 2.0 * a[:, i, j] * dij
        res = caputo[k] - bu
        if src is not None:
            res = res - src[k]
        out[k, mask] = res[mask]
    return SolutionGrid(grid, out, 0.0)
