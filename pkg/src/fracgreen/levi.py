"""Green matrix of a variable-coefficient operator by the parametrix (Levi) method.

The operator is

    B u = sum a_ij(x) D_ij u + sum b_i(x) D_i u + c(x) u

with coefficients from a few analytic families.  The constant-coefficient
kernels frozen at the source point serve as parametrix; the corrections
solve weakly singular Volterra equations

    Q = M + K * Q,        Psi = K + K * Psi,

and Z = Z0 + P[Q], Y = Y0 + P[Psi], where P[phi] is the space-time
potential of Y0 (see :mod:`fracgreen._engine` for the quadrature).

Each level of the time-marching solve is linear in the unknown level
only, so it is solved directly; ``method="picard"`` runs the global
fixed-point (Neumann) iteration instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _engine
from .fractional import TimeGrid
from .kernels import SPDOperator

__all__ = [
    "CoefficientField",
    "DiagonalSingularityError",
    "EllipticityError",
    "GreenMatrixTable",
    "GridError",
    "LeviConvergenceError",
    "LeviError",
    "OperatorSpec",
    "QKernelTable",
    "SpaceTimeGrid",
    "assemble_Y",
    "assemble_Z",
    "green_tables",
    "levi_K",
    "levi_M",
    "neumann_iterates",
    "solve_Psi",
    "solve_Q",
]

SUPPORTED_DIMS = (1, 2)
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 50


class LeviError(RuntimeError):
    """Failure while building Levi tables."""


class EllipticityError(LeviError, ValueError):
    pass


class DiagonalSingularityError(LeviError, ValueError):
    pass


class LeviConvergenceError(LeviError):
    pass


class GridError(LeviError, ValueError):
    pass


# ---------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True)
class CoefficientField:
    """Analytic coefficient: constant, base + amp sin(k.x + phase), or a Gaussian bump.

    ``params`` layout (shared with the compiled loops):
    constant (value,); trig_perturbation (base, amp, phase, k_1..k_n);
    radial_bump (base, amp, width, c_1..c_n).
    """

    family: str
    params: tuple
    holder_gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.family not in _engine.FAMILIES:
            raise ValueError(f"unknown coefficient family {self.family!r}")
        params = tuple(float(p) for p in self.params)
        if len(params) > _engine.NPAR:
            raise ValueError("too many parameters")
        if not 0.0 < self.holder_gamma <= 1.0:
            raise ValueError("holder_gamma must lie in (0, 1]")
        if self.family == "radial_bump" and params[2] <= 0:
            raise ValueError("bump width must be positive")
        object.__setattr__(self, "params", params)

    @classmethod
    def constant(cls, value: float) -> CoefficientField:
        return cls("constant", (value,))

    @classmethod
    def trig(cls, base: float, amplitude: float, wavevector, phase: float = 0.0,
             holder_gamma: float = 1.0) -> CoefficientField:
        k = tuple(np.atleast_1d(np.asarray(wavevector, dtype=float)))
        return cls("trig_perturbation", (base, amplitude, phase) + k, holder_gamma)

    @classmethod
    def bump(cls, base: float, amplitude: float, center, width: float,
             holder_gamma: float = 1.0) -> CoefficientField:
        c = tuple(np.atleast_1d(np.asarray(center, dtype=float)))
        return cls("radial_bump", (base, amplitude, width) + c, holder_gamma)

    @property
    def is_constant(self) -> bool:
        return self.family == "constant" or self.params[1] == 0.0

    @property
    def sup_bound(self) -> float:
        if self.family == "constant":
            return abs(self.params[0])
        return abs(self.params[0]) + abs(self.params[1])

    def packed(self) -> tuple[int, np.ndarray]:
        return _engine.pack_field(self.family, self.params)

    def evaluate(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        fam, par = self.packed()
        return _engine._field_np(fam, par, pts)

    def holder_ratio(self, n: int, samples: int = 2000, seed: int = 0) -> float:
        """Largest sampled |f(x) - f(y)| / |x - y|^gamma over nearby pairs."""
        rng = np.random.default_rng(seed)
        x = rng.uniform(-5, 5, size=(samples, n))
        y = x + rng.normal(scale=0.1, size=(samples, n))
        num = np.abs(self.evaluate(x) - self.evaluate(y))
        den = np.linalg.norm(x - y, axis=1) ** self.holder_gamma
        return float(np.max(num / den))


_ZERO = CoefficientField.constant(0.0)


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    """Elliptic operator with coefficient fields; alpha is the time order."""

    alpha: float
    a: tuple
    b: tuple | None = None
    c: CoefficientField | None = None
    delta: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        a = tuple(tuple(row) for row in self.a)
        n = len(a)
        if n == 0 or any(len(row) != n for row in a):
            raise ValueError("a must be a square matrix of CoefficientField")
        for i in range(n):
            for j in range(i):
                if a[i][j] != a[j][i]:
                    raise ValueError("coefficient matrix must be symmetric")
        b = tuple(self.b) if self.b is not None else (_ZERO,) * n
        if len(b) != n:
            raise ValueError("b must have n entries")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", self.c if self.c is not None else _ZERO)
        measured = self._sampled_ellipticity()
        if measured <= 0.0:
            raise EllipticityError(f"coefficient matrix not positive definite (min eigenvalue {measured:.3g})")
        if self.delta is None:
            object.__setattr__(self, "delta", measured)
        elif self.delta <= 0 or measured < self.delta:
            raise EllipticityError(f"declared delta {self.delta} exceeds sampled minimum {measured:.6g}")

    @classmethod
    def from_matrix(cls, alpha: float, matrix, b=None, c: float = 0.0) -> OperatorSpec:
        m = np.atleast_2d(np.asarray(matrix, dtype=float))
        n = m.shape[0]
        a = tuple(tuple(CoefficientField.constant(m[i, j]) for j in range(n)) for i in range(n))
        bf = None if b is None else tuple(CoefficientField.constant(v) for v in np.atleast_1d(b))
        return cls(alpha, a, bf, CoefficientField.constant(c))

    @classmethod
    def isotropic(cls, alpha: float, n: int, diffusivity: CoefficientField, b=None,
                  c: CoefficientField | None = None) -> OperatorSpec:
        a = tuple(tuple(diffusivity if i == j else _ZERO for j in range(n)) for i in range(n))
        return cls(alpha, a, b, c)

    @classmethod
    def from_spd(cls, alpha: float, op: SPDOperator) -> OperatorSpec:
        return cls.from_matrix(alpha, op.a)

    @property
    def n(self) -> int:
        return len(self.a)

    def fields(self) -> list[CoefficientField]:
        return [f for row in self.a for f in row] + list(self.b) + [self.c]

    @property
    def gamma(self) -> float:
        return min(f.holder_gamma for f in self.fields())

    @property
    def constant_principal(self) -> bool:
        return all(f.is_constant for row in self.a for f in row)

    @property
    def lower_order_zero(self) -> bool:
        return all(f.is_constant and f.params[0] == 0.0 for f in list(self.b) + [self.c])

    @property
    def lam_max(self) -> float:
        """Gershgorin bound on the largest eigenvalue of a(x) over all x."""
        return max(sum(f.sup_bound for f in row) for row in self.a)

    def packed(self) -> tuple[np.ndarray, np.ndarray]:
        return _engine.pack_fields([f.packed() for f in self.fields()])

    def evaluate(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        a, _, _, b, c = _engine._coeffs_np(pts, *self.packed())
        return a, b, c

    def _sampled_ellipticity(self) -> float:
        n = self.n
        rng = np.random.default_rng(12345)
        pts = rng.uniform(-4.0 * math.pi, 4.0 * math.pi, size=(4096, n))
        for f in self.fields():
            if f.family == "radial_bump":
                center = np.array(f.params[3 : 3 + n])
                pts = np.vstack([pts, center + rng.normal(scale=f.params[2], size=(512, n))])
        a, _, _ = self.evaluate(pts)
        return float(np.min(np.linalg.eigvalsh(a)))


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True, eq=False)
class SpaceTimeGrid:
    """Time grid times a uniform spatial lattice.

    ``periodic=True`` treats the box as one period of periodic data and
    coefficients; otherwise the box is a window outside of which the
    tabulated fields are taken as zero.
    """

    time: TimeGrid
    lower: tuple
    upper: tuple
    counts: tuple
    periodic: bool = False
    base_point: tuple | None = None

    def __post_init__(self) -> None:
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        counts = tuple(int(v) for v in np.atleast_1d(self.counts))
        if not len(lower) == len(upper) == len(counts):
            raise GridError("lower, upper and counts must have equal length")
        if any(u <= l for l, u in zip(lower, upper)) or any(c < 4 for c in counts):
            raise GridError("need upper > lower and at least 4 nodes per axis")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "counts", counts)
        if self.base_point is None:
            mid = tuple(0.5 * (l + u) for l, u in zip(lower, upper))
            object.__setattr__(self, "base_point", mid)

    @classmethod
    def periodic_box(cls, time: TimeGrid, lower, upper, counts) -> SpaceTimeGrid:
        return cls(time, lower, upper, counts, True)

    @classmethod
    def window(cls, time: TimeGrid, center, radius: float, counts, alpha: float) -> SpaceTimeGrid:
        """Non-periodic box of half-width ``radius``; requires radius >= 6 T^(alpha/2)."""
        need = 6.0 * time.T ** (0.5 * alpha)
        if radius < need:
            raise GridError(f"cutoff radius {radius} below 6 T^(alpha/2) = {need:.4g}")
        c = np.atleast_1d(np.asarray(center, dtype=float))
        return cls(time, tuple(c - radius), tuple(c + radius), counts, False, tuple(c))

    @cached_property
    def lattice(self) -> _engine.Lattice:
        return _engine.Lattice(self.lower, self.upper, self.counts, self.periodic)

    @property
    def n(self) -> int:
        return len(self.lower)

    @property
    def spacing(self) -> float:
        return float(np.max(self.lattice.h))

    @property
    def points(self) -> np.ndarray:
        return self.lattice.points

    @property
    def times(self) -> np.ndarray:
        return self.time.nodes

    @property
    def cutoff_radius(self) -> float:
        if self.periodic:
            return math.inf
        return min(0.5 * (u - l) for l, u in zip(self.lower, self.upper))

    def check(self, op: OperatorSpec) -> None:
        if self.n != op.n:
            raise GridError(f"grid dimension {self.n} does not match operator dimension {op.n}")
        need = 6.0 * self.time.T ** (0.5 * op.alpha)
        if not self.periodic and self.cutoff_radius < need:
            raise GridError(f"cutoff radius {self.cutoff_radius:.4g} below 6 T^(alpha/2) = {need:.4g}")

    def coarsened(self) -> SpaceTimeGrid:
        """Same lattice, every other time node (graded grids keep their node family)."""
        nodes = self.time.nodes
        if (nodes.size - 1) % 2:
            raise GridError("coarsening needs an even number of time intervals")
        return SpaceTimeGrid(TimeGrid(nodes[::2], self.time.grading_exponent), self.lower, self.upper,
                             self.counts, self.periodic, self.base_point)


def engine_for(op: OperatorSpec, grid: SpaceTimeGrid, experimental: bool = False) -> _engine.PotentialEngine:
    """Quadrature engine for (op, grid), cached on the operator; n = 3 needs ``experimental=True``."""
    grid.check(op)
    if op.n not in SUPPORTED_DIMS and not (experimental and op.n == 3):
        raise LeviError(f"Levi assembly supports n in {SUPPORTED_DIMS} (n = 3 behind the experimental flag)")
    cached = op.__dict__.get("_engine_cache")
    if cached is not None and cached[0] is grid:
        return cached[1]
    eng = _engine.PotentialEngine(grid.lattice, grid.times, op.alpha, op.packed(), op.lam_max,
                                  op.gamma, angular=24 if op.n == 2 else 16)
    object.__setattr__(op, "_engine_cache", (grid, eng))
    return eng


# ---------------------------------------------------------------------------
# pointwise kernels M and K


def _pointwise(op: OperatorSpec, t: float, x, xi, kind: str) -> np.ndarray:
    from .profiles import get_profile, pack_profile

    if not t > 0:
        raise ValueError("t must be positive")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if pts.shape[1] != op.n or xi.size != op.n:
        raise ValueError("x and xi must have the operator dimension")
    if op.n >= 2 and np.any(np.all(pts == xi, axis=1)):
        raise DiagonalSingularityError("M and K are singular at x = xi for n >= 2")
    prof = pack_profile(get_profile(kind, op.n, op.alpha, 2))
    out = np.zeros(pts.shape[0])
    _engine.point_pass(op.alpha, kind == "y", True, float(t), np.ascontiguousarray(pts), xi,
                       np.zeros((1, op.n)), *op.packed(), *prof, out)
    return out


def levi_M(op: OperatorSpec, t: float, x, xi) -> np.ndarray:
    """M(t,x;xi) = sum [a_ij(x) - a_ij(xi)] D_ij Z0 + b(x).D Z0 + c(x) Z0, frozen at xi."""
    return _pointwise(op, t, x, xi, "z")


def levi_K(op: OperatorSpec, t: float, x, xi) -> np.ndarray:
    """As :func:`levi_M` with Y0 in place of Z0."""
    return _pointwise(op, t, x, xi, "y")


# ---------------------------------------------------------------------------
# tables


@dataclass(frozen=True, eq=False)
class QKernelTable:
    """Solution of a Volterra equation at every (t_k, x_j); row 0 (t = 0) is NaN.

    ``values = source + remainder``: the source (M or K) is evaluated
    pointwise and the remainder K * Q is what the lattice solve carries.
    """

    kind: str
    grid: SpaceTimeGrid
    xi: np.ndarray
    values: np.ndarray
    iteration_count: int
    residual_norm: float
    source: np.ndarray = field(repr=False, default=None)
    remainder: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True, eq=False)
class GreenMatrixTable:
    """Z (or Y) = parametrix + correction on the grid, parts stored separately."""

    kind: str
    grid: SpaceTimeGrid
    xi: np.ndarray
    parametrix: np.ndarray
    correction: np.ndarray
    iteration_count: int
    residual_norm: float
    op: OperatorSpec | None = field(repr=False, default=None)

    def __post_init__(self) -> None:
        p = np.asarray(self.parametrix, dtype=float)
        v = np.asarray(self.correction, dtype=float).copy()
        # make (parametrix + correction) - parametrix reproduce the correction exactly
        for _ in range(4):
            back = (p + v) - p
            if np.array_equal(back, v, equal_nan=True):
                break
            v = back
        for arr in (p, v):
            arr.setflags(write=False)
        object.__setattr__(self, "parametrix", p)
        object.__setattr__(self, "correction", v)

    @property
    def values(self) -> np.ndarray:
        return self.parametrix + self.correction

    # names used in the tabular output
    @property
    def values_Z(self) -> np.ndarray:
        return self.values

    @property
    def values_VZ(self) -> np.ndarray:
        return self.correction


def _volterra(eng: _engine.PotentialEngine, source: np.ndarray, tol: float, max_iterations: int,
              method: str) -> tuple[np.ndarray, int, float]:
    nt = source.shape[0]
    if method == "march":
        phi = np.zeros_like(source)
        worst = 0.0
        eye = np.eye(source.shape[1])
        for k in range(1, nt):
            rest, L = eng.convolve(k, phi, "y", True, implicit=True)
            rhs = source[k] + rest
            phi[k] = np.linalg.solve(eye - L, rhs)
            worst = max(worst, float(np.max(np.abs(phi[k] - rhs - L @ phi[k]))))
        scale = float(np.max(np.abs(phi[1:]))) or 1.0
        residual = worst / scale
        if not residual <= tol:
            raise LeviConvergenceError(f"level solves left residual {residual:.2e}")
        phi[0] = np.nan
        return phi, nt - 1, residual
    if method != "picard":
        raise ValueError("method must be 'march' or 'picard'")
    phi = source.copy()
    phi[0] = 0.0
    residual = math.inf
    for it in range(1, max_iterations + 1):
        new = source.copy()
        new[0] = 0.0
        for k in range(1, nt):
            rest, _ = eng.convolve(k, phi, "y", True, implicit=False)
            new[k] += rest
        scale = float(np.max(np.abs(new[1:]))) or 1.0
        residual = float(np.max(np.abs(new[1:] - phi[1:]))) / scale
        phi = new
        if residual <= tol:
            phi[0] = np.nan
            return phi, it, residual
    raise LeviConvergenceError(f"fixed-point residual {residual:.2e} after {max_iterations} iterations")


def _source_table(eng, xi, kind: str) -> np.ndarray:
    nt = eng.t.size
    out = np.zeros((nt, eng.lat.size))
    for k in range(1, nt):
        out[k] = eng.point(k, xi, kind, True)
    out[0] = np.nan
    return out


def _inner(kind: str) -> str:
    return "z" if kind == "Q" else "y"


def _solve(op, grid, xi, kind, tol, max_iterations, method, experimental):
    eng = engine_for(op, grid, experimental)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    src = _source_table(eng, xi, _inner(kind))
    nt = src.shape[0]
    if op.constant_principal and op.lower_order_zero:
        zeros = np.zeros_like(src)
        zeros[0] = np.nan
        return QKernelTable(kind, grid, xi, zeros, 0, 0.0, src, zeros.copy())
    # Q = S + R with R = K * S + K * R; K * S from the kernel-pair rule
    first = np.zeros_like(src)
    for k in range(1, nt):
        first[k] = eng.pair(k, xi, "y", True, _inner(kind))
    rem, its, res = _volterra(eng, first, tol, max_iterations, method)
    return QKernelTable(kind, grid, xi, src + rem, its, res, src, rem)


def solve_Q(op: OperatorSpec, grid: SpaceTimeGrid, xi, tol: float = DEFAULT_TOL,
            max_iterations: int = DEFAULT_MAX_ITER, method: str = "march",
            experimental: bool = False) -> QKernelTable:
    """Solve Q = M + K * Q on the grid for the source point xi."""
    return _solve(op, grid, xi, "Q", tol, max_iterations, method, experimental)


def solve_Psi(op: OperatorSpec, grid: SpaceTimeGrid, xi, tol: float = DEFAULT_TOL,
              max_iterations: int = DEFAULT_MAX_ITER, method: str = "march",
              experimental: bool = False) -> QKernelTable:
    """Solve Psi = K + K * Psi on the grid for the source point xi."""
    return _solve(op, grid, xi, "Psi", tol, max_iterations, method, experimental)


def neumann_iterates(op: OperatorSpec, grid: SpaceTimeGrid, xi, terms: int = 4,
                     kind: str = "Q") -> list[np.ndarray]:
    """[K*S, K*(K*S), ...] for S = M (kind "Q") or K (kind "Psi"); rows 0 are NaN."""
    eng = engine_for(op, grid)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    nt = grid.times.size
    cur = np.zeros((nt, grid.lattice.size))
    for k in range(1, nt):
        cur[k] = eng.pair(k, xi, "y", True, _inner(kind))
    out = []
    for m in range(terms):
        if m:
            nxt = np.zeros_like(cur)
            for k in range(1, nt):
                nxt[k], _ = eng.convolve(k, cur, "y", True, implicit=False)
            cur = nxt
        res = cur.copy()
        res[0] = np.nan
        out.append(res)
    return out


def _assemble(op, grid, xi, table: QKernelTable, kind: str) -> GreenMatrixTable:
    eng = engine_for(op, grid)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    nt = grid.times.size
    par = np.zeros((nt, grid.lattice.size))
    corr = np.zeros_like(par)
    rem = np.nan_to_num(table.remainder)
    active = bool(np.any(table.source[1:])) and not (op.constant_principal and op.lower_order_zero)
    inner = "z" if kind == "Z" else "y"
    for k in range(1, nt):
        par[k] = eng.point(k, xi, inner, False)
        if active:
            corr[k] = eng.pair(k, xi, "y", False, inner)
            pot, _ = eng.convolve(k, rem, "y", False, implicit=False)
            corr[k] += pot
    par[0] = np.nan
    corr[0] = np.nan
    return GreenMatrixTable(kind, grid, xi, par, corr, table.iteration_count, table.residual_norm, op)


def assemble_Z(op: OperatorSpec, grid: SpaceTimeGrid, xi, q_table: QKernelTable | None = None,
               **solve_kw) -> GreenMatrixTable:
    """Z = Z0(t, x - xi; xi) + int int Y0(t - l, x - y; y) Q(l, y; xi) dy dl."""
    q_table = q_table if q_table is not None else solve_Q(op, grid, xi, **solve_kw)
    return _assemble(op, grid, xi, q_table, "Z")


def assemble_Y(op: OperatorSpec, grid: SpaceTimeGrid, xi, psi_table: QKernelTable | None = None,
               **solve_kw) -> GreenMatrixTable:
    """Y = Y0(t, x - xi; xi) + int int Y0(t - l, x - y; y) Psi(l, y; xi) dy dl."""
    psi_table = psi_table if psi_table is not None else solve_Psi(op, grid, xi, **solve_kw)
    return _assemble(op, grid, xi, psi_table, "Y")


def green_tables(op: OperatorSpec, grid: SpaceTimeGrid, xi_points, kind: str = "Z",
                 **solve_kw) -> list[GreenMatrixTable]:
    """Assembled tables for several source points."""
    build = assemble_Z if kind == "Z" else assemble_Y
    return [build(op, grid, xi, **solve_kw) for xi in np.atleast_2d(np.asarray(xi_points, dtype=float))]
