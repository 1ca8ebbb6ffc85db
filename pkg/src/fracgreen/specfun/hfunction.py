"""Fox H-functions of type H^{mu,0}_{p,q} on the positive real axis.

Three evaluation routes cross-check each other:

* ``hfun_small_z``: the residue series over the left pole family, with
  logarithmic terms where two gamma poles collide;
* ``hfun_contour``: trapezoidal quadrature of the Mellin-Barnes integral
  along a vertical line placed near the real saddle point;
* ``hfun_large_z``: the leading exponential asymptote, whose constant
  prefactor is calibrated once against the contour value.

The Mellin-Barnes integrand is

    f(s) = prod_{j<=mu} G(d_j + delta_j s)
           / [prod_{j>mu} G(1 - d_j - delta_j s) * prod_k G(c_k + gamma_k s)]

and H(z) = (1/2 pi i) int f(s) z^{-s} ds with the line to the right of
every pole of the numerator.
"""

from __future__ import annotations

import math
import threading
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import optimize, special

from .gamma import loggamma_array

__all__ = [
    "ContourParams",
    "EvalResult",
    "HFunctionError",
    "HFunctionSpec",
    "RegimeThresholds",
    "hfun_contour",
    "hfun_eval",
    "hfun_large_z",
    "hfun_shift_derivative",
    "hfun_small_z",
    "residue_terms",
]

Regime = Literal["series", "contour", "asymptotic"]
_POLE_MERGE_TOL = 1e-10


class HFunctionError(ArithmeticError):
    """Evaluation failure: bad regime, degenerate pole or unresolved tail."""


@dataclass(frozen=True)
class HFunctionSpec:
    """Parameter block of H^{mu,nu}_{p,q}[z | (c_k, gamma_k); (d_k, delta_k)].

    ``upper_params`` holds the p pairs (c_k, gamma_k) and ``lower_params``
    the q pairs (d_k, delta_k); the first ``mu`` lower pairs sit in the
    numerator of the Mellin-Barnes integrand.
    """

    mu: int
    nu: int
    p: int
    q: int
    upper_params: tuple[tuple[float, float], ...]
    lower_params: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        upper = tuple((float(c), float(g)) for c, g in self.upper_params)
        lower = tuple((float(d), float(e)) for d, e in self.lower_params)
        object.__setattr__(self, "upper_params", upper)
        object.__setattr__(self, "lower_params", lower)
        if len(upper) != self.p or len(lower) != self.q:
            raise ValueError("parameter list lengths must equal p and q")
        if not (0 <= self.nu <= self.p and 1 <= self.mu <= self.q):
            raise ValueError("orders must satisfy 0 <= nu <= p and 1 <= mu <= q")
        if any(g <= 0 for _, g in upper) or any(e <= 0 for _, e in lower):
            raise ValueError("all gamma_k and delta_k must be positive")
        if self.rho() <= 0:
            raise ValueError(f"rho = {self.rho()} must be positive for convergence")

    @classmethod
    def build(
        cls,
        upper: Sequence[tuple[float, float]],
        lower: Sequence[tuple[float, float]],
        mu: int | None = None,
    ) -> HFunctionSpec:
        """Spec of type H^{mu,0}; ``mu`` defaults to ``len(lower)``."""
        mu = len(lower) if mu is None else mu
        return cls(mu=mu, nu=0, p=len(upper), q=len(lower),
                   upper_params=tuple(upper), lower_params=tuple(lower))

    def rho(self) -> float:
        return sum(e for _, e in self.lower_params) - sum(g for _, g in self.upper_params)

    def asymptotic_a(self) -> float:
        c_sum = sum(c for c, _ in self.upper_params)
        d_sum = sum(d for d, _ in self.lower_params[: self.mu])
        return c_sum - d_sum + 0.5 * (self.mu - self.p + 1)

    def asymptotic_b(self) -> float:
        out = 1.0
        for _, g in self.upper_params:
            out *= g**g
        for _, e in self.lower_params[: self.mu]:
            out *= e ** (-e)
        return out

    def asymptotic_power(self) -> float:
        """Exponent of the algebraic factor z^{(1-a)/rho} at infinity."""
        return (1.0 - self.asymptotic_a()) / self.rho()

    def asymptotic_rate(self) -> float:
        """Rate r in exp(-r z^{1/rho})."""
        rho = self.rho()
        return self.asymptotic_b() ** (1.0 / rho) * rho

    # -- integrand pieces -------------------------------------------------
    def _factors(self):
        """(offset, slope, sign) triples; sign +1 numerator, -1 denominator."""
        out = []
        for j, (d, e) in enumerate(self.lower_params):
            if j < self.mu:
                out.append((d, e, +1))
            else:
                out.append((1.0 - d, -e, -1))
        for c, g in self.upper_params:
            out.append((c, g, -1))
        return out

    def rightmost_pole(self) -> float:
        return max(-d / e for d, e in self.lower_params[: self.mu])

    def rightmost_zero(self) -> float:
        """Largest real s where a denominator gamma has a pole."""
        best = -math.inf
        for off, slope, sign in self._factors():
            if sign < 0 and slope > 0:
                best = max(best, -off / slope)
        return best

    def log_integrand(self, s: np.ndarray, log_z: float) -> np.ndarray:
        s = np.asarray(s, dtype=np.complex128)
        acc = -s * log_z
        for off, slope, sign in self._factors():
            acc = acc + sign * loggamma_array(off + slope * s).reshape(s.shape)
        return acc

    def dlog_real(self, sigma: float, log_z: float) -> float:
        """d/ds log|f(s) z^{-s}| on the real axis."""
        acc = -log_z
        for off, slope, sign in self._factors():
            acc += sign * slope * float(special.psi(off + slope * sigma))
        return acc

    def log_integrand_real(self, sigma: float, log_z: float) -> float:
        acc = -sigma * log_z
        for off, slope, sign in self._factors():
            acc += sign * float(special.gammaln(off + slope * sigma))
        return acc


@dataclass(frozen=True)
class ContourParams:
    """Quadrature controls for the Mellin-Barnes line integral.

    ``sigma`` is the horizontal clearance between the integration line and
    the rightmost pole (and any gamma zero to the right of it); it is also
    the half-width of the pole-free strip that makes the trapezoidal rule
    converge geometrically.  ``t_max`` truncates the imaginary parameter and
    ``n_nodes`` fixes the node count on [0, t_max]; leave either as ``None``
    to have them chosen adaptively.
    """

    sigma: float = 0.5
    t_max: float | None = None
    n_nodes: int | None = None
    rel_tol: float = 1e-14

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.t_max is not None and not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.n_nodes is not None and self.n_nodes < 64:
            raise ValueError("n_nodes must be at least 64")


@dataclass(frozen=True)
class RegimeThresholds:
    """Series below ``series_max``, asymptote above ``asymptotic_min``."""

    series_max: float = 0.5
    asymptotic_min: float = 15.0

    def __post_init__(self) -> None:
        if not 0 < self.series_max < self.asymptotic_min:
            raise ValueError("need 0 < series_max < asymptotic_min")


@dataclass(frozen=True)
class EvalResult:
    value: float
    abs_error_estimate: float
    regime: Regime
    details: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not self.abs_error_estimate >= 0:
            raise ValueError("abs_error_estimate must be nonnegative")


def _require_nu_zero(spec: HFunctionSpec) -> None:
    if spec.nu != 0:
        raise HFunctionError("only the nu = 0 family H^{mu,0}_{p,q} is supported")


# ---------------------------------------------------------------------------
# differentiation shift


def hfun_shift_derivative(spec: HFunctionSpec) -> HFunctionSpec:
    """Spec H' with d/dz H(z) = -H'(z)/z.

    Appends (0, 1) to the upper list and inserts (1, 1) into the numerator
    group of the lower list, which multiplies the integrand by s.
    """
    _require_nu_zero(spec)
    lower = spec.lower_params[: spec.mu] + ((1.0, 1.0),) + spec.lower_params[spec.mu:]
    upper = spec.upper_params + ((0.0, 1.0),)
    return HFunctionSpec(mu=spec.mu + 1, nu=0, p=spec.p + 1, q=spec.q + 1,
                         upper_params=upper, lower_params=lower)


# ---------------------------------------------------------------------------
# residue series


def _nonpositive_int(w: float) -> int | None:
    k = round(w)
    if k <= 0 and abs(w - k) <= _POLE_MERGE_TOL:
        return -k
    return None


def _factor_expansion(w0: float, slope: float, sign: int):
    """(order, c0, c1): G(w0 + slope*eps)^sign ~ eps^order (c0 + c1 eps)."""
    m = _nonpositive_int(w0)
    if m is None:
        g = float(special.gamma(w0))
        psi = float(special.psi(w0))
        if sign > 0:
            return 0, g, g * psi * slope
        return 0, 1.0 / g, -psi * slope / g
    fact = math.factorial(m)
    psi = float(special.psi(m + 1))
    if sign > 0:
        c0 = (-1) ** m / (fact * slope)
        return -1, c0, c0 * psi * slope
    c0 = (-1) ** m * fact * slope
    return 1, c0, -c0 * psi * slope


def _candidate_poles(spec: HFunctionSpec, n_groups: int) -> list[float]:
    lower = spec.lower_params[: spec.mu]
    span = n_groups * max(1.0 / e for _, e in lower) + 2.0
    cands = []
    for d, e in lower:
        kmax = int(math.ceil(span * e)) + 2
        cands.extend(-(d + k) / e for k in range(kmax))
    cands.sort(reverse=True)
    merged: list[float] = []
    for s in cands:
        if merged and abs(merged[-1] - s) <= _POLE_MERGE_TOL:
            continue
        merged.append(s)
    return merged


def residue_terms(spec: HFunctionSpec, n_groups: int) -> list[tuple[float, float, float]]:
    """First ``n_groups`` residue contributions as (e, A, B).

    Each triple stands for z**e * (A + B log z).  Poles are taken in order
    of decreasing real part; a pole whose order is cancelled by zeros of the
    denominator is skipped.
    """
    _require_nu_zero(spec)
    out: list[tuple[float, float, float]] = []
    factors = spec._factors()
    budget = n_groups
    while True:
        cands = _candidate_poles(spec, budget)
        out.clear()
        for s0 in cands:
            order = 0
            c0, c1 = 1.0, 0.0
            for off, slope, sign in factors:
                e, a0, a1 = _factor_expansion(off + slope * s0, slope, sign)
                order += e
                c0, c1 = c0 * a0, c0 * a1 + c1 * a0
            pole_order = -order
            if pole_order <= 0:
                continue
            if pole_order == 1:
                out.append((-s0, c0, 0.0))
            elif pole_order == 2:
                out.append((-s0, c1, -c0))
            else:
                raise HFunctionError(f"pole of order {pole_order} at s = {s0} is not supported")
            if len(out) == n_groups:
                return list(out)
        budget *= 2
        if budget > 64 * n_groups + 256:
            return list(out)


def _series_sum(terms, z: float) -> tuple[float, float]:
    lz = math.log(z)
    vals = [z**e * (a + b * lz) for e, a, b in terms]
    return math.fsum(vals[:-1]), abs(vals[-1])


def hfun_small_z(spec: HFunctionSpec, z: float, n_terms: int = 40) -> EvalResult:
    """Residue-series value using the first ``n_terms`` pole groups.

    ``abs_error_estimate`` is the magnitude of the first omitted term.
    """
    _require_nu_zero(spec)
    if not z > 0:
        raise ValueError("z must be positive")
    if n_terms < 1:
        raise ValueError("n_terms must be positive")
    terms = _cached_terms(spec, n_terms + 1)
    value, err = _series_sum(terms, z)
    return EvalResult(value, err, "series", {"n_terms": n_terms})


_TERM_CACHE: dict = {}
_TERM_LOCK = threading.Lock()


def _cached_terms(spec: HFunctionSpec, count: int):
    key = (spec, count)
    terms = _TERM_CACHE.get(key)
    if terms is None:
        terms = residue_terms(spec, count)
        with _TERM_LOCK:
            _TERM_CACHE.setdefault(key, terms)
    return terms


# ---------------------------------------------------------------------------
# contour quadrature


def _line_position(spec: HFunctionSpec, log_z: float, sigma: float) -> float:
    lo = max(spec.rightmost_pole(), spec.rightmost_zero()) + sigma
    if spec.dlog_real(lo, log_z) >= 0.0:
        return lo
    hi = lo + 1.0
    while spec.dlog_real(hi, log_z) < 0.0:
        hi = lo + 2.0 * (hi - lo)
        if hi > 1e6:
            raise HFunctionError("failed to bracket the saddle point")
    return float(optimize.brentq(lambda x: spec.dlog_real(x, log_z), lo, hi, xtol=1e-10))


def _integrand(spec, s0, log_z, y, ref):
    return np.exp(spec.log_integrand(s0 + 1j * y, log_z) - ref)


def _truncation(spec, s0, log_z, ref, rel):
    y = 1.0
    while True:
        mag = float(np.abs(_integrand(spec, s0, log_z, np.array([y]), ref))[0])
        if mag < rel:
            return y, mag
        y *= 1.5
        if y > 1e5:
            raise HFunctionError("contour integrand does not decay")


def hfun_contour(spec: HFunctionSpec, z: float, params: ContourParams | None = None) -> EvalResult:
    """Mellin-Barnes integral along Re s = s0 by the trapezoidal rule.

    The line sits at the real saddle of |f(s) z^{-s}| but never closer
    than ``params.sigma`` to a pole.  Conjugate symmetry folds the line onto
    Im s >= 0.  With automatic settings the step is halved until two
    successive sums agree to ``params.rel_tol``; the reported error is that
    last difference plus the truncated tail and a rounding floor.
    """
    _require_nu_zero(spec)
    params = params or ContourParams()
    if not z > 0:
        raise ValueError("z must be positive")
    log_z = math.log(z)
    s0 = _line_position(spec, log_z, params.sigma)
    ref = spec.log_integrand_real(s0, log_z)
    scale = math.exp(ref) if ref < 700 else math.inf
    if scale == 0.0:
        return EvalResult(0.0, 0.0, "contour", {"s0": s0})

    if params.t_max is None:
        t_max, tail_mag = _truncation(spec, s0, log_z, ref, 1e-18)
    else:
        t_max = params.t_max
        tail_mag = float(np.abs(_integrand(spec, s0, log_z, np.array([t_max]), ref))[0])
    tail = tail_mag / (0.5 * math.pi * spec.rho()) / math.pi

    def trap(h: float, n: int) -> tuple[float, float]:
        y = h * np.arange(n + 1)
        f = _integrand(spec, s0, log_z, y, ref)
        w = np.full(n + 1, h)
        w[0] = 0.5 * h
        return float(np.sum(w * f.real)) / math.pi, float(np.sum(w * np.abs(f))) / math.pi

    if params.n_nodes is not None:
        n = params.n_nodes
        h = t_max / n
        val, mass = trap(h, n)
        coarse, _ = trap(2 * h, n // 2) if n % 2 == 0 else trap(t_max / (n // 2), n // 2)
        err = abs(val - coarse) + tail + 8 * np.finfo(float).eps * mass
        return EvalResult(val * scale, err * scale, "contour",
                          {"s0": s0, "t_max": t_max, "n_nodes": n})

    h = min(0.5, 0.5 * params.sigma)
    n = max(64, int(math.ceil(t_max / h)))
    h = t_max / n
    prev, mass = trap(h, n)
    diff = math.inf
    for _ in range(12):
        n *= 2
        h /= 2
        val, mass = trap(h, n)
        diff = abs(val - prev)
        floor = 8 * np.finfo(float).eps * mass
        if diff <= params.rel_tol * abs(val) + floor:
            break
        prev = val
    else:
        raise HFunctionError(f"contour quadrature did not converge (last change {diff:.2e})")
    err = diff + tail + 8 * np.finfo(float).eps * mass
    if tail > max(1e-12 * abs(val), 8 * np.finfo(float).eps * mass, 1e-300):
        raise HFunctionError(f"truncated tail {tail:.2e} exceeds tolerance")
    return EvalResult(val * scale, err * scale, "contour", {"s0": s0, "t_max": t_max, "n_nodes": n})


# ---------------------------------------------------------------------------
# large-z asymptote


_CAL_CACHE: dict = {}
_CAL_LOCK = threading.Lock()
_CAL_STEPS = (1.0, 4.0 / 3.0, 5.0 / 3.0)


def _shape(spec: HFunctionSpec, z: float) -> float:
    rho = spec.rho()
    return z ** spec.asymptotic_power() * math.exp(-spec.asymptotic_rate() * z ** (1.0 / rho))


def _calibration(spec: HFunctionSpec, z_cal: float, n_corrections: int) -> np.ndarray:
    """Coefficients c_k of const * (1 + ...) = sum_k c_k z^{-k/rho}."""
    key = (spec, z_cal, n_corrections)
    got = _CAL_CACHE.get(key)
    if got is None:
        nodes = [z_cal * _CAL_STEPS[k] for k in range(n_corrections + 1)]
        ratios = [hfun_contour(spec, z).value / _shape(spec, z) for z in nodes]
        rho = spec.rho()
        vander = np.array([[z ** (-k / rho) for k in range(len(nodes))] for z in nodes])
        got = np.linalg.solve(vander, np.array(ratios))
        got.setflags(write=False)
        with _CAL_LOCK:
            got = _CAL_CACHE.setdefault(key, got)
    return got


def _asymptote(spec: HFunctionSpec, z: float, coef: np.ndarray) -> float:
    w = z ** (-1.0 / spec.rho())
    return _shape(spec, z) * float(np.polyval(coef[::-1], w))


def hfun_large_z(spec: HFunctionSpec, z: float, thresholds: RegimeThresholds | None = None,
                 n_corrections: int = 2) -> EvalResult:
    """Exponential asymptote z^{(1-a)/rho} exp(-b^{1/rho} rho z^{1/rho}) times a constant.

    With ``n_corrections = 0`` the constant alone is fitted to the contour
    value at the asymptotic threshold.  Each extra correction adds a term
    in z^{-k/rho}, the natural expansion variable of the saddle-point
    approximation, fitted on further contour values at 4/3 and 5/3 of the
    threshold.  Fits are cached per spec.  The error estimate is the larger
    of the highest correction term and the change from dropping it.  For
    the bare constant it is the drift of the fitted constant between the
    threshold and 4/3 of it, extrapolated linearly in z^{-1/rho}.
    """
    _require_nu_zero(spec)
    thresholds = thresholds or RegimeThresholds()
    z_cal = thresholds.asymptotic_min
    if z < z_cal:
        raise HFunctionError(f"z = {z} is below the asymptotic threshold {z_cal}")
    if not 0 <= n_corrections < len(_CAL_STEPS):
        raise ValueError(f"n_corrections must be in [0, {len(_CAL_STEPS) - 1}]")
    coef = _calibration(spec, z_cal, n_corrections)
    value = _asymptote(spec, z, coef)
    rho = spec.rho()
    w = z ** (-1.0 / rho)
    if n_corrections == 0:
        z2 = z_cal * _CAL_STEPS[1]
        drift = hfun_contour(spec, z2).value / _shape(spec, z2) / coef[0] - 1.0
        slope = drift / (z2 ** (-1.0 / rho) - z_cal ** (-1.0 / rho))
        err = abs(value * slope * (w - z_cal ** (-1.0 / rho)))
    else:
        lower = _asymptote(spec, z, _calibration(spec, z_cal, n_corrections - 1))
        err = max(abs(_shape(spec, z) * coef[-1] * w**n_corrections), abs(value - lower))
    return EvalResult(value, err, "asymptotic", {"coefficients": tuple(coef)})


# ---------------------------------------------------------------------------
# dispatcher


def hfun_eval(spec: HFunctionSpec, z: float, thresholds: RegimeThresholds | None = None,
              contour: ContourParams | None = None) -> EvalResult:
    """Evaluate H(z) choosing series, contour or asymptote by ``thresholds``."""
    thresholds = thresholds or RegimeThresholds()
    if not z > 0:
        raise ValueError("z must be positive")
    if z <= thresholds.series_max:
        return hfun_small_z(spec, z, n_terms=_series_terms(spec, thresholds.series_max))
    if z >= thresholds.asymptotic_min:
        return hfun_large_z(spec, z, thresholds)
    return hfun_contour(spec, z, contour)


def _series_terms(spec: HFunctionSpec, z_max: float) -> int:
    """Number of pole groups whose tail is negligible up to ``z_max``."""
    key = ("nterms", spec, z_max)
    got = _TERM_CACHE.get(key)
    if got is not None:
        return got
    terms = _cached_terms(spec, 60)
    lz = math.log(z_max)
    count = len(terms) - 1
    for k in range(8, len(terms)):
        tail = max(abs(z_max**e * (a + b * lz)) for e, a, b in terms[k:k + 4])
        head = abs(math.fsum(z_max**e * (a + b * lz) for e, a, b in terms[:k]))
        if tail <= 1e-18 * max(head, 1e-300):
            count = k
            break
    with _TERM_LOCK:
        _TERM_CACHE.setdefault(key, count)
    return count
