"""Tabulated radial profiles for fast, vectorised kernel evaluation.

The exact kernels in :mod:`fracgreen.kernels` cost a contour integral per
point.  The potentials and Volterra solvers need millions of evaluations,
so each radial derivative G^(k)(z) of G = z^(-n/2) H(z) is tabulated once
per (kind, n, alpha):

* z <= 1e-6: the leading terms of the residue series;
* 1e-6 < z <= z_max: a cubic spline in u = ln z of the smooth ratio
  z^(n/2 + k) G^(k)(z) / [exp(-r z^(1/rho)) (1 + z)^p], which tends to a
  constant at both ends;
* z > z_max: zero (the kernel is below exp(-50) of its scale there).

Spline nodes are spaced 0.025 in ln z, which keeps the relative error of
the tabulated values near 1e-9.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from ._accel import njit, pick
from .kernels import KernelError, _radial_series, kernel_spec, radial_derivatives

__all__ = ["RadialProfile", "get_profile", "kernel_values", "pack_profile"]

Z_LOW = 1e-6
LOG_STEP = 0.025
DECAY_CUT = 50.0
Z_FLOOR = 1e-14


@njit
def _channel_loop(z, u0, du, coef, p, rate, inv_rho, power, e, a, b, z_low, z_high):
    out = np.empty(z.shape[0])
    nseg = coef.shape[1]
    for i in range(z.shape[0]):
        zi = max(z[i], 1e-14)
        if zi <= z_low:
            lz = math.log(zi)
            acc = 0.0
            for j in range(e.shape[0]):
                acc += zi ** e[j] * (a[j] + b[j] * lz)
            out[i] = acc
        elif zi > z_high:
            out[i] = 0.0
        else:
            u = math.log(zi)
            s = (u - u0) / du
            k = int(s)
            if k >= nseg:
                k = nseg - 1
            k = max(k, 0)
            d = u - (u0 + k * du)
            w = ((coef[0, k] * d + coef[1, k]) * d + coef[2, k]) * d + coef[3, k]
            out[i] = w * math.exp(-rate * zi**inv_rho + p * math.log1p(zi) - power * u)
    return out


def _channel_numpy(z, u0, du, coef, p, rate, inv_rho, power, e, a, b, z_low, z_high):
    z = np.maximum(z, Z_FLOOR)
    out = np.zeros(z.shape[0])
    lo = z <= z_low
    if np.any(lo):
        zl = z[lo]
        lz = np.log(zl)
        out[lo] = np.sum(zl[:, None] ** e[None, :] * (a[None, :] + b[None, :] * lz[:, None]), axis=1)
    mid = (~lo) & (z <= z_high)
    if np.any(mid):
        u = np.log(z[mid])
        k = np.clip(((u - u0) / du).astype(np.int64), 0, coef.shape[1] - 1)
        d = u - (u0 + k * du)
        w = ((coef[0, k] * d + coef[1, k]) * d + coef[2, k]) * d + coef[3, k]
        out[mid] = w * np.exp(-rate * z[mid] ** inv_rho + p * np.log1p(z[mid]) - power * u)
    return out


@dataclass(frozen=True, eq=False)
class _Channel:
    coef: np.ndarray
    p: float
    power: float
    e: np.ndarray
    a: np.ndarray
    b: np.ndarray


class RadialProfile:
    """Spline tables of G^(k), k <= kmax, and of z^(-n/2) H_1 for kind "z"."""

    def __init__(self, kind: str, n: int, alpha: float, kmax: int = 2):
        if kind not in ("z", "y"):
            raise KernelError(f"unknown kernel kind {kind!r}")
        if not 0 <= kmax <= 3:
            raise KernelError("kmax must lie in 0..3")
        self.kind, self.n, self.alpha, self.kmax = kind, int(n), float(alpha), int(kmax)
        spec = kernel_spec(kind, self.n, self.alpha)
        self.rate = spec.asymptotic_rate()
        self.inv_rho = 1.0 / spec.rho()
        base_power = spec.asymptotic_power()
        self.z_high = (DECAY_CUT / self.rate) ** spec.rho()
        self.u0 = math.log(Z_LOW)
        count = int(math.ceil((math.log(self.z_high) - self.u0) / LOG_STEP))
        self.du = (math.log(self.z_high) - self.u0) / count
        u = self.u0 + self.du * np.arange(count + 1)
        z = np.exp(u)
        c = 0.5 * self.n
        with_time = kind == "z"
        raw = np.array([radial_derivatives(kind, self.n, self.alpha, zi, self.kmax) for zi in z])
        self._channels: list[_Channel] = []
        for k in range(self.kmax + 1):
            p = base_power + k * self.inv_rho
            ratio = raw[:, k] * z ** (c + k) / self._norm(z, p)
            e, a, b = self._series(0, k)
            self._channels.append(_Channel(CubicSpline(u, ratio).c.copy(), p, c + k, e, a, b))
        self._time_channel = None
        if with_time:
            spec1 = kernel_spec(kind, self.n, self.alpha, 1)
            p = spec1.asymptotic_power()
            vals = np.array([self._shift1(zi) for zi in z]) * z**c / self._norm(z, p)
            e, a, b = self._series(1, 0)
            self._time_channel = _Channel(CubicSpline(u, vals).c.copy(), p, c, e, a, b)

    def _norm(self, z, p):
        return np.exp(-self.rate * z**self.inv_rho) * (1.0 + z) ** p

    def _shift1(self, z: float) -> float:
        return radial_derivatives(self.kind, self.n, self.alpha, z, 0, shift=1)[0]

    def _series(self, shift: int, k: int):
        terms = _radial_series(self.kind, self.n, self.alpha, shift, k)
        lz = math.log(Z_LOW)
        mags = [abs(Z_LOW**e * (a + b * lz)) for e, a, b in terms]
        keep = [t for t, m in zip(terms, mags) if m > 1e-19 * max(mags)]
        arr = np.array(keep, dtype=float).reshape(-1, 3)
        return (np.ascontiguousarray(arr[:, 0]), np.ascontiguousarray(arr[:, 1]),
                np.ascontiguousarray(arr[:, 2]))

    def _eval(self, ch: _Channel, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        flat = np.ascontiguousarray(z.ravel())
        impl = pick(_channel_loop, _channel_numpy)
        out = impl(flat, self.u0, self.du, ch.coef, ch.p, self.rate, self.inv_rho, ch.power,
                   ch.e, ch.a, ch.b, Z_LOW, self.z_high)
        return out.reshape(z.shape)

    def g(self, z, k: int = 0) -> np.ndarray:
        """G^(k)(z) for G = z^(-n/2) H(z)."""
        if not 0 <= k <= self.kmax:
            raise KernelError(f"derivative order {k} not tabulated (kmax = {self.kmax})")
        return self._eval(self._channels[k], z)

    def g_time(self, z) -> np.ndarray:
        """z^(-n/2) H_1(z), the radial factor of dZ0/dt."""
        if self._time_channel is None:
            raise KernelError("time channel exists for kind 'z' only")
        return self._eval(self._time_channel, z)


_PROFILES: dict = {}
_LOCK = threading.Lock()


def get_profile(kind: str, n: int, alpha: float, kmax: int = 2) -> RadialProfile:
    """Cached :class:`RadialProfile` (a table with larger kmax is reused)."""
    for k in range(kmax, 4):
        got = _PROFILES.get((kind, n, float(alpha), k))
        if got is not None:
            return got
    prof = RadialProfile(kind, n, alpha, kmax)
    with _LOCK:
        return _PROFILES.setdefault((kind, n, float(alpha), kmax), prof)


def kernel_values(kind: str, alpha: float, t, d, a_inv, det_a, order: int = 0):
    """Vectorised kernel with derivatives from the tabulated profile.

    ``t`` has shape (P,), ``d`` (P, n) displacements, ``a_inv`` (P, n, n)
    frozen inverse coefficient matrices and ``det_a`` (P,).  Returns
    (value, gradient, hessian) truncated at ``order`` (missing parts are
    None): shapes (P,), (P, n), (P, n, n).
    """
    t = np.asarray(t, dtype=float)
    d = np.asarray(d, dtype=float)
    n = d.shape[-1]
    prof = get_profile(kind, n, alpha, max(order, 0))
    ta = t**alpha
    ad = np.einsum("pij,pj->pi", a_inv, d)
    quad = np.einsum("pi,pi->p", ad, d)
    z = 0.25 * quad / ta
    pref = (4.0 * math.pi) ** (-0.5 * n) / np.sqrt(det_a) * ta ** (-0.5 * n)
    if kind == "y":
        pref = pref * t ** (alpha - 1.0)
    value = pref * prof.g(z, 0)
    grad = hess = None
    if order >= 1:
        g1 = prof.g(z, 1)
        gvec = ad * (0.5 / ta)[:, None]
        grad = (pref * g1)[:, None] * gvec
        if order >= 2:
            g2 = prof.g(z, 2)
            hmat = a_inv * (0.5 / ta)[:, None, None]
            hess = pref[:, None, None] * (g2[:, None, None] * gvec[:, :, None] * gvec[:, None, :]
                                          + g1[:, None, None] * hmat)
    return value, grad, hess


def pack_profile(prof: RadialProfile) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Arrays (coefs, chan, series, scalars) consumed by the compiled kernels.

    coefs[k] is the spline table of G^(k), chan[k] = (p, power), series[k]
    the padded (exponent, A, B) rows and scalars = (u0, du, rate, 1/rho,
    z_low, z_high).
    """
    chans = prof._channels
    coefs = np.stack([ch.coef for ch in chans])
    chan = np.array([[ch.p, ch.power] for ch in chans])
    width = max(ch.e.size for ch in chans)
    series = np.zeros((len(chans), 3, width))
    for k, ch in enumerate(chans):
        series[k, 0, : ch.e.size] = ch.e
        series[k, 1, : ch.e.size] = ch.a
        series[k, 2, : ch.e.size] = ch.b
    scal = np.array([prof.u0, prof.du, prof.rate, prof.inv_rho, Z_LOW, prof.z_high])
    return coefs, chan, series, scal
