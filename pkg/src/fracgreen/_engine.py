"""Quadrature passes for space-time potentials with frozen-coefficient kernels.

Fields live on a uniform lattice, optionally periodic.  A potential

    (K * phi)(t_k, x_i) = int_0^t_k int K(t_k - lam, x_i; y) phi(lam, y) dy dlam

is split by the lag tau = t_k - lam.  For short lags, where the kernel is
narrower than two lattice steps, a rule scaled to the kernel width is
centred on x_i and phi is interpolated (cubic Lagrange).  For long lags
the lattice trapezoid sum is used with weight 1 - chi(|x_i - y|), and a
fixed disc rule around x_i carries the weight chi, where
chi(r) = exp(-(r/s)^4) with s three lattice steps (cut to 0 beyond 7
steps, where it is below 1e-12).  The quartic flatness of 1 - chi at the
origin removes the kernel singularity from the lattice sum.  phi is
linear in time between levels.

Operator coefficients are analytic families encoded as (family, params)
so that the compiled loops evaluate them at arbitrary points.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import USE_NUMBA, njit

NPAR = 8
FAMILIES = {"constant": 0, "trig_perturbation": 1, "radial_bump": 2}
CHI_SCALE = 3.0
CHI_RADIUS = 7.0
NEAR_WIDTH = 8.0
_INV4PI = 1.0 / (4.0 * math.pi)

# ---------------------------------------------------------------------------
# compiled primitives


@njit(inline="always")
def _field(fam, par, y):
    n = y.shape[0]
    if fam == 0:
        return par[0]
    if fam == 1:
        s = par[2]
        for d in range(n):
            s += par[3 + d] * y[d]
        return par[0] + par[1] * math.sin(s)
    r2 = 0.0
    for d in range(n):
        u = y[d] - par[3 + d]
        r2 += u * u
    return par[0] + par[1] * math.exp(-r2 / (par[2] * par[2]))


@njit(inline="always")
def _invert(a, out):
    n = a.shape[0]
    if n == 1:
        det = a[0, 0]
        out[0, 0] = 1.0 / det
        return det
    if n == 2:
        det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        out[0, 0] = a[1, 1] / det
        out[1, 1] = a[0, 0] / det
        out[0, 1] = -a[0, 1] / det
        out[1, 0] = -a[1, 0] / det
        return det
    c00 = a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1]
    c01 = a[1, 2] * a[2, 0] - a[1, 0] * a[2, 2]
    c02 = a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]
    det = a[0, 0] * c00 + a[0, 1] * c01 + a[0, 2] * c02
    out[0, 0] = c00 / det
    out[1, 0] = c01 / det
    out[2, 0] = c02 / det
    out[0, 1] = (a[0, 2] * a[2, 1] - a[0, 1] * a[2, 2]) / det
    out[1, 1] = (a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]) / det
    out[2, 1] = (a[0, 1] * a[2, 0] - a[0, 0] * a[2, 1]) / det
    out[0, 2] = (a[0, 1] * a[1, 2] - a[0, 2] * a[1, 1]) / det
    out[1, 2] = (a[0, 2] * a[1, 0] - a[0, 0] * a[1, 2]) / det
    out[2, 2] = (a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]) / det
    return det


@njit(inline="always")
def _coeffs(y, fam, par, a, ainv, b):
    # fam/par rows: a_ij at i*n + j, b_i at n*n + i, c at n*n + n
    n = y.shape[0]
    for i in range(n):
        for j in range(n):
            a[i, j] = _field(fam[i * n + j], par[i * n + j], y)
        b[i] = _field(fam[n * n + i], par[n * n + i], y)
    det = _invert(a, ainv)
    return det, _field(fam[n * n + n], par[n * n + n], y)


@njit(inline="always")
def _prof3(z, coefs, chan, ser, scal, combo):
    # G, G', G'' sharing the transcendental factors (G', G'' only when combo)
    g0 = g1 = g2 = 0.0
    z = max(z, 1e-14)
    if z <= scal[4]:
        lz = math.log(z)
        for k in range(3 if combo else 1):
            acc = 0.0
            for j in range(ser.shape[2]):
                a = ser[k, 1, j]
                b = ser[k, 2, j]
                if a != 0.0 or b != 0.0:
                    acc += z ** ser[k, 0, j] * (a + b * lz)
            if k == 0:
                g0 = acc
            elif k == 1:
                g1 = acc
            else:
                g2 = acc
        return g0, g1, g2
    if z > scal[5]:
        return g0, g1, g2
    u = math.log(z)
    i = int((u - scal[0]) / scal[1])
    nseg = coefs.shape[2]
    if i >= nseg:
        i = nseg - 1
    i = max(i, 0)
    d = u - (scal[0] + i * scal[1])
    base = -scal[2] * math.exp(scal[3] * u)
    lp = math.log1p(z)
    for k in range(3 if combo else 1):
        w = ((coefs[k, 0, i] * d + coefs[k, 1, i]) * d + coefs[k, 2, i]) * d + coefs[k, 3, i]
        v = w * math.exp(base + chan[k, 0] * lp - chan[k, 1] * u)
        if k == 0:
            g0 = v
        elif k == 1:
            g1 = v
        else:
            g2 = v
    return g0, g1, g2


@njit(inline="always")
def _kernel(ta, pref_t, d, ainv, rdet, combo, adiff, bx, cx, coefs, chan, ser, scal):
    # Y0/Z0 (combo False) or sum adiff_ij D_ij + b_i D_i + c applied to it;
    # ta = tau^alpha, pref_t = time prefactor, rdet = det(a)^(-1/2)
    n = d.shape[0]
    ad0 = 0.0
    ad1 = 0.0
    ad2 = 0.0
    for j in range(n):
        ad0 += ainv[0, j] * d[j]
        if n > 1:
            ad1 += ainv[1, j] * d[j]
        if n > 2:
            ad2 += ainv[2, j] * d[j]
    quad = ad0 * d[0]
    if n > 1:
        quad += ad1 * d[1]
    if n > 2:
        quad += ad2 * d[2]
    z = 0.25 * quad / ta
    if z > scal[5]:
        return 0.0
    g0, g1, g2 = _prof3(z, coefs, chan, ser, scal, combo)
    pref = pref_t * rdet
    if not combo:
        return pref * g0
    inv = 0.5 / ta
    grad = bx[0] * ad0
    if n > 1:
        grad += bx[1] * ad1
    if n > 2:
        grad += bx[2] * ad2
    hq = 0.0
    ht = 0.0
    for i in range(n):
        adi = ad0 if i == 0 else (ad1 if i == 1 else ad2)
        for j in range(n):
            adj = ad0 if j == 0 else (ad1 if j == 1 else ad2)
            hq += adiff[i, j] * adi * adj
            ht += adiff[i, j] * ainv[i, j]
    val = cx * g0 + g1 * inv * grad + g2 * inv * inv * hq + g1 * inv * ht
    return pref * val


@njit(inline="always")
def _time_factors(tau, alpha, is_y, n):
    ta = tau**alpha
    pref = _INV4PI ** (0.5 * n) * ta ** (-0.5 * n)
    if is_y:
        pref *= tau ** (alpha - 1.0)
    return ta, pref


@njit(inline="always")
def _chi(r, scale, radius):
    if r >= radius:
        return 0.0
    u = r / scale
    return math.exp(-u * u * u * u)


@njit(inline="always")
def _one_minus_chi(r, scale, radius):
    if r >= radius:
        return 1.0
    u = r / scale
    return -math.expm1(-u * u * u * u)


@njit
def _stencil(y, origin, h, shape, periodic, idx, wts):
    # cubic Lagrange weights per dimension; idx = -1 marks nodes outside a window
    n = y.shape[0]
    for d in range(n):
        s = (y[d] - origin[d]) / h[d]
        f = math.floor(s)
        t = s - f
        base = int(f) - 1
        wts[d, 0] = -t * (t - 1.0) * (t - 2.0) / 6.0
        wts[d, 1] = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0
        wts[d, 2] = -(t + 1.0) * t * (t - 2.0) / 2.0
        wts[d, 3] = (t + 1.0) * t * (t - 1.0) / 6.0
        m = shape[d]
        for q in range(4):
            j = base + q
            if periodic:
                idx[d, q] = j % m
            elif j < 0 or j >= m:
                idx[d, q] = -1
            else:
                idx[d, q] = j


@njit
def _scatter(i, c_a, c_b, lev_a, lev_b, k_unknown, idx, wts, strides, phi, rest, L):
    n = idx.shape[0]
    total = 1
    for d in range(n):
        total *= 4
    for combo in range(total):
        rem = combo
        flat = 0
        w = 1.0
        ok = True
        for d in range(n):
            q = rem % 4
            rem //= 4
            j = idx[d, q]
            if j < 0:
                ok = False
                break
            flat += j * strides[d]
            w *= wts[d, q]
        if not ok or w == 0.0:
            continue
        if c_a != 0.0:
            if lev_a == k_unknown:
                L[i, flat] += c_a * w
            else:
                rest[i] += c_a * w * phi[lev_a, flat]
        if c_b != 0.0:
            if lev_b == k_unknown:
                L[i, flat] += c_b * w
            else:
                rest[i] += c_b * w * phi[lev_b, flat]


@njit
def _local_pass(alpha, is_y, combo, taus, lam_w, lev_a, lev_b, theta, k_unknown, X,
                unit_off, unit_w, scaled, chi_scale, chi_radius, lam_max, origin, h, shape, strides,
                periodic, phi, fam, par, coefs, chan, ser, scal, rest, L):
    n = X.shape[1]
    nx = X.shape[0]
    y = np.empty(n)
    d = np.empty(n)
    ax = np.empty((n, n))
    axinv = np.empty((n, n))
    bx = np.empty(n)
    ay = np.empty((n, n))
    ainv = np.empty((n, n))
    by = np.empty(n)
    adiff = np.empty((n, n))
    idx = np.empty((n, 4), dtype=np.int64)
    wts = np.empty((n, 4))
    for g in range(taus.shape[0]):
        tau = taus[g]
        if scaled:
            scale = 2.0 * math.sqrt(lam_max) * tau ** (0.5 * alpha)
        else:
            scale = 1.0
        vol = scale**n
        ta, pt = _time_factors(tau, alpha, is_y, n)
        for i in range(nx):
            _, cx = _coeffs(X[i], fam, par, ax, axinv, bx)
            for q in range(unit_off.shape[0]):
                r = 0.0
                for e in range(n):
                    d[e] = unit_off[q, e] * scale
                    y[e] = X[i, e] - d[e]
                    r += d[e] * d[e]
                wq = unit_w[q] * vol
                if not scaled:
                    wq *= _chi(math.sqrt(r), chi_scale, chi_radius)
                    if wq == 0.0:
                        continue
                det, _ = _coeffs(y, fam, par, ay, ainv, by)
                for e in range(n):
                    for f in range(n):
                        adiff[e, f] = ax[e, f] - ay[e, f]
                kv = _kernel(ta, pt, d, ainv, 1.0 / math.sqrt(det), combo, adiff, bx, cx, coefs, chan, ser, scal)
                if kv == 0.0:
                    continue
                c = lam_w[g] * wq * kv
                _stencil(y, origin, h, shape, periodic, idx, wts)
                _scatter(i, c * (1.0 - theta[g]), c * theta[g], lev_a[g], lev_b[g], k_unknown,
                         idx, wts, strides, phi, rest, L)


@njit
def _lattice_pass(alpha, is_y, combo, taus, lam_w, lev_a, lev_b, theta, k_unknown, X, hvol,
                  images, chi_scale, chi_radius, smax, lam_max, a_lat, ainv_lat, det_lat, b_lat, c_lat,
                  phi, coefs, chan, ser, scal, rest, L):
    n = X.shape[1]
    nx = X.shape[0]
    d = np.empty(n)
    adiff = np.empty((n, n))
    rdet_lat = 1.0 / np.sqrt(det_lat)
    for g in range(taus.shape[0]):
        tau = taus[g]
        rmax = smax * 2.0 * math.sqrt(lam_max) * tau ** (0.5 * alpha)
        ta, pt = _time_factors(tau, alpha, is_y, n)
        wa = lam_w[g] * hvol * (1.0 - theta[g])
        wb = lam_w[g] * hvol * theta[g]
        la = lev_a[g]
        lb = lev_b[g]
        for i in range(nx):
            acc = 0.0
            for j in range(nx):
                for e in range(n):
                    for f in range(n):
                        adiff[e, f] = a_lat[i, e, f] - a_lat[j, e, f]
                kij = 0.0
                for m in range(images.shape[0]):
                    r = 0.0
                    for e in range(n):
                        d[e] = X[i, e] - X[j, e] - images[m, e]
                        r += d[e] * d[e]
                    r = math.sqrt(r)
                    if r == 0.0 or r > rmax:
                        continue
                    kv = _kernel(ta, pt, d, ainv_lat[j], rdet_lat[j], combo, adiff,
                                 b_lat[i], c_lat[i], coefs, chan, ser, scal)
                    kij += _one_minus_chi(r, chi_scale, chi_radius) * kv
                if kij == 0.0:
                    continue
                if la == k_unknown:
                    L[i, j] += wa * kij
                else:
                    acc += wa * kij * phi[la, j]
                if lb == k_unknown:
                    L[i, j] += wb * kij
                else:
                    acc += wb * kij * phi[lb, j]
            rest[i] += acc


@njit
def _analytic_pass(alpha, combo, tau, X, unit_off, unit_w, scaled, chi_scale, chi_radius, lam_max,
                   u_fam, u_par, fam, par, coefs, chan, ser, scal, out):
    # int K(tau, x_i; y) u(y) dy over a local rule with analytic u (kind Z0)
    n = X.shape[1]
    y = np.empty(n)
    d = np.empty(n)
    ax = np.empty((n, n))
    axinv = np.empty((n, n))
    bx = np.empty(n)
    ay = np.empty((n, n))
    ainv = np.empty((n, n))
    by = np.empty(n)
    adiff = np.empty((n, n))
    scale = 2.0 * math.sqrt(lam_max) * tau ** (0.5 * alpha) if scaled else 1.0
    vol = scale**n
    ta, pt = _time_factors(tau, alpha, False, n)
    for i in range(X.shape[0]):
        _, cx = _coeffs(X[i], fam, par, ax, axinv, bx)
        acc = 0.0
        for q in range(unit_off.shape[0]):
            r = 0.0
            for e in range(n):
                d[e] = unit_off[q, e] * scale
                y[e] = X[i, e] - d[e]
                r += d[e] * d[e]
            wq = unit_w[q] * vol
            if not scaled:
                wq *= _chi(math.sqrt(r), chi_scale, chi_radius)
                if wq == 0.0:
                    continue
            det, _ = _coeffs(y, fam, par, ay, ainv, by)
            for e in range(n):
                for f in range(n):
                    adiff[e, f] = ax[e, f] - ay[e, f]
            kv = _kernel(ta, pt, d, ainv, 1.0 / math.sqrt(det), combo, adiff, bx, cx, coefs, chan, ser, scal)
            acc += wq * kv * _field(u_fam, u_par, y)
        out[i] += acc


@njit
def _point_pass(alpha, is_y, combo, tau, X, xi, images, fam, par, coefs, chan, ser, scal, out):
    # K(tau, x_i; xi) summed over periodic images of xi
    n = X.shape[1]
    d = np.empty(n)
    ax = np.empty((n, n))
    axinv = np.empty((n, n))
    bx = np.empty(n)
    ay = np.empty((n, n))
    ainv = np.empty((n, n))
    by = np.empty(n)
    adiff = np.empty((n, n))
    det, _ = _coeffs(xi, fam, par, ay, ainv, by)
    rdet = 1.0 / math.sqrt(det)
    ta, pt = _time_factors(tau, alpha, is_y, n)
    for i in range(X.shape[0]):
        _, cx = _coeffs(X[i], fam, par, ax, axinv, bx)
        for e in range(n):
            for f in range(n):
                adiff[e, f] = ax[e, f] - ay[e, f]
        acc = 0.0
        for m in range(images.shape[0]):
            for e in range(n):
                d[e] = X[i, e] - xi[e] - images[m, e]
            acc += _kernel(ta, pt, d, ainv, rdet, combo, adiff, bx, cx, coefs, chan, ser, scal)
        out[i] = acc


@njit
def _pair_pass(alpha, o_is_y, o_combo, i_is_y, t, X, xi, images, lam_a, w_a, lam_b, w_b, unit_off,
               unit_w, smax, lam_max, fam, par, o_coefs, o_chan, o_ser, o_scal, i_coefs, i_chan, i_ser,
               i_scal, out):
    # int_0^t int outer(t - l, x_i - y; y) inner(l, y - xi; xi) dy dl, inner a Levi kernel (combo);
    # l <= t/2 on a rule around the images of xi, l > t/2 on a rule around x_i
    n = X.shape[1]
    d = np.empty(n)
    y = np.empty(n)
    ax = np.empty((n, n))
    axinv = np.empty((n, n))
    bx = np.empty(n)
    axi = np.empty((n, n))
    axiinv = np.empty((n, n))
    bxi = np.empty(n)
    ay = np.empty((n, n))
    ayinv = np.empty((n, n))
    by = np.empty(n)
    d_out = np.empty((n, n))
    d_in = np.empty((n, n))
    det_xi, _ = _coeffs(xi, fam, par, axi, axiinv, bxi)
    rdet_xi = 1.0 / math.sqrt(det_xi)
    scale = 2.0 * math.sqrt(lam_max)
    w_t = scale * t ** (0.5 * alpha)
    for i in range(X.shape[0]):
        _, cx = _coeffs(X[i], fam, par, ax, axinv, bx)
        acc = 0.0
        for m in range(images.shape[0]):
            dist = 0.0
            for e in range(n):
                dist += (X[i, e] - xi[e] - images[m, e]) ** 2
            if math.sqrt(dist) > smax * 2.0 * w_t:
                continue
            for q in range(lam_a.shape[0]):
                lam = lam_a[q]
                wl = scale * lam ** (0.5 * alpha)
                ta_i, pt_i = _time_factors(lam, alpha, i_is_y, n)
                ta_o, pt_o = _time_factors(t - lam, alpha, o_is_y, n)
                part = 0.0
                for p in range(unit_w.shape[0]):
                    for e in range(n):
                        y[e] = xi[e] + images[m, e] + wl * unit_off[p, e]
                    det_y, cy = _coeffs(y, fam, par, ay, ayinv, by)
                    for e in range(n):
                        for f in range(n):
                            d_in[e, f] = ay[e, f] - axi[e, f]
                            d_out[e, f] = ax[e, f] - ay[e, f]
                    for e in range(n):
                        d[e] = wl * unit_off[p, e]
                    kin = _kernel(ta_i, pt_i, d, axiinv, rdet_xi, True, d_in, by, cy,
                                  i_coefs, i_chan, i_ser, i_scal)
                    if kin == 0.0:
                        continue
                    for e in range(n):
                        d[e] = X[i, e] - y[e]
                    kout = _kernel(ta_o, pt_o, d, ayinv, 1.0 / math.sqrt(det_y), o_combo, d_out, bx, cx,
                                   o_coefs, o_chan, o_ser, o_scal)
                    part += unit_w[p] * kin * kout
                acc += w_a[q] * part * wl**n
        for q in range(lam_b.shape[0]):
            lam = lam_b[q]
            tau = t - lam
            wl = scale * tau ** (0.5 * alpha)
            ta_i, pt_i = _time_factors(lam, alpha, i_is_y, n)
            ta_o, pt_o = _time_factors(tau, alpha, o_is_y, n)
            part = 0.0
            for p in range(unit_w.shape[0]):
                for e in range(n):
                    y[e] = X[i, e] + wl * unit_off[p, e]
                det_y, cy = _coeffs(y, fam, par, ay, ayinv, by)
                for e in range(n):
                    for f in range(n):
                        d_in[e, f] = ay[e, f] - axi[e, f]
                        d_out[e, f] = ax[e, f] - ay[e, f]
                for e in range(n):
                    d[e] = -wl * unit_off[p, e]
                kout = _kernel(ta_o, pt_o, d, ayinv, 1.0 / math.sqrt(det_y), o_combo, d_out, bx, cx,
                               o_coefs, o_chan, o_ser, o_scal)
                if kout == 0.0:
                    continue
                kin = 0.0
                for m in range(images.shape[0]):
                    for e in range(n):
                        d[e] = y[e] - xi[e] - images[m, e]
                    kin += _kernel(ta_i, pt_i, d, axiinv, rdet_xi, True, d_in, by, cy,
                                   i_coefs, i_chan, i_ser, i_scal)
                part += unit_w[p] * kin * kout
            acc += w_b[q] * part * wl**n
        out[i] = acc


# ---------------------------------------------------------------------------
# numpy fallback (same arithmetic, vectorised over points)


def _field_np(fam, par, y):
    if fam == 0:
        return np.full(y.shape[0], par[0])
    n = y.shape[1]
    if fam == 1:
        return par[0] + par[1] * np.sin(par[2] + y @ par[3 : 3 + n])
    r2 = np.sum((y - par[3 : 3 + n]) ** 2, axis=1)
    return par[0] + par[1] * np.exp(-r2 / par[2] ** 2)


def _coeffs_np(y, fam, par):
    n = y.shape[1]
    a = np.empty((y.shape[0], n, n))
    for i in range(n):
        for j in range(n):
            a[:, i, j] = _field_np(fam[i * n + j], par[i * n + j], y)
    b = np.stack([_field_np(fam[n * n + i], par[n * n + i], y) for i in range(n)], axis=1)
    c = _field_np(fam[n * n + n], par[n * n + n], y)
    return a, np.linalg.inv(a), np.linalg.det(a), b, c


def _prof_np(z, k, coefs, chan, ser, scal):
    z = np.maximum(z, 1e-14)
    out = np.zeros(z.shape)
    lo = z <= scal[4]
    if np.any(lo):
        zl = z[lo]
        lz = np.log(zl)
        keep = (ser[k, 1] != 0.0) | (ser[k, 2] != 0.0)
        e, a, b = ser[k, 0, keep], ser[k, 1, keep], ser[k, 2, keep]
        out[lo] = np.sum(zl[:, None] ** e * (a + b * lz[:, None]), axis=1)
    mid = (~lo) & (z <= scal[5])
    if np.any(mid):
        u = np.log(z[mid])
        i = np.clip(((u - scal[0]) / scal[1]).astype(np.int64), 0, coefs.shape[2] - 1)
        d = u - (scal[0] + i * scal[1])
        w = ((coefs[k, 0, i] * d + coefs[k, 1, i]) * d + coefs[k, 2, i]) * d + coefs[k, 3, i]
        out[mid] = w * np.exp(-scal[2] * z[mid] ** scal[3] + chan[k, 0] * np.log1p(z[mid]) - chan[k, 1] * u)
    return out


def _kernel_np(tau, d, alpha, is_y, ainv, det, combo, adiff, bx, cx, coefs, chan, ser, scal):
    n = d.shape[1]
    ta = tau**alpha
    ad = np.einsum("pij,pj->pi", ainv, d)
    z = 0.25 * np.einsum("pi,pi->p", ad, d) / ta
    pref = _INV4PI ** (0.5 * n) / np.sqrt(det) * ta ** (-0.5 * n)
    if is_y:
        pref = pref * tau ** (alpha - 1.0)
    g0 = _prof_np(z, 0, coefs, chan, ser, scal)
    if not combo:
        return pref * g0
    g1 = _prof_np(z, 1, coefs, chan, ser, scal)
    g2 = _prof_np(z, 2, coefs, chan, ser, scal)
    inv = 0.5 / ta
    grad = np.einsum("pi,pi->p", bx, ad)
    hq = np.einsum("pij,pi,pj->p", adiff, ad, ad)
    ht = np.einsum("pij,pij->p", adiff, ainv)
    return pref * (cx * g0 + g1 * inv * grad + g2 * inv * inv * hq + g1 * inv * ht)


def _chi_np(r, scale, radius):
    return np.where(r >= radius, 0.0, np.exp(-((r / scale) ** 4)))


def _one_minus_chi_np(r, scale, radius):
    return np.where(r >= radius, 1.0, -np.expm1(-((r / scale) ** 4)))


def _stencil_np(y, origin, h, shape, periodic, strides):
    # flat indices (P, 4**n) and weights (P, 4**n); index -1 marks nodes outside
    n = y.shape[1]
    flat = np.zeros((y.shape[0], 1), dtype=np.int64)
    wts = np.ones((y.shape[0], 1))
    valid = np.ones((y.shape[0], 1), dtype=bool)
    for d in range(n):
        s = (y[:, d] - origin[d]) / h[d]
        f = np.floor(s)
        t = s - f
        base = f.astype(np.int64) - 1
        w = np.stack([-t * (t - 1) * (t - 2) / 6, (t + 1) * (t - 1) * (t - 2) / 2,
                      -(t + 1) * t * (t - 2) / 2, (t + 1) * t * (t - 1) / 6], axis=1)
        j = base[:, None] + np.arange(4)[None, :]
        if periodic:
            ok = np.ones_like(j, dtype=bool)
            j = j % shape[d]
        else:
            ok = (j >= 0) & (j < shape[d])
            j = np.where(ok, j, 0)
        # earlier dimensions vary slowest, matching the compiled loop order
        flat = (flat[:, None, :] + (j * strides[d])[:, :, None]).reshape(y.shape[0], -1)
        wts = (wts[:, None, :] * w[:, :, None]).reshape(y.shape[0], -1)
        valid = (valid[:, None, :] & ok[:, :, None]).reshape(y.shape[0], -1)
    return np.where(valid, flat, -1), np.where(valid, wts, 0.0)


def _accumulate_np(rows, coef, lev, k_unknown, flat, wts, phi, rest, L):
    # rows (P,), coef (P,), lev (P,), flat/wts (P, S)
    c = coef[:, None] * wts
    mask = flat >= 0
    c = np.where(mask, c, 0.0)
    fl = np.where(mask, flat, 0)
    unk = lev == k_unknown
    if np.any(unk):
        r = np.repeat(rows[unk], fl.shape[1])
        np.add.at(L, (r, fl[unk].ravel()), c[unk].ravel())
    kn = ~unk
    if np.any(kn):
        vals = np.sum(c[kn] * phi[lev[kn][:, None], fl[kn]], axis=1)
        np.add.at(rest, rows[kn], vals)


def _local_pass_np(alpha, is_y, combo, taus, lam_w, lev_a, lev_b, theta, k_unknown, X,
                   unit_off, unit_w, scaled, chi_scale, chi_radius, lam_max, origin, h, shape, strides,
                   periodic, phi, fam, par, coefs, chan, ser, scal, rest, L):
    nx, n = X.shape
    ax, _, _, bx, cx = _coeffs_np(X, fam, par)
    for g in range(taus.shape[0]):
        tau = taus[g]
        scale = 2.0 * math.sqrt(lam_max) * tau ** (0.5 * alpha) if scaled else 1.0
        d = np.broadcast_to(unit_off * scale, (nx,) + unit_off.shape).reshape(-1, n)
        wq = np.tile(unit_w * scale**n, nx)
        if not scaled:
            wq = wq * _chi_np(np.linalg.norm(d, axis=1), chi_scale, chi_radius)
        rows = np.repeat(np.arange(nx), unit_off.shape[0])
        keep = wq != 0.0
        d, wq, rows = d[keep], wq[keep], rows[keep]
        y = X[rows] - d
        ay, ainv, det, _, _ = _coeffs_np(y, fam, par)
        kv = _kernel_np(np.full(rows.size, tau), d, alpha, is_y, ainv, det, combo,
                        ax[rows] - ay, bx[rows], cx[rows], coefs, chan, ser, scal)
        c = lam_w[g] * wq * kv
        flat, wts = _stencil_np(y, origin, h, shape, periodic, strides)
        lv = np.full(rows.size, lev_a[g])
        _accumulate_np(rows, c * (1.0 - theta[g]), lv, k_unknown, flat, wts, phi, rest, L)
        lv = np.full(rows.size, lev_b[g])
        _accumulate_np(rows, c * theta[g], lv, k_unknown, flat, wts, phi, rest, L)


def _lattice_pass_np(alpha, is_y, combo, taus, lam_w, lev_a, lev_b, theta, k_unknown, X, hvol,
                     images, chi_scale, chi_radius, smax, lam_max, a_lat, ainv_lat, det_lat, b_lat, c_lat,
                     phi, coefs, chan, ser, scal, rest, L):
    nx, n = X.shape
    ii, jj = np.meshgrid(np.arange(nx), np.arange(nx), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    for g in range(taus.shape[0]):
        tau = taus[g]
        rmax = smax * 2.0 * math.sqrt(lam_max) * tau ** (0.5 * alpha)
        kij = np.zeros(ii.size)
        for m in range(images.shape[0]):
            d = X[ii] - X[jj] - images[m]
            r = np.linalg.norm(d, axis=1)
            sel = (r > 0.0) & (r <= rmax)
            if not np.any(sel):
                continue
            i, j = ii[sel], jj[sel]
            kv = _kernel_np(np.full(i.size, tau), d[sel], alpha, is_y, ainv_lat[j], det_lat[j],
                            combo, a_lat[i] - a_lat[j], b_lat[i], c_lat[i], coefs, chan, ser, scal)
            kij[sel] += _one_minus_chi_np(r[sel], chi_scale, chi_radius) * kv
        kmat = kij.reshape(nx, nx) * (lam_w[g] * hvol)
        for lev, w in ((lev_a[g], 1.0 - theta[g]), (lev_b[g], theta[g])):
            if w == 0.0:
                continue
            if lev == k_unknown:
                L += w * kmat
            else:
                rest += w * (kmat @ phi[lev])


def _analytic_pass_np(alpha, combo, tau, X, unit_off, unit_w, scaled, chi_scale, chi_radius, lam_max,
                      u_fam, u_par, fam, par, coefs, chan, ser, scal, out):
    nx, n = X.shape
    ax, _, _, bx, cx = _coeffs_np(X, fam, par)
    scale = 2.0 * math.sqrt(lam_max) * tau ** (0.5 * alpha) if scaled else 1.0
    d = np.broadcast_to(unit_off * scale, (nx,) + unit_off.shape).reshape(-1, n)
    wq = np.tile(unit_w * scale**n, nx)
    if not scaled:
        wq = wq * _chi_np(np.linalg.norm(d, axis=1), chi_scale, chi_radius)
    rows = np.repeat(np.arange(nx), unit_off.shape[0])
    y = X[rows] - d
    ay, ainv, det, _, _ = _coeffs_np(y, fam, par)
    kv = _kernel_np(np.full(rows.size, tau), d, alpha, False, ainv, det, combo, ax[rows] - ay,
                    bx[rows], cx[rows], coefs, chan, ser, scal)
    np.add.at(out, rows, wq * kv * _field_np(u_fam, u_par, y))


def _point_pass_np(alpha, is_y, combo, tau, X, xi, images, fam, par, coefs, chan, ser, scal, out):
    nx, n = X.shape
    ax, _, _, bx, cx = _coeffs_np(X, fam, par)
    ay, ainv, det, _, _ = _coeffs_np(xi[None, :], fam, par)
    acc = np.zeros(nx)
    for m in range(images.shape[0]):
        d = X - xi - images[m]
        acc += _kernel_np(np.full(nx, tau), d, alpha, is_y, np.repeat(ainv, nx, 0), np.repeat(det, nx),
                          combo, ax - ay, bx, cx, coefs, chan, ser, scal)
    out[:] = acc


def _pair_pass_np(alpha, o_is_y, o_combo, i_is_y, t, X, xi, images, lam_a, w_a, lam_b, w_b, unit_off,
                  unit_w, smax, lam_max, fam, par, o_coefs, o_chan, o_ser, o_scal, i_coefs, i_chan, i_ser,
                  i_scal, out):
    n = X.shape[1]
    npts = unit_w.size
    axi, axiinv, det_xi, _, _ = _coeffs_np(xi[None, :], fam, par)
    scale = 2.0 * math.sqrt(lam_max)
    w_t = scale * t ** (0.5 * alpha)
    ax_all, _, _, bx_all, cx_all = _coeffs_np(X, fam, par)

    def inner(lam, dvec, ay, by, cy):
        k = dvec.shape[0]
        return _kernel_np(np.full(k, lam), dvec, alpha, i_is_y, np.repeat(axiinv, k, 0), np.repeat(det_xi, k),
                          True, ay - axi, by, cy, i_coefs, i_chan, i_ser, i_scal)

    def outer(tau, dvec, ay, ayinv, det_y, i):
        k = dvec.shape[0]
        return _kernel_np(np.full(k, tau), dvec, alpha, o_is_y, ayinv, det_y, o_combo, ax_all[i][None] - ay,
                          np.repeat(bx_all[i][None], k, 0), np.full(k, cx_all[i]), o_coefs, o_chan, o_ser, o_scal)

    for i in range(X.shape[0]):
        acc = 0.0
        for m in range(images.shape[0]):
            if np.linalg.norm(X[i] - xi - images[m]) > smax * 2.0 * w_t:
                continue
            for lam, wq in zip(lam_a, w_a):
                wl = scale * lam ** (0.5 * alpha)
                y = xi + images[m] + wl * unit_off
                ay, ayinv, det_y, by, cy = _coeffs_np(y, fam, par)
                kin = inner(lam, wl * unit_off, ay, by, cy)
                kout = outer(t - lam, X[i] - y, ay, ayinv, det_y, i)
                acc += wq * wl**n * float(np.sum(unit_w * kin * kout))
        for lam, wq in zip(lam_b, w_b):
            tau = t - lam
            wl = scale * tau ** (0.5 * alpha)
            y = X[i] + wl * unit_off
            ay, ayinv, det_y, by, cy = _coeffs_np(y, fam, par)
            kout = outer(tau, -wl * unit_off, ay, ayinv, det_y, i)
            kin = np.zeros(npts)
            for m in range(images.shape[0]):
                kin += inner(lam, y - xi - images[m], ay, by, cy)
            acc += wq * wl**n * float(np.sum(unit_w * kin * kout))
        out[i] = acc


local_pass = _local_pass if USE_NUMBA else _local_pass_np
lattice_pass = _lattice_pass if USE_NUMBA else _lattice_pass_np
analytic_pass = _analytic_pass if USE_NUMBA else _analytic_pass_np
point_pass = _point_pass if USE_NUMBA else _point_pass_np
pair_pass = _pair_pass if USE_NUMBA else _pair_pass_np


# ---------------------------------------------------------------------------
# orchestration

_DISC_EDGES = (0.0, 1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 5.0, 6.0, 7.0)
_SCALED_EDGES = (0.0, 1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.5, 8.0, 10.0)


def _radial_nodes(edges, n_gl):
    x, w = np.polynomial.legendre.leggauss(n_gl)
    r, wr = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        r.append(0.5 * (lo + hi) + 0.5 * (hi - lo) * x)
        wr.append(0.5 * (hi - lo) * w)
    return np.concatenate(r), np.concatenate(wr)


def ball_rule(n: int, edges, n_gl: int = 4, angular: int = 24) -> tuple[np.ndarray, np.ndarray]:
    """Product rule on the ball: Gauss panels in r, uniform angles (n = 2) or Gauss x uniform (n = 3)."""
    r, wr = _radial_nodes(edges, n_gl)
    if n == 1:
        return np.concatenate([r, -r])[:, None], np.concatenate([wr, wr])
    if n == 2:
        th = 2.0 * math.pi * (np.arange(angular) + 0.5) / angular
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
        wd = np.full(angular, 2.0 * math.pi / angular)
    elif n == 3:
        ct, wt = np.polynomial.legendre.leggauss(max(4, angular // 2))
        ph = 2.0 * math.pi * (np.arange(angular) + 0.5) / angular
        st = np.sqrt(1.0 - ct**2)
        dirs = np.stack([np.outer(st, np.cos(ph)).ravel(), np.outer(st, np.sin(ph)).ravel(),
                         np.repeat(ct, angular)], axis=1)
        wd = np.repeat(wt, angular) * (2.0 * math.pi / angular)
    else:
        raise ValueError("ball rules exist for n <= 3")
    off = (r[:, None, None] * dirs[None, :, :]).reshape(-1, n)
    w = (wr[:, None] * r[:, None] ** (n - 1) * wd[None, :]).ravel()
    return off, w


def lag_rule(lo: float, hi: float, q: float, n_gl: int, n_sing: int):
    """Nodes and weights for int_lo^hi g(tau) dtau.

    From lo = 0 the substitution tau = hi v^q absorbs a tau^(1/q - 1)
    singularity; otherwise panels are geometric with ratio at most 2.
    """
    if lo == 0.0:
        x, w = np.polynomial.legendre.leggauss(n_sing)
        v = 0.5 * (x + 1.0)
        return hi * v**q, 0.5 * w * hi * q * v ** (q - 1.0)
    m = max(1, int(math.ceil(math.log2(hi / lo))))
    edges = lo * (hi / lo) ** (np.arange(m + 1) / m)
    edges[-1] = hi
    taus, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        # fewer nodes where the lag barely changes across the panel
        ratio = b / a
        npts = min(n_gl, 2 if ratio < 1.2 else (3 if ratio < 1.5 else n_gl))
        x, w = np.polynomial.legendre.leggauss(npts)
        taus.append(0.5 * (a + b) + 0.5 * (b - a) * x)
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(taus), np.concatenate(ws)


def _split_rule(hi: float, q: float, n_gl: int, n_sing: int):
    """Rule on (0, hi]: singular substitution on (0, hi/8], geometric panels above."""
    t1, w1 = lag_rule(0.0, hi / 8.0, q, n_gl, n_sing)
    t2, w2 = lag_rule(hi / 8.0, hi, q, n_gl, n_sing)
    return np.ascontiguousarray(np.concatenate([t1, t2])), np.ascontiguousarray(np.concatenate([w1, w2]))


def pack_field(family: str, params: np.ndarray) -> tuple[int, np.ndarray]:
    par = np.zeros(NPAR)
    par[: len(params)] = params
    return FAMILIES[family], par


def pack_fields(rows) -> tuple[np.ndarray, np.ndarray]:
    """Stack (family_id, params) pairs into the (fam, par) arrays of the compiled loops."""
    fam = np.array([r[0] for r in rows], dtype=np.int64)
    par = np.ascontiguousarray(np.stack([r[1] for r in rows]))
    return fam, par


class Lattice:
    """Uniform tensor lattice; ``periodic`` means the box is one period."""

    def __init__(self, lower, upper, counts, periodic: bool):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.periodic = bool(periodic)
        self.n = self.lower.size
        if periodic:
            self.h = (self.upper - self.lower) / self.counts
        else:
            self.h = (self.upper - self.lower) / (self.counts - 1)
        self.axes = [self.lower[d] + self.h[d] * np.arange(self.counts[d]) for d in range(self.n)]
        mesh = np.meshgrid(*self.axes, indexing="ij")
        self.points = np.ascontiguousarray(np.stack([m.ravel() for m in mesh], axis=1))
        self.strides = np.array([int(np.prod(self.counts[d + 1 :])) for d in range(self.n)], dtype=np.int64)
        self.hvol = float(np.prod(self.h))
        self.period = self.upper - self.lower

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def images(self, reach: float) -> np.ndarray:
        """Period shifts that can bring a lattice pair within ``reach``, sorted by length."""
        if not self.periodic:
            return np.zeros((1, self.n))
        m = [int(math.ceil(reach / self.period[d])) + 1 for d in range(self.n)]
        grids = np.meshgrid(*[np.arange(-k, k + 1) for k in m], indexing="ij")
        shifts = np.stack([g.ravel() for g in grids], axis=1) * self.period
        norms = np.linalg.norm(shifts, axis=1)
        diam = float(np.linalg.norm(self.period))
        keep = norms <= reach + diam
        order = np.argsort(norms[keep])
        return np.ascontiguousarray(shifts[keep][order])


class PotentialEngine:
    """Space-time potentials of Z0/Y0 and of the parametrix residual kernels."""

    def __init__(self, lattice: Lattice, times: np.ndarray, alpha: float, ops: tuple,
                 lam_max: float, holder_gamma: float = 1.0, n_gl: int = 4, n_sing: int = 8,
                 angular: int = 24):
        from .profiles import get_profile, pack_profile

        self.lat = lattice
        self.t = np.asarray(times, dtype=float)
        self.alpha = float(alpha)
        self.ops = ops
        self.lam_max = float(lam_max)
        self.gamma = float(holder_gamma)
        self.n_gl, self.n_sing = n_gl, n_sing
        n = lattice.n
        self.prof = {}
        self.smax = {}
        for kind in ("y", "z"):
            prof = get_profile(kind, n, self.alpha, 2)
            self.prof[kind] = pack_profile(prof)
            z_cut = (34.0 / prof.rate) ** (1.0 / prof.inv_rho)
            self.smax[kind] = math.sqrt(z_cut)
        hmax = float(np.max(lattice.h))
        self.chi_scale = CHI_SCALE * hmax
        self.chi_radius = CHI_RADIUS * hmax
        self.tau_star = (NEAR_WIDTH * hmax / (2.0 * math.sqrt(self.lam_max))) ** (2.0 / self.alpha)
        self.disc = ball_rule(n, tuple(e * hmax for e in _DISC_EDGES), n_gl, angular)
        smax = max(self.smax.values())
        edges = tuple(e for e in _SCALED_EDGES if e < smax) + (smax,)
        self.scaled = ball_rule(n, edges, n_gl, angular)
        reach = max(self.smax.values()) * 2.0 * math.sqrt(self.lam_max) * self.t[-1] ** (0.5 * self.alpha)
        self.images = lattice.images(reach)
        a, ainv, det, b, c = _coeffs_np(lattice.points, *ops)
        self.lat_coeffs = tuple(np.ascontiguousarray(v) for v in (a, ainv, det, b, c))
        self._origin = np.ascontiguousarray(lattice.lower)
        self._h = np.ascontiguousarray(lattice.h)
        self._shape = np.ascontiguousarray(lattice.counts)

    # -- time nodes ---------------------------------------------------------

    def time_nodes(self, k: int, q: float):
        """(near, far) node sets for level k: arrays (tau, weight, level_a, level_b, theta)."""
        t = self.t
        tk = t[k]
        buckets = {"near": [], "far": []}
        for l in range(k):
            lag_lo, lag_hi = tk - t[l + 1], tk - t[l]
            parts = (("near", lag_lo, min(lag_hi, self.tau_star)), ("far", max(lag_lo, self.tau_star), lag_hi))
            for name, lo, hi in parts:
                if hi <= lo:
                    continue
                taus, ws = lag_rule(lo, hi, q, self.n_gl, self.n_sing)
                if l == 0:
                    theta = np.ones_like(taus)
                    la = lb = 1
                else:
                    theta = (tk - taus - t[l]) / (t[l + 1] - t[l])
                    la, lb = l, l + 1
                buckets[name].append((taus, ws, np.full(taus.size, la), np.full(taus.size, lb), theta))
        out = []
        for name in ("near", "far"):
            if buckets[name]:
                cols = list(zip(*buckets[name]))
                out.append(tuple(np.ascontiguousarray(np.concatenate(c)) for c in cols))
            else:
                out.append(None)
        return out

    def lag_exponent(self, kind: str, combo: bool) -> float:
        if kind == "y" and not combo:
            return 1.0 / self.alpha
        return 2.0 / (self.gamma * self.alpha)

    # -- potentials ---------------------------------------------------------

    def convolve(self, k: int, phi: np.ndarray, kind: str, combo: bool, implicit: bool = True):
        """(rest, L): the level-k potential equals rest + L @ phi[k] (L = 0 if not implicit)."""
        nx = self.lat.size
        rest = np.zeros(nx)
        L = np.zeros((nx, nx)) if implicit else np.zeros((1, 1))
        k_unknown = k if implicit else -1
        phi = np.ascontiguousarray(phi, dtype=float)
        near, far = self.time_nodes(k, self.lag_exponent(kind, combo))
        is_y = kind == "y"
        prof = self.prof[kind]
        common = (self.lat.points,)
        if near is not None:
            uo, uw = self.scaled
            local_pass(self.alpha, is_y, combo, *near, k_unknown, *common, uo, uw, True,
                       self.chi_scale, self.chi_radius, self.lam_max, self._origin, self._h, self._shape,
                       self.lat.strides, self.lat.periodic, phi, *self.ops, *prof, rest, L)
        if far is not None:
            do, dw = self.disc
            local_pass(self.alpha, is_y, combo, *far, k_unknown, *common, do, dw, False,
                       self.chi_scale, self.chi_radius, self.lam_max, self._origin, self._h, self._shape,
                       self.lat.strides, self.lat.periodic, phi, *self.ops, *prof, rest, L)
            lattice_pass(self.alpha, is_y, combo, *far, k_unknown, self.lat.points, self.lat.hvol,
                         self.images, self.chi_scale, self.chi_radius, self.smax[kind], self.lam_max,
                         *self.lat_coeffs, phi, *prof, rest, L)
        return rest, (L if implicit else None)

    def initial(self, k: int, u_fam: int, u_par: np.ndarray, combo: bool) -> np.ndarray:
        """int Z0(t_k, x - xi; xi) u(xi) dxi (or the M kernel when combo) on the lattice."""
        tau = float(self.t[k])
        out = np.zeros(self.lat.size)
        prof = self.prof["z"]
        if tau < self.tau_star:
            uo, uw = self.scaled
            analytic_pass(self.alpha, combo, tau, self.lat.points, uo, uw, True, self.chi_scale,
                          self.chi_radius, self.lam_max, u_fam, u_par, *self.ops, *prof, out)
            return out
        do, dw = self.disc
        analytic_pass(self.alpha, combo, tau, self.lat.points, do, dw, False, self.chi_scale,
                      self.chi_radius, self.lam_max, u_fam, u_par, *self.ops, *prof, out)
        samples = _field_np(u_fam, u_par, self.lat.points)[None, :]
        one = np.ones(1)
        zero = np.zeros(1, dtype=np.int64)
        lattice_pass(self.alpha, False, combo, np.array([tau]), one, zero, zero, one * 0.0, -1,
                     self.lat.points, self.lat.hvol, self.images, self.chi_scale, self.chi_radius,
                     self.smax["z"], self.lam_max, *self.lat_coeffs,
                     np.ascontiguousarray(samples), *prof, out, np.zeros((1, 1)))
        return out

    def point(self, k: int, xi, kind: str, combo: bool) -> np.ndarray:
        """K(t_k, x_i; xi) on the lattice, summed over periodic images of xi."""
        out = np.zeros(self.lat.size)
        point_pass(self.alpha, kind == "y", combo, float(self.t[k]), self.lat.points,
                   np.asarray(xi, dtype=float), self.images, *self.ops, *self.prof[kind], out)
        return out

    def pair(self, k: int, xi, outer: str, outer_combo: bool, inner: str) -> np.ndarray:
        """int_0^t_k int outer(t_k - l, x_i - y; y) L_inner(l, y; xi) dy dl on the lattice.

        L_inner is the Levi kernel built on Z0 (inner "z") or Y0 (inner "y").
        """
        t = float(self.t[k])
        q_in = self.lag_exponent(inner, True)
        q_out = self.lag_exponent(outer, outer_combo)
        lam_a, w_a = _split_rule(0.5 * t, q_in, self.n_gl, self.n_sing)
        tau_b, w_b = _split_rule(0.5 * t, q_out, self.n_gl, self.n_sing)
        uo, uw = self.scaled
        out = np.zeros(self.lat.size)
        pair_pass(self.alpha, outer == "y", outer_combo, inner == "y", t, self.lat.points,
                  np.asarray(xi, dtype=float), self.images, lam_a, w_a, t - tau_b, w_b, uo, uw,
                  max(self.smax.values()), self.lam_max, *self.ops, *self.prof[outer], *self.prof[inner], out)
        return out
