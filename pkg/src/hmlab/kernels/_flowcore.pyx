# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops of the explicit harmonic-map-with-potential flow.

Chart and potential are passed as small integer codes plus coefficients so
that the whole step runs without touching Python objects.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, atan, atanh, sin, isfinite

cnp.import_array()


cdef inline double _distance_ratio(int sign, double k, double t) noexcept nogil:
    cdef double x = k * t
    if sign == 0:
        return 1.0
    if x < 1e-8:
        return 2.0 * (1.0 + sign * (-x * x / 3.0))
    if sign > 0:
        return 2.0 * atan(x) / x
    return 2.0 * atanh(x) / x


cdef inline double _q(int pot, double c0, double c1, double rho) noexcept nogil:
    """v'(rho) / rho for the built-in radial profiles."""
    cdef double x
    if pot == 0:
        return 0.0
    if pot == 1:
        return 2.0 * c0
    if pot == 2:
        return 1.0 - rho * rho
    x = c1 * rho
    if x < 1e-6:
        return -c0 * c1 * c1 * (1.0 - x * x / 6.0)
    return -c0 * c1 * c1 * sin(x) / x


cdef int _update_rows(const double[:, ::1] y, const long[::1] active,
                      const long[:, ::1] nbr, double h, int sign, double k,
                      int pot, double c0, double c1, double dt,
                      double[:, ::1] out) noexcept nogil:
    """Write ``y + dt * (tau + grad V)`` (or the bare residual when ``dt == 0``)
    into ``out`` for every active node.

    Returns the first node that leaves the chart, or -1.
    """
    cdef Py_ssize_t nact = active.shape[0]
    cdef Py_ssize_t m = y.shape[1]
    cdef Py_ssize_t naxes = nbr.shape[1] // 2
    cdef Py_ssize_t row, p, ax, a, lo, hi
    cdef double t2, t, lam, k2 = k * k, fd, dd, ratio, coef, new, s2
    cdef double inv2h = 0.5 / h, invh2 = 1.0 / (h * h), ks = -sign * k * k
    cdef bint residual_only = dt == 0.0
    cdef double f[8]
    cdef double d[8]
    cdef double r[8]
    for row in range(nact):
        p = active[row]
        t2 = 0.0
        for a in range(m):
            t2 += y[p, a] * y[p, a]
            r[a] = 0.0
        if sign == 0:
            lam = 1.0
        else:
            lam = 2.0 / (1.0 + sign * k2 * t2)
        for ax in range(naxes):
            lo = nbr[row, 2 * ax]
            hi = nbr[row, 2 * ax + 1]
            for a in range(m):
                r[a] += (y[hi, a] + y[lo, a] - 2.0 * y[p, a]) * invh2
            if sign != 0:
                fd = 0.0
                dd = 0.0
                for a in range(m):
                    f[a] = ks * lam * y[p, a]
                    d[a] = (y[hi, a] - y[lo, a]) * inv2h
                    fd += f[a] * d[a]
                    dd += d[a] * d[a]
                for a in range(m):
                    r[a] += 2.0 * fd * d[a] - f[a] * dd
        if pot != 0:
            t = sqrt(t2)
            ratio = _distance_ratio(sign, k, t)
            coef = _q(pot, c0, c1, t * ratio) * ratio / lam
            for a in range(m):
                r[a] += coef * y[p, a]
        if residual_only:
            for a in range(m):
                out[row, a] = r[a]
        else:
            s2 = 0.0
            for a in range(m):
                new = y[p, a] + dt * r[a]
                out[p, a] = new
                s2 += new * new
            if not isfinite(s2) or (sign < 0 and k2 * s2 >= 1.0):
                return <int>p
    return -1


def residual_rows(y, active, nbr, double h, int sign, double k, int pot,
                  double c0, double c1):
    """Chart components of ``tau + grad V`` on the listed active nodes."""
    cdef double[:, ::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    if yv.shape[1] > 8:
        raise ValueError("target dimension above 8 is not supported by the kernel")
    out = np.zeros((len(active), yv.shape[1]))
    cdef double[:, ::1] ov = out
    cdef const long[::1] av = np.ascontiguousarray(active, dtype=np.int64)
    cdef const long[:, ::1] nv = np.ascontiguousarray(nbr, dtype=np.int64)
    with nogil:
        _update_rows(yv, av, nv, h, sign, k, pot, c0, c1, 0.0, ov)
    return out


def flow_steps(y, active, nbr, double h, double dt, long nsteps, int sign,
               double k, int pot, double c0, double c1):
    """Advance ``nsteps`` explicit Euler steps with double buffering.

    Returns ``(values, steps_done, bad_node)``; ``bad_node`` is ``-1`` unless a
    node left the chart, in which case the last valid buffer is returned.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    src_arr = np.array(y, dtype=np.float64, order="C", copy=True)
    dst_arr = src_arr.copy()
    if src_arr.shape[1] > 8:
        raise ValueError("target dimension above 8 is not supported by the kernel")
    cdef double[:, ::1] a_buf = src_arr
    cdef double[:, ::1] b_buf = dst_arr
    cdef const long[::1] av = np.ascontiguousarray(active, dtype=np.int64)
    cdef const long[:, ::1] nv = np.ascontiguousarray(nbr, dtype=np.int64)
    cdef long step, done = 0
    cdef int bad = -1
    with nogil:
        for step in range(nsteps):
            if step % 2 == 0:
                bad = _update_rows(a_buf, av, nv, h, sign, k, pot, c0, c1, dt, b_buf)
            else:
                bad = _update_rows(b_buf, av, nv, h, sign, k, pot, c0, c1, dt, a_buf)
            if bad >= 0:
                break
            done += 1
    out = src_arr if done % 2 == 0 else dst_arr
    return out.copy(), done, bad


cdef int _geo_rhs(const double* z, int m, int sign, double k, int pot, double c0,
                  double c1, double* out) noexcept nogil:
    """Derivative of ``(y, v)``; returns 1 when ``y`` is outside the chart."""
    cdef int a
    cdef double t2 = 0.0, vv = 0.0, fv = 0.0, lam, fa, t, ratio, coef
    cdef double k2 = k * k
    for a in range(m):
        t2 += z[a] * z[a]
        vv += z[m + a] * z[m + a]
    if not isfinite(t2) or (sign < 0 and k2 * t2 >= 1.0):
        return 1
    lam = 1.0 if sign == 0 else 2.0 / (1.0 + sign * k2 * t2)
    for a in range(m):
        fv += -sign * k2 * lam * z[a] * z[m + a]
    coef = 0.0
    if pot != 0:
        t = sqrt(t2)
        ratio = _distance_ratio(sign, k, t)
        coef = _q(pot, c0, c1, t * ratio) * ratio / lam
    for a in range(m):
        fa = -sign * k2 * lam * z[a]
        out[a] = z[m + a]
        out[m + a] = -(2.0 * fv * z[m + a] - vv * fa) - coef * z[a]
    return 0


def rk4_path(y0, v0, double dt, long nsteps, double last_dt, int sign, double k,
             int pot, double c0, double c1):
    """Classical RK4 with compensated state updates.

    Every step has length ``dt`` except the last, which has ``last_dt``.
    Returns ``(states, steps_done)`` with ``states`` of shape
    ``(steps_done + 1, 2m)``; ``steps_done < nsteps`` means the curve left
    the chart.
    """
    cdef int m = len(y0)
    if m > 8:
        raise ValueError("target dimension above 8 is not supported by the kernel")
    states_arr = np.zeros((nsteps + 1, 2 * m))
    cdef double[:, ::1] S = states_arr
    cdef double z[16]
    cdef double c[16]
    cdef double w[16]
    cdef double k1[16]
    cdef double k2[16]
    cdef double k3[16]
    cdef double k4[16]
    cdef double inc, yk, new, h
    cdef int a, n2 = 2 * m, bad
    cdef long i, done = 0
    for a in range(m):
        z[a] = y0[a]
        z[m + a] = v0[a]
    for a in range(n2):
        c[a] = 0.0
        S[0, a] = z[a]
    with nogil:
        for i in range(nsteps):
            h = last_dt if i == nsteps - 1 else dt
            bad = _geo_rhs(z, m, sign, k, pot, c0, c1, k1)
            for a in range(n2):
                w[a] = z[a] + 0.5 * h * k1[a]
            bad |= _geo_rhs(w, m, sign, k, pot, c0, c1, k2)
            for a in range(n2):
                w[a] = z[a] + 0.5 * h * k2[a]
            bad |= _geo_rhs(w, m, sign, k, pot, c0, c1, k3)
            for a in range(n2):
                w[a] = z[a] + h * k3[a]
            bad |= _geo_rhs(w, m, sign, k, pot, c0, c1, k4)
            if bad:
                break
            for a in range(n2):
                inc = (h / 6.0) * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a])
                yk = inc - c[a]
                new = z[a] + yk
                c[a] = (new - z[a]) - yk
                w[a] = new
            if _geo_rhs(w, m, sign, k, pot, c0, c1, k1):
                break
            for a in range(n2):
                z[a] = w[a]
                S[i + 1, a] = z[a]
            done += 1
    return states_arr[: done + 1].copy(), done
