"""Pure numpy implementation of the flow kernels (fallback backend)."""

import numpy as np


def _distance_ratio(sign, k, t):
    x = k * t
    if sign == 0:
        return np.ones_like(t)
    safe = np.where(x < 1e-8, 1.0, x)
    exact = np.arctan(safe) / safe if sign > 0 else np.arctanh(safe) / safe
    return 2.0 * np.where(x < 1e-8, 1.0 - sign * x * x / 3.0, exact)


def _q(pot, c0, c1, rho):
    if pot == 0:
        return np.zeros_like(rho)
    if pot == 1:
        return np.full_like(rho, 2.0 * c0)
    if pot == 2:
        return 1.0 - rho * rho
    return -c0 * c1 * c1 * np.sinc(c1 * rho / np.pi)


def residual_rows(y, active, nbr, h, sign, k, pot, c0, c1):
    """Chart components of ``tau + grad V`` on the listed active nodes."""
    y = np.asarray(y, dtype=float)
    yp = y[active]
    t2 = np.sum(yp * yp, axis=1)
    lam = np.ones_like(t2) if sign == 0 else 2.0 / (1.0 + sign * k * k * t2)
    f = -sign * k * k * lam[:, None] * yp
    out = np.zeros_like(yp)
    for ax in range(nbr.shape[1] // 2):
        lo = y[nbr[:, 2 * ax]]
        hi = y[nbr[:, 2 * ax + 1]]
        d = (hi - lo) * (0.5 / h)
        fd = np.sum(f * d, axis=1, keepdims=True)
        dd = np.sum(d * d, axis=1, keepdims=True)
        out += (hi + lo - 2.0 * yp) / (h * h) + 2.0 * fd * d - f * dd
    if pot != 0:
        t = np.sqrt(t2)
        ratio = _distance_ratio(sign, k, t)
        q = _q(pot, c0, c1, t * ratio)
        out += (q * ratio / lam)[:, None] * yp
    return out


def flow_steps(y, active, nbr, h, dt, nsteps, sign, k, pot, c0, c1):
    """Advance ``nsteps`` explicit Euler steps; see the compiled twin."""
    src = np.array(y, dtype=float, copy=True)
    dst = src.copy()
    done = 0
    for _ in range(int(nsteps)):
        res = residual_rows(src, active, nbr, h, sign, k, pot, c0, c1)
        new = src[active] + dt * res
        t2 = np.sum(new * new, axis=1)
        bad = ~np.isfinite(t2)
        if sign < 0:
            bad |= k * k * t2 >= 1.0
        if np.any(bad):
            return src, done, int(active[np.argmax(bad)])
        dst[active] = new
        src, dst = dst, src
        done += 1
    return src, done, -1


def _geo_rhs(z, m, sign, k, pot, c0, c1):
    y, v = z[:m], z[m:]
    t2 = float(y @ y)
    if not np.isfinite(t2) or (sign < 0 and k * k * t2 >= 1.0):
        return None
    lam = 1.0 if sign == 0 else 2.0 / (1.0 + sign * k * k * t2)
    f = -sign * k * k * lam * y
    coef = 0.0
    if pot != 0:
        t = np.sqrt(t2)
        ratio = float(_distance_ratio(sign, k, np.array(t)))
        coef = float(_q(pot, c0, c1, np.array(t * ratio))) * ratio / lam
    acc = -(2.0 * float(f @ v) * v - float(v @ v) * f) - coef * y
    return np.concatenate([v, acc])


def rk4_path(y0, v0, dt, nsteps, last_dt, sign, k, pot, c0, c1):
    """Classical RK4 with compensated state updates; see the compiled twin."""
    m = len(y0)
    z = np.concatenate([np.asarray(y0, dtype=float), np.asarray(v0, dtype=float)])
    comp = np.zeros_like(z)
    states = [z.copy()]
    for i in range(int(nsteps)):
        h = last_dt if i == nsteps - 1 else dt
        k1 = _geo_rhs(z, m, sign, k, pot, c0, c1)
        k2 = None if k1 is None else _geo_rhs(z + 0.5 * h * k1, m, sign, k, pot, c0, c1)
        k3 = None if k2 is None else _geo_rhs(z + 0.5 * h * k2, m, sign, k, pot, c0, c1)
        k4 = None if k3 is None else _geo_rhs(z + h * k3, m, sign, k, pot, c0, c1)
        if k4 is None:
            break
        yk = (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4) - comp
        new = z + yk
        comp = (new - z) - yk
        if _geo_rhs(new, m, sign, k, pot, c0, c1) is None:
            break
        z = new
        states.append(z.copy())
    return np.array(states), len(states) - 1
