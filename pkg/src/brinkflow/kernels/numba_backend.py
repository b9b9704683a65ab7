"""Numba-jitted advection kernels.

Mirrors numpy_backend operation order exactly (same per-element arithmetic
sequence), so both backends produce bitwise-identical fields.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _upwind_density(rho, u0, u1, u2, h, dt):
    n0, n1, n2 = rho.shape
    out = rho.copy()
    c = dt / h
    for i in range(n0):
        for j in range(n1):
            for k in range(n2):
                v = out[i, j, k]
                # axis 0: right face first, then left, as in the numpy path
                if i < n0 - 1:
                    w = u0[i + 1, j, k]
                    up = rho[i, j, k] if w > 0.0 else rho[i + 1, j, k]
                    v -= c * (w * up)
                if i >= 1:
                    w = u0[i, j, k]
                    up = rho[i - 1, j, k] if w > 0.0 else rho[i, j, k]
                    v += c * (w * up)
                if j < n1 - 1:
                    w = u1[i, j + 1, k]
                    up = rho[i, j, k] if w > 0.0 else rho[i, j + 1, k]
                    v -= c * (w * up)
                if j >= 1:
                    w = u1[i, j, k]
                    up = rho[i, j - 1, k] if w > 0.0 else rho[i, j, k]
                    v += c * (w * up)
                if k < n2 - 1:
                    w = u2[i, j, k + 1]
                    up = rho[i, j, k] if w > 0.0 else rho[i, j, k + 1]
                    v -= c * (w * up)
                if k >= 1:
                    w = u2[i, j, k]
                    up = rho[i, j, k - 1] if w > 0.0 else rho[i, j, k]
                    v += c * (w * up)
                out[i, j, k] = v
    return out


def upwind_density(rho, u0, u1, u2, h, dt):
    return _upwind_density(rho, u0, u1, u2, h, dt)


@njit(cache=True)
def _flux_along(ua, m, i, j, k):
    # flux at cell i (between faces i and i+1)
    uc = 0.5 * (ua[i, j, k] + ua[i + 1, j, k])
    mup = m[i, j, k] if uc > 0.0 else m[i + 1, j, k]
    return uc * mup


@njit(cache=True)
def _advect_axis0(ua, ub1, ub2, m, h):
    """div(u m) for the axis-0 momentum, arrays pre-moved so the working
    axis is first; ub1/ub2 are the transverse velocities (face dimension
    along axes 1 and 2 respectively)."""
    n0 = m.shape[0] - 1
    n1 = m.shape[1]
    n2 = m.shape[2]
    adv = np.zeros(m.shape)
    for i in range(1, n0):
        for j in range(n1):
            for k in range(n2):
                total = (_flux_along(ua, m, i, j, k)
                         - _flux_along(ua, m, i - 1, j, k)) / h
                # transverse axis 1: edges j and j+1, zero on walls
                fe_hi = 0.0
                if j + 1 <= n1 - 1:
                    ve = 0.5 * (ub1[i - 1, j + 1, k] + ub1[i, j + 1, k])
                    mup = m[i, j, k] if ve > 0.0 else m[i, j + 1, k]
                    fe_hi = ve * mup
                fe_lo = 0.0
                if j >= 1:
                    ve = 0.5 * (ub1[i - 1, j, k] + ub1[i, j, k])
                    mup = m[i, j - 1, k] if ve > 0.0 else m[i, j, k]
                    fe_lo = ve * mup
                total += (fe_hi - fe_lo) / h
                # transverse axis 2
                fe_hi = 0.0
                if k + 1 <= n2 - 1:
                    ve = 0.5 * (ub2[i - 1, j, k + 1] + ub2[i, j, k + 1])
                    mup = m[i, j, k] if ve > 0.0 else m[i, j, k + 1]
                    fe_hi = ve * mup
                fe_lo = 0.0
                if k >= 1:
                    ve = 0.5 * (ub2[i - 1, j, k] + ub2[i, j, k])
                    mup = m[i, j, k - 1] if ve > 0.0 else m[i, j, k]
                    fe_lo = ve * mup
                total += (fe_hi - fe_lo) / h
                adv[i, j, k] = total
    return adv


def advect_momentum(axis, u0, u1, u2, m, h):
    vels = (u0, u1, u2)
    trans = [b for b in range(3) if b != axis]
    ua = np.ascontiguousarray(np.moveaxis(vels[axis], axis, 0))
    mm = np.ascontiguousarray(np.moveaxis(m, axis, 0))
    # after the move the transverse axes keep their relative order, so
    # ub[0]/ub[1] carry their face dimension at positions 1/2
    ub = [np.ascontiguousarray(np.moveaxis(vels[b], axis, 0))
          for b in trans]
    adv = _advect_axis0(ua, ub[0], ub[1], mm, h)
    return np.moveaxis(adv, 0, axis)
