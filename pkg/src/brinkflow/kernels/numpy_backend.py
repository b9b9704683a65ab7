"""Pure-numpy reference implementations of the advection kernels.

Kept operation-for-operation parallel to the numba backend so the two
produce bitwise-identical results; the equivalence is tested.
"""

import numpy as np


def upwind_density(rho, u0, u1, u2, h, dt):
    """Conservative first-order upwind transport of a cell field.

    Fluxes live on interior faces only; boundary and solid faces carry
    zero velocity, so their fluxes vanish and solid cells stay frozen.
    """
    out = rho.copy()
    c = dt / h
    for axis, vel in enumerate((u0, u1, u2)):
        inner = [slice(None)] * 3
        inner[axis] = slice(1, -1)
        vin = vel[tuple(inner)]
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        up = np.where(vin > 0.0, rho[tuple(lo)], rho[tuple(hi)])
        flux = vin * up
        out[tuple(lo)] -= c * flux
        out[tuple(hi)] += c * flux
    return out


def advect_momentum(axis, u0, u1, u2, m, h):
    """Upwind flux divergence of the ``axis``-component momentum ``m``.

    ``m`` is the face-centered momentum (rho_face * u_axis); the advecting
    velocity is interpolated to cell centers (along ``axis``) and to edges
    (transverse), both as two-point averages.  Returns the face array
    ``div(u m)`` with zeros on the outermost faces.
    """
    vels = (u0, u1, u2)
    ua = vels[axis]
    adv = np.zeros(m.shape)
    # along-axis fluxes at cell centers
    lo = [slice(None)] * 3
    hi = [slice(None)] * 3
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    uc = 0.5 * (ua[tuple(lo)] + ua[tuple(hi)])
    mup = np.where(uc > 0.0, m[tuple(lo)], m[tuple(hi)])
    F = uc * mup
    interior = [slice(None)] * 3
    interior[axis] = slice(1, -1)
    adv[tuple(interior)] += (F[tuple(hi)] - F[tuple(lo)]) / h
    # transverse fluxes at edges
    for b in range(3):
        if b == axis:
            continue
        ub = vels[b]
        in_b = [slice(None)] * 3
        in_b[b] = slice(1, -1)
        ve = 0.5 * (ub[tuple(lo)] + ub[tuple(hi)])[tuple(in_b)]
        lo_b = [slice(None)] * 3
        hi_b = [slice(None)] * 3
        lo_b[b] = slice(None, -1)
        hi_b[b] = slice(1, None)
        ma = m[tuple(interior)]
        mup = np.where(ve > 0.0, ma[tuple(lo_b)], ma[tuple(hi_b)])
        Fe = ve * mup
        pad_shape = list(ma.shape)
        pad_shape[b] += 1
        Fp = np.zeros(pad_shape)
        in_pad = [slice(None)] * 3
        in_pad[b] = slice(1, -1)
        Fp[tuple(in_pad)] = Fe
        adv[tuple(interior)] += (Fp[tuple(hi_b)] - Fp[tuple(lo_b)]) / h
    return adv
