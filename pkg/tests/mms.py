"""Manufactured solutions built symbolically (independent of the solvers).

The velocity is the curl of (0, 0, sin(pi x)^2 sin(pi y)^2 sin(pi z)^2),
hence exactly divergence free with full no-slip on the unit cube; the
forcing follows by symbolic differentiation of the momentum equation.
"""

import functools

import numpy as np
import sympy as sym

X, Y, Z = sym.symbols("x y z", real=True)
_A3 = (sym.sin(sym.pi * X) ** 2 * sym.sin(sym.pi * Y) ** 2
       * sym.sin(sym.pi * Z) ** 2)
_U = (sym.diff(_A3, Y), -sym.diff(_A3, X), sym.Integer(0))
_P = sym.cos(sym.pi * X) * sym.cos(sym.pi * Y) * sym.cos(sym.pi * Z)


def _lamb(expr):
    return sym.lambdify((X, Y, Z), expr, "numpy")


@functools.lru_cache(maxsize=None)
def velocity_exprs():
    return _U


@functools.lru_cache(maxsize=None)
def velocity_fn():
    fns = [_lamb(u) for u in _U]
    return lambda x, y, z: tuple(np.broadcast_to(f(x, y, z), x.shape)
                                 for f in fns)


@functools.lru_cache(maxsize=None)
def pressure_fn():
    return _lamb(_P)


@functools.lru_cache(maxsize=None)
def forcing_fn(mu=1.0, friction=None):
    """Forcing of ``-mu lap u + mu D u + grad p`` for the manufactured pair."""
    D = ((0,) * 3,) * 3 if friction is None else friction
    comps = []
    for i, (ui, c) in enumerate(zip(_U, (X, Y, Z))):
        lap = sum(sym.diff(ui, v, 2) for v in (X, Y, Z))
        fric = sum(D[i][j] * _U[j] for j in range(3))
        comps.append(-mu * lap + mu * fric + sym.diff(_P, c))
    fns = [_lamb(c) for c in comps]
    return lambda x, y, z: tuple(np.broadcast_to(f(x, y, z), x.shape)
                                 for f in fns)


@functools.lru_cache(maxsize=None)
def gradient_energy_exact():
    """Exact ``int |grad u|^2`` over the unit cube, symbolically."""
    total = sym.Integer(0)
    for ui in _U:
        for c in (X, Y, Z):
            total += sym.diff(ui, c) ** 2
    val = sym.integrate(sym.integrate(sym.integrate(
        sym.expand_trig(sym.expand(total)), (X, 0, 1)), (Y, 0, 1)), (Z, 0, 1))
    return float(val)
