"""Closed-form and quadrature oracles, independent of the package solvers."""

import numpy as np
import sympy as sym


def shell_stream_coeffs(a, b):
    """Stream-function coefficients for a sphere translating inside a shell.

    The axisymmetric Stokes stream function is psi = sin(th)^2 * f(r) with
    f(r) = A/r + B*r + C*r**2 + D*r**4; the inner sphere (radius a) moves
    with unit speed, the outer sphere (radius b) is at rest.
    """
    M = np.array([
        [1 / a, a, a ** 2, a ** 4],
        [-1 / a ** 2, 1.0, 2 * a, 4 * a ** 3],
        [1 / b, b, b ** 2, b ** 4],
        [-1 / b ** 2, 1.0, 2 * b, 4 * b ** 3],
    ])
    rhs = np.array([a ** 2 / 2.0, a, 0.0, 0.0])
    return np.linalg.solve(M, rhs)


def shell_capacity(a, b, n_quad=120):
    """Gradient energy of the shell solution by symbolic differentiation
    and Gauss-Legendre quadrature.

    The velocity is the curl of the vector potential (-y*g, x*g, 0) with
    g(r) = f(r)/r**2, which sympy differentiates exactly; the energy
    integrand is axisymmetric, so a 2d (r, theta) quadrature suffices.
    """
    A, B, C, D = shell_stream_coeffs(a, b)
    x, y, z = sym.symbols("x y z", real=True)
    r = sym.sqrt(x * x + y * y + z * z)
    f = A / r + B * r + C * r ** 2 + D * r ** 4
    g = f / r ** 2
    ax, ay = -y * g, x * g
    v = (-sym.diff(ay, z), sym.diff(ax, z),
         sym.diff(ay, x) - sym.diff(ax, y))
    integrand = sum(sym.diff(vc, c) ** 2 for vc in v for c in (x, y, z))
    fn = sym.lambdify((x, y, z), integrand, "numpy")
    # evaluate in the phi = 0 half-plane and weight by 2*pi*r^2*sin(theta)
    rn, rw = np.polynomial.legendre.leggauss(n_quad)
    tn, tw = np.polynomial.legendre.leggauss(n_quad)
    rr = 0.5 * (b - a) * (rn + 1.0) + a
    tt = 0.5 * np.pi * (tn + 1.0)
    R, T = np.meshgrid(rr, tt, indexing="ij")
    W = np.outer(0.5 * (b - a) * rw, 0.5 * np.pi * tw)
    vals = fn(R * np.sin(T), 0.0 * R, R * np.cos(T))
    return float(np.sum(vals * 2.0 * np.pi * R ** 2 * np.sin(T) * W))


def shell_drag(a, b):
    """True drag on the translating inner sphere, via the wall-correction
    factor of the concentric-sphere geometry (mu = U = 1).
    """
    k = a / b
    K = (1 - k ** 5) / (1 - 9 * k / 4 + 5 * k ** 3 / 2
                        - 9 * k ** 5 / 4 + k ** 6)
    return 6.0 * np.pi * a * K
