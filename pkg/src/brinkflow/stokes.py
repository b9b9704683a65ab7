"""Steady Stokes and Brinkman solves on masked MAC grids.

One solver core serves the perforated-domain problem, the friction-term
limit problem and the capacity cell problems: the velocity block is
``mu*(-Lap) (+ mu*D)`` and the saddle system is closed by the adjoint
divergence/gradient pair.  The saddle system is solved with MINRES under a
block-diagonal preconditioner (algebraic multigrid per velocity component,
scaled identity for pressure); residuals are re-checked explicitly against
the momentum and divergence definitions before a solve is accepted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._amg import smoothed_aggregation
from .errors import NonConvergence
from .fields import ForcingField, PressureField, VelocityField
from .geometry import DomainSpec, FACE_FLUID, FACE_SOLID, GridMask, hole_free_mask
from .operators import (
    CellIndex,
    FaceIndex,
    dirichlet_rhs,
    divergence,
    divergence_known,
    energy_bilinear,
    momentum_matrix,
)


@dataclass
class SolveInfo:
    iterations: int
    momentum_residual: float
    divergence_residual: float
    tol: float


class SteadyStokesSolver:
    """Reusable saddle-point solver for one mask and friction matrix.

    Matrix assembly and the multigrid hierarchies depend only on the mask
    and friction, so repeated solves (e.g. the three cell-problem
    directions) share the expensive setup.
    """

    def __init__(self, mask: GridMask, mu: float, friction=None):
        self.mask = mask
        self.mu = float(mu)
        self.friction = None if friction is None else np.asarray(friction,
                                                                 dtype=float)
        self.fidx = FaceIndex(mask)
        self.cidx = CellIndex(mask)
        fr = None if self.friction is None else self.friction.tolist()
        self.A, _ = momentum_matrix(mask, self.fidx, self.mu, None, fr)
        self.Dv, _ = divergence(mask, self.fidx, self.cidx)
        # the saddle operator stays matrix-free: an assembled bmat would
        # duplicate A and both divergence blocks, which at 160^3+ grids is
        # the difference between fitting in memory and swapping
        n = self.fidx.total + self.cidx.count
        self.K = spla.LinearOperator((n, n), matvec=self._apply_saddle)
        self._amg = []
        for a in range(3):
            i0 = self.fidx.offsets[a]
            i1 = i0 + self.fidx.counts[a]
            blk = self.A[i0:i1, i0:i1].tocsr()
            ml = smoothed_aggregation(blk, max_coarse=200)
            self._amg.append(ml.aspreconditioner(cycle="V"))

    def _apply_saddle(self, x):
        nu = self.fidx.total
        u = x[:nu]
        p = x[nu:]
        out = np.empty_like(x)
        out[:nu] = self.A @ u - self.Dv.T @ p
        out[nu:] = -(self.Dv @ u)
        return out

    def _precondition(self, r):
        nu = self.fidx.total
        out = np.empty_like(r)
        for a in range(3):
            i0 = self.fidx.offsets[a]
            i1 = i0 + self.fidx.counts[a]
            out[i0:i1] = self._amg[a] @ r[i0:i1]
        out[nu:] = self.mu * r[nu:]
        return out

    def solve(self, f_faces=None, bc_values=None, tol=1e-8, x0=None,
              maxiter=2000):
        """Solve ``mu*(-Lap)u (+ mu*D u) + grad p = f, div u = 0``.

        ``bc_values`` are face arrays with Dirichlet velocity on solid and
        boundary faces (zero when omitted).  Residuals are relative to the
        joint right-hand-side magnitude, with an absolute fallback for the
        homogeneous problem.  Returns ``(u, p, SolveInfo)``.
        """
        nu = self.fidx.total
        b_u = np.zeros(nu)
        if f_faces is not None:
            b_u += self.fidx.pack(f_faces.components
                                  if hasattr(f_faces, "components")
                                  else f_faces)
        if bc_values is not None:
            b_u += dirichlet_rhs(self.mask, self.fidx, self.mu, bc_values)
            d_known = divergence_known(self.mask, self.fidx, self.cidx,
                                       bc_values)
        else:
            d_known = np.zeros(self.cidx.count)
        rhs = np.concatenate([b_u, d_known])
        rhs[nu:] -= np.mean(rhs[nu:])  # compatibility with the gauge
        scale = float(np.linalg.norm(rhs))
        if scale == 0.0:
            zero_u = self.fidx.unpack(np.zeros(nu))
            return (VelocityField(self.mask, zero_u),
                    PressureField(self.mask, np.zeros(self.mask.n)),
                    SolveInfo(0, 0.0, 0.0, tol))
        M = spla.LinearOperator(self.K.shape, matvec=self._precondition)
        x = np.zeros(self.K.shape[0]) if x0 is None else x0.copy()
        iters = 0
        chunk = 400
        inner_rtol = tol * 1e-2
        res_m = res_d = prev = np.inf
        while iters < maxiter:
            counter = _IterCounter()
            x, _ = spla.minres(self.K, rhs, x0=x, M=M, rtol=inner_rtol,
                               maxiter=min(chunk, maxiter - iters),
                               callback=counter, show=False)
            iters += counter.n
            u = x[:nu]
            p = x[nu:]
            p = p - np.mean(p)
            res_m = float(np.linalg.norm(
                self.A @ u - self.Dv.T @ p - b_u)) / scale
            res_d = float(np.linalg.norm(self.Dv @ u + d_known)) / scale
            if res_m <= tol and res_d <= tol:
                break
            worst = max(res_m, res_d)
            if counter.n == 0 or worst > 0.5 * prev:
                inner_rtol *= 1e-2  # krylov met its own criterion; tighten
            if counter.n == 0 and worst > 0.5 * prev and prev < np.inf:
                break  # genuinely stagnated
            prev = worst
        if res_m > tol or res_d > tol:
            raise NonConvergence(iters, max(res_m, res_d))
        fill = bc_values if bc_values is not None else None
        comps = self.fidx.unpack(x[:nu], fill=fill)
        pf = PressureField(self.mask, self.cidx.unpack(p)).demean()
        return (VelocityField(self.mask, comps), pf,
                SolveInfo(iters, res_m, res_d, tol))

    def gradient_energy(self, u1: VelocityField, u2: VelocityField = None):
        if u2 is None:
            u2 = u1
        return energy_bilinear(self.mask, self.fidx, u1.components,
                               u2.components)


class _IterCounter:
    def __init__(self):
        self.n = 0

    def __call__(self, _xk):
        self.n += 1


def solve_stokes_perforated(mask: GridMask, f: ForcingField, mu: float,
                            tol: float = 1e-8, solver=None, maxiter=2000):
    """Steady Stokes flow in the perforated box with no-slip everywhere."""
    if mu <= 0:
        raise ValueError("viscosity must be positive")
    if mask.n_fluid_cells == 0:
        raise ValueError("mask has no fluid cells")
    if solver is None:
        solver = SteadyStokesSolver(mask, mu)
    return solver.solve(f_faces=f, tol=tol, maxiter=maxiter)


def solve_brinkman_steady(domain: DomainSpec, resolution: int,
                          f: ForcingField, mu: float, friction,
                          tol: float = 1e-8, solver=None, maxiter=2000):
    """Steady limit problem with friction term ``mu*D u`` on a hole-free box."""
    if mu <= 0:
        raise ValueError("viscosity must be positive")
    D = np.zeros((3, 3)) if friction is None else np.asarray(friction,
                                                             dtype=float)
    if not np.allclose(D, D.T):
        raise ValueError("friction matrix must be symmetric")
    if np.any(np.linalg.eigvalsh(D) < -1e-12):
        raise ValueError("friction matrix must be positive semi-definite")
    if solver is None:
        mask = hole_free_mask(domain, resolution)
        solver = SteadyStokesSolver(mask, mu, friction=D)
    return solver.solve(f_faces=f, tol=tol, maxiter=maxiter)


def solid_drag(mask: GridMask, u: VelocityField, p: PressureField,
               mu: float, solid_cells=None):
    """Force exerted by the fluid on a solid region, per component.

    Momentum-balance flavored extraction with the pseudo-traction
    ``mu * du/dn - p n``: viscous shear through the links into faces of
    the region plus pressure on its staircase surface.  ``solid_cells``
    selects the region (default: every solid cell).
    """
    h = mask.h
    solid = ~mask.cell_fluid if solid_cells is None else solid_cells
    if np.any(solid & mask.cell_fluid):
        raise ValueError("solid_cells must select solid cells only")
    force = np.zeros(3)
    for a in range(3):
        fc = mask.face_class[a]
        U = u.components[a]
        fluid = fc == FACE_FLUID
        # faces belonging to the region: touching a region cell
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[a] = slice(None, -1)
        hi[a] = slice(1, None)
        region_face = np.zeros(fc.shape, dtype=bool)
        region_face[tuple(lo)] |= solid
        region_face[tuple(hi)] |= solid
        region_face &= fc != FACE_FLUID
        # viscous: links from fluid faces of component a into region faces
        for b in range(3):
            for step in (1, -1):
                edge = [slice(None)] * 3
                edge[b] = slice(None, -1) if step == 1 else slice(1, None)
                inner = [slice(None)] * 3
                inner[b] = slice(1, None) if step == 1 else slice(None, -1)
                sel = fluid[tuple(edge)] & region_face[tuple(inner)]
                du = (U[tuple(edge)][sel]
                      - U[tuple(inner)][sel])
                force[a] += mu * np.sum(du) * h
        # pressure on region cell faces with normal along a
        pv = p.values
        fluid_below = mask.cell_fluid[tuple(lo)] & solid[tuple(hi)]
        fluid_above = solid[tuple(lo)] & mask.cell_fluid[tuple(hi)]
        force[a] += np.sum(pv[tuple(lo)][fluid_below]) * h * h
        force[a] -= np.sum(pv[tuple(hi)][fluid_above]) * h * h
    return force
