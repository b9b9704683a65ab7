"""Sparse operators on masked MAC grids.

Velocity unknowns are interior fluid faces; solid and domain-boundary faces
carry fixed Dirichlet values that are folded into right-hand sides.  The
divergence/gradient pair is discretely adjoint (gradient = -divergence^T),
so assembled saddle-point systems are symmetric.

Boundary treatment: velocity values on solid and boundary faces are imposed
at the face location (first order at staircase solids, exact on walls for
the normal component); tangential components at domain walls use a mirrored
ghost value, which keeps smooth hole-free problems second order.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .geometry import FACE_FLUID, GridMask


class FaceIndex:
    """Global numbering of unknown (fluid) faces, stacked u, v, w."""

    def __init__(self, mask: GridMask):
        self.mask = mask
        self.ids = []
        self.counts = []
        self.offsets = []
        off = 0
        for axis in range(3):
            fc = mask.face_class[axis]
            ids = np.full(fc.shape, -1, dtype=np.int64)
            unknown = fc == FACE_FLUID
            n = int(np.count_nonzero(unknown))
            ids[unknown] = np.arange(n)
            self.ids.append(ids)
            self.counts.append(n)
            self.offsets.append(off)
            off += n
        self.total = off

    def pack(self, faces):
        """Stack the unknown entries of three face arrays into one vector."""
        return np.concatenate([faces[a][self.ids[a] >= 0] for a in range(3)])

    def unpack(self, vec, fill=None):
        """Scatter a stacked vector back to face arrays.

        Non-unknown faces are taken from ``fill`` (face arrays) or zero.
        """
        out = []
        for a in range(3):
            arr = (np.array(fill[a], dtype=float) if fill is not None
                   else np.zeros(self.ids[a].shape))
            sel = self.ids[a] >= 0
            arr[sel] = vec[self.offsets[a] + self.ids[a][sel]]
            out.append(arr)
        return out


class CellIndex:
    """Global numbering of fluid cells (pressure unknowns)."""

    def __init__(self, mask: GridMask):
        self.mask = mask
        self.ids = np.full(mask.n, -1, dtype=np.int64)
        self.count = int(np.count_nonzero(mask.cell_fluid))
        self.ids[mask.cell_fluid] = np.arange(self.count)

    def pack(self, cells):
        return np.asarray(cells)[self.mask.cell_fluid]

    def unpack(self, vec, fill=0.0):
        arr = np.full(self.mask.n, fill, dtype=float)
        arr[self.mask.cell_fluid] = vec
        return arr


def _shift_ids(ids, axis, step):
    """Neighbor ids along ``axis``; -2 marks out-of-array positions."""
    out = np.full(ids.shape, -2, dtype=np.int64)
    src = [slice(None)] * 3
    dst = [slice(None)] * 3
    if step > 0:
        src[axis] = slice(1, None)
        dst[axis] = slice(0, -1)
    else:
        src[axis] = slice(0, -1)
        dst[axis] = slice(1, None)
    out[tuple(dst)] = ids[tuple(src)]
    return out


def _shift_vals(vals, axis, step):
    out = np.zeros(vals.shape)
    src = [slice(None)] * 3
    dst = [slice(None)] * 3
    if step > 0:
        src[axis] = slice(1, None)
        dst[axis] = slice(0, -1)
    else:
        src[axis] = slice(0, -1)
        dst[axis] = slice(1, None)
    out[tuple(dst)] = vals[tuple(src)]
    return out


def component_laplacian(mask: GridMask, fidx: FaceIndex, axis: int,
                        bc_values=None):
    """Negative Laplacian (SPD, 1/h^2 scaled) for one velocity component.

    Returns ``(L, rhs)`` where ``rhs`` collects Dirichlet contributions of
    solid/boundary neighbor faces (``bc_values``, face-shaped array; zero
    when omitted).
    """
    h2 = mask.h ** 2
    ids = fidx.ids[axis]
    unknown = ids >= 0
    n = fidx.counts[axis]
    rows_i = ids[unknown]
    diag = np.zeros(n)
    rhs = np.zeros(n)
    rows, cols, vals = [], [], []
    if bc_values is None:
        bc = np.zeros(ids.shape)
    else:
        bc = np.asarray(bc_values, dtype=float)
    for b in range(3):
        for step in (1, -1):
            nb_ids = _shift_ids(ids, b, step)[unknown]
            nb_bc = _shift_vals(bc, b, step)[unknown]
            interior = nb_ids >= 0
            known = nb_ids == -1
            outside = nb_ids == -2  # tangential ghost across a wall
            # interior unknown neighbor
            rows.append(rows_i[interior])
            cols.append(nb_ids[interior])
            vals.append(np.full(interior.sum(), -1.0 / h2))
            diag[rows_i[interior]] += 1.0 / h2
            # known Dirichlet neighbor at the face location
            diag[rows_i[known]] += 1.0 / h2
            np.add.at(rhs, rows_i[known], nb_bc[known] / h2)
            # mirrored ghost across a no-slip wall (wall value 0)
            diag[rows_i[outside]] += 2.0 / h2
    rows.append(rows_i)
    cols.append(rows_i)
    vals.append(diag[rows_i])
    L = sp.csr_matrix(
        (np.concatenate(vals),
         (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n))
    return L, rhs


def divergence(mask: GridMask, fidx: FaceIndex, cidx: CellIndex,
               bc_values=None):
    """Divergence matrix over fluid cells and its known-face contribution.

    ``div u = Dv @ u_unknown + d_known``; gradient is ``-Dv.T``.
    """
    h = mask.h
    fluid = mask.cell_fluid
    rows_c = cidx.ids[fluid]
    rows, cols, vals = [], [], []
    d_known = np.zeros(cidx.count)
    for axis in range(3):
        ids = fidx.ids[axis]
        if bc_values is None:
            bc = np.zeros(ids.shape)
        else:
            bc = np.asarray(bc_values[axis], dtype=float)
        for side, sign in ((0, -1.0), (1, 1.0)):
            sl = [slice(None)] * 3
            sl[axis] = slice(1, None) if side else slice(0, -1)
            face_ids = ids[tuple(sl)][fluid]
            face_bc = bc[tuple(sl)][fluid]
            unknown = face_ids >= 0
            rows.append(rows_c[unknown])
            cols.append(face_ids[unknown] + fidx.offsets[axis])
            vals.append(np.full(unknown.sum(), sign / h))
            kn = ~unknown
            np.add.at(d_known, rows_c[kn], sign * face_bc[kn] / h)
    Dv = sp.csr_matrix(
        (np.concatenate(vals),
         (np.concatenate(rows), np.concatenate(cols))),
        shape=(cidx.count, fidx.total))
    return Dv, d_known


def face_average(mask: GridMask, fidx: FaceIndex, axis_to: int,
                 axis_from: int, bc_values=None):
    """Four-point average of component ``axis_from`` at ``axis_to`` faces.

    Returns ``(S, rhs)`` over unknown faces; known source faces contribute
    through ``rhs``.  ``face_average(..., a, b).T`` is the adjoint of
    ``face_average(..., b, a)`` on the unknown-unknown block.
    """
    a, b = axis_to, axis_from
    ids_a = fidx.ids[a]
    ids_b = fidx.ids[b]
    if bc_values is None:
        bc = np.zeros(ids_b.shape)
    else:
        bc = np.asarray(bc_values[b], dtype=float)
    unknown = ids_a >= 0
    idx = np.argwhere(unknown)
    rows_a = ids_a[unknown]
    n_a = fidx.counts[a]
    rows, cols, vals = [], [], []
    rhs = np.zeros(n_a)
    for da in (-1, 0):
        for db in (0, 1):
            nb = idx.copy()
            nb[:, b] += db
            nb[:, a] += da
            bid = ids_b[nb[:, 0], nb[:, 1], nb[:, 2]]
            bval = bc[nb[:, 0], nb[:, 1], nb[:, 2]]
            un = bid >= 0
            rows.append(rows_a[un])
            cols.append(bid[un])
            vals.append(np.full(un.sum(), 0.25))
            np.add.at(rhs, rows_a[~un], 0.25 * bval[~un])
    S = sp.csr_matrix(
        (np.concatenate(vals),
         (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_a, fidx.counts[b]))
    return S, rhs


def momentum_matrix(mask: GridMask, fidx: FaceIndex, mu: float,
                    bc_values=None, friction=None, mass_diag=None):
    """Velocity block ``mu*(-Lap) + mu*D + mass`` and its Dirichlet rhs.

    ``friction`` is the symmetric 3x3 Brinkman matrix (or None); its
    off-diagonal entries couple components through adjoint face averages.
    ``mass_diag`` adds a per-face diagonal (stacked vector), e.g.
    ``rho_face / dt`` for implicit time steps.
    """
    blocks = [[None] * 3 for _ in range(3)]
    rhs = np.zeros(fidx.total)
    for a in range(3):
        bc_a = None if bc_values is None else bc_values[a]
        L, r = component_laplacian(mask, fidx, a, bc_a)
        A = mu * L
        r = mu * r
        if friction is not None and friction[a][a] != 0.0:
            A = A + sp.identity(fidx.counts[a], format="csr") * (
                mu * friction[a][a])
        blocks[a][a] = A
        rhs[fidx.offsets[a]:fidx.offsets[a] + fidx.counts[a]] += r
    if friction is not None:
        for a in range(3):
            for b in range(a + 1, 3):
                dab = friction[a][b]
                if dab == 0.0:
                    continue
                S, r_s = face_average(mask, fidx, a, b, bc_values)
                blocks[a][b] = mu * dab * S
                blocks[b][a] = mu * dab * S.T
                rhs[fidx.offsets[a]:fidx.offsets[a] + fidx.counts[a]] -= (
                    mu * dab * r_s)
                # adjoint block has no known-face contribution by symmetry
    A = sp.bmat(blocks, format="csr")
    if mass_diag is not None:
        A = A + sp.diags(mass_diag, format="csr")
    return A, rhs


def pressure_poisson(mask: GridMask, fidx: FaceIndex, cidx: CellIndex,
                     w_face):
    """SPD (semi-definite) operator ``Dv diag(w) Dv^T`` for projections.

    ``w_face`` is the stacked face weight (e.g. 1/rho at faces); Neumann
    walls and solids are implied by restricting to unknown faces.
    """
    Dv, _ = divergence(mask, fidx, cidx)
    W = sp.diags(w_face)
    return (Dv @ W @ Dv.T).tocsr(), Dv


def dirichlet_rhs(mask: GridMask, fidx: FaceIndex, mu: float, bc_values):
    """Momentum rhs from Dirichlet faces, without assembling matrices."""
    h2 = mask.h ** 2
    out = np.zeros(fidx.total)
    for a in range(3):
        ids = fidx.ids[a]
        unknown = ids >= 0
        rows_i = ids[unknown]
        bc = np.asarray(bc_values[a], dtype=float)
        rhs = np.zeros(fidx.counts[a])
        for b in range(3):
            for step in (1, -1):
                nb_ids = _shift_ids(ids, b, step)[unknown]
                nb_bc = _shift_vals(bc, b, step)[unknown]
                known = nb_ids == -1
                np.add.at(rhs, rows_i[known], nb_bc[known] / h2)
        out[fidx.offsets[a]:fidx.offsets[a] + fidx.counts[a]] = mu * rhs
    return out


def divergence_known(mask: GridMask, fidx: FaceIndex, cidx: CellIndex,
                     bc_values):
    """Known-face contribution to the discrete divergence."""
    h = mask.h
    fluid = mask.cell_fluid
    rows_c = cidx.ids[fluid]
    d_known = np.zeros(cidx.count)
    for axis in range(3):
        ids = fidx.ids[axis]
        bc = np.asarray(bc_values[axis], dtype=float)
        for side, sign in ((0, -1.0), (1, 1.0)):
            sl = [slice(None)] * 3
            sl[axis] = slice(1, None) if side else slice(0, -1)
            face_ids = ids[tuple(sl)][fluid]
            face_bc = bc[tuple(sl)][fluid]
            kn = face_ids < 0
            np.add.at(d_known, rows_c[kn], sign * face_bc[kn] / h)
    return d_known


def energy_bilinear(mask: GridMask, fidx: FaceIndex, faces1, faces2):
    """Discrete ``int grad u : grad w`` as the Laplacian's bilinear form.

    ``faces1``/``faces2`` are full face arrays with Dirichlet values filled
    on solid/boundary faces.  Links with at least one unknown endpoint
    contribute ``du*dw/h^2``; tangential wall ghosts contribute
    ``2*u*w/h^2`` (no-slip walls), matching ``component_laplacian``.
    """
    h2 = mask.h ** 2
    total = 0.0
    for a in range(3):
        unknown = fidx.ids[a] >= 0
        U = np.asarray(faces1[a], dtype=float)
        W = np.asarray(faces2[a], dtype=float)
        for b in range(3):
            sl_lo = [slice(None)] * 3
            sl_hi = [slice(None)] * 3
            sl_lo[b] = slice(0, -1)
            sl_hi[b] = slice(1, None)
            active = unknown[tuple(sl_lo)] | unknown[tuple(sl_hi)]
            du = (U[tuple(sl_hi)] - U[tuple(sl_lo)])[active]
            dw = (W[tuple(sl_hi)] - W[tuple(sl_lo)])[active]
            total += float(du @ dw) / h2
            if b != a:
                first = [slice(None)] * 3
                last = [slice(None)] * 3
                first[b] = 0
                last[b] = -1
                for edge in (first, last):
                    sel = unknown[tuple(edge)]
                    total += 2.0 * float(
                        U[tuple(edge)][sel] @ W[tuple(edge)][sel]) / h2
    return total * mask.h ** 3
