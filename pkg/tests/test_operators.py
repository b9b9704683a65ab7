import numpy as np
import pytest
import scipy.sparse as sp

from brinkflow.fields import VelocityField
from brinkflow.geometry import DomainSpec, HoleShape, enumerate_holes, \
    hole_free_mask, rasterize
from brinkflow.operators import (
    CellIndex,
    FaceIndex,
    component_laplacian,
    dirichlet_rhs,
    divergence,
    divergence_known,
    energy_bilinear,
    face_average,
    momentum_matrix,
    pressure_poisson,
)

import mms

UNIT = DomainSpec()


@pytest.fixture(scope="module")
def free16():
    mask = hole_free_mask(UNIT, 16)
    return mask, FaceIndex(mask), CellIndex(mask)


@pytest.fixture(scope="module")
def holey():
    lat = enumerate_holes(UNIT, 0.5, 3.0, HoleShape.ball(0.6))
    mask = rasterize(lat, 32)
    return mask, FaceIndex(mask), CellIndex(mask)


class TestDivergence:
    def test_exact_on_linear_fields(self, free16):
        mask, fidx, cidx = free16
        Dv, dk = divergence(mask, fidx, cidx)
        u = VelocityField.from_callable(
            mask, lambda x, y, z: (x, 0 * y, 0 * z), restrict=False)
        d = Dv @ fidx.pack(u.components) + divergence_known(
            mask, fidx, cidx, u.components)
        assert np.allclose(d, 1.0, atol=1e-12)
        u = VelocityField.from_callable(
            mask, lambda x, y, z: (x, y, -2 * z), restrict=False)
        d = Dv @ fidx.pack(u.components) + divergence_known(
            mask, fidx, cidx, u.components)
        assert np.allclose(d, 0.0, atol=1e-12)

    def test_gradient_is_negative_adjoint(self, holey):
        # interior gradient of a linear pressure recovers its slope
        mask, fidx, cidx = holey
        Dv, _ = divergence(mask, fidx, cidx)
        xs = [mask.lo[a] + mask.h * (np.arange(mask.n[a]) + 0.5)
              for a in range(3)]
        Xc, Yc, Zc = np.meshgrid(*xs, indexing="ij")
        p = 2.0 * Xc + 3.0 * Yc - 1.0 * Zc
        g = fidx.unpack(-Dv.T @ cidx.pack(p))
        slope = (2.0, 3.0, -1.0)
        for a in range(3):
            ids = fidx.ids[a]
            # faces whose both neighbor cells are fluid see the exact slope
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[a] = slice(0, -1)
            hi[a] = slice(1, None)
            inner = np.zeros(ids.shape, dtype=bool)
            inner[tuple(hi)] = mask.cell_fluid
            both = np.zeros(ids.shape, dtype=bool)
            both[tuple(lo)] = inner[tuple(lo)] & mask.cell_fluid
            sel = both & (ids >= 0)
            assert np.allclose(g[a][sel], slope[a], atol=1e-10)

    def test_divergence_of_constant_vanishes_inside(self, holey):
        mask, fidx, cidx = holey
        Dv, _ = divergence(mask, fidx, cidx)
        u = [np.ones(mask.face_shape(a)) for a in range(3)]
        d = Dv @ fidx.pack(u) + divergence_known(mask, fidx, cidx, u)
        assert np.allclose(d, 0.0, atol=1e-12)


class TestLaplacian:
    def test_spd(self, holey):
        mask, fidx, _ = holey
        for a in range(3):
            L, _ = component_laplacian(mask, fidx, a)
            assert (L != L.T).nnz == 0
            rng = np.random.default_rng(a)
            for _ in range(3):
                v = rng.normal(size=L.shape[0])
                assert v @ (L @ v) > 0

    def test_dirichlet_rhs_matches_assembly(self, holey):
        mask, fidx, _ = holey
        rng = np.random.default_rng(5)
        bc = [rng.normal(size=mask.face_shape(a)) for a in range(3)]
        for a in range(3):
            bc[a][fidx.ids[a] >= 0] = 0.0
        _, r0 = momentum_matrix(mask, fidx, 2.5, bc_values=bc)
        r1 = dirichlet_rhs(mask, fidx, 2.5, bc)
        assert np.allclose(r0, r1, atol=1e-12)


class TestFaceAverage:
    def test_adjoint_pair(self, holey):
        mask, fidx, _ = holey
        for a in range(3):
            for b in range(3):
                if a == b:
                    continue
                S_ab, _ = face_average(mask, fidx, a, b)
                S_ba, _ = face_average(mask, fidx, b, a)
                assert (abs(S_ab - S_ba.T)).max() == 0.0

    def test_averages_constant(self, free16):
        mask, fidx, _ = free16
        u = [np.ones(mask.face_shape(a)) for a in range(3)]
        S, r = face_average(mask, fidx, 0, 1, u)
        vals = S @ fidx.pack(u)[fidx.offsets[1]:fidx.offsets[2]] + r
        assert np.allclose(vals, 1.0, atol=1e-12)


class TestMomentumMatrix:
    def test_symmetric_with_friction(self, free16):
        mask, fidx, _ = free16
        D = [[3.0, 0.4, 0.1], [0.4, 2.0, -0.2], [0.1, -0.2, 5.0]]
        A, _ = momentum_matrix(mask, fidx, 1.7, friction=D)
        assert abs(A - A.T).max() < 1e-13

    def test_friction_shifts_spectrum(self, free16):
        mask, fidx, _ = free16
        A0, _ = momentum_matrix(mask, fidx, 1.0)
        A1, _ = momentum_matrix(mask, fidx, 1.0,
                                friction=[[4.0, 0, 0], [0, 4.0, 0],
                                          [0, 0, 4.0]])
        d = A1 - A0
        assert abs(d - 4.0 * sp.identity(A0.shape[0])).max() < 1e-13


class TestPressurePoisson:
    def test_constant_nullspace(self, holey):
        mask, fidx, cidx = holey
        Ap, _ = pressure_poisson(mask, fidx, cidx, np.ones(fidx.total))
        ones = np.ones(cidx.count)
        assert np.linalg.norm(Ap @ ones) < 1e-10
        assert abs(Ap - Ap.T).max() < 1e-13
        rng = np.random.default_rng(1)
        v = rng.normal(size=cidx.count)
        assert v @ (Ap @ v) >= -1e-12


class TestEnergyBilinear:
    def test_matches_symbolic_integral(self):
        # [DERIVED] exact gradient energy of the manufactured velocity,
        # computed by symbolic integration
        exact = mms.gradient_energy_exact()
        errs = []
        for N in (16, 32):
            mask = hole_free_mask(UNIT, N)
            fidx = FaceIndex(mask)
            u = VelocityField.from_callable(mask, mms.velocity_fn())
            e = energy_bilinear(mask, fidx, u.components, u.components)
            errs.append(abs(e - exact) / exact)
        assert errs[0] < 0.05
        assert errs[1] < errs[0] / 2  # at least first order in the energy

    def test_agrees_with_quadratic_form(self, holey):
        # with zero boundary data the bilinear form is u^T (-Lap) u
        mask, fidx, _ = holey
        rng = np.random.default_rng(9)
        comps = []
        for a in range(3):
            arr = np.zeros(mask.face_shape(a))
            sel = fidx.ids[a] >= 0
            arr[sel] = rng.normal(size=sel.sum())
            comps.append(arr)
        x = fidx.pack(comps)
        quad = 0.0
        for a in range(3):
            L, _ = component_laplacian(mask, fidx, a)
            xa = x[fidx.offsets[a]:fidx.offsets[a] + fidx.counts[a]]
            quad += xa @ (L @ xa)
        quad *= mask.cell_volume
        e = energy_bilinear(mask, fidx, comps, comps)
        assert e == pytest.approx(quad, rel=1e-12)
