import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brinkflow.errors import UnresolvedHole
from brinkflow.geometry import (
    DomainSpec,
    GridMask,
    HoleLattice,
    HoleShape,
    enumerate_holes,
    hole_free_mask,
    load_lattice,
    load_mask,
    rasterize,
    save_lattice,
    save_mask,
    validate_lattice,
)

UNIT = DomainSpec()
BALL = HoleShape.ball(0.6)


def brute_force_count(domain, epsilon):
    # independent enumeration: scan a generous index range and test closed
    # containment of each epsilon-cell in the box
    lo = np.asarray(domain.lo)
    hi = np.asarray(domain.hi)
    side = float(np.max(hi - lo))
    kmax = int(np.ceil(side / epsilon)) + 2
    count = 0
    for i in range(-2, kmax):
        for j in range(-2, kmax):
            for k in range(-2, kmax):
                c0 = lo + epsilon * np.array([i, j, k], dtype=float)
                c1 = c0 + epsilon
                if np.all(c0 >= lo - 1e-12) and np.all(c1 <= hi + 1e-12):
                    count += 1
    return count


class TestEnumerateHoles:
    def test_eps_half_gives_eight_centered_holes(self):
        lat = enumerate_holes(UNIT, 0.5, 3.0, BALL)
        assert lat.n_holes == 8
        assert lat.hole_scale == pytest.approx(1.0 / 8.0)
        want = {(0.25, 0.25, 0.25), (0.25, 0.25, 0.75), (0.25, 0.75, 0.25),
                (0.75, 0.25, 0.25), (0.25, 0.75, 0.75), (0.75, 0.25, 0.75),
                (0.75, 0.75, 0.25), (0.75, 0.75, 0.75)}
        got = {tuple(np.round(c, 12)) for c in lat.centers}
        assert got == want

    def test_eps_one_single_central_hole(self):
        lat = enumerate_holes(UNIT, 1.0, 2.0, BALL)
        assert lat.n_holes == 1
        assert lat.centers[0] == pytest.approx([0.5, 0.5, 0.5])
        assert not lat.empty_warning

    def test_eps_quarter_count_and_sigma(self):
        # [DERIVED] oracle: brute-force enumeration over the index range
        lat = enumerate_holes(UNIT, 0.25, 3.0, BALL)
        assert lat.n_holes == brute_force_count(UNIT, 0.25) == 64
        assert lat.hole_scale == pytest.approx(1.0 / 64.0)
        assert lat.sigma == pytest.approx(1.0)

    def test_oversized_epsilon_empty_with_warning(self):
        lat = enumerate_holes(UNIT, 1.5, 3.0, BALL)
        assert lat.n_holes == 0
        assert lat.empty_warning

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            enumerate_holes(UNIT, -0.1, 3.0, BALL)
        with pytest.raises(ValueError):
            enumerate_holes(UNIT, 0.5, 0.5, BALL)

    @given(st.sampled_from([1.0, 0.5, 1.0 / 3.0, 0.25, 0.2, 0.3, 0.7]))
    @settings(deadline=None, max_examples=7)
    def test_count_matches_brute_force(self, eps):
        lat = enumerate_holes(UNIT, eps, 3.0, BALL)
        assert lat.n_holes == brute_force_count(UNIT, eps)
        side = max(UNIT.sides)
        assert lat.n_holes <= int(np.ceil(side / eps)) ** 3

    def test_hole_inclusions_by_sampling(self):
        lat = enumerate_holes(UNIT, 0.5, 3.0, BALL)
        a = lat.hole_scale
        dirs = np.random.default_rng(0).normal(size=(500, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        r = lat.shape.boundary_radius(dirs) * a
        for c in lat.centers:
            pts = c[None, :] + dirs * r[:, None]
            assert np.all(np.linalg.norm(pts - c, axis=1) >= a / 2 - 1e-12)
            assert np.all(np.linalg.norm(pts - c, axis=1) <= 3 * a / 4 + 1e-12)


class TestValidateLattice:
    def test_admissible_ball(self):
        lat = enumerate_holes(UNIT, 0.5, 3.0, HoleShape.ball(0.6))
        assert validate_lattice(lat) == []

    def test_ball_too_large(self):
        lat = enumerate_holes(UNIT, 0.5, 3.0, HoleShape.ball(0.9))
        msgs = validate_lattice(lat)
        assert any("outer inclusion" in m for m in msgs)

    def test_cube_half_width_half_violates_outer(self):
        # corner of the half-width-1/2 cube sits at distance sqrt(3)/2 > 3/4
        corner = 0.5 * np.sqrt(3.0)
        assert corner > 0.75
        lat = enumerate_holes(UNIT, 0.5, 3.0, HoleShape.cube(0.5))
        msgs = validate_lattice(lat)
        assert any("outer inclusion" in m for m in msgs)

    def test_ball_too_small(self):
        lat = enumerate_holes(UNIT, 0.5, 3.0, HoleShape.ball(0.4))
        msgs = validate_lattice(lat)
        assert any("inner inclusion" in m for m in msgs)


class TestRasterize:
    def test_no_holes_all_fluid(self):
        lat = enumerate_holes(UNIT, 2.0, 3.0, BALL)
        mask = rasterize(lat, 16)
        assert mask.n_fluid_cells == 16 ** 3

    def test_ball_volume_against_monte_carlo(self):
        # [DERIVED] oracle: Monte-Carlo volume of the ball of radius 0.25
        shape = HoleShape.ball(0.25)
        c = np.array([[0.5, 0.5, 0.5]])
        lat = HoleLattice(UNIT, 1.0, 1.0, shape, centers=c,
                          k_index=np.zeros((1, 3), dtype=int))
        mask = rasterize(lat, 32)
        rng = np.random.default_rng(7)
        pts = rng.random((200000, 3))
        mc_vol = np.mean(np.linalg.norm(pts - 0.5, axis=1) <= 0.25)
        counted = mask.n_solid_cells * mask.cell_volume
        assert counted == pytest.approx(mc_vol, rel=0.15)

    def test_unresolved_hole(self):
        lat = enumerate_holes(UNIT, 0.5, 3.0, HoleShape.ball(0.5))
        # hole radius = 1/16; resolution 64 -> h = 1/64, ok
        rasterize(lat, 64)
        # hole radius = 1/64 with h = 1/64 -> unresolved
        lat2 = enumerate_holes(UNIT, 0.5, 4.0, HoleShape.ball(0.25))
        with pytest.raises(UnresolvedHole):
            rasterize(lat2, 64)

    def test_deterministic(self):
        lat = enumerate_holes(UNIT, 0.5, 3.0, BALL)
        m1 = rasterize(lat, 32)
        m2 = rasterize(lat, 32)
        assert np.array_equal(m1.cell_fluid, m2.cell_fluid)
        for a, b in zip(m1.face_class, m2.face_class):
            assert np.array_equal(a, b)

    def test_volume_convergence(self):
        lat = enumerate_holes(UNIT, 1.0, 1.0, HoleShape.ball(0.55))
        exact = lat.shape.volume * lat.hole_scale ** 3
        mask = rasterize(lat, 64)  # >= 8 cells per radius
        counted = mask.n_solid_cells * mask.cell_volume
        assert abs(counted - exact) / exact < 0.05

    def test_face_classes(self):
        lat = enumerate_holes(UNIT, 1.0, 1.0, HoleShape.ball(0.6))
        mask = rasterize(lat, 16)
        from brinkflow.geometry import FACE_BOUNDARY, FACE_FLUID, FACE_SOLID
        fc = mask.face_class[0]
        assert np.all(fc[0, :, :] == FACE_BOUNDARY)
        assert np.all(fc[-1, :, :] == FACE_BOUNDARY)
        # every face adjacent to a solid cell is non-fluid
        solid = ~mask.cell_fluid
        assert not np.any((fc[1:-1] == FACE_FLUID)
                          & (solid[:-1] | solid[1:]))

    def test_min_resolution_enforced(self):
        lat = enumerate_holes(UNIT, 1.0, 1.0, BALL)
        with pytest.raises(ValueError):
            rasterize(lat, 4)


class TestSerialization:
    def test_lattice_roundtrip(self):
        lat = enumerate_holes(UNIT, 0.5, 3.0, BALL)
        buf = io.StringIO()
        save_lattice(lat, buf)
        buf.seek(0)
        lat2 = load_lattice(buf)
        assert lat2.epsilon == lat.epsilon
        assert lat2.alpha == lat.alpha
        assert lat2.shape == lat.shape
        assert np.allclose(lat2.centers, lat.centers)

    def test_mask_roundtrip(self):
        lat = enumerate_holes(UNIT, 0.5, 3.0, BALL)
        mask = rasterize(lat, 32)
        buf = io.StringIO()
        save_mask(mask, buf)
        buf.seek(0)
        mask2 = load_mask(buf)
        assert mask2.h == mask.h
        assert np.array_equal(mask2.cell_fluid, mask.cell_fluid)
        for a, b in zip(mask2.face_class, mask.face_class):
            assert np.array_equal(a, b)


def test_hole_free_mask_matches_rasterize_grid():
    lat = enumerate_holes(UNIT, 0.5, 3.0, BALL)
    m1 = rasterize(lat, 32)
    m2 = hole_free_mask(UNIT, 32)
    assert m1.h == m2.h and m1.n == m2.n
    assert m2.n_fluid_cells == 32 ** 3
