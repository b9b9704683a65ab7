import numpy as np
import pytest

from brinkflow.capacity import (
    BrinkmanMatrix,
    brinkman_matrix,
    capacity_matrix,
    extrapolate_friction,
    solve_cell_problem,
    write_capacity_csv,
)
from brinkflow.errors import ExtrapolationUnstable, UnresolvedHole
from brinkflow.geometry import HoleShape

from oracles import shell_capacity, shell_drag


@pytest.fixture(scope="module")
def ball_half_32():
    sol = solve_cell_problem(HoleShape.ball(0.5), 32, 1e-8)
    return sol, capacity_matrix(sol)


class TestCellProblem:
    def test_preconditions(self):
        with pytest.raises(UnresolvedHole):
            solve_cell_problem(HoleShape.ball(0.5), 8, 1e-8, scale=0.2)
        with pytest.raises(ValueError):
            solve_cell_problem(HoleShape.ball(0.99), 32, 1e-8)
        with pytest.raises(ValueError):
            solve_cell_problem(HoleShape.ball(0.5), 32, -1.0)

    def test_residuals_reported(self, ball_half_32):
        sol, _ = ball_half_32
        for info in sol.residuals:
            assert info.momentum_residual <= 1e-8
            assert info.divergence_residual <= 1e-8


class TestCapacityMatrix:
    def test_against_shell_oracle(self, ball_half_32):
        # [DERIVED] concentric-sphere capacity via the stream-function
        # solution, quadrature-checked against the wall-corrected drag
        exact = shell_capacity(0.5, 1.0)
        assert exact == pytest.approx(shell_drag(0.5, 1.0), rel=1e-10)
        _, C = ball_half_32
        diag = np.diag(C.entries)
        assert np.all(np.abs(diag - exact) / exact < 0.06)

    def test_symmetric_diagonal_pd(self, ball_half_32):
        _, C = ball_half_32
        assert np.allclose(C.entries, C.entries.T, atol=1e-12)
        assert C.asymmetry < 1e-6
        diag = np.diag(C.entries)
        off = C.entries - np.diag(diag)
        assert np.max(np.abs(off)) < 1e-3 * np.min(diag)
        assert np.allclose(diag, diag[0], rtol=1e-10)  # cubic symmetry
        assert C.is_positive_definite

    def test_monotone_in_obstacle(self, ball_half_32):
        _, C_small = ball_half_32
        sol = solve_cell_problem(HoleShape.ball(0.6), 32, 1e-8)
        C_big = capacity_matrix(sol)
        assert np.all(np.diag(C_big.entries) > np.diag(C_small.entries))


class TestExtrapolation:
    def test_recovers_linear_law(self):
        radii = [0.3, 0.2, 0.1]
        base = 3.0 * np.pi * np.eye(3)
        caps = [r * (base + 2.0 * r * np.eye(3)) for r in radii]
        D, slope, n_fit = extrapolate_friction(radii, caps)
        assert np.allclose(D, base, atol=1e-10)
        assert np.allclose(slope, 2.0 * np.eye(3), atol=1e-9)
        assert n_fit == 3

    def test_unstable_extrapolation_raises(self):
        radii = [0.2, 0.1]
        caps = [0.2 * np.eye(3), 0.1 * 1.5 * np.eye(3)]
        with pytest.raises(ExtrapolationUnstable):
            extrapolate_friction(radii, caps)

    def test_brinkman_preconditions(self):
        with pytest.raises(ValueError):
            brinkman_matrix(HoleShape.ball(0.5), 0.5, 2.0, [0.2, 0.1], 32)
        with pytest.raises(ValueError):
            brinkman_matrix(HoleShape.ball(0.5), 0.5, 3.0, [0.1, 0.2], 32)
        with pytest.raises(ValueError):
            brinkman_matrix(HoleShape.ball(0.5), 0.5, 3.0, [0.2], 32)


class TestBrinkmanMatrix:
    def test_ball_friction_near_stokes_drag_law(self, monkeypatch):
        # [DERIVED] feeding the analytic shell capacities through the
        # extrapolation must recover the whole-space drag coefficient
        # 3*pi of the ball of rescaled radius 1/2 (the discretized
        # end-to-end version runs in the acceptance suite)
        import brinkflow.capacity as cap

        def fake_solve(shape, resolution, tol, scale=1.0, maxiter=4000):
            return scale

        def fake_capacity(scale):
            return cap.CapacityMatrix(
                shell_drag(scale / 2.0, 1.0) * np.eye(3), 0.0)

        monkeypatch.setattr(cap, "solve_cell_problem", fake_solve)
        monkeypatch.setattr(cap, "capacity_matrix", fake_capacity)
        D = cap.brinkman_matrix(HoleShape.ball(0.5), 0.5, 3.0,
                                [0.2, 0.1, 0.05], 64)
        target = 3.0 * np.pi
        diag = np.diag(D.entries)
        assert np.all(np.abs(diag - target) / target < 0.05)
        assert D.is_positive_definite
        assert D.provenance["fit_points"] == 3
        assert len(D.provenance["capacities"]) == 3
        assert D.provenance["radii"] == [0.2, 0.1, 0.05]

    def test_save_load_roundtrip(self, tmp_path):
        D = BrinkmanMatrix(3 * np.pi * np.eye(3),
                           {"radii": [0.2, 0.1], "resolution": 32})
        p = tmp_path / "d.json"
        D.save(p)
        D2 = BrinkmanMatrix.load(p)
        assert np.allclose(D2.entries, D.entries)
        assert D2.provenance == D.provenance


def test_capacity_csv(tmp_path):
    rows = [{"shape": "ball(0.5)", "r": 0.5, "resolution": 32,
             **{f"C{i}{j}": float(i == j) for i in (1, 2, 3)
                for j in (1, 2, 3)},
             "residual_1": 1e-9, "residual_2": 1e-9, "residual_3": 1e-9}]
    p = tmp_path / "cap.csv"
    write_capacity_csv(p, rows)
    text = p.read_text().splitlines()
    assert text[0].startswith("shape,r,resolution,C11")
    assert text[1].startswith("ball(0.5),0.5,32,1,0,0,")
