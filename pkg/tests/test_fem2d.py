"""Finite-element cross-checks on perturbed disks.

Fast tests use coarse meshes; the ``slow`` ones run the 48 x 192 acceptance resolution.
"""

import math

import numpy as np
import pytest

from models.ball import BallConfig, RadialSource
from models.errors import DomainError, RegimeError
from models.fem import PerturbedDisk, SignPattern
from services.ball_energy_service import energy_value, solve_radial
from services.eigen_disk_service import eigen_mode_form, lambda_m, m0_threshold, radial_candidate
from services.energy_stability_service import mode_form
from services.fem2d_service import (
    NONUNIFORM_CV_THRESHOLD,
    build_mesh,
    build_system,
    coefficient_of_variation,
    dump_mesh,
    eigen_derivatives,
    energy_derivatives,
    neumann_mu2_fem,
    solve_eigen,
    solve_energy,
    symmetry_breaking_scan,
)
from tests.conftest import M0_UNIT_DISK, MU2_UNIT_DISK

UNIFORM = RadialSource.constant(1.0)


@pytest.fixture(scope="module")
def coarse_disk():
    return build_system(PerturbedDisk(R=1.0), UNIFORM, 24, 96)


@pytest.fixture(scope="module")
def fine_disk():
    return build_system(PerturbedDisk(R=1.0), UNIFORM, 48, 192)


class TestPerturbedDisk:
    @pytest.mark.parametrize("t", [0.0, 0.05, 0.2])
    def test_area_preserved(self, t):
        assert PerturbedDisk(R=1.3, s=3, a=1.0, t=t).area == pytest.approx(math.pi * 1.3 ** 2)

    def test_deformation_limit(self):
        with pytest.raises(DomainError):
            PerturbedDisk(R=1.0, s=2, a=2.0, t=0.15)

    def test_bad_mode(self):
        with pytest.raises(DomainError):
            PerturbedDisk(R=1.0, s=0)


class TestMesh:
    def test_counts(self):
        mesh = build_mesh(PerturbedDisk(R=1.0), 8, 32)
        assert mesh.nodes.shape == (1 + 8 * 32, 2)
        assert mesh.triangles.shape == (32 + 2 * 32 * 7, 3)
        assert mesh.boundary.size == 32
        np.testing.assert_allclose(np.linalg.norm(mesh.nodes[mesh.boundary], axis=1), 1.0)

    def test_polygon_area(self):
        system = build_system(PerturbedDisk(R=1.0, s=2, a=1.0, t=0.05), UNIFORM, 16, 192)
        assert abs(system.area - math.pi) < 1e-3
        assert float(system.mass.sum()) == pytest.approx(system.area, rel=1e-12)

    def test_operators(self, coarse_disk):
        ones = np.ones(coarse_disk.mesh.nodes.shape[0])
        assert np.abs(coarse_disk.stiffness @ ones).max() < 1e-10
        assert coarse_disk.perimeter == pytest.approx(2.0 * math.pi, rel=1e-3)
        assert coarse_disk.interior.size == coarse_disk.mesh.nodes.shape[0] - 96

    def test_resolution_must_fit_mode(self):
        with pytest.raises(DomainError):
            build_system(PerturbedDisk(R=1.0, s=3), UNIFORM, 16, 64)


class TestEnergy:
    def test_disk_energy_matches_radial_solution(self, coarse_disk):
        field = solve_energy(coarse_disk, 1.0)
        exact = solve_radial(BallConfig(2, 1.0), UNIFORM, 1.0)
        assert field.energy == pytest.approx(energy_value(exact), rel=2e-2)
        np.testing.assert_allclose(field.trace, exact.u_R, rtol=2e-2)

    @pytest.mark.slow
    def test_acceptance_resolution(self, fine_disk):
        field = solve_energy(fine_disk, 1.0)
        exact = solve_radial(BallConfig(2, 1.0), UNIFORM, 1.0)
        assert field.energy == pytest.approx(energy_value(exact), rel=5e-3)
        np.testing.assert_allclose(field.trace, exact.u_R, rtol=5e-3)

    def test_rejects_bad_step(self):
        with pytest.raises(DomainError):
            energy_derivatives(1.0, UNIFORM, 1.0, 2, dt=0.1)
        with pytest.raises(DomainError):
            energy_derivatives(1.0, UNIFORM, 1.0, 2, a=0.0)

    def test_mesh_convergence(self):
        exact = energy_value(solve_radial(BallConfig(2, 1.0), UNIFORM, 1.0))
        errors = [
            abs(solve_energy(build_system(PerturbedDisk(R=1.0), UNIFORM, n_r, n_theta), 1.0).energy - exact)
            for n_r, n_theta in ((16, 64), (32, 128))
        ]
        assert errors[0] >= 3.0 * errors[1]

    @pytest.mark.slow
    @pytest.mark.parametrize("s", [1, 2, 3])
    @pytest.mark.parametrize("source", [UNIFORM, RadialSource((1.0, 0.0, 1.0))], ids=["one", "one_plus_r2"])
    def test_second_variation_matches_mode_form(self, s, source):
        result = energy_derivatives(1.0, source, 1.0, s)
        scale = max(abs(result.analytic), abs(mode_form(solve_radial(BallConfig(2, 1.0), source, 1.0), 2).q_value))
        assert abs(result.scaled_d2 - result.analytic) <= 0.05 * scale
        assert abs(result.d1) <= 0.02 * max(abs(result.d2), math.pi * scale) * 0.02

    @pytest.mark.slow
    def test_richardson_stable_under_step_halving(self):
        coarse = energy_derivatives(1.0, UNIFORM, 1.0, 2, dt=0.02, order=4)
        fine = energy_derivatives(1.0, UNIFORM, 1.0, 2, dt=0.01, order=4)
        assert fine.scaled_d2 == pytest.approx(coarse.scaled_d2, rel=1e-2)
        assert len(coarse.energies) == 5

    @pytest.mark.slow
    def test_translation_instability(self):
        result = energy_derivatives(1.0, RadialSource((1.0, 0.0, 1.0)), 1.0, 1, n_theta=96)
        assert result.d2 < 0
        assert result.analytic < 0


class TestEigen:
    def test_neumann_eigenvalue(self, coarse_disk):
        assert neumann_mu2_fem(coarse_disk) == pytest.approx(MU2_UNIT_DISK, rel=1e-2)

    def test_uniform_regime(self, coarse_disk):
        m = 2.0 * M0_UNIT_DISK
        field = solve_eigen(coarse_disk, m)
        assert field.lambda_ == pytest.approx(lambda_m(BallConfig(2, 1.0), m).lambda_, rel=1e-2)
        assert np.all(field.trace > 0) or np.all(field.trace < 0)
        assert coefficient_of_variation(coarse_disk, field.trace, m) < 0.02

    @pytest.mark.slow
    def test_uniform_regime_acceptance(self, fine_disk):
        m = 2.0 * M0_UNIT_DISK
        field = solve_eigen(fine_disk, m)
        assert field.lambda_ == pytest.approx(lambda_m(BallConfig(2, 1.0), m).lambda_, rel=5e-3)

    @pytest.mark.slow
    def test_symmetry_breaking_below_threshold(self, fine_disk):
        m = 0.5 * M0_UNIT_DISK
        field = solve_eigen(fine_disk, m)
        assert field.pencil_lambda == pytest.approx(MU2_UNIT_DISK, rel=1e-2)
        assert field.sign_changing
        assert 0.99 * MU2_UNIT_DISK < field.lambda_ < 1.01 * radial_candidate(BallConfig(2, 1.0), m)

    @pytest.mark.slow
    def test_scan_regimes(self):
        rows = symmetry_breaking_scan(1.0, [0.5 * M0_UNIT_DISK, 2.0 * M0_UNIT_DISK])
        assert [row.regime for row in rows] == ["nonuniform", "uniform"]
        assert rows[0].variation >= NONUNIFORM_CV_THRESHOLD
        assert rows[0].passed
        assert rows[1].passed
        assert rows[0].variation > rows[1].variation

    def test_pencil_reports_constant_start_pattern(self):
        system = build_system(PerturbedDisk(R=1.0), UNIFORM, 16, 64)
        field = solve_eigen(system, 0.5 * M0_UNIT_DISK)
        assert field.pencil_lambda == pytest.approx(neumann_mu2_fem(system), rel=1e-8)
        assert field.sign_changing
        assert field.lambda_ > 0.99 * field.pencil_lambda


class TestEigenDerivatives:
    def test_rejects_bad_step(self):
        with pytest.raises(DomainError):
            eigen_derivatives(1.0, 2.0 * M0_UNIT_DISK, 2, dt=5e-4)

    def test_needs_uniform_regime(self):
        with pytest.raises(RegimeError):
            eigen_derivatives(1.0, 0.5 * M0_UNIT_DISK, 2)

    @pytest.mark.slow
    @pytest.mark.parametrize("R, s", [(2.0, 2), (0.5, 3), (1.0, 2)])
    def test_second_variation_matches_disk_mode_form(self, R, s):
        config = BallConfig(2, R)
        m = 2.0 * m0_threshold(config)
        result = eigen_derivatives(R, m, s)
        scale = max(abs(result.analytic), abs(eigen_mode_form(config, m, 2).q_value))
        assert abs(result.scaled_d2 - result.analytic) <= 0.02 * scale
        assert abs(result.d1) <= 0.02 * max(abs(result.d2), 2.0 * R ** 2 * scale) * 0.02
        assert result.lambdas[1] == pytest.approx(lambda_m(config, m).lambda_, rel=5e-3)


class TestSignPattern:
    def test_zero_entries_keep_previous_sign(self):
        previous = SignPattern(np.array([1.0, -1.0, -1.0]))
        pattern = SignPattern.from_trace(np.array([2.0, 0.0, 3.0]), previous)
        np.testing.assert_array_equal(pattern.weights, [1.0, -1.0, 1.0])
        assert pattern.sign_changing

    def test_canonical_key_ignores_global_sign(self):
        w = np.array([1.0, 1.0, -1.0, 1.0])
        assert SignPattern(w).key() == SignPattern(-w).key()
        assert not SignPattern.constant(4).sign_changing


def test_dump_mesh(tmp_path):
    system = build_system(PerturbedDisk(R=1.0), UNIFORM, 8, 32)
    paths = dump_mesh(system, solve_energy(system, 1.0).u, str(tmp_path / "dump"))
    assert [p.rsplit("/", 1)[-1] for p in paths] == ["nodes.txt", "triangles.txt", "field.txt"]
    with open(paths[0], encoding="utf-8") as handle:
        assert handle.readline().startswith("# index x y")
    assert np.loadtxt(paths[2]).shape == (1 + 8 * 32, 2)
