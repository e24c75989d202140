"""Tests for the finite-difference Dirichlet oracle.

The analytic spine: with no drift, no potential, and unit forcing on the
unit ball the solution is the quadratic (1 - |x|^2)/3; with unit drift
the center value has the closed form R coth(R) - 1 obtained by reducing
to the radial diffusion with drift coth(r) (whose scale density sinh^-2
integrates the first-moment equation in closed form).  Everything else is
exactness: conjugation symmetry, zero propagation, determinism, and
round-trips.
"""

import math

import numpy as np
import pytest

from fkscatter.core_math import bessel_drift_magnitude
from fkscatter.errors import ConfigError, DomainError, SolverError
from fkscatter.pde_oracle import (
    GridSolution,
    discrete_residual,
    load_binary,
    load_csv,
    mc_vs_pde,
    solve_dirichlet,
)
from fkscatter.potentials import make_standard_potential
from fkscatter.sde_engine import PathConfig

ZERO = make_standard_potential("constant", [0.0])
ONE = make_standard_potential("constant", [1.0])
VBUMP = make_standard_potential("gaussian_bump", [1.0, 0, 1.0])
FBUMP = make_standard_potential("ball_bump", [1.0, 0, 1.0])

# center exit-time mean under unit drift, R coth(R) - 1 at R = 1
DRIFT_CENTER = 0.3130352854993313


def quadratic_reference(sol: GridSolution) -> np.ndarray:
    ax = sol.axis()
    r2 = (ax[:, None, None] ** 2 + ax[None, :, None] ** 2
          + ax[None, None, :] ** 2)
    return (sol.radius ** 2 - r2) / 3.0


class TestGridGeometry:
    def test_effective_spacing_and_shape(self):
        sol = solve_dirichlet(ZERO, ZERO, 1.0, 0.1, drift_on=False)
        assert sol.m == 21
        assert sol.h == pytest.approx(0.1)
        assert sol.axis()[sol.m // 2] == 0.0

    def test_requested_spacing_is_rounded(self):
        sol = solve_dirichlet(ZERO, ZERO, 1.0, 0.097, drift_on=False)
        assert sol.m == 21
        assert sol.h == pytest.approx(0.1)

    def test_interior_mask_matches_ball(self):
        sol = solve_dirichlet(ZERO, ZERO, 1.0, 0.1, drift_on=False)
        ax = sol.axis()
        r2 = (ax[:, None, None] ** 2 + ax[None, :, None] ** 2
              + ax[None, None, :] ** 2)
        inside = r2 < 1.0
        inside[0, :, :] = inside[-1, :, :] = False
        inside[:, 0, :] = inside[:, -1, :] = False
        inside[:, :, 0] = inside[:, :, -1] = False
        assert np.array_equal(sol.interior, inside)

    def test_coarse_spacing_rejected(self):
        with pytest.raises(ConfigError):
            solve_dirichlet(ZERO, ONE, 1.0, 0.2, drift_on=False)

    def test_bad_inputs_rejected(self):
        with pytest.raises(ConfigError):
            solve_dirichlet(ZERO, ONE, -1.0, 0.05)
        with pytest.raises(ConfigError):
            solve_dirichlet(ZERO, ONE, 1.0, 0.0)
        with pytest.raises(ConfigError):
            solve_dirichlet(ZERO, ONE, 1.0, 0.05, scheme="spectral")


class TestHomogeneous:
    def test_zero_forcing_gives_zero(self):
        sol = solve_dirichlet(VBUMP, ZERO, 1.0, 0.1)
        assert np.all(sol.values == 0.0)
        assert sol.iterations == 0
        assert sol.residual == 0.0


class TestAnalyticAnchor:
    def test_center_value(self):
        sol = solve_dirichlet(ZERO, ONE, 1.0, 0.05, drift_on=False)
        phi0 = sol.value_at(np.zeros(3))
        assert phi0.imag == 0.0
        assert abs(phi0.real - 1.0 / 3.0) < 2.5e-4

    def test_max_norm_against_quadratic(self):
        sol = solve_dirichlet(ZERO, ONE, 1.0, 0.1, drift_on=False)
        err = np.abs(sol.values.real - quadratic_reference(sol))
        assert np.max(err[sol.interior]) < 1e-3

    def test_second_order_refinement(self):
        errs = []
        for h in (0.1, 0.05):
            sol = solve_dirichlet(ZERO, ONE, 1.0, h, drift_on=False)
            err = np.abs(sol.values.real - quadratic_reference(sol))
            errs.append(np.max(err[sol.interior]))
        ratio = errs[0] / errs[1]
        assert 3.5 <= ratio <= 4.5

    def test_maximum_principle(self):
        for drift_on in (False, True):
            sol = solve_dirichlet(ZERO, FBUMP, 1.0, 0.05, drift_on=drift_on)
            assert np.min(sol.values.real[sol.interior]) >= 0.0
            assert np.max(np.abs(sol.values.imag)) == 0.0


class TestDriftOnAnchor:
    def test_richardson_hits_radial_closed_form(self):
        vals = []
        for h in (0.1, 0.05):
            sol = solve_dirichlet(ZERO, ONE, 1.0, h, drift_on=True)
            vals.append(sol.value_at(np.zeros(3)).real)
        rich = vals[1] + (vals[1] - vals[0]) / 3.0
        assert abs(rich - DRIFT_CENTER) < 5e-5
        # frozen solver regression at the working spacing
        assert vals[1] == pytest.approx(0.31319872861104864, rel=1e-12)

    def test_closed_form_matches_drift_magnitude_family(self):
        # the same ratio of modified Bessel functions that drives the
        # radial sampler evaluates the exit-time mean: R coth(R) - 1 at
        # R = 1 equals the drift magnitude there
        val = float(np.asarray(bessel_drift_magnitude(np.array([1.0])))[0])
        assert val == pytest.approx(DRIFT_CENTER, rel=1e-14)

    def test_upwind_fallback_first_order(self):
        errs = []
        for h in (0.1, 0.05):
            sol = solve_dirichlet(ZERO, ONE, 1.0, h, drift_on=True,
                                  scheme="upwind")
            errs.append(abs(sol.value_at(np.zeros(3)).real - DRIFT_CENTER))
        assert errs[1] < 1e-2
        assert 1.5 <= errs[0] / errs[1] <= 2.5

    def test_upwind_maximum_principle(self):
        sol = solve_dirichlet(ZERO, ONE, 1.0, 0.05, drift_on=True,
                              scheme="upwind")
        assert np.min(sol.values.real[sol.interior]) > 0.0


class TestConjugation:
    def test_negated_potential_conjugates_bitwise(self):
        vm = make_standard_potential("gaussian_bump", [-1.0, 0, 1.0])
        sp = solve_dirichlet(VBUMP, FBUMP, 1.0, 0.1)
        sm = solve_dirichlet(vm, FBUMP, 1.0, 0.1)
        assert np.array_equal(sm.values, np.conj(sp.values))
        assert sm.iterations == sp.iterations
        assert sm.residual == sp.residual

    def test_complex_solution_has_both_parts(self):
        sol = solve_dirichlet(VBUMP, FBUMP, 1.0, 0.1)
        assert np.max(np.abs(sol.values.imag)) > 0.0


class TestSolverContracts:
    def test_residual_stored_and_auditable(self):
        sol = solve_dirichlet(VBUMP, FBUMP, 1.0, 0.1)
        assert sol.residual <= 1e-8
        assert discrete_residual(sol, VBUMP, FBUMP) <= 1.5e-8

    def test_exterior_nodes_zero(self):
        sol = solve_dirichlet(VBUMP, FBUMP, 1.0, 0.1)
        assert np.all(sol.values[~sol.interior] == 0.0)

    def test_deterministic(self):
        a = solve_dirichlet(VBUMP, FBUMP, 1.0, 0.1)
        b = solve_dirichlet(VBUMP, FBUMP, 1.0, 0.1)
        assert np.array_equal(a.values, b.values)
        assert a.iterations == b.iterations

    def test_iteration_budget_enforced(self):
        with pytest.raises(SolverError) as exc:
            solve_dirichlet(VBUMP, FBUMP, 1.0, 0.1, max_iter=2)
        assert "residual" in str(exc.value)

    def test_tight_tolerance_converges(self):
        sol = solve_dirichlet(ZERO, ONE, 1.0, 0.1, drift_on=False,
                              rel_tol=1e-12)
        assert sol.residual <= 1e-12


class TestValueAt:
    def test_node_query_matches_array(self):
        sol = solve_dirichlet(ZERO, ONE, 1.0, 0.1, drift_on=False)
        k = sol.m // 2
        assert sol.value_at(np.zeros(3)) == pytest.approx(
            complex(sol.values[k, k, k]), rel=1e-10)
        ax = sol.axis()
        p = np.array([ax[k + 2], ax[k - 3], ax[k + 1]])
        assert sol.value_at(p) == pytest.approx(
            complex(sol.values[k + 2, k - 3, k + 1]), rel=1e-9, abs=1e-12)

    def test_off_node_matches_quadratic(self):
        sol = solve_dirichlet(ZERO, ONE, 1.0, 0.05, drift_on=False)
        p = np.array([0.123, -0.271, 0.064])
        exact = (1.0 - float(p @ p)) / 3.0
        assert abs(sol.value_at(p).real - exact) < 5e-4

    def test_outside_cube_rejected(self):
        sol = solve_dirichlet(ZERO, ONE, 1.0, 0.1, drift_on=False)
        with pytest.raises(DomainError):
            sol.value_at([1.5, 0.0, 0.0])
        with pytest.raises(DomainError):
            sol.value_at([0.0, 0.0])


class TestExport:
    def test_binary_round_trip(self, tmp_path):
        sol = solve_dirichlet(VBUMP, FBUMP, 1.0, 0.1)
        stem = str(tmp_path / "sol")
        sol.export_binary(stem)
        back = load_binary(stem)
        assert np.array_equal(back.values, sol.values)
        assert np.array_equal(back.interior, sol.interior)
        assert back.h == sol.h and back.radius == sol.radius
        assert back.iterations == sol.iterations
        assert back.scheme == sol.scheme

    def test_csv_round_trip(self, tmp_path):
        sol = solve_dirichlet(VBUMP, FBUMP, 1.0, 0.1)
        path = str(tmp_path / "sol.csv")
        sol.export_csv(path)
        back = load_csv(path)
        assert np.array_equal(back.values, sol.values)
        assert back.drift_on == sol.drift_on

    def test_binary_header_mismatch_rejected(self, tmp_path):
        sol = solve_dirichlet(ZERO, ONE, 1.0, 0.1, drift_on=False)
        stem = str(tmp_path / "sol")
        sol.export_binary(stem)
        raw = np.fromfile(stem + ".bin", dtype=np.complex128)
        raw[:-3].tofile(stem + ".bin")
        with pytest.raises(ConfigError):
            load_binary(stem)


class TestMcVsPde:
    CFG = PathConfig(dt=5e-3, t_max=20.0, stop_radius=8.0, master_seed=404)

    def test_trivial_anchor(self):
        rep = mc_vs_pde(ZERO, ONE, 1.0, np.zeros(3), 0.05, 3000, self.CFG,
                        drift_on=False)
        assert rep.mc_mean.imag == 0.0
        assert abs(rep.mc_mean.real - 1.0 / 3.0) < 0.02
        assert rep.rel_difference < 0.05
        assert rep.abs_difference == abs(rep.mc_mean - rep.pde_value)
        assert rep.mc_anomalies == 0

    def test_zero_forcing_exact(self):
        rep = mc_vs_pde(VBUMP, ZERO, 1.0, np.zeros(3), 0.1, 50, self.CFG)
        assert rep.mc_mean == 0.0 and rep.pde_value == 0.0
        assert rep.abs_difference == 0.0 and rep.rel_difference == 0.0

    def test_companion_grid_choice(self):
        # r = 1, h = 0.1 cannot coarsen (0.2 > r / 10), so the companion
        # refines instead
        rep = mc_vs_pde(ZERO, ONE, 1.0, np.zeros(3), 0.1, 50, self.CFG,
                        drift_on=False)
        assert rep.h_coarse == pytest.approx(0.05)
        rep2 = mc_vs_pde(ZERO, ONE, 2.0, np.zeros(3), 0.1, 50, self.CFG,
                         drift_on=False)
        assert rep2.h_coarse == pytest.approx(0.2)

    def test_off_center_point(self):
        p = np.array([0.3, -0.2, 0.1])
        rep = mc_vs_pde(ZERO, ONE, 1.0, p, 0.05, 3000, self.CFG,
                        drift_on=False)
        exact = (1.0 - float(p @ p)) / 3.0
        assert abs(rep.pde_value.real - exact) < 5e-4
        assert abs(rep.mc_mean.real - exact) < 0.03

    def test_drift_changes_both_sides(self):
        on = mc_vs_pde(ZERO, ONE, 1.0, np.zeros(3), 0.1, 500, self.CFG,
                       drift_on=True)
        off = mc_vs_pde(ZERO, ONE, 1.0, np.zeros(3), 0.1, 500, self.CFG,
                        drift_on=False)
        assert on.pde_value.real < off.pde_value.real
        assert on.mc_mean.real < off.mc_mean.real

    def test_validation(self):
        with pytest.raises(DomainError):
            mc_vs_pde(ZERO, ONE, 1.0, [2.0, 0.0, 0.0], 0.05, 100, self.CFG)
        with pytest.raises(DomainError):
            mc_vs_pde(ZERO, ONE, 1.0, np.zeros(3), 0.05, 1, self.CFG)
