"""Time-incremental driver: boundary data, plastic history, step loop."""

import numpy as np
import pytest

from cosplast.energy import MaterialParams, PlasticHistory, total_energy
from cosplast.grid import build_grid
from cosplast.kinematics import polar_decompose, quat_from_rotation
from cosplast.optimizer import LbfgsConfig
from cosplast.solver import (ScenarioSpec, SolverError, StepReport,
                             bending_bc, initial_state, run_simulation,
                             run_time_step, shear_bc)

RNG = np.random.default_rng(3)


def small_shear(**overrides):
    kw = dict(d=(4, 4, 4), h=0.1, t_final=0.2,
              lbfgs=LbfgsConfig(eps0=1e-7))
    kw.update(overrides)
    return ScenarioSpec.benchmark("shear", **kw)


class TestScenarioSpec:
    def test_shear_defaults(self):
        spec = ScenarioSpec.benchmark("shear")
        assert spec.lengths == (1.0, 1.0, 1.0)
        assert spec.params.mu == 10000.0
        assert spec.params.curvature_variant == "full"
        assert spec.mode == "quaternion"

    def test_bending_defaults(self):
        spec = ScenarioSpec.benchmark("bending")
        assert spec.lengths == (5.0, 1.0, 2.0)
        assert spec.params.mu == pytest.approx(0.025)
        assert spec.params.mu2 == pytest.approx(0.02)
        assert spec.params.curvature_variant == "simplified"

    def test_beta_ramp(self):
        spec = small_shear(beta_rate=0.25)
        assert spec.beta(0.4) == pytest.approx(0.1)

    def test_final_time_shorter_than_step_rejected(self):
        with pytest.raises((SolverError, ValueError)):
            small_shear(h=0.5, t_final=0.2)

    def test_bending_with_euler_rejected(self):
        with pytest.raises((SolverError, ValueError)):
            ScenarioSpec.benchmark(
                "bending", params={"curvature_variant": "euler"})

    def test_unknown_kind_rejected(self):
        with pytest.raises((SolverError, ValueError, KeyError)):
            ScenarioSpec.benchmark("torsion")


class TestShearBoundary:
    def test_affine_map(self):
        g = build_grid((1.0, 1.0, 1.0), (4, 4, 4))
        beta = 0.2
        phi, rot = shear_bc(g, beta)
        xyz = g.coords()
        assert np.allclose(phi[:, 0], xyz[:, 0] + beta * xyz[:, 1])
        assert np.allclose(phi[:, 1:], xyz[:, 1:])
        assert np.allclose(rot, np.tile([1.0, 0, 0, 0], (g.num_nodes, 1)))

    def test_euler_mode_rotation_parameters(self):
        g = build_grid((1.0, 1.0, 1.0), (3, 3, 3))
        _, rot = shear_bc(g, 0.1, mode="euler")
        assert rot.shape == (g.num_nodes, 3)
        assert np.allclose(rot, 0.0)


class TestBendingBoundary:
    L = (5.0, 1.0, 2.0)

    def exact_profile(self, grid, beta):
        return beta * np.sin(np.pi * grid.coords()[:, 0] / (2.0 * self.L[0]))

    def test_warp_profile(self):
        g = build_grid(self.L, (10, 10, 10))
        beta = 0.05
        phi, _ = bending_bc(g, beta, np.zeros(g.num_nodes))
        xyz = g.coords()
        l1 = self.L[0]
        bump = (2.0 * l1 / np.pi) * (
            np.sin(1.5 * np.pi + 0.5 * np.pi * xyz[:, 0] / l1) + 1.0) * beta
        assert np.allclose(phi[:, 1], xyz[:, 1] + bump)
        assert np.allclose(phi[:, [0, 2]], xyz[:, [0, 2]])

    def test_rotation_axis_is_third_axis(self):
        g = build_grid(self.L, (6, 6, 6))
        beta = 0.05
        gamma = self.exact_profile(g, beta)
        _, rot = bending_bc(g, beta, gamma)
        assert np.abs(rot[:, 1]).max() <= 1e-14
        assert np.abs(rot[:, 2]).max() <= 1e-14
        assert np.abs(np.linalg.norm(rot, axis=1) - 1.0).max() <= 1e-12

    def test_closed_form_angle(self):
        # q = (cos t/2, 0, 0, sin t/2) with t = atan2(s + gamma, 2 - s*gamma)
        # where s = beta sin(pi x1 / 2 L1)
        g = build_grid(self.L, (6, 6, 6))
        beta = 0.08
        gamma = 0.5 * self.exact_profile(g, beta)  # generic, not exact slip
        _, rot = bending_bc(g, beta, gamma)
        s = self.exact_profile(g, beta)
        theta = np.arctan2(s + gamma, 2.0 - s * gamma)
        assert np.abs(rot[:, 0] - np.cos(theta / 2.0)).max() <= 1e-12
        assert np.abs(rot[:, 3] - np.sin(theta / 2.0)).max() <= 1e-12

    def test_matches_polar_factor_oracle(self):
        g = build_grid(self.L, (4, 4, 4))
        beta = 0.06
        gamma = 0.03 * RNG.random(g.num_nodes)
        _, rot = bending_bc(g, beta, gamma)
        xyz = g.coords()
        l1 = self.L[0]
        for n in RNG.choice(g.num_nodes, size=8, replace=False):
            x1 = xyz[n, 0]
            dg = np.eye(3)
            dg[1, 0] = beta * np.sin(0.5 * np.pi * x1 / l1)
            fp_inv = np.eye(3)
            fp_inv[0, 1] = -gamma[n]
            r, _ = polar_decompose(dg @ fp_inv)
            q = quat_from_rotation(r)
            assert np.abs(np.abs(rot[n] @ q) - 1.0) <= 1e-12


class TestRunTimeStep:
    def test_dirichlet_rows_preserved(self):
        spec = small_shear()
        g = build_grid(spec.lengths, spec.d)
        state = initial_state(spec, g)
        hist = PlasticHistory.zeros(g.num_nodes)
        state, hist, report, traces = run_time_step(
            state, hist, g, spec.params, spec.lbfgs, spec, t=0.1, step=1,
            first_step=True)
        phi_d, rot_d = shear_bc(g, spec.beta(0.1))
        bnd = g.boundary_mask()
        assert np.array_equal(state.phi[bnd], phi_d[bnd])
        assert np.array_equal(state.rot[bnd], rot_d[bnd])

    def test_history_updated_with_exact_modulus(self):
        spec = small_shear()
        g = build_grid(spec.lengths, spec.d)
        state = initial_state(spec, g)
        hist = PlasticHistory.zeros(g.num_nodes)
        state, new_hist, _, _ = run_time_step(
            state, hist, g, spec.params, spec.lbfgs, spec, t=0.1, step=1,
            first_step=True)
        assert np.array_equal(new_hist.gamma0, state.gamma)
        assert np.allclose(new_hist.kappa0, -np.abs(state.gamma),
                           atol=1e-15)

    def test_reported_energy_matches_state(self):
        spec = small_shear()
        g = build_grid(spec.lengths, spec.d)
        state = initial_state(spec, g)
        hist = PlasticHistory.zeros(g.num_nodes)
        new_state, _, report, _ = run_time_step(
            state, hist, g, spec.params, spec.lbfgs, spec, t=0.1, step=1,
            first_step=True)
        e = total_energy(new_state, hist, g, spec.params)
        assert report.energy == pytest.approx(e, rel=1e-10, abs=1e-12)


class TestRunSimulation:
    def test_shear_recovers_affine_solution(self):
        spec = small_shear()
        reports, state, hist, grid, _ = run_simulation(spec)
        assert len(reports) == 2
        beta = spec.beta(spec.t_final)
        assert abs(reports[-1].energy) <= 1e-8
        assert np.abs(state.gamma - beta).max() <= 1e-4
        phi_d, _ = shear_bc(grid, beta)
        assert np.abs(state.phi - phi_d).max() <= 1e-5

    def test_hardening_monotone_over_steps(self):
        spec = small_shear(t_final=0.3,
                           params={"rho": 100.0, "sigma_y": 10.0})
        kappas = []

        def cb(step, state, hist, report, traces):
            kappas.append(hist.kappa0.copy())

        run_simulation(spec, cb)
        assert len(kappas) == 3
        assert np.all(kappas[0] <= 0.0)
        for prev, cur in zip(kappas, kappas[1:]):
            assert np.all(cur <= prev + 1e-15)

    def test_path_equivalence_without_hardening(self):
        # with no dissipative terms the final state depends only on the
        # final load, not on the number of increments
        eps0 = 1e-9
        fine = small_shear(h=0.1, t_final=0.2,
                           lbfgs=LbfgsConfig(eps0=eps0))
        coarse = small_shear(h=0.2, t_final=0.2,
                             lbfgs=LbfgsConfig(eps0=eps0))
        _, st_f, _, _, _ = run_simulation(fine)
        _, st_c, _, _, _ = run_simulation(coarse)
        assert np.abs(st_f.phi - st_c.phi).max() <= 10.0 * eps0
        assert np.abs(st_f.gamma - st_c.gamma).max() <= 10.0 * eps0

    def test_single_pass_agrees_with_two_pass(self):
        eps0 = 1e-9
        two = small_shear(t_final=0.1, lbfgs=LbfgsConfig(eps0=eps0))
        one = small_shear(t_final=0.1, lbfgs=LbfgsConfig(eps0=eps0),
                          preconditioning="off")
        r2, st2, _, _, _ = run_simulation(two)
        r1, st1, _, _, _ = run_simulation(one)
        assert abs(r2[-1].energy - r1[-1].energy) <= 1e-8
        assert np.abs(st2.gamma - st1.gamma).max() <= 1e-6

    def test_bending_step_runs_and_reports(self):
        spec = ScenarioSpec.benchmark("bending", d=(4, 4, 4), h=0.1,
                                      t_final=0.1,
                                      lbfgs=LbfgsConfig(eps0=1e-6))
        reports, state, hist, grid, _ = run_simulation(spec)
        assert len(reports) == 1
        assert reports[0].constraint_violation <= 1e-3
        assert np.all(np.isfinite(state.gamma))
        # slip accumulates in the expected direction along the rod
        interior = ~grid.boundary_mask()
        assert state.gamma[interior].mean() > 0.0


class TestStepReport:
    def test_csv_round_trip(self):
        r = StepReport(step=1, t=0.1, pred_iters=3, corr_iters=7,
                       energy=1.5e-9, gradnorm=2e-8,
                       constraint_violation=1e-12, wall_ms=12.5)
        header = StepReport.csv_header().split(",")
        line = r.csv_line().split(",")
        assert len(header) == len(line)
        assert line[0] == "1"
        assert float(line[header.index("wall_ms")]) == pytest.approx(12.5)
        zeroed = r.csv_line(zero_wall=True).split(",")
        assert float(zeroed[header.index("wall_ms")]) == 0.0

    def test_total_iters(self):
        r = StepReport(step=1, t=0.1, pred_iters=3, corr_iters=7,
                       energy=0.0, gradnorm=0.0, constraint_violation=0.0,
                       wall_ms=0.0)
        assert r.total_iters == 10
