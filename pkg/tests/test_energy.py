"""Incremental energy functional: value oracles, gradients, invariances."""

import numpy as np
import pytest

from cosplast.energy import (CURVATURE_VARIANTS, EnergyEvaluationError,
                             MaterialParams, PlasticHistory,
                             curvature_energy_at_node, fp, fp_inverse,
                             hardening_update, reg_abs, reg_abs_deriv,
                             stretch_energy, stretch_energy_integral,
                             total_energy, total_gradient)
from cosplast.grid import DofLayout, FieldState, build_grid
from cosplast.kinematics import (conjugate, curvature_vector,
                                 rotation_normalized)
from cosplast.solver import shear_bc

RNG = np.random.default_rng(42)
MVEC = (1.0, 0.0, 0.0)
NVEC = (0.0, 1.0, 0.0)


def identity_state(grid, mode="quaternion"):
    rot = (np.tile([1.0, 0.0, 0.0, 0.0], (grid.num_nodes, 1))
           if mode == "quaternion" else np.zeros((grid.num_nodes, 3)))
    return FieldState(phi=grid.coords().copy(), rot=rot,
                      gamma=np.zeros(grid.num_nodes))


def perturbed_state(grid, mode="quaternion", scale=0.05, rng=None):
    rng = rng or RNG
    st = identity_state(grid, mode)
    st.phi += scale * rng.standard_normal(st.phi.shape)
    st.rot += scale * rng.standard_normal(st.rot.shape)
    st.gamma += scale * rng.standard_normal(st.gamma.shape)
    return st


class TestMaterialParams:
    def test_defaults(self):
        p = MaterialParams()
        assert p.mu == 10000.0 and p.mu_c == 20000.0
        assert p.lam == 1000.0 and p.mu2 == 100.0
        assert p.curvature_variant == "full"

    @pytest.mark.parametrize("kw", [
        {"mu": -1.0}, {"mu_c": -1.0}, {"mu2": -1.0}, {"eps_reg": 0.0},
        {"penalty": -2.0}, {"rho": -0.1}, {"sigma_y": -0.1},
        {"curvature_variant": "weird"},
    ])
    def test_invalid_rejected(self, kw):
        with pytest.raises(ValueError):
            MaterialParams(**kw)

    def test_variant_registry(self):
        assert set(CURVATURE_VARIANTS) == {"full", "simplified", "euler"}


class TestPlasticFactors:
    def test_fp_is_rank_one_update(self):
        g = 0.2
        expect = np.eye(3)
        expect[0, 1] = g
        assert np.allclose(fp(g, MVEC, NVEC), expect)

    def test_inverse_exact_and_unimodular(self):
        for g in (-0.7, 0.0, 0.3, 2.0):
            f = fp(g, MVEC, NVEC)
            assert np.allclose(f @ fp_inverse(g, MVEC, NVEC), np.eye(3),
                               atol=1e-14)
            assert np.linalg.det(f) == pytest.approx(1.0, abs=1e-14)


class TestStretchEnergy:
    def test_identity_is_zero(self):
        assert stretch_energy(np.eye(3), MaterialParams()) == 0.0

    def test_pure_dilation(self):
        p = MaterialParams()
        a = 0.01
        got = stretch_energy((1.0 + a) * np.eye(3), p)
        assert got == pytest.approx(3.0 * p.mu * a ** 2
                                    + 4.5 * p.lam * a ** 2, rel=1e-12)

    def test_pure_skew(self):
        p = MaterialParams()
        t = 0.03
        ue = np.eye(3)
        ue[0, 1], ue[1, 0] = t, -t
        assert stretch_energy(ue, p) == pytest.approx(2.0 * p.mu_c * t ** 2,
                                                      rel=1e-12)

    def test_mixed_decomposes_additively(self):
        p = MaterialParams()
        a, t = 0.01, 0.03
        ue = (1.0 + a) * np.eye(3)
        ue[0, 1], ue[1, 0] = ue[0, 1] + t, ue[1, 0] - t
        expect = (3.0 * p.mu * a ** 2 + 4.5 * p.lam * a ** 2
                  + 2.0 * p.mu_c * t ** 2)
        assert stretch_energy(ue, p) == pytest.approx(expect, rel=1e-12)


class TestRegAbs:
    def test_midpoint_of_quadratic_zone(self):
        eps = 1e-4
        assert reg_abs(eps / 2.0, eps) == pytest.approx(eps / 4.0, rel=1e-14)

    def test_matches_abs_outside(self):
        eps = 1e-4
        for x in (2e-4, -5e-4, 1e-4):
            assert reg_abs(x, eps) == pytest.approx(abs(x), rel=1e-14)

    def test_derivative(self):
        eps = 1e-4
        assert reg_abs_deriv(5e-5, eps) == pytest.approx(1.0)
        assert reg_abs_deriv(-5e-5, eps) == pytest.approx(-1.0)
        assert reg_abs_deriv(3e-4, eps) == pytest.approx(1.0)
        assert reg_abs_deriv(-3e-4, eps) == pytest.approx(-1.0)
        assert reg_abs_deriv(0.0, eps) == 0.0

    def test_continuity_at_junction(self):
        eps = 1e-4
        assert reg_abs(eps, eps) == pytest.approx(eps, rel=1e-12)


class TestHardening:
    def test_exact_modulus_decrement(self):
        got = hardening_update(np.array([0.3]), np.array([0.1]),
                               np.array([-0.05]))
        assert got[0] == pytest.approx(-0.25)

    def test_monotone_nonincreasing(self):
        gamma = RNG.standard_normal(100)
        gamma0 = RNG.standard_normal(100)
        kappa0 = -RNG.random(100)
        assert np.all(hardening_update(gamma, gamma0, kappa0) <= kappa0)

    def test_no_slip_no_change(self):
        g = RNG.standard_normal(10)
        k = -RNG.random(10)
        assert np.array_equal(hardening_update(g, g, k), k)


class TestTotalEnergyOracles:
    def test_exact_shear_state_is_zero(self):
        g = build_grid((1.0, 1.0, 1.0), (5, 5, 5))
        beta = 0.1
        phi, rot = shear_bc(g, beta)
        st = FieldState(phi=phi, rot=rot,
                        gamma=np.full(g.num_nodes, beta))
        hist = PlasticHistory.zeros(g.num_nodes)
        p = MaterialParams()
        assert abs(total_energy(st, hist, g, p)) <= 1e-12
        lay = DofLayout.create(g, "quaternion")
        grad = total_gradient(st, hist, g, p, lay)
        assert np.abs(grad).max() <= 1e-10

    def test_constant_scaled_quaternion_pays_only_penalty(self):
        # q = (sqrt(2),0,0,0) everywhere: normalized rotation is the
        # identity, curvature vanishes, so only the unit-norm penalty
        # (|q|^2 - 1)^2 = 1 integrates over the unit cube
        g = build_grid((1.0, 1.0, 1.0), (4, 4, 4))
        st = identity_state(g)
        st.rot[:, 0] = np.sqrt(2.0)
        hist = PlasticHistory.zeros(g.num_nodes)
        p = MaterialParams()
        assert total_energy(st, hist, g, p) == pytest.approx(p.penalty,
                                                             rel=1e-12)

    def test_volume_scaling_of_penalty(self):
        g = build_grid((2.0, 1.0, 3.0), (4, 4, 4))
        st = identity_state(g)
        st.rot[:, 0] = np.sqrt(2.0)
        p = MaterialParams()
        assert total_energy(st, PlasticHistory.zeros(g.num_nodes), g,
                            p) == pytest.approx(6.0 * p.penalty, rel=1e-12)

    def test_plastic_terms(self):
        # uniform slip increment on the unit cube with rho, sigma_y set:
        # rho (gamma - gamma0)^2 + (gamma - gamma0) (sigma_y - 2 rho kappa0)
        g = build_grid((1.0, 1.0, 1.0), (4, 4, 4))
        beta = 0.1
        phi, rot = shear_bc(g, beta)
        st = FieldState(phi=phi, rot=rot, gamma=np.full(g.num_nodes, beta))
        hist = PlasticHistory.zeros(g.num_nodes)
        p = MaterialParams(rho=2.0, sigma_y=0.5)
        expect = 2.0 * beta ** 2 + beta * 0.5
        assert total_energy(st, hist, g, p) == pytest.approx(expect,
                                                             rel=1e-12)

    def test_stretch_energy_integral_matches_total_when_isolated(self):
        # with penalty inactive (unit quaternions), no curvature (mu2
        # unchanged but constant rotation), no plastic terms, the full
        # energy reduces to the stretch integral
        g = build_grid((1.0, 1.0, 1.0), (4, 4, 4))
        st = identity_state(g)
        st.phi *= 1.01
        hist = PlasticHistory.zeros(g.num_nodes)
        p = MaterialParams()
        wst = stretch_energy_integral(st, hist, g, p)
        assert wst == pytest.approx(total_energy(st, hist, g, p), rel=1e-12)
        assert wst == pytest.approx(
            (3.0 * p.mu + 4.5 * p.lam) * 0.01 ** 2, rel=1e-10)


class TestCurvatureVariants:
    @staticmethod
    def twist_state(grid, a):
        st = identity_state(grid)
        x1 = grid.coords()[:, 0]
        st.rot = np.stack([np.cos(a * x1 / 2.0), np.zeros_like(x1),
                           np.zeros_like(x1), np.sin(a * x1 / 2.0)], axis=1)
        return st

    def test_full_variant_matrix_difference_oracle(self):
        # full variant at a node = mu2 sum_l || c_l (R[ip] - R[im]) ||^2
        # built from the normalized rotation of the raw quaternion field
        g = build_grid((1.0, 1.0, 1.0), (4, 4, 4))
        rot = np.tile([1.0, 0.0, 0.0, 0.0], (g.num_nodes, 1))
        rot += 0.1 * RNG.standard_normal(rot.shape)
        p = MaterialParams(curvature_variant="full")
        r = rotation_normalized(rot)
        ip, im, c = g.diff_stencils()
        for n in [g.node_index(2, 2, 2), g.node_index(0, 1, 3)]:
            expect = 0.0
            for axis in range(3):
                dr = c[axis][n] * (r[ip[axis][n]] - r[im[axis][n]])
                expect += p.mu2 * np.sum(dr * dr)
            got = curvature_energy_at_node(rot, n, g, p)
            assert got == pytest.approx(expect, rel=1e-12)

    def test_full_variant_converges_to_darboux_form(self):
        # as the grid refines, the matrix-difference form approaches
        # 2 mu2 sum_l |K_l|^2 with K_l from the discrete derivative of q
        a = 0.6
        p = MaterialParams(curvature_variant="full")
        errs = []
        for d in (8, 16):
            g = build_grid((1.0, 1.0, 1.0), (d, 2, 2))
            st = self.twist_state(g, a)
            ip, im, c = g.diff_stencils()
            n = g.node_index(d // 2, 1, 1)
            dq = c[0][n] * (st.rot[ip[0][n]] - st.rot[im[0][n]])
            k = curvature_vector(conjugate(st.rot[n]), dq)
            darboux = 2.0 * p.mu2 * np.dot(k, k)
            errs.append(abs(curvature_energy_at_node(st.rot, n, g, p)
                            - darboux))
        assert errs[1] < 0.3 * errs[0]

    def test_variant_ratio_on_twist(self):
        # at an interior node of the single-axis twist the discrete
        # matrix-difference form is exactly 4 cos^2(a eta / 2) times the
        # simplified form; the ratio tends to 4 as the grid refines
        g = build_grid((1.0, 1.0, 1.0), (8, 4, 4))
        a = 0.6
        st = self.twist_state(g, a)
        n = g.node_index(4, 2, 2)
        e_full = curvature_energy_at_node(
            st.rot, n, g, MaterialParams(curvature_variant="full"))
        e_simp = curvature_energy_at_node(
            st.rot, n, g, MaterialParams(curvature_variant="simplified"))
        ratio = 4.0 * np.cos(a * g.eta[0] / 2.0) ** 2
        assert e_full == pytest.approx(ratio * e_simp, rel=1e-12)

    def test_twist_magnitudes_second_order(self):
        # interior densities tend to 2 mu2 a^2 (full) and mu2 a^2 / 2
        # (simplified) as the grid refines
        a = 0.6
        for variant, limit in (("full", 2.0), ("simplified", 0.5)):
            p = MaterialParams(curvature_variant=variant)
            errs = []
            for d in (8, 16):
                g = build_grid((1.0, 1.0, 1.0), (d, 2, 2))
                st = self.twist_state(g, a)
                e = curvature_energy_at_node(st.rot,
                                             g.node_index(d // 2, 1, 1),
                                             g, p)
                errs.append(abs(e - limit * p.mu2 * a ** 2))
            assert errs[1] < 0.3 * errs[0]

    def test_negation_invariance(self):
        g = build_grid((1.0, 1.0, 1.0), (3, 3, 3))
        hist = PlasticHistory.zeros(g.num_nodes)
        for variant in ("full", "simplified"):
            p = MaterialParams(curvature_variant=variant)
            st = perturbed_state(g)
            e1 = total_energy(st, hist, g, p)
            st.rot = -st.rot
            assert total_energy(st, hist, g, p) == pytest.approx(e1,
                                                                 rel=1e-12)


class TestGradient:
    @pytest.mark.parametrize("variant", ["full", "simplified", "euler"])
    def test_matches_finite_differences(self, variant):
        mode = "euler" if variant == "euler" else "quaternion"
        g = build_grid((1.0, 1.0, 1.0), (3, 3, 3))
        lay = DofLayout.create(g, mode)
        st = perturbed_state(g, mode, scale=0.02)
        hist = PlasticHistory(gamma0=0.01 * RNG.standard_normal(g.num_nodes),
                              kappa0=-0.01 * RNG.random(g.num_nodes))
        p = MaterialParams(mu=2.0, lam=1.0, mu_c=3.0, mu2=0.5, rho=1.5,
                           sigma_y=0.2, curvature_variant=variant)
        grad = total_gradient(st, hist, g, p, lay)
        x0 = lay.pack(st)
        h = 1e-6
        slots = RNG.choice(lay.num_free, size=60, replace=False)
        for s in slots:
            xp, xm = x0.copy(), x0.copy()
            xp[s] += h
            xm[s] -= h
            ep = total_energy(lay.unpack(xp, st), hist, g, p)
            em = total_energy(lay.unpack(xm, st), hist, g, p)
            fd = (ep - em) / (2.0 * h)
            assert fd == pytest.approx(grad[s], rel=1e-6, abs=1e-8)

    def test_gradient_length(self):
        g = build_grid((1.0, 1.0, 1.0), (3, 3, 3))
        lay = DofLayout.create(g, "quaternion")
        st = perturbed_state(g)
        grad = total_gradient(st, PlasticHistory.zeros(g.num_nodes), g,
                              MaterialParams(), lay)
        assert grad.shape == (lay.num_free,)


class TestFailureModes:
    def test_non_finite_state_rejected(self):
        g = build_grid((1.0, 1.0, 1.0), (3, 3, 3))
        st = identity_state(g)
        st.phi[5, 1] = np.nan
        with pytest.raises(EnergyEvaluationError):
            total_energy(st, PlasticHistory.zeros(g.num_nodes), g,
                         MaterialParams())

    def test_positive_hardening_history_rejected(self):
        with pytest.raises(ValueError):
            PlasticHistory(gamma0=np.zeros(8), kappa0=np.full(8, 0.1))
