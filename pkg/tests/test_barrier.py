import numpy as np
import pytest

from crhomotopy import barrier, geometry
from crhomotopy.errors import ThetaUndefinedError
from oracles import loglog_fit


def off_manifold_point(model, rng, scale=0.1, level=0.02):
    zp = scale * (rng.standard_normal(model.tangential_dim)
                  + 1j * rng.standard_normal(model.tangential_dim))
    sig = rng.standard_normal(model.m)
    sig /= np.linalg.norm(sig)
    return model.graph_point(zp, scale * rng.standard_normal(model.m),
                             level * sig)


class TestGradientSection:
    def test_reduces_to_gradient_at_coincidence(self, primary, rng):
        z = off_manifold_point(primary, rng, level=0.0)
        q = barrier.gradient_section(primary, 0, z, z)
        assert np.allclose(q, -primary.holo_gradient(0, z))

    def test_taylor_identity_exact(self, primary, secondary, rng):
        # rho_k(zeta) - rho_k(z) + 2 Re F_k - levi_k(w) = 0 exactly
        for model in (primary, secondary):
            for _ in range(20):
                z = model.graph_point(
                    0.2 * (rng.standard_normal(model.tangential_dim)
                           + 1j * rng.standard_normal(model.tangential_dim)),
                    0.1 * rng.standard_normal(model.m))
                zeta = off_manifold_point(model, rng, scale=0.3, level=0.05)
                w = zeta - z
                for k in range(model.m):
                    q = barrier.gradient_section(model, k, zeta, z)
                    F = np.sum(q * w)
                    rho_z = model.defining_values(z)[0][k]
                    rho_zeta = model.defining_values(zeta)[0][k]
                    levi = np.einsum("i,ij,j->", w.conj(),
                                     _levi_single(model, k), w).real
                    resid = rho_zeta - rho_z + 2 * F.real - levi
                    assert abs(resid) < 1e-13 * max(1.0, abs(rho_zeta))


def _levi_single(model, k):
    form = np.zeros((model.n, model.n), dtype=complex)
    d = model.tangential_dim
    form[:d, :d] = model.levi_block(k)
    return form


class TestBarrierEval:
    def test_bilinear_consistency(self, primary, secondary, rng):
        for model in (primary, secondary):
            for _ in range(30):
                z = model.graph_point(
                    0.1 * rng.standard_normal(model.tangential_dim) + 0j,
                    0.05 * rng.standard_normal(model.m))
                zeta = off_manifold_point(model, rng)
                ev = barrier.evaluate_barrier(model, zeta, z)
                w = zeta - z
                assert abs(ev.P @ w - ev.Phi) < 1e-12 * max(1, abs(ev.Phi))
                assert abs(ev.theta @ ev.F + ev.script_A - ev.Phi) \
                    < 1e-12 * max(1, abs(ev.Phi))
                assert ev.script_A >= 0

    def test_theta_undefined_on_manifold(self, primary):
        z = np.zeros(5, dtype=complex)
        with pytest.raises(ThetaUndefinedError):
            barrier.evaluate_barrier(primary, z, z)

    def test_exact_expansion_identity(self, primary, secondary, rng):
        # Re Phi = rho/2 + levi/2 + correction, exactly, any pair
        for model in (primary, secondary):
            for _ in range(20):
                z = model.graph_point(
                    0.15 * rng.standard_normal(model.tangential_dim) + 0j,
                    np.zeros(model.m))
                zeta = off_manifold_point(model, rng, scale=0.2, level=0.03)
                ev = barrier.evaluate_barrier(model, zeta, z)
                w = zeta - z
                _, rho = model.defining_values(zeta)
                form = model.levi_form_full(ev.theta)
                levi = np.einsum("i,ij,j->", w.conj(), form, w).real
                resid = ev.Phi.real - (0.5 * float(rho) + 0.5 * levi
                                       + ev.script_A)
                assert abs(resid) < 1e-13 * max(1.0, abs(ev.Phi))

    def test_normal_approach_quotient_half(self, primary):
        # along the transverse direction the quotient tends to 1/2 (derived
        # from the exact expansion; the correction vanishes quadratically)
        z = np.zeros(5, dtype=complex)
        quotients = []
        corrections = []
        for eps in (1e-2, 1e-3, 1e-4):
            zeta = primary.graph_point(np.zeros(4), np.zeros(1),
                                       np.array([eps]))
            ev = barrier.evaluate_barrier(primary, zeta, z)
            _, rho = primary.defining_values(zeta)
            denom = float(rho) + np.sum(np.abs(zeta - z) ** 2)
            quotients.append(ev.Phi.real / denom)
            corrections.append(ev.script_A)
        assert abs(quotients[-1] - 0.5) < 1e-3
        assert corrections == [0.0, 0.0, 0.0]

    def test_no_correction_frame_case(self):
        model = geometry.ManifoldModel(
            n=4, m=2, q=2, hermitian=[np.diag([1.0, -1.0]),
                                      np.diag([-1.0, 1.0])])
        rng = np.random.default_rng(5)
        zeta = model.graph_point(0.1 * rng.standard_normal(2) + 0j,
                                 np.zeros(2), np.array([0.01, 0.02]))
        ev = barrier.evaluate_barrier(model, zeta, np.zeros(4, dtype=complex))
        assert ev.script_A == 0.0
        assert abs(ev.theta @ ev.F - ev.Phi) < 1e-14


class TestScalingProperties:
    def test_frame_pairings_scale_linearly(self, primary, rng):
        z = np.zeros(5, dtype=complex)
        base = off_manifold_point(primary, rng, scale=0.2, level=0.01)
        scales = np.geomspace(0.01, 0.5, 8)
        mags = []
        for s in scales:
            zeta = z + s * (base - z)
            # keep the level positive along the path
            ev = barrier.evaluate_barrier(primary, zeta, z)
            mags.append(np.max(np.abs(ev.A)) if ev.A.size else 0.0)
        slope = loglog_fit(scales, mags)
        assert slope > 0.95

    def test_variation_part_scales_linearly_at_fixed_level(self, secondary, rng):
        # the frame-variation coefficients vanish linearly in |zeta - z| at
        # fixed level radius
        z = np.zeros(6, dtype=complex)
        level = 0.05
        dirs = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        mags, scales = [], np.geomspace(0.02, 0.2, 6)
        for s in scales:
            zeta = secondary.graph_point(s * dirs, np.zeros(2),
                                         level * np.array([0.6, 0.8]))
            mu = barrier.split_correction_dbar(secondary, zeta, z)
            mags.append(np.max(np.abs(mu.mu_nu)))
        slope = loglog_fit(scales, mags)
        assert slope > 0.9


class TestLowerBoundAudit:
    def test_certified_positive(self, primary, secondary):
        for model in (primary, secondary):
            z = np.zeros(model.n, dtype=complex)
            rep = barrier.audit_barrier_bound(model, z, sample_count=10000,
                                              neighborhood_scale=0.1, seed=1)
            assert rep.passed and rep.c_hat > 0
            assert rep.c_hat_abs > 0

    def test_fresh_sample_consistency(self, primary):
        z = np.zeros(5, dtype=complex)
        train = barrier.audit_barrier_bound(primary, z, 10000, 0.1, seed=1)
        test = barrier.audit_barrier_bound(primary, z, 10000, 0.1, seed=2)
        assert test.c_hat > 0.5 * train.c_hat

    def test_broken_model_detected(self):
        broken = geometry.ManifoldModel(n=5, m=1, q=2,
                                        hermitian=[np.eye(4)])
        z = np.zeros(5, dtype=complex)
        rep = barrier.audit_barrier_bound(broken, z, 10000, 0.1, seed=1,
                                          include_correction=False)
        assert rep.c_hat <= 0
        assert not rep.passed


class TestExpansionAudit:
    def test_codim_one_exact(self, primary):
        v = np.zeros(5, dtype=complex)
        v[0] = 0.5 + 0.1j
        v[4] = 0.2 + 0.9j
        rep = barrier.audit_barrier_expansion(
            primary, np.zeros(5, dtype=complex), v,
            scales=np.geomspace(1e-3, 1e-1, 5))
        assert rep.exact

    @staticmethod
    def _generic_direction():
        # components in both coupling blocks so the level profile bends
        # and the direction field varies along the path
        v = np.zeros(6, dtype=complex)
        v[0] = 0.6 + 0.2j
        v[2] = 0.3 - 0.4j
        v[4] = 0.15 + 0.8j
        v[5] = 0.4j
        return v

    def test_generic_path_cubic_slope(self, secondary):
        rep = barrier.audit_barrier_expansion(
            secondary, np.zeros(6, dtype=complex), self._generic_direction(),
            scales=np.geomspace(3e-3, 1e-1, 6))
        assert not rep.exact
        assert rep.slope >= 2.8

    def test_straight_profile_path_exact_on_secondary(self, secondary):
        # a direction in the first coupling block leaves the level profile
        # straight, so the direction field is constant along the path and
        # the expansion identity is exact
        v = np.zeros(6, dtype=complex)
        v[0] = 0.6 + 0.2j
        v[4] = 0.15 + 0.8j
        v[5] = 0.4j
        rep = barrier.audit_barrier_expansion(
            secondary, np.zeros(6, dtype=complex), v,
            scales=np.geomspace(3e-3, 1e-1, 6))
        assert rep.exact


class TestCorrectionDbarSplit:
    def test_frozen_direction_kills_variation(self, secondary, rng):
        zeta = off_manifold_point(secondary, rng)
        z = np.zeros(6, dtype=complex)
        mu = barrier.split_correction_dbar(secondary, zeta, z,
                                           frozen_theta=np.array([1.0, 0.0]))
        assert np.max(np.abs(mu.mu_nu)) == 0.0

    def test_codim_one_variation_vanishes(self, primary, rng):
        zeta = off_manifold_point(primary, rng)
        mu = barrier.split_correction_dbar(primary, zeta,
                                           np.zeros(5, dtype=complex))
        assert np.max(np.abs(mu.mu_nu)) == 0.0

    def test_sum_matches_finite_difference(self, secondary, rng):
        # mu_tau + mu_nu ~ dbar of the conjugate pairing, second order in step
        zeta = off_manifold_point(secondary, rng, scale=0.15, level=0.05)
        z = np.zeros(6, dtype=complex)
        mu = barrier.split_correction_dbar(secondary, zeta, z)
        w = zeta - z

        def conj_pairing(pt):
            th = barrier.normal_direction(secondary, pt)
            rows = barrier.scaled_frame_rows(secondary, th)
            return (rows @ (pt - z)).conj()

        errs = []
        for step in (1e-4, 5e-5):
            fd = np.zeros_like(mu.mu_tau)
            for l in range(6):
                shifts = []
                for dz in (step, -step, 1j * step, -1j * step):
                    p = zeta.copy(); p[l] += dz
                    shifts.append(conj_pairing(p))
                fx = (shifts[0] - shifts[1]) / (2 * step)
                fy = (shifts[2] - shifts[3]) / (2 * step)
                fd[:, l] = 0.5 * (fx + 1j * fy)
            errs.append(np.max(np.abs(fd - (mu.mu_tau + mu.mu_nu))))
        assert errs[0] < 1e-5
        assert errs[1] < 0.5 * errs[0]
