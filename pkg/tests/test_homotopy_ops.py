import numpy as np
import pytest

from crhomotopy import fields, geometry
from crhomotopy._util import index_combinations
from crhomotopy.errors import CoverError, OutsideTubeError
from crhomotopy.fields import (BumpChart, CutoffPair, FormField, PolyChart,
                               ProductChart, ZeroChart, bundled_test_form,
                               extend_gradient_flow, extend_graph,
                               gradient_flow_projection, make_cutoff_pair,
                               project_tangential, tangential_dbar_values)
from crhomotopy.homotopy import (apply_operator, apply_operator_multi,
                                 glue_obstruction, glue_solution,
                                 identity_residual)
from crhomotopy.quadrature import QuadratureGrid


def centered_grid(model, z, eps=0.1, budget=3000, seed=7, **kw):
    zp, w = model.split(np.asarray(z, dtype=complex))
    return QuadratureGrid(model=model, epsilon=eps, budget=budget,
                          mode="mc-shell", seed=seed, center_zp=zp,
                          center_u=w.real, **kw)


class TestExtension:
    def test_restriction_identity(self, primary, rng):
        f = bundled_test_form(primary)
        ext = extend_graph(primary, f)
        z = primary.graph_point(
            0.2 * (rng.standard_normal(4) + 1j * rng.standard_normal(4)),
            0.1 * rng.standard_normal(1))
        assert np.allclose(f.values(primary, z[None, :]),
                           ext.values(primary, z[None, :]))

    def test_constant_along_defining_coordinates(self, primary, rng):
        f = bundled_test_form(primary)
        ext = extend_graph(primary, f)
        z = primary.graph_point(0.1 * np.ones(4) + 0j, np.zeros(1))
        step = 1e-4
        up = z.copy(); up[4] += 1j * step      # moves the level only
        dn = z.copy(); dn[4] -= 1j * step
        diff = ext.values(primary, up[None, :]) - ext.values(primary, dn[None, :])
        assert np.max(np.abs(diff)) < 1e-14

    def test_chart_coefficients_are_fixed_points(self, primary, rng):
        f = bundled_test_form(primary)
        z_off = primary.graph_point(0.1 * np.ones(4) + 0j, np.zeros(1),
                                    np.array([0.07]))
        ext = extend_graph(primary, f)
        assert np.allclose(f.values(primary, z_off[None, :]),
                           ext.values(primary, z_off[None, :]))

    def test_gradient_flow_projection_lands_on_manifold(self, primary, rng):
        z_off = primary.graph_point(
            0.3 * (rng.standard_normal(4) + 1j * rng.standard_normal(4)),
            0.2 * rng.standard_normal(1), np.array([0.09]))
        proj = gradient_flow_projection(primary, z_off)
        _, rho = primary.defining_values(proj)
        assert rho < 1e-10

    def test_two_extensions_agree_on_manifold(self, primary, rng):
        f = bundled_test_form(primary)
        ga = extend_graph(primary, f)
        gb = extend_gradient_flow(primary, f)
        z = primary.graph_point(0.15 * np.ones(4) + 0j, np.zeros(1))
        assert np.allclose(ga.values(primary, z[None, :]),
                           gb.values(primary, z[None, :]), atol=1e-10)


class TestProjection:
    def test_idempotent(self, primary, rng):
        z = primary.graph_point(0.2 * np.ones(4) + 0.1j, np.zeros(1))
        vals = rng.standard_normal((1, 5)) + 1j * rng.standard_normal((1, 5))
        once = project_tangential(primary, vals, z[None, :], 1)
        twice = project_tangential(primary, once, z[None, :], 1)
        assert np.max(np.abs(once - twice)) < 1e-10

    def test_kills_conjugate_normal_content(self, primary, rng):
        z = primary.graph_point(0.2 * np.ones(4) + 0.1j, np.zeros(1))
        # covector proportional to the conjugate defining differential
        normal = primary.holo_gradients(z)[0].conj()
        out = project_tangential(primary, normal[None, :], z[None, :], 1)
        assert np.max(np.abs(out)) < 1e-10
        # and wedges of it in degree two
        vals2 = np.zeros((1, len(index_combinations(5, 2))), dtype=complex)
        from crhomotopy.fields import wedge_covector_values
        other = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        vals2 = wedge_covector_values(5, 1, normal[None, :], other[None, :])
        out2 = project_tangential(primary, vals2, z[None, :], 2)
        assert np.max(np.abs(out2)) < 1e-10

    def test_degree_zero_identity(self, primary):
        z = np.zeros(5, dtype=complex)
        vals = np.array([3.5 + 1j])
        assert np.allclose(project_tangential(primary, vals, z, 0), vals)


class TestTangentialDbar:
    def test_constant_function_killed(self, primary):
        const = FormField(n=5, degree=0, components=[PolyChart(
            (4, 1), [(2.0, np.zeros(4), np.zeros(4), np.zeros(1))])])
        z = primary.graph_point(0.1 * np.ones(4) + 0j, np.zeros(1))
        out = tangential_dbar_values(primary, const, z[None, :])
        assert np.max(np.abs(out)) < 1e-14

    def test_cr_function_killed(self, primary):
        # restriction of the holomorphic coordinate w_1: u + i h(z')
        h_terms = []
        H = primary.hermitian[0]
        for i in range(4):
            for j in range(4):
                if H[i, j] != 0:
                    h_terms.append((1j * H[i, j], np.eye(1, 4, j)[0],
                                    np.eye(1, 4, i)[0], np.zeros(1)))
        h_terms.append((1.0, np.zeros(4), np.zeros(4), np.ones(1)))
        w1 = FormField(n=5, degree=0,
                       components=[PolyChart((4, 1), h_terms)])
        rng = np.random.default_rng(3)
        for _ in range(10):
            z = primary.graph_point(
                0.3 * (rng.standard_normal(4) + 1j * rng.standard_normal(4)),
                0.2 * rng.standard_normal(1))
            out = tangential_dbar_values(primary, w1, z[None, :])
            assert np.max(np.abs(out)) < 1e-12

    def test_square_vanishes_to_fd_tolerance(self, primary):
        f = bundled_test_form(primary)
        from crhomotopy.fields import tangential_dbar_field
        df = tangential_dbar_field(primary, f)
        z = primary.graph_point(0.12 * np.ones(4) + 0j, np.zeros(1))

        # second differential by finite differences of the first
        def df_vals(pts):
            return tangential_dbar_values(primary, f, pts)

        step = 1e-5
        n = 5
        out_combos = index_combinations(n, 3)
        acc = np.zeros(len(out_combos), dtype=complex)
        from crhomotopy._util import insert_index
        pos = {c: i for i, c in enumerate(out_combos)}
        base_combos = index_combinations(n, 2)
        for l in range(n):
            px = z.copy(); px[l] += step
            mx = z.copy(); mx[l] -= step
            py = z.copy(); py[l] += 1j * step
            my = z.copy(); my[l] -= 1j * step
            vals = [df_vals(p[None, :])[0] for p in (px, mx, py, my)]
            fx = (vals[0] - vals[1]) / (2 * step)
            fy = (vals[2] - vals[3]) / (2 * step)
            dbar_l = 0.5 * (fx + 1j * fy)
            for ci, J in enumerate(base_combos):
                sign, merged = insert_index(l, J)
                if sign:
                    acc[pos[merged]] += sign * dbar_l[ci]
        proj = project_tangential(primary, acc[None, :], z[None, :], 3)
        scale = max(1.0, float(np.max(np.abs(df_vals(z[None, :])))))
        assert np.max(np.abs(proj)) < 1e-3 * scale


class TestScalarDbar:
    def test_conjugate_frame_derivative_matches_analytic(self, primary):
        # dbar_M of an evaluable scalar via frame finite differences agrees
        # with the analytic ambient route for a chart polynomial
        from crhomotopy.homotopy import tangential_dbar_scalar
        poly = PolyChart((4, 1), [
            (1.0, np.eye(1, 4, 0)[0], np.eye(1, 4, 1)[0], np.zeros(1)),
            (0.5j, np.zeros(4), np.eye(1, 4, 2)[0], np.ones(1)),
        ])
        field = FormField(n=5, degree=0, components=[poly])
        z = primary.graph_point(np.array([0.1, -0.05, 0.2, 0.08]) + 0.03j,
                                np.array([0.04]))
        fd = tangential_dbar_scalar(
            primary, lambda p: complex(poly.value(primary, p)), z, step=1e-5)
        ambient = tangential_dbar_values(primary, field, z[None, :])[0]
        from crhomotopy.fields import tangential_components
        tan = tangential_components(primary, ambient[None, :], z[None, :], 1)[0]
        assert np.max(np.abs(fd - tan)) < 1e-8


class TestGrid:
    def test_nodes_on_level_set_exactly(self, primary):
        grid = centered_grid(primary, np.zeros(5, dtype=complex))
        for chunk in grid.chunks():
            _, rho = primary.defining_values(chunk.zeta)
            assert np.max(np.abs(rho - grid.epsilon)) < 1e-12
            break

    def test_outside_tube_rejected(self, primary):
        with pytest.raises(OutsideTubeError):
            QuadratureGrid(model=primary, epsilon=0.9, budget=100)

    def test_gauss_legendre_exactness(self, primary):
        grid = centered_grid(primary, np.zeros(5, dtype=complex))
        # the node count integrates t^(n-1) exactly on [0, 1]
        n = primary.n
        val = np.sum(grid.t_weights * grid.t_nodes ** (n - 1))
        assert abs(val - 1.0 / n) < 1e-14

    def test_uniform_weights_recover_box_volume(self, primary):
        grid = QuadratureGrid(model=primary, epsilon=0.1, budget=5000,
                              mode="mc-uniform", seed=1, box_radius=0.3)
        total = 0.0
        for chunk in grid.chunks():
            total += float(np.sum(chunk.weight))
        box_vol = (2 * 0.3) ** grid.param_dim * 2.0  # two sheets
        assert abs(total - box_vol) < 1e-9

    def test_flat_model_surface_area(self):
        # zero Hermitian form: the level sheets are flat, the surface factor
        # is one, so the measured area equals the parameter box area
        flat = geometry.ManifoldModel(n=3, m=1, q=1,
                                      hermitian=[np.zeros((2, 2))])
        grid = QuadratureGrid(model=flat, epsilon=0.1, budget=4000,
                              mode="mc-uniform", seed=2, box_radius=0.4)
        total = 0.0
        for chunk in grid.chunks():
            assert np.max(np.abs(chunk.surface_jac - 1.0)) < 1e-12
            total += float(np.sum(chunk.weight * chunk.surface_jac))
        assert abs(total - (2 * 0.4) ** 5 * 2) < 1e-9

    def test_shell_and_uniform_samplers_agree(self, primary):
        bump = BumpChart(np.zeros(4), np.zeros(1), 0.25, 0.45)

        def integral(grid):
            total = 0.0
            for chunk in grid.chunks():
                v = bump.value(primary, chunk.zeta).real
                total += float(np.sum(v * chunk.weight * chunk.surface_jac))
            return total

        uni = QuadratureGrid(model=primary, epsilon=0.1, budget=400000,
                             mode="mc-uniform", seed=1, box_radius=0.46)
        she = QuadratureGrid(model=primary, epsilon=0.1, budget=400000,
                             mode="mc-shell", seed=1, box_radius=0.7)
        a, b = integral(uni), integral(she)
        assert abs(a - b) < 0.08 * max(abs(a), abs(b))

    def test_cache_header_roundtrip(self, primary, tmp_path):
        grid = centered_grid(primary, np.zeros(5, dtype=complex))
        path = tmp_path / "grid.json"
        grid.save(path)
        loaded = QuadratureGrid.load(path, primary)
        assert loaded.header() == grid.header()

    def test_cache_rejects_other_model(self, primary, secondary, tmp_path):
        grid = centered_grid(primary, np.zeros(5, dtype=complex))
        path = tmp_path / "grid.json"
        grid.save(path)
        with pytest.raises(ValueError, match="different model"):
            QuadratureGrid.load(path, secondary)

    def test_dense_determinant_factorization(self, primary):
        # the dt row contributes exactly (-1)^n relative to the reduced
        # block determinant
        grid = centered_grid(primary, np.zeros(5, dtype=complex), budget=64)
        chunk = next(grid.chunks())
        from crhomotopy.homotopy import _det9_blocks
        det9 = _det9_blocks(chunk.velocity)
        n = primary.n
        i = 11
        for k in (0, 3):
            keep = [l for l in range(n) if l != k]
            size = 2 * n
            mat = np.zeros((size, size), dtype=complex)
            for j in range(2 * n - 1):
                c = chunk.velocity[i][:, j]
                for ri, l in enumerate(keep):
                    mat[ri, j] = np.conj(c[l])
                for ii in range(n):
                    mat[n + ii, j] = c[ii]
            mat[n - 1, 2 * n - 1] = 1.0
            dense = np.linalg.det(mat)
            assert abs(dense - (-1) ** n * det9[i, k]) < 1e-10 * abs(dense)


class TestOperators:
    def test_zero_form_gives_zero(self, primary):
        zero = FormField(n=5, degree=1, components=[ZeroChart()] * 5)
        z = np.zeros(5, dtype=complex)
        grid = centered_grid(primary, z, budget=500)
        res = apply_operator(primary, zero, z, grid, kind="solution")
        assert np.max(np.abs(res.ambient)) == 0.0

    def test_linearity_on_shared_grid(self, primary):
        f = bundled_test_form(primary)
        comps = [ZeroChart() for _ in range(5)]
        comps[1] = ProductChart(
            PolyChart((4, 1), [(0.5, np.zeros(4), np.zeros(4), np.zeros(1))]),
            BumpChart(np.zeros(4), np.zeros(1), 0.25, 0.45))
        g = FormField(n=5, degree=1, components=comps)
        combo = FormField(n=5, degree=1, components=[
            fields.SumChart(fields.ScaledChart(a, 2.0), b)
            for a, b in zip(f.components, g.components)])
        z = primary.graph_point(np.array([0.05, -0.03, 0.02, 0.0]),
                                np.array([0.01]))
        grid = centered_grid(primary, z, budget=2000)
        rf = apply_operator(primary, f, z, grid).ambient
        rg = apply_operator(primary, g, z, grid).ambient
        rc = apply_operator(primary, combo, z, grid).ambient
        assert np.max(np.abs(rc - (2.0 * rf + rg))) < 1e-12 * max(
            1.0, np.max(np.abs(rc)))

    def test_obstruction_vanishes_pointwise(self, primary):
        f = bundled_test_form(primary)
        z = primary.graph_point(np.array([0.05, -0.03, 0.02, 0.0]),
                                np.array([0.01]))
        grid = centered_grid(primary, z, budget=2000)
        res = apply_operator(primary, f, z, grid, kind="obstruction")
        assert np.max(np.abs(res.ambient)) < 1e-20

    def test_obstruction_vanishes_with_varying_frames(self, secondary):
        # codimension two: the direction field and the frame genuinely vary
        # over the level set, and the kernel still degenerates pointwise
        f = bundled_test_form(secondary)
        z = secondary.graph_point(np.array([0.05, -0.03, 0.02, 0.0]),
                                  np.array([0.01, -0.01]))
        zp, w0 = secondary.split(z)
        grid = QuadratureGrid(model=secondary, epsilon=0.08, budget=2000,
                              mode="mc-shell", seed=5, center_zp=zp,
                              center_u=w0.real)
        res = apply_operator(secondary, f, z, grid, kind="obstruction")
        assert np.max(np.abs(res.ambient)) < 1e-12

    def test_determinism_bit_identical(self, primary):
        f = bundled_test_form(primary)
        z = primary.graph_point(np.array([0.05, -0.03, 0.02, 0.0]),
                                np.array([0.01]))
        grid = centered_grid(primary, z, budget=2000)
        a = apply_operator(primary, f, z, grid).ambient
        b = apply_operator(primary, f, z, grid).ambient
        assert np.array_equal(a, b)

    def test_multi_matches_single(self, primary):
        f = bundled_test_form(primary)
        z1 = primary.graph_point(np.array([0.05, -0.03, 0.02, 0.0]),
                                 np.array([0.01]))
        z2 = primary.graph_point(np.array([-0.02, 0.04, 0.0, 0.03]),
                                 np.array([-0.02]))
        grid = centered_grid(primary, z1, budget=1500)
        multi = apply_operator_multi(primary, f, [z1, z2], grid)
        single1 = apply_operator(primary, f, z1, grid)
        single2 = apply_operator(primary, f, z2, grid)
        assert np.array_equal(multi[0].ambient, single1.ambient)
        assert np.array_equal(multi[1].ambient, single2.ambient)


class TestGlue:
    def test_partition_check(self, primary):
        pair = make_cutoff_pair(np.zeros(4), np.zeros(1), 0.5, 0.6)
        pts = primary.graph_point(
            0.1 * np.stack([np.ones(4), -np.ones(4)]).astype(complex),
            np.zeros((2, 1)))
        assert fields.partition_defect(primary, [pair], pts) < 1e-12

    def test_invalid_pair_rejected(self):
        with pytest.raises(CoverError):
            CutoffPair(inner=BumpChart(np.zeros(4), np.zeros(1), 0.3, 0.5),
                       outer=BumpChart(np.zeros(4), np.zeros(1), 0.4, 0.6))

    def test_single_cover_reduces_to_local(self, primary):
        f = bundled_test_form(primary)
        pair = make_cutoff_pair(np.zeros(4), np.zeros(1), 0.5, 0.6)
        z = primary.graph_point(np.array([0.05, -0.03, 0.02, 0.0]),
                                np.array([0.01]))
        grid = centered_grid(primary, z, budget=2000)
        glued = glue_solution(primary, [pair], f, z, [grid])
        local = apply_operator(primary, f, z, grid).ambient
        # inner cutoff is 1 on the support, outer is 1 at z
        assert np.max(np.abs(glued - local)) < 1e-12 * max(
            1.0, np.max(np.abs(local)))
        hglued = glue_obstruction(primary, [pair], f, z, [grid])
        assert np.max(np.abs(hglued)) < 1e-10

    def test_two_covers_match_single_cover(self, primary):
        f = bundled_test_form(primary, r_in=0.2, r_out=0.35)
        z = primary.graph_point(np.array([0.03, -0.02, 0.01, 0.0]),
                                np.array([0.0]))
        # partition: inner bump + complementary remainder under a wide bump
        b1 = BumpChart(np.zeros(4), np.zeros(1), 0.12, 0.3)
        wide = BumpChart(np.zeros(4), np.zeros(1), 0.4, 0.55)

        class Complement(fields.ChartFunction):
            def value(self, model, pt):
                return (1.0 - b1.value(model, pt)) * wide.value(model, pt)

            def d_zbar(self, model, pt):
                return (-b1.d_zbar(model, pt) * wide.value(model, pt)[..., None]
                        + (1.0 - b1.value(model, pt))[..., None]
                        * wide.d_zbar(model, pt))

        c1 = CutoffPair(inner=b1,
                        outer=BumpChart(np.zeros(4), np.zeros(1), 0.3, 0.45))
        # wrap the complement as an inner cutoff with matching outer bump
        comp = Complement()
        c2 = type("Pair", (), {})()
        c2.inner = comp
        c2.outer = BumpChart(np.zeros(4), np.zeros(1), 0.55, 0.75)
        pts = primary.graph_point(
            (0.1 * np.stack([np.ones(4), -0.5 * np.ones(4)])).astype(complex),
            np.zeros((2, 1)))
        total = b1.value(primary, pts).real + comp.value(primary, pts).real
        assert np.max(np.abs(total - 1.0)) < 1e-12

        grid = centered_grid(primary, z, budget=60000, seed=5)
        glued = glue_solution(primary, [c1, c2], f, z, [grid, grid])
        local = apply_operator(primary, f, z, grid).ambient
        denom = max(np.max(np.abs(local)), 1e-6)
        assert np.max(np.abs(glued - local)) < 0.05 * denom


class TestGluedIdentity:
    def test_glued_operators_satisfy_identity_budget(self, primary):
        # the glued solution/obstruction pair reproduces the test form at the
        # same tolerance budget as the local run at this rung
        from crhomotopy.homotopy import (_analytic_dbar_field,
                                         assemble_conjugate_frame_derivative,
                                         conjugate_frame_stencil)
        from crhomotopy.fields import tangential_components
        f = bundled_test_form(primary)
        z = primary.graph_point(np.array([0.05, -0.03, 0.02, 0.0]),
                                np.array([0.01]))
        pair = make_cutoff_pair(np.zeros(4), np.zeros(1), 0.5, 0.6)
        grid = centered_grid(primary, z, eps=0.1, budget=20000, seed=31,
                             box_radius=0.8)
        step = 2e-4
        stencil = conjugate_frame_stencil(primary, z, step)
        vals = [complex(glue_solution(primary, [pair], f, p, [grid])[0])
                for p in stencil]
        dbar_r1 = assemble_conjugate_frame_derivative(vals, 4, step)
        r2 = glue_solution(primary, [pair], _analytic_dbar_field(primary, f),
                           z, [grid])
        r2_tan = tangential_components(primary, r2[None, :], z[None, :], 1)[0]
        h_tan = tangential_components(
            primary, glue_obstruction(primary, [pair], f, z, [grid])[None, :],
            z[None, :], 1)[0]
        f_tan = tangential_components(primary, f.values(primary, z[None, :]),
                                      z[None, :], 1)[0]
        resid = float(np.max(np.abs(f_tan - dbar_r1 - r2_tan - h_tan)))
        assert resid < 0.8 * float(np.max(np.abs(f_tan)))


class TestIdentityLadder:
    def test_residual_small_budget(self, primary):
        f = bundled_test_form(primary)
        z = primary.graph_point(np.array([0.05, -0.03, 0.02, 0.0]),
                                np.array([0.01]))
        rows = identity_residual(primary, f, [z], epsilon=0.1, budget=8000,
                                 seed=11, box_radius=0.8)
        assert rows[0].residual < 0.8 * rows[0].f_norm

    def test_rejection_error_on_degenerate_phase(self, primary):
        # an uncertified sign-flipped model drives the phase through zero
        broken = geometry.ManifoldModel(n=5, m=1, q=2, hermitian=[np.eye(4)])
        f = bundled_test_form(broken)
        z = broken.graph_point(np.array([0.01, 0.0, 0.0, 0.0]),
                               np.array([0.0]))
        from crhomotopy.errors import GridTooCoarseError
        zp, w = broken.split(z)
        grid = QuadratureGrid(model=broken, epsilon=0.005, budget=3000,
                              mode="mc-shell", seed=2, center_zp=zp,
                              center_u=w.real, box_radius=0.8)
        try:
            apply_operator(broken, f, z, grid, kind="solution")
        except GridTooCoarseError:
            pass  # acceptable outcome: rejection rate exceeded
