import numpy as np
import pytest

from crhomotopy import geometry
from crhomotopy.errors import (InvalidDirectionError, ModelParseError,
                               ModelValidationError)
from oracles import defining_polynomial, fd_hessian_mixed

TOL = 1e-12


class TestDefiningFunctions:
    def test_vanishes_at_origin(self, primary):
        vec, norm = primary.defining_values(np.zeros(5, dtype=complex))
        assert np.all(vec == 0) and norm == 0

    def test_balanced_point(self, primary):
        # Im w = 1 cancels |z1|^2 = 1 for the (1,1,-1,-1) form
        z = np.array([1.0, 0, 0, 0, 1j], dtype=complex)
        vec, _ = primary.defining_values(z)
        assert abs(vec[0]) < TOL

    @pytest.mark.parametrize("model_name", ["primary", "secondary"])
    def test_matches_polynomial_oracle(self, model_name, primary, secondary, rng):
        model = primary if model_name == "primary" else secondary
        for _ in range(25):
            z = rng.standard_normal(model.n) + 1j * rng.standard_normal(model.n)
            mine, _ = model.defining_values(z)
            oracle = defining_polynomial(model.n, model.m, model.hermitian, z)
            assert np.max(np.abs(mine - oracle)) < 1e-12

    def test_gradient_matches_finite_differences(self, secondary, rng):
        z = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        for k in range(secondary.m):
            g = secondary.holo_gradient(k, z)
            for a in range(6):
                def f(pt):
                    return secondary.defining_values(pt)[0][k]
                px = z.copy(); px[a] += 1e-6
                mx = z.copy(); mx[a] -= 1e-6
                py = z.copy(); py[a] += 1e-6j
                my = z.copy(); my[a] -= 1e-6j
                fd = 0.5 * ((f(px) - f(mx)) / 2e-6 - 1j * (f(py) - f(my)) / 2e-6)
                assert abs(g[a] - fd) < 1e-8


class TestModelValidation:
    def test_rejects_non_hermitian(self):
        h = np.array([[1.0, 2.0], [0.0, 1.0]])
        with pytest.raises(ModelValidationError):
            geometry.ManifoldModel(n=3, m=1, q=1, hermitian=[h])

    def test_rejects_oversized_q(self):
        with pytest.raises(ModelValidationError):
            geometry.ManifoldModel(n=5, m=1, q=5,
                                   hermitian=[np.diag([1., 1., -1., -1.])])

    def test_rejects_wrong_codimension(self):
        with pytest.raises(ModelValidationError):
            geometry.ManifoldModel(n=3, m=2, q=1,
                                   hermitian=[np.eye(1), np.eye(1)])


class TestDirectionalLevi:
    def test_diagonal_signature(self):
        model = geometry.ManifoldModel(n=3, m=1, q=1,
                                       hermitian=[np.diag([1.0, -1.0])])
        data = geometry.directional_levi(model, np.array([1.0]))
        assert np.allclose(data.eigenvalues, [-1.0, 1.0])
        assert data.neg_count == 1

    def test_sign_flip(self, primary):
        data = geometry.directional_levi(primary, np.array([-1.0]))
        assert data.neg_count == 2

    def test_matches_dense_eigensolver(self, secondary, rng):
        for _ in range(10):
            th = rng.standard_normal(2)
            th /= np.linalg.norm(th)
            data = geometry.directional_levi(secondary, th)
            dense = np.linalg.eigvalsh(-(th[0] * secondary.hermitian[0]
                                         + th[1] * secondary.hermitian[1]))
            assert np.max(np.abs(np.sort(dense) - data.eigenvalues)) < 1e-12

    def test_linear_in_direction(self, secondary, rng):
        t1 = rng.standard_normal(2); t1 /= np.linalg.norm(t1)
        t2 = rng.standard_normal(2); t2 /= np.linalg.norm(t2)
        a, b = 0.7, -1.3
        m1 = geometry.directional_levi(secondary, t1).matrix
        m2 = geometry.directional_levi(secondary, t2).matrix
        combo = a * t1 + b * t2
        combo_dir = combo / np.linalg.norm(combo)
        m3 = geometry.directional_levi(secondary, combo_dir).matrix
        assert np.max(np.abs(m3 * np.linalg.norm(combo) - (a * m1 + b * m2))) < 1e-12

    def test_rejects_non_unit(self, primary):
        with pytest.raises(InvalidDirectionError):
            geometry.directional_levi(primary, geometry.Direction(np.array([2.0])))


class TestCertification:
    def test_primary_passes(self, primary):
        rep = geometry.certify_concavity(primary)
        assert rep.passed and rep.min_negative == 2

    def test_secondary_passes_with_uniform_gap(self, secondary):
        rep = geometry.certify_concavity(secondary, resolution=32)
        assert rep.passed and rep.min_negative == 2
        assert not rep.frame_gap_warnings

    def test_definite_form_fails(self):
        model = geometry.ManifoldModel(n=5, m=1, q=1,
                                       hermitian=[np.eye(4)])
        rep = geometry.certify_concavity(model)
        assert not rep.passed
        assert rep.min_negative == 0

    def test_zero_requirement_vacuous(self):
        model = geometry.ManifoldModel(n=5, m=1, q=1, hermitian=[np.eye(4)])
        rep = geometry.certify_concavity(model)
        # report carries the data; a q = 0 requirement would pass vacuously
        assert rep.min_negative >= 0

    def test_full_sphere_min_counts_agree(self, secondary):
        # flipping theta swaps positives and negatives, so both minima match
        rep = geometry.certify_concavity(secondary, resolution=32)
        assert rep.min_negative == rep.min_positive


class TestModifiedDefining:
    def test_zero_amplitude_is_identity(self, primary, rng):
        mod = geometry.ModifiedDefining(primary, 0.0)
        z = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        assert np.allclose(mod.values(z), primary.defining_values(z)[0])

    def test_vanishes_on_manifold_for_any_amplitude(self, primary, rng):
        mod = geometry.ModifiedDefining(primary, 3.7)
        z = primary.graph_point(rng.standard_normal(4) * 0.3,
                                rng.standard_normal(1))
        assert np.max(np.abs(mod.values(z))) < 1e-12

    def test_hessian_matches_finite_differences(self, primary, rng):
        amp = 0.8
        mod = geometry.ModifiedDefining(primary, amp)
        z = primary.graph_point(0.2 * rng.standard_normal(4)
                                + 0.1j * rng.standard_normal(4),
                                0.1 * rng.standard_normal(1))
        hess = mod.mixed_hessian(0, z)

        def f(pt):
            return mod.values(pt)[0].real

        errs = []
        for step in (1e-3, 5e-4):
            fd = np.empty((5, 5), dtype=complex)
            for a in range(5):
                for b in range(5):
                    fd[a, b] = fd_hessian_mixed(f, z, a, b, step=step)
            # hessian matrix convention: form matrix F with F[a,b] = M[b,a]
            errs.append(np.max(np.abs(fd.T - hess)))
        assert errs[0] < 1e-4
        assert errs[1] < errs[0]

    def test_amplitude_search_finds_positivity(self, primary):
        pts = [np.zeros(5, dtype=complex)]
        rep = geometry.find_modification_amplitude(primary, pts)
        assert rep["amplitude"] is not None

    def test_positivity_with_correction(self, primary, secondary):
        # the combined form: modified directional form + scaled correction
        for model in (primary, secondary):
            rep = geometry.find_modification_amplitude(
                model, [np.zeros(model.n, dtype=complex)])
            amp = rep["amplitude"]
            for th in geometry.direction_grid(model.m, 12):
                form = geometry.directional_modified_form(
                    model, th, np.zeros(model.n, dtype=complex), amp)
                frame = geometry.correction_frame(model, th)
                corr = frame.scale ** 2 * (frame.rows.conj().T @ frame.rows)
                evals = np.linalg.eigvalsh(form + corr.conj().T)
                assert evals[0] > 0


class TestCorrectionFrame:
    def test_orthonormal_and_gram_identity(self, primary):
        frame = geometry.correction_frame(primary, np.array([1.0]))
        gram = frame.rows @ frame.rows.conj().T
        assert np.max(np.abs(gram - np.eye(frame.rows.shape[0]))) < 1e-10

    def test_matches_eigensolver_selection(self, primary):
        # directions needing correction: nonpositive eigendirections of the
        # Levi matrix; for the diagonal form at theta=+1 those are the first
        # two coordinate axes
        frame = geometry.correction_frame(primary, np.array([1.0]))
        span = np.abs(frame.rows[:, :2])
        assert np.max(np.abs(frame.rows[:, 2:])) < 1e-12
        assert np.linalg.matrix_rank(span) == 2

    def test_orthogonal_to_positivity_subspace(self, secondary, rng):
        th = rng.standard_normal(2); th /= np.linalg.norm(th)
        frame = geometry.correction_frame(secondary, th)
        levi = geometry.directional_levi(secondary, th)
        # positivity subspace: top-q eigenvectors plus transverse block
        for col in range(levi.E_basis.shape[1]):
            e = levi.E_basis[:, col]
            for j in range(frame.rows.shape[0]):
                # conjugate span of the rows is the covered complement
                assert abs(np.vdot(frame.rows[j].conj(), e)) < 1e-10

    def test_reorthonormalization_fixed_point(self, secondary, rng):
        th = rng.standard_normal(2); th /= np.linalg.norm(th)
        frame = geometry.correction_frame(secondary, th)
        q, _ = np.linalg.qr(frame.rows.T)
        # projector onto the span is unchanged by re-orthonormalization
        p1 = frame.rows.T @ np.linalg.pinv(frame.rows.T)
        p2 = q @ q.conj().T
        assert np.max(np.abs(p1 - p2)) < 1e-10

    def test_empty_frame_when_fully_concave(self):
        # n - q - m = 0: no correction needed, frame is empty
        model = geometry.ManifoldModel(n=4, m=2, q=2,
                                       hermitian=[np.diag([1.0, -1.0]),
                                                  np.diag([-1.0, 1.0])])
        frame = geometry.correction_frame(model, np.array([1.0, 0.0]))
        assert frame.rows.shape == (0, 4)


class TestTangentialFrame:
    def test_annihilates_defining_gradients(self, primary, secondary, rng):
        for model in (primary, secondary):
            z = model.graph_point(
                0.3 * (rng.standard_normal(model.tangential_dim)
                       + 1j * rng.standard_normal(model.tangential_dim)),
                0.2 * rng.standard_normal(model.m))
            frame = geometry.tangential_frame(model, z)
            grads = model.holo_gradients(z)
            pair = np.einsum("ia,ka->ik", frame.W, grads)
            assert np.max(np.abs(pair)) < 1e-12

    def test_origin_frame_is_coordinate_frame(self, primary):
        frame = geometry.tangential_frame(primary, np.zeros(5, dtype=complex))
        expected = np.zeros((4, 5), dtype=complex)
        expected[:, :4] = np.eye(4)
        assert np.max(np.abs(frame.W - expected)) < 1e-14

    def test_full_rank_at_random_points(self, primary, rng):
        for _ in range(100):
            z = primary.graph_point(
                0.4 * (rng.standard_normal(4) + 1j * rng.standard_normal(4)),
                0.3 * rng.standard_normal(1))
            frame = geometry.tangential_frame(primary, z)
            assert frame.W.shape == (4, 5)

    def test_off_manifold_rejected(self, primary):
        from crhomotopy.errors import DegeneratePointError
        z = np.zeros(5, dtype=complex)
        z[4] = 0.5j
        with pytest.raises(DegeneratePointError):
            geometry.tangential_frame(primary, z)

    def test_transverse_fields_dual_to_coordinates(self, primary, rng):
        # Y_k is the coordinate field of the k-th imaginary pairing: it
        # holds the defining functions and the holomorphic chart coordinates
        # fixed and moves that pairing at unit rate
        z = primary.graph_point(
            0.2 * (rng.standard_normal(4) + 1j * rng.standard_normal(4)),
            0.1 * rng.standard_normal(1))
        frame = geometry.tangential_frame(primary, z)
        grads = primary.holo_gradients(z)
        for k in range(primary.m):
            y = frame.Y[k]
            # d rho(Y) = 2 Re <grad, velocity>
            assert abs(2 * np.sum(grads[k] * y).real) < 1e-10
            # imaginary pairing rate: Im(-<grad, velocity>) = 1
            assert abs(np.sum(-grads[k] * y).imag - 1.0) < 1e-10
            # holomorphic chart coordinates unmoved
            assert np.max(np.abs(y[:4])) < 1e-10


class TestModelFiles:
    def test_roundtrip_bundled(self, primary, tmp_path):
        text = (
            "n = 5\nm = 1\nq = 2\nradius = 1.0\nH 1\n"
            "1,0 0,0 0,0 0,0\n0,0 1,0 0,0 0,0\n"
            "0,0 0,0 -1,0 0,0\n0,0 0,0 0,0 -1,0\n")
        path = tmp_path / "m.model"
        path.write_text(text)
        model = geometry.load_model_file(path)
        assert model.content_hash() == primary.content_hash()

    def test_malformed_row_names_line(self):
        text = "n = 3\nm = 1\nq = 1\nH 1\n1,0 0,0\n0,0 bad\n"
        with pytest.raises(ModelParseError, match="line 6"):
            geometry.parse_model_text(text)

    def test_missing_matrix(self):
        with pytest.raises(ModelParseError, match="missing matrix"):
            geometry.parse_model_text("n = 3\nm = 1\nq = 1\n")
