"""Solution and obstruction operators by oriented surface quadrature.

The solution operator integrates the interpolated kernel over the level set
times the unit interval; the obstruction operator integrates the pure barrier
kernel over the level set.  Both pull the integrand form back through the
level-set parameterization: the form is contracted against the velocity
columns of each node, which reduces every monomial to a complex determinant.

Determinant factorization per node: functional rows are ordered
[dzetabar block (one index missing) | dzeta block | dt last].  The dt row
pairs only with the unit-interval direction, contributing a fixed sign
(-1)^n after being moved past the dzeta block; the remaining (2n-1) square
block is the per-node determinant det9[k].  This factorization is validated
against a dense determinant in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import factorial

import numpy as np

from . import barrier as _barrier
from ._util import (RunningSum, det5_cols, index_combinations,
                    merge_sorted, small_det)
from .errors import GridTooCoarseError
from .fields import (FormField, project_tangential, tangential_components,
                     wedge_covector_values)
from .geometry import ManifoldModel
from .quadrature import QuadratureGrid

PHASE_REJECT_FACTOR = 1e-10
REJECT_LIMIT = 0.01


# ---------------------------------------------------------------------------
# batched section jets
# ---------------------------------------------------------------------------

def _bm_jets(zetas, z):
    """Euclidean section values/jets over a batch: eta, beta[k,l], gamma[k,l]."""
    w = zetas - z[None, :]
    S = np.sum(np.abs(w) ** 2, axis=1)
    n = w.shape[1]
    eye = np.eye(n)
    outer = np.einsum("Nk,Nl->Nkl", w.conj(), w)
    inv_s = 1.0 / S
    inv_s2 = inv_s ** 2
    eta = w.conj() * inv_s[:, None]
    beta = -eye[None, :, :] * inv_s[:, None, None] + outer * inv_s2[:, None, None]
    gamma = -beta
    return eta, beta, gamma


def _barrier_section_jets(model, zetas, z):
    """Barrier section values/jets over a batch (eta, beta, gamma, phi).

    The returned phi is the raw phase (rejection decisions use it); the
    divisions are floored away from exact zero so a rejected node cannot
    poison the chunk with non-finite values.
    """
    jets = _barrier.barrier_jets(model, zetas, z)
    phi = jets.Phi
    phi_safe = np.where(np.abs(phi) < 1e-300, 1.0, phi)
    inv = 1.0 / phi_safe
    inv2 = inv ** 2
    eta = jets.P * inv[:, None]
    # beta[k, l] = dP[l, k]/phi - P[k] dphi[l]/phi^2
    beta = (np.swapaxes(jets.dP_dzbar, 1, 2) * inv[:, None, None]
            - np.einsum("Nk,Nl->Nkl", jets.P, jets.dPhi_dzbar)
            * inv2[:, None, None])
    gamma = (np.swapaxes(jets.dP_dzetabar, 1, 2) * inv[:, None, None]
             - np.einsum("Nk,Nl->Nkl", jets.P, jets.dPhi_dzetabar)
             * inv2[:, None, None])
    return eta, beta, gamma, phi


# ---------------------------------------------------------------------------
# coefficient assembly plans
# ---------------------------------------------------------------------------

def _component_coefficients(eta, beta, gamma, tau, r_out, with_dt):
    """Batched coefficients of the degree-r_out determinant form.

    The coefficient of the monomial (dzbar tuple L, dzetabar tuple M, dt
    last) is the single n x n determinant with columns

        [eta | beta columns for L | gamma columns for M | tau],

    the concrete column selection of the section determinant.  Returns
    (Lout_combos, M_combos, coef) with coef of shape (N, nLout, nM).
    """
    N, n = eta.shape
    Lout_combos = index_combinations(n, r_out)
    s = n - 1 - r_out
    M_combos = index_combinations(n, s - 1 if with_dt else s)
    coef = np.empty((N, len(Lout_combos), len(M_combos)), dtype=complex)
    for li, L in enumerate(Lout_combos):
        for mi, M in enumerate(M_combos):
            cols = [eta]
            cols.extend(beta[:, :, l] for l in L)
            cols.extend(gamma[:, :, m] for m in M)
            if with_dt:
                cols.append(tau)
            coef[:, li, mi] = _det_from_cols(cols)
    return Lout_combos, M_combos, coef


def _det_from_cols(cols):
    if len(cols) == 5:
        return det5_cols(cols)
    return small_det(np.stack(cols, axis=-1))


def _contraction_table(n, field_degree, M_combos):
    """Sign table for g_J dzbar..._M monomials against the missing-index
    determinants: entries (k, J_idx, M_idx, sign)."""
    J_combos = index_combinations(n, field_degree)
    J_pos = {c: i for i, c in enumerate(J_combos)}
    M_pos = {c: i for i, c in enumerate(M_combos)}
    table = []
    for k in range(n):
        comp = tuple(i for i in range(n) if i != k)
        for J in combinations(comp, field_degree):
            M = tuple(i for i in comp if i not in J)
            if M not in M_pos:
                continue
            sign, _ = merge_sorted(J, M)
            table.append((k, J_pos[J], M_pos[M], sign))
    return table


# ---------------------------------------------------------------------------
# kernel application
# ---------------------------------------------------------------------------

@dataclass
class OperatorResult:
    """Quadrature value of an operator at one evaluation point."""

    ambient: np.ndarray          # coefficients over increasing tuples
    degree: int
    rejected: int
    total_nodes: int

    def tangential(self, model, z):
        return tangential_components(model, self.ambient[None, :], z,
                                     self.degree)[0]

    def projected(self, model, z):
        return project_tangential(model, self.ambient[None, :], z,
                                  self.degree)[0]


def _det9_blocks(velocity):
    """Per-node determinants of the functional rows with one dzetabar index
    removed, shape (N, n)."""
    N, n, cols = velocity.shape
    conj_rows = velocity.conj()
    out = np.empty((N, n), dtype=complex)
    for k in range(n):
        keep = [l for l in range(n) if l != k]
        mat = np.concatenate([conj_rows[:, keep, :], velocity], axis=1)
        out[:, k] = np.linalg.det(mat)
    return out


def apply_operator_multi(model: ManifoldModel, field: FormField, z_list,
                         grid: QuadratureGrid, kind: str = "solution",
                         extension=None):
    """Evaluate the operator at several points over one shared node stream.

    Node geometry (velocities, orientation, per-node determinants) and the
    form coefficients are evaluation-point independent and are computed once
    per chunk; only the section jets and coefficient determinants vary with
    the point.  Returns a list of :class:`OperatorResult`.
    """
    z_list = [np.asarray(z, dtype=complex) for z in z_list]
    n = model.n
    r = field.degree
    if kind == "solution":
        if not 1 <= r:
            raise ValueError("solution operator needs input degree >= 1")
        r_out = r - 1
    elif kind == "obstruction":
        r_out = r
    else:
        raise ValueError(f"unknown kind {kind!r}")
    if r_out > n - 1:
        raise ValueError("output degree exceeds the form bound")

    Lout_combos = index_combinations(n, r_out)
    nL = len(Lout_combos)
    accums = [RunningSum(shape=(nL,)) for _ in z_list]
    rejected = [0] * len(z_list)
    total = 0
    table = None
    sign_cross = (-1.0) ** (r * r_out)
    # (-1)^n moves the dt row past the dzeta block; the extra flip realizes
    # the interval-first product orientation, calibrated once against the
    # reproduction identity (see tests)
    dt_sign = -((-1.0) ** n)
    project = extension if extension is not None else model.project_to_manifold

    for chunk in grid.chunks():
        N = chunk.zeta.shape[0]
        total += N
        g_vals = field.values(model, project(chunk.zeta))   # (N, nJ)
        live = np.any(g_vals != 0, axis=1)
        if not np.any(live):
            for acc in accums:
                acc.add(np.zeros(nL, dtype=complex))
            continue
        det9 = _det9_blocks(chunk.velocity)                  # (N, n)
        base_w = chunk.weight * chunk.orient
        gw = g_vals * base_w[:, None]

        for zi, z in enumerate(z_list):
            if kind == "solution":
                eta0, beta0, gamma0 = _bm_jets(chunk.zeta, z)
                eta1, beta1, gamma1, phi = _barrier_section_jets(
                    model, chunk.zeta, z)
                bad = np.abs(phi) < PHASE_REJECT_FACTOR * grid.epsilon
                rejected[zi] += int(np.sum(bad & live))
                keep = ~bad
                tau = eta1 - eta0
                chunk_total = np.zeros(nL, dtype=complex)
                for t, t_wt in zip(grid.t_nodes, grid.t_weights):
                    eta_t = (1 - t) * eta0 + t * eta1
                    beta_t = (1 - t) * beta0 + t * beta1
                    gamma_t = (1 - t) * gamma0 + t * gamma1
                    Lc, Mc, coef = _component_coefficients(
                        eta_t, beta_t, gamma_t, tau, r_out, with_dt=True)
                    if table is None:
                        table = _contraction_table(n, r, Mc)
                    scale = sign_cross * dt_sign * t_wt
                    for li in range(nL):
                        contrib = np.zeros(N, dtype=complex)
                        for k, j_idx, m_idx, sgn in table:
                            contrib += sgn * gw[:, j_idx] \
                                * coef[:, li, m_idx] * det9[:, k]
                        chunk_total[li] += scale * np.sum(contrib * keep)
                accums[zi].add(chunk_total)
            else:
                eta1, beta1, gamma1, phi = _barrier_section_jets(
                    model, chunk.zeta, z)
                bad = np.abs(phi) < PHASE_REJECT_FACTOR * grid.epsilon
                rejected[zi] += int(np.sum(bad & live))
                keep = ~bad
                Lc, Mc, coef = _component_coefficients(
                    eta1, beta1, gamma1, None, r_out, with_dt=False)
                if table is None:
                    table = _contraction_table(n, r, Mc)
                chunk_total = np.zeros(nL, dtype=complex)
                for li in range(nL):
                    contrib = np.zeros(N, dtype=complex)
                    for k, j_idx, m_idx, sgn in table:
                        contrib += sgn * gw[:, j_idx] \
                            * coef[:, li, m_idx] * det9[:, k]
                    chunk_total[li] += sign_cross * np.sum(contrib * keep)
                accums[zi].add(chunk_total)

    prefactor = (-1.0) ** r * factorial(n - 1) / (2.0j * np.pi) ** n
    out = []
    for zi in range(len(z_list)):
        if rejected[zi] > REJECT_LIMIT * max(total, 1):
            raise GridTooCoarseError(
                f"{rejected[zi]}/{total} nodes rejected near the phase "
                f"singularity at point {zi}")
        out.append(OperatorResult(ambient=prefactor * accums[zi].total(),
                                  degree=r_out, rejected=rejected[zi],
                                  total_nodes=total))
    return out


def apply_operator(model: ManifoldModel, field: FormField, z,
                   grid: QuadratureGrid, kind: str = "solution",
                   extension=None) -> OperatorResult:
    """Evaluate the solution (interpolated kernel, with t-integral) or
    obstruction (pure barrier kernel) operator at a single point."""
    return apply_operator_multi(model, field, [z], grid, kind=kind,
                                extension=extension)[0]


# ---------------------------------------------------------------------------
# tangential derivative of quadrature-backed scalars
# ---------------------------------------------------------------------------

def tangential_dbar_scalar(model: ManifoldModel, scalar_fn, z,
                           step: float = 1e-4):
    """Components of dbar_M u against the conjugate tangent frame.

    u is any function evaluable near the manifold (values are taken at graph
    projections, matching the graph-constant extension).  The conjugate frame
    derivative is assembled from two real directional derivatives per frame
    vector: Wbar = (U + iV)/2 with U, V the real and rotated frame flows.
    """
    from .geometry import holomorphic_tangent_rows
    z = np.asarray(z, dtype=complex)
    rows = holomorphic_tangent_rows(model, z)  # velocities of the real parts
    d = model.tangential_dim
    out = np.empty(d, dtype=complex)
    for i in range(d):
        a = rows[i]
        du = (scalar_fn(model.project_to_manifold(z + step * a))
              - scalar_fn(model.project_to_manifold(z - step * a))) / (2 * step)
        dv = (scalar_fn(model.project_to_manifold(z + step * 1j * a))
              - scalar_fn(model.project_to_manifold(z - step * 1j * a))) / (2 * step)
        out[i] = 0.5 * (du + 1j * dv)
    return out


# ---------------------------------------------------------------------------
# partition-of-unity gluing
# ---------------------------------------------------------------------------

def glue_solution(model: ManifoldModel, covers, field: FormField, z,
                  grids) -> np.ndarray:
    """Global solution operator: sum of outer-cutoff-weighted local operators
    applied to inner-cutoff localizations.  Returns ambient coefficients of
    degree r-1."""
    z = np.asarray(z, dtype=complex)
    out = None
    for pair, grid in zip(covers, grids):
        local = apply_operator(model, field.scaled_by(pair.inner), z, grid,
                               kind="solution")
        weight = complex(pair.outer.value(model, z[None, :])[0])
        term = weight * local.ambient
        out = term if out is None else out + term
    return out


def glue_obstruction(model: ManifoldModel, covers, field: FormField, z,
                     grids) -> np.ndarray:
    """Global obstruction operator: cutoff-derivative term, localized
    differential term, and local obstruction term for each cover."""
    z = np.asarray(z, dtype=complex)
    r = field.degree
    out = np.zeros(len(index_combinations(model.n, r)), dtype=complex)
    for pair, grid in zip(covers, grids):
        localized = field.scaled_by(pair.inner)
        sol = apply_operator(model, localized, z, grid, kind="solution")
        # - dbar(outer cutoff) wedge R(inner * f)
        cov = pair.outer.d_zbar(model, z[None, :])[0]
        out -= wedge_covector_values(model.n, r - 1, cov[None, :],
                                     sol.ambient[None, :])[0]
        # + outer * R_{r+1}(dbar(inner) wedge f)
        dbar_inner = _cutoff_wedge_field(model, pair.inner, field)
        rplus = apply_operator(model, dbar_inner, z, grid, kind="solution")
        weight = complex(pair.outer.value(model, z[None, :])[0])
        out += weight * rplus.ambient
        # + outer * H(inner * f)
        obs = apply_operator(model, localized, z, grid, kind="obstruction")
        out += weight * obs.ambient
    return out


def _cutoff_wedge_field(model, cutoff, field: FormField) -> FormField:
    """(dbar cutoff) wedge field as an evaluable form field of degree r+1."""
    from .fields import CallableChart
    out_combos = index_combinations(model.n, field.degree + 1)

    def component(idx):
        def fn(z):
            cov = cutoff.d_zbar(model, z)
            vals = field.values(model, z)
            return wedge_covector_values(model.n, field.degree, cov,
                                         vals)[..., idx]
        return CallableChart(fn)

    return FormField(n=model.n, degree=field.degree + 1,
                     components=[component(i) for i in range(len(out_combos))],
                     support="cutoff")


# ---------------------------------------------------------------------------
# homotopy identity residual
# ---------------------------------------------------------------------------

@dataclass
class ResidualRow:
    point_index: int
    epsilon: float
    budget: int
    residual: float
    f_norm: float
    components: dict


def conjugate_frame_stencil(model: ManifoldModel, z, step: float):
    """Stencil points for the conjugate-frame derivative of an on-manifold
    scalar: 4 graph-projected shifts per frame direction."""
    from .geometry import holomorphic_tangent_rows
    z = np.asarray(z, dtype=complex)
    rows = holomorphic_tangent_rows(model, z)
    points = []
    for i in range(model.tangential_dim):
        a = rows[i]
        for shift in (step * a, -step * a, step * 1j * a, -step * 1j * a):
            points.append(model.project_to_manifold(z + shift))
    return points


def assemble_conjugate_frame_derivative(values, d, step: float):
    """Wbar_i(u) = (D_a u + i D_{ia} u) / 2 from stencil values ordered as
    produced by :func:`conjugate_frame_stencil`."""
    out = np.empty(d, dtype=complex)
    for i in range(d):
        va, vam, vb, vbm = values[4 * i: 4 * i + 4]
        du = (va - vam) / (2.0 * step)
        dv = (vb - vbm) / (2.0 * step)
        out[i] = 0.5 * (du + 1j * dv)
    return out


def identity_residual(model: ManifoldModel, field: FormField, z_points,
                      epsilon: float, budget: int, seed: int = 0,
                      box_radius: float = 0.7, fd_step: float = None,
                      extension=None):
    """Residual of f = dbar_M R_1 f + R_2 dbar_M f at the given points.

    The first term differentiates the quadrature-backed scalar through the
    conjugate frame, with all stencil evaluations sharing one node stream;
    the second term integrates the analytic differential of the test form.
    The obstruction term vanishes pointwise for input degree below the
    concavity parameter and is not assembled here.
    """
    if field.degree != 1:
        raise ValueError("identity residual is implemented for (0,1) inputs")
    if fd_step is None:
        fd_step = 2e-3 * epsilon
    dbar_field = _analytic_dbar_field(model, field)
    d = model.tangential_dim
    rows = []
    for idx, z in enumerate(z_points):
        z = np.asarray(z, dtype=complex)
        zp, w = model.split(z)
        grid = QuadratureGrid(model=model, epsilon=epsilon, budget=budget,
                              mode="mc-shell", seed=seed + idx,
                              center_zp=zp, center_u=w.real,
                              box_radius=box_radius)
        stencil = conjugate_frame_stencil(model, z, fd_step)
        results = apply_operator_multi(model, field, stencil, grid,
                                       kind="solution", extension=extension)
        values = [complex(res.ambient[0]) for res in results]
        dbar_r1_tan = assemble_conjugate_frame_derivative(values, d, fd_step)
        r2 = apply_operator(model, dbar_field, z, grid, kind="solution",
                            extension=extension)
        r2_tan = r2.tangential(model, z)
        f_tan = tangential_components(model, field.values(model, z[None, :]),
                                      z[None, :], 1)[0]
        resid = f_tan - dbar_r1_tan - r2_tan
        rows.append(ResidualRow(
            point_index=idx, epsilon=epsilon, budget=budget,
            residual=float(np.max(np.abs(resid))),
            f_norm=float(np.max(np.abs(f_tan))),
            components={
                "f_tan": f_tan.tolist(),
                "dbar_r1_tan": dbar_r1_tan.tolist(),
                "r2_tan": r2_tan.tolist(),
            }))
    return rows


def _analytic_dbar_field(model, field: FormField) -> FormField:
    """Ambient differential of a chart-coefficient field as a FormField."""
    from .fields import CallableChart
    out_combos = index_combinations(model.n, field.degree + 1)

    def component(idx):
        def fn(z):
            return field.dbar_values(model, z)[..., idx]
        return CallableChart(fn)

    return FormField(n=model.n, degree=field.degree + 1,
                     components=[component(i) for i in range(len(out_combos))],
                     support=field.support)
