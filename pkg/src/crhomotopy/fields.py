"""Differential form fields on the model chart.

Coefficients are "chart functions": functions of (z', conj z', Re w) only.
Such functions are invariant under the graph extension (coefficients constant
along the defining coordinates), so extending a form off the manifold is the
identity on this representation, and ambient Wirtinger jets are analytic for
the polynomial-times-bump test coefficients.

Forms are stored by ambient antiholomorphic components over strictly
increasing index tuples; tangential content is extracted by contraction with
the conjugate tangent frame (the projection to tangential forms).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import index_combinations, insert_index, small_det
from .errors import CoverError, DerivativeOrderError
from .geometry import ManifoldModel, holomorphic_tangent_rows


# ---------------------------------------------------------------------------
# chart functions
# ---------------------------------------------------------------------------

class ChartFunction:
    """Function of the chart parameters (z', conj z', Re w).

    Subclasses provide ``value`` and ambient Wirtinger jets ``d_z`` /
    ``d_zbar`` of shape (..., n).  Independence of Im w makes every chart
    function its own graph extension.
    """

    def value(self, model, z):
        raise NotImplementedError

    def d_z(self, model, z):
        raise NotImplementedError

    def d_zbar(self, model, z):
        raise NotImplementedError


def _chart_params(model, z):
    zp, w = model.split(np.asarray(z, dtype=complex))
    return zp, w.real


class PolyChart(ChartFunction):
    """Polynomial in (z'_i, conj z'_i, u_k); terms are
    (coeff, z_exponents, zbar_exponents, u_exponents)."""

    def __init__(self, model_dims, terms):
        self.d, self.m = model_dims
        self.terms = [(complex(c), np.asarray(a, int), np.asarray(b, int),
                       np.asarray(e, int)) for c, a, b, e in terms]

    def _monomials(self, zp, u):
        vals = []
        for c, a, b, e in self.terms:
            t = np.full(zp.shape[:-1], c, dtype=complex)
            for i in range(self.d):
                if a[i]:
                    t = t * zp[..., i] ** a[i]
                if b[i]:
                    t = t * zp[..., i].conj() ** b[i]
            for k in range(self.m):
                if e[k]:
                    t = t * u[..., k] ** e[k]
            vals.append(t)
        return vals

    def value(self, model, z):
        zp, u = _chart_params(model, z)
        out = np.zeros(zp.shape[:-1], dtype=complex)
        for t in self._monomials(zp, u):
            out = out + t
        return out

    def _partials(self, model, z):
        """(d/dz'_i, d/dzbar'_i, d/du_k) of the polynomial."""
        zp, u = _chart_params(model, z)
        shape = zp.shape[:-1]
        dz = np.zeros(shape + (self.d,), dtype=complex)
        dzb = np.zeros(shape + (self.d,), dtype=complex)
        du = np.zeros(shape + (self.m,), dtype=complex)
        for c, a, b, e in self.terms:
            base = np.full(shape, c, dtype=complex)
            zpow = [zp[..., i] ** a[i] for i in range(self.d)]
            zbpow = [zp[..., i].conj() ** b[i] for i in range(self.d)]
            upow = [u[..., k] ** e[k] for k in range(self.m)]
            full = base.copy()
            for i in range(self.d):
                full = full * zpow[i] * zbpow[i]
            for k in range(self.m):
                full = full * upow[k]
            for i in range(self.d):
                if a[i]:
                    term = base * a[i] * zp[..., i] ** (a[i] - 1) * zbpow[i]
                    for j in range(self.d):
                        if j != i:
                            term = term * zpow[j] * zbpow[j]
                    for k in range(self.m):
                        term = term * upow[k]
                    dz[..., i] += term
                if b[i]:
                    term = base * b[i] * zp[..., i].conj() ** (b[i] - 1) * zpow[i]
                    for j in range(self.d):
                        if j != i:
                            term = term * zpow[j] * zbpow[j]
                    for k in range(self.m):
                        term = term * upow[k]
                    dzb[..., i] += term
            for k in range(self.m):
                if e[k]:
                    term = base * e[k] * u[..., k] ** (e[k] - 1)
                    for i in range(self.d):
                        term = term * zpow[i] * zbpow[i]
                    for k2 in range(self.m):
                        if k2 != k:
                            term = term * upow[k2]
                    du[..., k] += term
        return dz, dzb, du

    def d_z(self, model, z):
        dz, _, du = self._partials(model, z)
        out = np.zeros(np.shape(z), dtype=complex)
        out[..., :self.d] = dz
        out[..., self.d:] = 0.5 * du     # d u_k / d w_k = 1/2
        return out

    def d_zbar(self, model, z):
        _, dzb, du = self._partials(model, z)
        out = np.zeros(np.shape(z), dtype=complex)
        out[..., :self.d] = dzb
        out[..., self.d:] = 0.5 * du     # d u_k / d wbar_k = 1/2
        return out


def _smoothstep(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    fa = np.zeros_like(x)
    fb = np.zeros_like(x)
    pos = x > 0
    fa[pos] = np.exp(-1.0 / np.maximum(x[pos], 1e-300))
    neg = (1.0 - x) > 0
    fb[neg] = np.exp(-1.0 / np.maximum(1.0 - x[neg], 1e-300))
    return fa / (fa + fb)


def _smoothstep_deriv(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    mid = (x > 0) & (x < 1)
    xm = x[mid]
    fa = np.exp(-1.0 / xm)
    fb = np.exp(-1.0 / (1.0 - xm))
    dfa = fa / xm ** 2
    dfb = -fb / (1.0 - xm) ** 2
    out[mid] = (dfa * (fa + fb) - fa * (dfa + dfb)) / (fa + fb) ** 2
    return out


class BumpChart(ChartFunction):
    """Radial bump in the chart parameters: 1 inside ``r_in``, 0 outside
    ``r_out``, measured from (center_zp, center_u)."""

    def __init__(self, center_zp, center_u, r_in, r_out):
        if not 0 < r_in < r_out:
            raise ValueError("need 0 < r_in < r_out")
        self.center_zp = np.asarray(center_zp, dtype=complex)
        self.center_u = np.asarray(center_u, dtype=float)
        self.r_in = float(r_in)
        self.r_out = float(r_out)

    def _dist2(self, model, z):
        zp, u = _chart_params(model, z)
        dz = zp - self.center_zp
        du = u - self.center_u
        return np.sum(np.abs(dz) ** 2, axis=-1) + np.sum(du ** 2, axis=-1), dz, du

    def value(self, model, z):
        d2, _, _ = self._dist2(model, z)
        x = (self.r_out - np.sqrt(d2)) / (self.r_out - self.r_in)
        return _smoothstep(x).astype(complex)

    def _chain(self, model, z):
        """d(bump)/d(dist^2) with the radial chain rule."""
        d2, dz, du = self._dist2(model, z)
        dist = np.sqrt(np.maximum(d2, 1e-300))
        x = (self.r_out - dist) / (self.r_out - self.r_in)
        slope = _smoothstep_deriv(x) * (-1.0 / (self.r_out - self.r_in))
        dd2 = np.where(dist > 1e-150, slope / (2.0 * dist), 0.0)
        return dd2, dz, du

    def d_z(self, model, z):
        dd2, dz, du = self._chain(model, z)
        out = np.zeros(np.shape(z), dtype=complex)
        # d(dist^2)/d z'_i = conj(dz_i); d(dist^2)/d w_k = du_k / 2
        out[..., :dz.shape[-1]] = dd2[..., None] * dz.conj()
        out[..., dz.shape[-1]:] = dd2[..., None] * du * 0.5
        return out

    def d_zbar(self, model, z):
        dd2, dz, du = self._chain(model, z)
        out = np.zeros(np.shape(z), dtype=complex)
        out[..., :dz.shape[-1]] = dd2[..., None] * dz
        out[..., dz.shape[-1]:] = dd2[..., None] * du * 0.5
        return out


class ProductChart(ChartFunction):
    def __init__(self, *factors):
        self.factors = factors

    def value(self, model, z):
        out = None
        for f in self.factors:
            v = f.value(model, z)
            out = v if out is None else out * v
        return out

    def _jet(self, model, z, which):
        vals = [f.value(model, z) for f in self.factors]
        jets = [getattr(f, which)(model, z) for f in self.factors]
        out = np.zeros(np.shape(z), dtype=complex)
        for i in range(len(self.factors)):
            term = jets[i]
            for j, v in enumerate(vals):
                if j != i:
                    term = term * v[..., None]
            out = out + term
        return out

    def d_z(self, model, z):
        return self._jet(model, z, "d_z")

    def d_zbar(self, model, z):
        return self._jet(model, z, "d_zbar")


class ScaledChart(ChartFunction):
    def __init__(self, base, factor):
        self.base = base
        self.factor = complex(factor)

    def value(self, model, z):
        return self.factor * self.base.value(model, z)

    def d_z(self, model, z):
        return self.factor * self.base.d_z(model, z)

    def d_zbar(self, model, z):
        return self.factor * self.base.d_zbar(model, z)


class SumChart(ChartFunction):
    def __init__(self, *parts):
        self.parts = parts

    def value(self, model, z):
        out = None
        for p in self.parts:
            v = p.value(model, z)
            out = v if out is None else out + v
        return out

    def d_z(self, model, z):
        return sum(p.d_z(model, z) for p in self.parts)

    def d_zbar(self, model, z):
        return sum(p.d_zbar(model, z) for p in self.parts)


class ZeroChart(ChartFunction):
    def value(self, model, z):
        return np.zeros(np.shape(z)[:-1], dtype=complex)

    def d_z(self, model, z):
        return np.zeros(np.shape(z), dtype=complex)

    d_zbar = d_z


class CallableChart(ChartFunction):
    """Pointwise-evaluable coefficient without analytic jets (e.g. a
    quadrature-backed output or a reparameterized extension)."""

    def __init__(self, fn):
        self.fn = fn

    def value(self, model, z):
        return self.fn(np.asarray(z, dtype=complex))

    def d_z(self, model, z):
        raise DerivativeOrderError("coefficient has no analytic jets")

    d_zbar = d_z


# ---------------------------------------------------------------------------
# cutoffs
# ---------------------------------------------------------------------------

@dataclass
class CutoffPair:
    """Inner bump and a wider bump identically 1 on the inner support."""

    inner: BumpChart
    outer: BumpChart

    def __post_init__(self):
        same_center = (np.allclose(self.inner.center_zp, self.outer.center_zp)
                       and np.allclose(self.inner.center_u, self.outer.center_u))
        if not (same_center and self.outer.r_in >= self.inner.r_out):
            raise CoverError(
                "outer bump must be identically 1 on the inner support")


def make_cutoff_pair(center_zp, center_u, r_in, r_out, pad=1.4) -> CutoffPair:
    inner = BumpChart(center_zp, center_u, r_in, r_out)
    outer = BumpChart(center_zp, center_u, r_out, pad * r_out)
    return CutoffPair(inner=inner, outer=outer)


# ---------------------------------------------------------------------------
# form fields
# ---------------------------------------------------------------------------

@dataclass
class FormField:
    """Ambient (0, r) form with chart-function coefficients.

    components[i] pairs with the i-th strictly increasing r-tuple of
    antiholomorphic indices.
    """

    n: int
    degree: int
    components: list
    support: str = "global"

    def __post_init__(self):
        self.combos = index_combinations(self.n, self.degree)
        if len(self.components) != len(self.combos):
            raise ValueError(
                f"need {len(self.combos)} components, got {len(self.components)}")

    def values(self, model, z):
        """(..., ncomb) coefficient array at points z."""
        cols = [c.value(model, z) for c in self.components]
        return np.stack(cols, axis=-1)

    def dbar_values(self, model, z):
        """Ambient antiholomorphic differential: (0, r+1) coefficients.

        Exact for chart-function coefficients (their own extension), which is
        what makes the operator inputs analytic.
        """
        out_combos = index_combinations(self.n, self.degree + 1)
        pos = {c: i for i, c in enumerate(out_combos)}
        shape = np.shape(z)[:-1]
        out = np.zeros(shape + (len(out_combos),), dtype=complex)
        for i, J in enumerate(self.combos):
            jet = self.components[i].d_zbar(model, z)  # (..., n)
            for l in range(self.n):
                sign, merged = insert_index(l, J)
                if sign == 0:
                    continue
                out[..., pos[merged]] += sign * jet[..., l]
        return out

    def dbar_field(self, model) -> "FormField":
        """The differential as a lazily evaluated field."""
        parent = self
        out_combos = index_combinations(self.n, self.degree + 1)

        def make(idx):
            def fn(z):
                return parent.dbar_values(model, z)[..., idx]
            return CallableChart(fn)

        return FormField(n=self.n, degree=self.degree + 1,
                         components=[make(i) for i in range(len(out_combos))],
                         support=self.support)

    def scaled_by(self, chart_fn) -> "FormField":
        return FormField(
            n=self.n, degree=self.degree,
            components=[ProductChart(chart_fn, c) for c in self.components],
            support="cutoff")


def wedge_covector_values(n, degree, covector, values):
    """Coefficients of (sum_l covector_l dzbar_l) wedge (values over r-combos).

    covector: (..., n); values: (..., ncomb_r).  Returns (..., ncomb_{r+1}).
    """
    in_combos = index_combinations(n, degree)
    out_combos = index_combinations(n, degree + 1)
    pos = {c: i for i, c in enumerate(out_combos)}
    shape = np.broadcast_shapes(covector.shape[:-1], values.shape[:-1])
    out = np.zeros(shape + (len(out_combos),), dtype=complex)
    for i, J in enumerate(in_combos):
        for l in range(n):
            sign, merged = insert_index(l, J)
            if sign == 0:
                continue
            out[..., pos[merged]] += sign * covector[..., l] * values[..., i]
    return out


# ---------------------------------------------------------------------------
# tangential projection and tangential d-bar
# ---------------------------------------------------------------------------

def conjugate_frame_rows(model: ManifoldModel, z):
    """Rows spanning the antiholomorphic tangent space T'' (coefficients of
    d/d zetabar), shape (..., n-m, n)."""
    return holomorphic_tangent_rows(model, z).conj()


def dual_covector_rows(model: ManifoldModel, z):
    """Rows 0..n-m-1: covectors dual to the T'' frame that annihilate the
    conjugate normal directions; rows n-m..n-1 complete the dual basis.

    All entries are holomorphic in the base point for graph quadrics.
    """
    z = np.asarray(z, dtype=complex)
    wb = conjugate_frame_rows(model, z)                      # (..., d, n)
    nu = model.holo_gradients(z).conj()                      # (..., m, n)
    V = np.concatenate([wb, nu], axis=-2)                    # (..., n, n)
    return np.linalg.inv(np.swapaxes(V, -1, -2))             # rows = duals


def tangential_components(model: ManifoldModel, values, z, degree: int):
    """Contract ambient (0, r) coefficients with the conjugate tangent frame.

    Returns (..., C(n-m, r)) components against increasing frame tuples.
    """
    z = np.asarray(z, dtype=complex)
    wb = conjugate_frame_rows(model, z)
    in_combos = index_combinations(model.n, degree)
    out_combos = index_combinations(model.tangential_dim, degree)
    shape = np.broadcast_shapes(values.shape[:-1], wb.shape[:-2])
    out = np.zeros(shape + (len(out_combos),), dtype=complex)
    for oi, I in enumerate(out_combos):
        for ji, J in enumerate(in_combos):
            sub = wb[..., list(I), :][..., :, list(J)]
            out[..., oi] += values[..., ji] * small_det(sub)
    return out


def project_tangential(model: ManifoldModel, values, z, degree: int):
    """Canonical ambient representative of the tangential part.

    Idempotent; annihilates any component containing a conjugate normal
    covector.
    """
    if degree == 0:
        return values
    z = np.asarray(z, dtype=complex)
    tan = tangential_components(model, values, z, degree)
    duals = dual_covector_rows(model, z)[..., :model.tangential_dim, :]
    in_combos = index_combinations(model.tangential_dim, degree)
    out_combos = index_combinations(model.n, degree)
    shape = np.broadcast_shapes(values.shape[:-1], duals.shape[:-2])
    out = np.zeros(shape + (len(out_combos),), dtype=complex)
    for oi, J in enumerate(out_combos):
        for ii, I in enumerate(in_combos):
            sub = duals[..., list(I), :][..., :, list(J)]
            out[..., oi] += tan[..., ii] * small_det(sub)
    return out


def tangential_dbar_values(model: ManifoldModel, field: FormField, z):
    """Ambient coefficients of the tangential d-bar of a field at points z:
    projection of the differential of the (graph-constant) extension."""
    raw = field.dbar_values(model, z)
    return project_tangential(model, raw, z, field.degree + 1)


def tangential_dbar_field(model: ManifoldModel, field: FormField) -> FormField:
    out_combos = index_combinations(model.n, field.degree + 1)

    def make(idx):
        def fn(z):
            return tangential_dbar_values(model, field, z)[..., idx]
        return CallableChart(fn)

    return FormField(n=model.n, degree=field.degree + 1,
                     components=[make(i) for i in range(len(out_combos))],
                     support=field.support)


# ---------------------------------------------------------------------------
# extensions off the manifold
# ---------------------------------------------------------------------------

def extend_graph(model: ManifoldModel, field: FormField) -> FormField:
    """Graph extension: constant along Im w.  Chart-function coefficients are
    already of this form, so only the evaluation point is projected."""
    def make(comp):
        def fn(z):
            return comp.value(model, model.project_to_manifold(z))
        return CallableChart(fn)

    return FormField(n=model.n, degree=field.degree,
                     components=[make(c) for c in field.components],
                     support=field.support)


def gradient_flow_projection(model: ManifoldModel, z, steps: int = 8):
    """Project to the manifold along the real gradient span of the defining
    functions (Newton on the rho vector)."""
    z = np.asarray(z, dtype=complex).copy()
    for _ in range(steps):
        vec, norm = model.defining_values(z)
        if np.all(norm < 1e-14):
            break
        grads = model.holo_gradients(z)           # (..., m, n)
        # displacement sum_l c_l conj(g_l) changes rho_k by
        # 2 Re(Gram)_{kl} c_l; real coefficients solve the m x m system
        gram = 2.0 * np.einsum("...ki,...li->...kl", grads, grads.conj()).real
        coef = np.linalg.solve(gram, -vec[..., None])[..., 0]
        z = z + np.einsum("...k,...ki->...i", coef, grads.conj())
    return z


def extend_gradient_flow(model: ManifoldModel, field: FormField) -> FormField:
    """Second admissible extension: constant along the gradient flow."""
    def make(comp):
        def fn(z):
            return comp.value(model, gradient_flow_projection(model, z))
        return CallableChart(fn)

    return FormField(n=model.n, degree=field.degree,
                     components=[make(c) for c in field.components],
                     support=field.support)


# ---------------------------------------------------------------------------
# bundled test data
# ---------------------------------------------------------------------------

def bundled_test_form(model: ManifoldModel, r_in=0.25, r_out=0.45) -> FormField:
    """Smooth compactly supported (0,1) form with analytic differential:
    low-order polynomial times a radial bump on the first antiholomorphic
    component."""
    d, m = model.tangential_dim, model.m
    poly = PolyChart((d, m), [
        (1.0, np.zeros(d), np.zeros(d), np.zeros(m)),
        (0.35, np.eye(1, d, 0)[0], np.zeros(d), np.zeros(m)),
        (0.25j, np.zeros(d), np.eye(1, d, min(1, d - 1))[0], np.zeros(m)),
        (0.15, np.zeros(d), np.zeros(d), np.eye(1, m, 0)[0]),
    ])
    bump = BumpChart(np.zeros(d), np.zeros(m), r_in, r_out)
    comps = [ZeroChart() for _ in range(model.n)]
    comps[0] = ProductChart(poly, bump)
    return FormField(n=model.n, degree=1, components=comps, support="cutoff")


def partition_defect(model: ManifoldModel, cutoffs, field_support_samples):
    """Max |sum of inner cutoffs - 1| over sample points (partition check)."""
    total = None
    for pair in cutoffs:
        v = pair.inner.value(model, field_support_samples).real
        total = v if total is None else total + v
    return float(np.max(np.abs(total - 1.0)))
