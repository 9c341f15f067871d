"""Normalized kernel sections and their Wirtinger jets.

A section is a map eta(zeta, z, t) with sum_k eta_k (zeta_k - z_k) = 1.  Two
concrete sections are provided: the euclidean (Bochner-Martinelli) section
and the barrier section; the homotopy kernel interpolates them linearly in t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import barrier as _barrier
from .cf_forms import (FormTensor, cf_component, wedge_left_dt,
                       wedge_left_zbar, wedge_left_zetabar)
from .errors import NearSingularPhaseError, SingularityError
from .geometry import ManifoldModel

PHASE_TOL = 1e-13


@dataclass
class SectionJet:
    """Section value with antiholomorphic and parameter jets.

    d_zbar[k, l] = d eta_k / d zbar_l, d_zetabar[k, l] = d eta_k / d zetabar_l.
    """

    value: np.ndarray
    d_zbar: np.ndarray
    d_zetabar: np.ndarray
    d_t: np.ndarray
    mode: str = "analytic"

    def normalization_defect(self, zeta, z) -> float:
        return abs(complex(np.sum(self.value * (np.asarray(zeta) - np.asarray(z)))) - 1.0)


# ---------------------------------------------------------------------------
# concrete sections
# ---------------------------------------------------------------------------

def bochner_martinelli_section(zeta, z) -> SectionJet:
    """eta = conj(zeta - z) / |zeta - z|^2 with analytic jets."""
    zeta = np.asarray(zeta, dtype=complex)
    z = np.asarray(z, dtype=complex)
    w = zeta - z
    s = float(np.sum(np.abs(w) ** 2))
    if s == 0.0:
        raise SingularityError("euclidean section is singular at zeta = z")
    n = w.shape[0]
    eye = np.eye(n)
    outer = np.outer(w.conj(), w)
    d_zbar = (-eye * s + outer) / s ** 2
    d_zetabar = (eye * s - outer) / s ** 2
    return SectionJet(value=w.conj() / s, d_zbar=d_zbar, d_zetabar=d_zetabar,
                      d_t=np.zeros(n, dtype=complex))


def barrier_section(model: ManifoldModel, zeta, z, frozen_theta=None,
                    phase_tol: float = PHASE_TOL) -> SectionJet:
    """eta = P / Phi with analytic jets from the barrier construction."""
    zeta = np.asarray(zeta, dtype=complex)
    z = np.asarray(z, dtype=complex)
    jets = _barrier.barrier_jets(model, zeta[None, :], z,
                                 frozen_theta=frozen_theta)
    phi = complex(jets.Phi[0])
    if abs(phi) < phase_tol:
        raise NearSingularPhaseError(
            f"phase magnitude {abs(phi):.3e} below tolerance {phase_tol:.1e}")
    P = jets.P[0]
    # d eta_k / d x_l = dP[l, k]/Phi - P[k] dPhi[l] / Phi^2
    d_zbar = (jets.dP_dzbar[0].T / phi
              - np.outer(P, jets.dPhi_dzbar[0]) / phi ** 2)
    d_zetabar = (jets.dP_dzetabar[0].T / phi
                 - np.outer(P, jets.dPhi_dzetabar[0]) / phi ** 2)
    return SectionJet(value=P / phi, d_zbar=d_zbar, d_zetabar=d_zetabar,
                      d_t=np.zeros(model.n, dtype=complex))


def combined_section(s1: SectionJet, s2: SectionJet, t: float) -> SectionJet:
    """Affine interpolation (1-t) s1 + t s2; normalization is preserved."""
    one_minus = 1.0 - t
    return SectionJet(
        value=one_minus * s1.value + t * s2.value,
        d_zbar=one_minus * s1.d_zbar + t * s2.d_zbar,
        d_zetabar=one_minus * s1.d_zetabar + t * s2.d_zetabar,
        d_t=(s2.value - s1.value) + one_minus * s1.d_t + t * s2.d_t,
        mode=s1.mode if s1.mode == s2.mode else "mixed",
    )


def fd_section_jet(value_fn, zeta, z, t, step=1e-6) -> SectionJet:
    """Jets of an arbitrary section by central Wirtinger differences.

    Independent of the analytic jet formulas; used as a cross-check oracle
    and as the fallback for sections without closed-form derivatives.
    """
    zeta = np.asarray(zeta, dtype=complex)
    z = np.asarray(z, dtype=complex)
    n = zeta.shape[0]
    val = np.asarray(value_fn(zeta, z, t), dtype=complex)
    d_zbar = np.zeros((n, n), dtype=complex)
    d_zetabar = np.zeros((n, n), dtype=complex)
    for l in range(n):
        for target, arr in (("zeta", d_zetabar), ("z", d_zbar)):
            base = zeta if target == "zeta" else z
            shifts = []
            for dz in (step, -step, 1j * step, -1j * step):
                p = base.copy()
                p[l] += dz
                if target == "zeta":
                    shifts.append(np.asarray(value_fn(p, z, t), dtype=complex))
                else:
                    shifts.append(np.asarray(value_fn(zeta, p, t), dtype=complex))
            fx = (shifts[0] - shifts[1]) / (2 * step)
            fy = (shifts[2] - shifts[3]) / (2 * step)
            arr[:, l] = 0.5 * (fx + 1j * fy)
    d_t = (np.asarray(value_fn(zeta, z, t + step), dtype=complex)
           - np.asarray(value_fn(zeta, z, t - step), dtype=complex)) / (2 * step)
    return SectionJet(value=val, d_zbar=d_zbar, d_zetabar=d_zetabar, d_t=d_t,
                      mode="fd")


# ---------------------------------------------------------------------------
# closedness of the determinant form components
# ---------------------------------------------------------------------------

def _tensor_combo(tensors, weights, n):
    out = FormTensor(n)
    for t, wgt in zip(tensors, weights):
        for key, val in t.coeffs.items():
            out.coeffs[key] = out.coeffs.get(key, 0.0) + wgt * val
    return out


def _unit(n, l):
    e = np.zeros(n)
    e[l] = 1.0
    return e


@dataclass
class ClosednessReport:
    residual: float
    residual_half: float
    order: float
    scale: float


def closedness_residual(jet_family, zeta, z, t, r: int, step: float,
                        n: int) -> float:
    """Max coefficient of d_t W_r + dbar_zeta W_r + dbar_z W_(r-1) by central
    differences of the component tensors (W_r = degree-r determinant form)."""
    def tensor(pt_zeta, pt_z, pt_t, deg):
        jet = jet_family(pt_zeta, pt_z, pt_t)
        return cf_component(jet.value, jet.d_zbar, jet.d_zetabar, jet.d_t, deg)

    zeta = np.asarray(zeta, dtype=complex)
    z = np.asarray(z, dtype=complex)
    total = FormTensor(n)

    # dbar_zeta of the degree-r component
    for l in range(n):
        evals = []
        for dz in (step, -step, 1j * step, -1j * step):
            p = zeta.copy()
            p[l] += dz
            evals.append(tensor(p, z, t, r))
        fx = _tensor_combo(evals[:2], [1 / (2 * step), -1 / (2 * step)], n)
        fy = _tensor_combo(evals[2:], [1 / (2 * step), -1 / (2 * step)], n)
        wirt = _tensor_combo([fx, fy], [0.5, 0.5j], n)
        total = total.plus(wedge_left_zetabar(wirt, _unit(n, l)))

    # dbar_z of the degree-(r-1) component
    if r >= 1:
        for l in range(n):
            evals = []
            for dz in (step, -step, 1j * step, -1j * step):
                p = z.copy()
                p[l] += dz
                evals.append(tensor(zeta, p, t, r - 1))
            fx = _tensor_combo(evals[:2], [1 / (2 * step), -1 / (2 * step)], n)
            fy = _tensor_combo(evals[2:], [1 / (2 * step), -1 / (2 * step)], n)
            wirt = _tensor_combo([fx, fy], [0.5, 0.5j], n)
            total = total.plus(wedge_left_zbar(wirt, _unit(n, l)))

    # d_t of the degree-r component
    dt_tensor = _tensor_combo([tensor(zeta, z, t + step, r),
                               tensor(zeta, z, t - step, r)],
                              [1 / (2 * step), -1 / (2 * step)], n)
    total = total.plus(wedge_left_dt(dt_tensor, 1.0))
    return total.max_abs()


def closedness_check(jet_family, zeta, z, t, r: int, n: int,
                     step: float = 1e-3) -> ClosednessReport:
    """Residual of the closedness relation with a Richardson order estimate.

    PASS semantics: residual contracts at second order under step halving
    (or sits at the roundoff floor).
    """
    jet0 = jet_family(np.asarray(zeta, complex), np.asarray(z, complex), t)
    scale = cf_component(jet0.value, jet0.d_zbar, jet0.d_zetabar, jet0.d_t,
                         r).max_abs()
    res = closedness_residual(jet_family, zeta, z, t, r, step, n)
    res_half = closedness_residual(jet_family, zeta, z, t, r, step / 2, n)
    if res_half <= 1e-12 * max(scale, 1.0):
        order = np.inf
    else:
        order = float(np.log2(res / res_half))
    return ClosednessReport(residual=res, residual_half=res_half, order=order,
                            scale=scale)
