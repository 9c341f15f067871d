"""Quadric CR models: defining functions, directional Levi eigenvalue data,
concavity certification, correction frames and tangential frames.

A model is the graph quadric

    rho_k(z) = Im w_k - <H_k z', z'>,   z = (z', w) in C^(n-m) x C^m,

with Hermitian matrices H_k.  All first and second derivatives are analytic,
so downstream quadrature error is never polluted by geometric approximation.

Sign convention (single source of truth): the complex (mixed) Hessian of
rho_k on the z'-block, as the matrix F of the Hermitian form  v -> v^H F v,
equals -H_k.  The matrix returned by :func:`directional_levi` is the mixed
Hessian of the combination sum_k theta_k rho_k, i.e. -sum_k theta_k H_k.
Its nonpositive eigendirections are exactly the directions the barrier's
quadratic correction must cover; certification over the whole direction
sphere is invariant under the sign flip theta -> -theta.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import (
    DegeneratePointError,
    InvalidDirectionError,
    ModelParseError,
    ModelValidationError,
)

TOL_EIG = 1e-9
TOL_HERMITIAN = 1e-12
FRAME_GAP_WARN = 1e-6
CORRECTION_MARGIN = 1.25


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

@dataclass
class ManifoldModel:
    """Graph quadric CR model of codimension m in C^n.

    n       ambient complex dimension (>= 3)
    m       real codimension (1 <= m < n - 1; m = 1 accepted for tests)
    q       concavity parameter (certification target; >= 1)
    hermitian  list of m Hermitian (n-m) x (n-m) arrays
    radius  coordinate chart radius
    """

    n: int
    m: int
    q: int
    hermitian: list
    radius: float = 1.0
    name: str = "model"

    def __post_init__(self):
        self.hermitian = [np.asarray(h, dtype=complex) for h in self.hermitian]
        if self.n < 3:
            raise ModelValidationError("ambient dimension n must be >= 3")
        if not (1 <= self.m < self.n - 1):
            raise ModelValidationError("codimension m must satisfy 1 <= m < n-1")
        if self.q < 1:
            raise ModelValidationError("concavity parameter q must be >= 1")
        if self.q > self.n - self.m:
            raise ModelValidationError(
                "q exceeds the complex tangential dimension n-m")
        if len(self.hermitian) != self.m:
            raise ModelValidationError(
                f"expected {self.m} Hermitian matrices, got {len(self.hermitian)}")
        d = self.n - self.m
        for k, h in enumerate(self.hermitian):
            if h.shape != (d, d):
                raise ModelValidationError(
                    f"matrix {k + 1} has shape {h.shape}, expected {(d, d)}")
            if np.max(np.abs(h - h.conj().T)) > TOL_HERMITIAN:
                raise ModelValidationError(f"matrix {k + 1} is not Hermitian")
        if self.radius <= 0:
            raise ModelValidationError("chart radius must be positive")
        self.tol_on_manifold = 1e-9 * self.radius
        # d(rho_1) ^ ... ^ d(rho_m) != 0 holds automatically for graph
        # quadrics: the Im w_k gradient components form an identity block.

    # -- coordinates ------------------------------------------------------

    @property
    def tangential_dim(self) -> int:
        return self.n - self.m

    def split(self, z):
        z = np.asarray(z, dtype=complex)
        return z[..., :self.tangential_dim], z[..., self.tangential_dim:]

    def height(self, zp):
        """Graph heights h_k(z') = <H_k z', z'> (real array, shape (..., m))."""
        zp = np.asarray(zp, dtype=complex)
        cols = [np.einsum("...i,ij,...j->...", zp.conj(), h, zp).real
                for h in self.hermitian]
        return np.stack(cols, axis=-1)

    def defining_values(self, z):
        """(rho_1, ..., rho_m) and the Euclidean norm rho(z)."""
        zp, w = self.split(z)
        vec = w.imag - self.height(zp)
        return vec, np.linalg.norm(vec, axis=-1)

    def graph_point(self, zp, re_w, rho_vec=None):
        """Assemble z with Im w_k = h_k(z') + rho_k (rho_vec defaults to 0)."""
        zp = np.asarray(zp, dtype=complex)
        re_w = np.asarray(re_w, dtype=float)
        im_w = self.height(zp)
        if rho_vec is not None:
            im_w = im_w + np.asarray(rho_vec, dtype=float)
        return np.concatenate([zp, re_w + 1j * im_w], axis=-1)

    def project_to_manifold(self, z):
        """Graph projection: reset Im w to the on-manifold height."""
        zp, w = self.split(z)
        return self.graph_point(zp, w.real)

    def on_manifold(self, z, tol=None) -> bool:
        tol = self.tol_on_manifold if tol is None else tol
        return bool(np.all(self.defining_values(z)[1] <= tol))

    # -- derivatives (all exact for the quadric) --------------------------

    def holo_gradient(self, k, z):
        """d rho_k / d zeta at z, shape (..., n)."""
        z = np.asarray(z, dtype=complex)
        zp, _ = self.split(z)
        g = np.zeros(z.shape, dtype=complex)
        g[..., :self.tangential_dim] = -np.einsum(
            "...i,ij->...j", zp.conj(), self.hermitian[k])
        g[..., self.tangential_dim + k] = 1.0 / 2.0j
        return g

    def holo_gradients(self, z):
        """All m holomorphic gradients stacked, shape (..., m, n)."""
        return np.stack([self.holo_gradient(k, z) for k in range(self.m)],
                        axis=-2)

    def levi_block(self, k):
        """z'-block of the Hermitian-form matrix of the Levi form of rho_k."""
        return -self.hermitian[k]

    def levi_form_full(self, theta_vec):
        """Full n x n form matrix of sum_k theta_k rho_k (w-block is zero)."""
        d = self.tangential_dim
        blk = np.zeros((self.n, self.n), dtype=complex)
        acc = np.zeros((d, d), dtype=complex)
        for t, h in zip(np.asarray(theta_vec, dtype=float), self.hermitian):
            acc -= t * h
        blk[:d, :d] = acc
        return blk

    # -- identity ---------------------------------------------------------

    def content_hash(self) -> str:
        payload = [self.n, self.m, self.q, self.radius]
        for h in self.hermitian:
            payload.extend(np.round(h, 14).ravel().view(float).tolist())
        digest = hashlib.sha256(repr(payload).encode()).hexdigest()
        return digest[:16]


# ---------------------------------------------------------------------------
# directions and Levi data
# ---------------------------------------------------------------------------

@dataclass
class Direction:
    """Unit vector in the real normal direction sphere."""

    vec: np.ndarray

    def __post_init__(self):
        self.vec = np.asarray(self.vec, dtype=float)
        if abs(np.linalg.norm(self.vec) - 1.0) > 1e-12:
            raise InvalidDirectionError(
                f"direction norm {np.linalg.norm(self.vec)!r} != 1")


@dataclass
class LeviData:
    """Eigenvalue data of the directional Levi matrix on the z'-block."""

    theta: Direction
    matrix: np.ndarray
    eigenvalues: np.ndarray
    neg_count: int
    pos_count: int
    E_basis: np.ndarray  # columns: orthonormal basis where the form is positive


def directional_levi(model: ManifoldModel, theta, z=None) -> LeviData:
    """Levi matrix -sum_k theta_k H_k with sorted eigenvalue data.

    For quadrics the matrix is independent of the base point; ``z`` is
    accepted for interface uniformity.  Linear in theta before normalization.
    """
    if not isinstance(theta, Direction):
        theta = Direction(np.asarray(theta, dtype=float))
    mat = np.zeros((model.tangential_dim,) * 2, dtype=complex)
    for t, h in zip(theta.vec, model.hermitian):
        mat -= t * h
    evals, evecs = np.linalg.eigh(mat)
    neg = int(np.sum(evals < -TOL_EIG))
    pos = int(np.sum(evals > TOL_EIG))
    # positivity subspace: top q eigenvectors on the tangential slice,
    # completed by the w-block directions (where the graph normal bundle sits)
    d = model.tangential_dim
    keep = evecs[:, d - model.q:] if model.q <= pos else evecs[:, d - model.q:]
    basis = np.zeros((model.n, keep.shape[1] + model.m), dtype=complex)
    basis[:d, :keep.shape[1]] = keep
    for j in range(model.m):
        basis[d + j, keep.shape[1] + j] = 1.0
    return LeviData(theta=theta, matrix=mat, eigenvalues=evals,
                    neg_count=neg, pos_count=pos, E_basis=basis)


def direction_grid(m: int, resolution: int = 16) -> np.ndarray:
    """Deterministic grid on the unit sphere S^(m-1), shape (count, m)."""
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m == 2:
        ang = 2.0 * np.pi * np.arange(resolution) / resolution
        return np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    if m == 3:
        pts = [np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, -1.0])]
        for i in range(1, resolution):
            phi = np.pi * i / resolution
            for j in range(resolution):
                psi = 2.0 * np.pi * j / resolution
                pts.append(np.array([np.sin(phi) * np.cos(psi),
                                     np.sin(phi) * np.sin(psi),
                                     np.cos(phi)]))
        return np.array(pts)
    raise ModelValidationError(f"direction grids implemented for m <= 3, got {m}")


@dataclass
class ConcavityReport:
    passed: bool
    required: int
    min_negative: int
    min_positive: int
    worst_direction: np.ndarray
    resolution: int
    frame_gap_warnings: list = field(default_factory=list)

    def to_json_dict(self):
        return {
            "passed": self.passed,
            "required": self.required,
            "min_negative_eigenvalues": self.min_negative,
            "min_positive_eigenvalues": self.min_positive,
            "worst_direction": [float(x) for x in self.worst_direction],
            "resolution": self.resolution,
            "frame_gap_warnings": self.frame_gap_warnings,
        }


def certify_concavity(model: ManifoldModel, resolution: int = 16) -> ConcavityReport:
    """Certify that every sampled direction sees >= q negative eigenvalues.

    FAIL is a report outcome, not an exception.  Also records directions where
    the kept/dropped eigenvalue gap of the correction frame nearly closes,
    since frame smoothness degrades there.
    """
    if model.m > 1 and resolution < 8:
        raise ModelValidationError("need at least 8 grid points per angle")
    grid = direction_grid(model.m, resolution)
    min_neg = None
    min_pos = None
    worst = grid[0]
    warnings = []
    split_at = model.n - model.q - model.m
    for theta in grid:
        data = directional_levi(model, theta)
        if min_neg is None or data.neg_count < min_neg:
            min_neg = data.neg_count
            worst = theta
        min_pos = data.pos_count if min_pos is None else min(min_pos, data.pos_count)
        if 0 < split_at < model.tangential_dim:
            gap = data.eigenvalues[split_at] - data.eigenvalues[split_at - 1]
            if gap < FRAME_GAP_WARN:
                warnings.append({"direction": [float(x) for x in theta],
                                 "gap": float(gap)})
    return ConcavityReport(
        passed=bool(min_neg >= model.q),
        required=model.q,
        min_negative=int(min_neg),
        min_positive=int(min_pos),
        worst_direction=np.asarray(worst),
        resolution=resolution,
        frame_gap_warnings=warnings,
    )


# ---------------------------------------------------------------------------
# correction frame (orthogonal complement of the positivity subspace)
# ---------------------------------------------------------------------------

def _fix_phase(vecs):
    """Deterministic phases: largest-magnitude entry made real positive."""
    out = vecs.copy()
    for j in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, j])))
        piv = out[i, j]
        if np.abs(piv) > 0:
            out[:, j] *= np.conj(piv) / np.abs(piv)
    return out


@dataclass
class CorrectionFrame:
    """Frame rows spanning the directions the barrier correction must cover.

    ``rows[j]`` are the coefficient vectors a_j; the quadratic correction
    built from them is positive exactly on the conjugate span, which equals
    the nonpositive eigendirections of the directional Levi matrix.  ``scale``
    multiplies the pairings so the corrected form clears the most negative
    covered eigenvalue with margin.
    """

    rows: np.ndarray          # (n - q - m, n)
    scale: float
    gap: float
    eigenvalues: np.ndarray


def correction_frame(model: ManifoldModel, theta, z=None) -> CorrectionFrame:
    """Orthonormal frame for the complement of the positivity subspace.

    Selection is deterministic (ascending eigenvalues, fixed phases) and
    continuous in theta wherever the eigenvalue gap at the cut stays open.
    """
    if not isinstance(theta, Direction):
        theta = Direction(np.asarray(theta, dtype=float))
    count = model.n - model.q - model.m
    d = model.tangential_dim
    data = directional_levi(model, theta)
    if count == 0:
        return CorrectionFrame(rows=np.zeros((0, model.n), dtype=complex),
                               scale=1.0, gap=np.inf, eigenvalues=data.eigenvalues)
    if count < 0:
        raise ModelValidationError("n - q - m is negative")
    evals, evecs = np.linalg.eigh(data.matrix)
    kept = _fix_phase(evecs[:, :count])
    gap = float(evals[count] - evals[count - 1]) if count < d else np.inf
    rows = np.zeros((count, model.n), dtype=complex)
    # pairings A_j(w) = sum_i rows[j, i] w_i are positive on the conjugate
    # eigendirections, so store conjugates of the eigenvectors
    rows[:, :d] = kept.conj().T
    scale = float(np.sqrt(CORRECTION_MARGIN * max(1.0, -float(evals[0]))))
    return CorrectionFrame(rows=rows, scale=scale, gap=gap,
                           eigenvalues=evals)


# ---------------------------------------------------------------------------
# defining-function modification (extra plurisubharmonic weight)
# ---------------------------------------------------------------------------

@dataclass
class ModifiedDefining:
    """Callables for rho_k + amplitude * sum_i rho_i^2 and its derivatives."""

    model: ManifoldModel
    amplitude: float

    def values(self, z):
        vec, _ = self.model.defining_values(z)
        bump = self.amplitude * np.sum(vec ** 2, axis=-1, keepdims=True)
        return vec + bump

    def holo_gradient(self, k, z):
        vec, _ = self.model.defining_values(z)
        g = self.model.holo_gradient(k, z)
        for i in range(self.model.m):
            g = g + 2.0 * self.amplitude * vec[..., i:i + 1] \
                * self.model.holo_gradient(i, z)
        return g

    def mixed_hessian(self, k, z):
        """Full n x n Hermitian-form matrix of the modified rho_k at z."""
        vec, _ = self.model.defining_values(z)
        d = self.model.tangential_dim
        base = np.zeros((self.model.n, self.model.n), dtype=complex)
        base[:d, :d] = self.model.levi_block(k)
        extra = np.zeros_like(base)
        for i in range(self.model.m):
            g = self.model.holo_gradient(i, z)
            c = g.conj()
            rank_one = np.outer(c, c.conj())
            lv = np.zeros_like(base)
            lv[:d, :d] = self.model.levi_block(i)
            extra += 2.0 * (rank_one + float(vec[..., i]) * lv)
        return base + self.amplitude * extra


def directional_modified_form(model: ManifoldModel, theta_vec, z,
                              amplitude: float) -> np.ndarray:
    """Form matrix of (sum_k theta_k rho_k) + amplitude * sum_i rho_i^2 at z.

    The weight is applied to the directional combination itself: combining
    the individually modified functions linearly in theta flips the weight's
    sign on half the sphere and can never be positive there.
    """
    vec, _ = model.defining_values(z)
    form = model.levi_form_full(theta_vec).copy()
    d = model.tangential_dim
    for i in range(model.m):
        g = model.holo_gradient(i, z)
        c = g.conj()
        form += 2.0 * amplitude * np.outer(c, c.conj())
        lv = np.zeros_like(form)
        lv[:d, :d] = model.levi_block(i)
        form += 2.0 * amplitude * float(vec[..., i]) * lv
    return form


def find_modification_amplitude(model: ManifoldModel, points, resolution=16,
                                target=0.05, amplitudes=None) -> dict:
    """Smallest grid amplitude making the modified directional form positive
    with margin ``target`` on its top (q + m)-dimensional eigenspace, jointly
    with the scaled correction, over sampled (theta, z)."""
    if amplitudes is None:
        amplitudes = [0.25 * 2 ** k for k in range(10)]
    grid = direction_grid(model.m, resolution)
    for amp in amplitudes:
        ok = True
        for z in points:
            for theta in grid:
                form = directional_modified_form(model, theta, z, amp)
                frame = correction_frame(model, theta)
                corr = frame.scale ** 2 * (frame.rows.conj().T @ frame.rows)
                evals = np.linalg.eigvalsh(form + corr.conj().T)
                if evals[0] < target:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return {"amplitude": float(amp), "margin": float(target),
                    "resolution": resolution}
    return {"amplitude": None, "margin": float(target),
            "resolution": resolution}


# ---------------------------------------------------------------------------
# tangential frame
# ---------------------------------------------------------------------------

@dataclass
class TangentialFrame:
    """Pointwise frame: W rows span T', their conjugates span T'',
    Y rows complete the real tangent space, normals are the rho gradients."""

    point: np.ndarray
    W: np.ndarray        # (n - m, n) coefficient rows against d/d zeta
    Wbar: np.ndarray     # (n - m, n) coefficient rows against d/d zeta-bar
    Y: np.ndarray        # (m, n) complex velocity rows of real fields
    normal: np.ndarray   # (m, n) complex velocities of the gradient directions


def holomorphic_tangent_rows(model: ManifoldModel, z):
    """Rows of W_i = d/dz'_i + 2i sum_l conj((H_l z')_i) d/dw_l.

    Supports batched points: z of shape (..., n) gives (..., n-m, n).
    Each row annihilates every d(rho_k).
    """
    z = np.asarray(z, dtype=complex)
    zp, _ = model.split(z)
    d = model.tangential_dim
    shape = z.shape[:-1]
    rows = np.zeros(shape + (d, model.n), dtype=complex)
    idx = np.arange(d)
    rows[..., idx, idx] = 1.0
    for l, h in enumerate(model.hermitian):
        hz = np.einsum("ij,...j->...i", h, zp)
        rows[..., :, d + l] = 2.0j * hz.conj()
    return rows


def _real_velocity_matrix(vels_complex):
    """Real 2n x k matrix from complex velocity columns (interleaved re/im)."""
    v = np.asarray(vels_complex)
    out = np.empty((2 * v.shape[0], v.shape[1]))
    out[0::2] = v.real
    out[1::2] = v.imag
    return out


def tangential_frame(model: ManifoldModel, z) -> TangentialFrame:
    """Frame at a point on the manifold (rank-verified)."""
    z = np.asarray(z, dtype=complex)
    _, rho_norm = model.defining_values(z)
    if rho_norm > 100 * model.tol_on_manifold:
        raise DegeneratePointError(
            f"point is off the manifold: rho = {float(rho_norm):.3e}")
    W = holomorphic_tangent_rows(model, z)
    grads = model.holo_gradients(z)

    # coordinate system (rho_k, Im F_k, Re z'_j, Im z'_j); Y_k is the
    # coordinate-dual field of Im F_k, computed by inverting the real Jacobian
    n, m, d = model.n, model.m, model.tangential_dim
    jac = np.zeros((2 * n, 2 * n))
    for k in range(m):
        g = grads[k]
        # d rho_k(v) = 2 Re(sum_a g_a v_a)
        jac[k, 0::2] = 2.0 * g.real
        jac[k, 1::2] = -2.0 * g.imag
        # Im F_k(zeta) = Im <-g, zeta - z>: differential v -> Im(-sum g_a v_a)
        jac[m + k, 0::2] = -g.imag
        jac[m + k, 1::2] = -g.real
    for j in range(d):
        jac[2 * m + 2 * j, 2 * j] = 1.0       # Re z'_j
        jac[2 * m + 2 * j + 1, 2 * j + 1] = 1.0  # Im z'_j
    sv = np.linalg.svd(jac, compute_uv=False)
    if sv[-1] < 1e-10 * sv[0]:
        raise DegeneratePointError("coordinate Jacobian is singular")
    inv = np.linalg.inv(jac)
    Y = np.empty((m, n), dtype=complex)
    for k in range(m):
        col = inv[:, m + k]
        Y[k] = col[0::2] + 1j * col[1::2]
    normal = 2.0 * grads.conj()

    # full-rank audit of the real span of (W, conj W, Y)
    reals = []
    for i in range(d):
        reals.append(W[i])
        reals.append(1j * W[i])
    for k in range(m):
        reals.append(Y[k])
    mat = _real_velocity_matrix(np.array(reals).T)
    rank = np.linalg.matrix_rank(mat, tol=1e-8)
    if rank != 2 * n - m:
        raise DegeneratePointError(f"frame rank {rank} != {2 * n - m}")
    return TangentialFrame(point=z, W=W, Wbar=W.conj(), Y=Y, normal=normal)


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

def parse_model_text(text: str, name: str = "model") -> ManifoldModel:
    """Parse the plain-text model format.

    Scalar lines ``key = value`` for n, m, q, radius; each matrix introduced
    by a line ``H <k>`` followed by n-m rows of comma-separated "re,im" pairs
    separated by whitespace.
    """
    scalars = {}
    matrices = {}
    current = None
    rows = []

    def close_matrix():
        if current is not None:
            matrices[current] = rows.copy()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            close_matrix()
            current = None
            key, _, val = line.partition("=")
            key = key.strip().lower()
            val = val.strip()
            try:
                scalars[key] = float(val) if key == "radius" else int(val)
            except ValueError as exc:
                raise ModelParseError(
                    f"line {lineno}: bad value for {key!r}: {val!r}") from exc
            continue
        if line.upper().startswith("H"):
            parts = line.split()
            if len(parts) != 2 or not parts[1].isdigit():
                raise ModelParseError(f"line {lineno}: bad matrix header {line!r}")
            close_matrix()
            current = int(parts[1])
            rows = []
            continue
        if current is None:
            raise ModelParseError(f"line {lineno}: unexpected content {line!r}")
        entries = []
        for tok in line.split():
            pieces = tok.split(",")
            if len(pieces) != 2:
                raise ModelParseError(
                    f"line {lineno}: matrix row entry {tok!r} is not 're,im'")
            try:
                entries.append(complex(float(pieces[0]), float(pieces[1])))
            except ValueError as exc:
                raise ModelParseError(
                    f"line {lineno}: matrix row entry {tok!r} is not numeric") from exc
        rows.append(entries)
    close_matrix()

    for key in ("n", "m", "q"):
        if key not in scalars:
            raise ModelParseError(f"missing scalar {key!r}")
    n, m, q = scalars["n"], scalars["m"], scalars["q"]
    radius = scalars.get("radius", 1.0)
    d = n - m
    herm = []
    for k in range(1, m + 1):
        if k not in matrices:
            raise ModelParseError(f"missing matrix block H {k}")
        mat = matrices[k]
        if len(mat) != d or any(len(r) != d for r in mat):
            raise ModelParseError(
                f"matrix H {k}: expected {d} rows of {d} entries")
        herm.append(np.array(mat, dtype=complex))
    return ManifoldModel(n=n, m=m, q=q, hermitian=herm, radius=radius, name=name)


def load_model_file(path) -> ManifoldModel:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_model_text(text, name=str(path))


def load_bundled_model(name: str) -> ManifoldModel:
    """Load a model shipped with the package (e.g. "sig22_n5")."""
    ref = resources.files("crhomotopy").joinpath("models", f"{name}.model")
    return parse_model_text(ref.read_text(encoding="utf-8"), name=name)
