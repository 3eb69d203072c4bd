"""Entropies (calibrations) for divergence-free fields and their checks.

An entropy is a map Phi: R^d -> R^d whose composed divergence integrates
below the energy for every admissible divergence-free field; the boundary
value Phi_1(u+) - Phi_1(u-) then calibrates the minimal energy, with
equality ("saturation") certifying optimality of 1D transitions.

Three punctual criteria are supported: |P0 grad Phi|^2 <= 2W (strong), and
|P0 grad Phi|^2 <= 4W with a symmetric resp. antisymmetric traceless
Jacobian.  Constructors cover scalar fields solving the Laplace, wave or
Tricomi equations in the plane, the gradient-of-Psi family in dimension d,
and the quadratic family with antisymmetric traceless Jacobian.
"""

from dataclasses import dataclass

import numpy as np

from ._accel import diff_axial, diff_periodic, rk4_planar
from .poly import Poly2, path_potential


# ---------------------------------------------------------------------------
# matrix projections
# ---------------------------------------------------------------------------

def traceless(m):
    """P0 m = m - (tr m / d) I."""
    m = np.asarray(m, dtype=float)
    d = m.shape[-1]
    tr = np.trace(m, axis1=-2, axis2=-1)
    out = m.copy()
    idx = np.arange(d)
    out[..., idx, idx] -= (tr / d)[..., None]
    return out


def sym_part(m):
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def asym_part(m):
    m = np.asarray(m, dtype=float)
    return 0.5 * (m - np.swapaxes(m, -1, -2))


def _frob2(m):
    return np.sum(m * m, axis=(-2, -1))


# ---------------------------------------------------------------------------
# entropy objects
# ---------------------------------------------------------------------------

class Entropy:
    """Evaluator for Phi and its Jacobian, tagged by criterion class.

    ``kind`` is one of "strg", "sym", "asym", "tricomi".  ``phi`` maps
    (..., d) -> (..., d); ``jac`` maps (..., d) -> (..., d, d) with the
    convention jac[..., i, j] = d_j Phi_i.
    """

    def __init__(self, dim, phi, jac, kind, tag="", meta=None):
        if kind not in ("strg", "sym", "asym", "tricomi"):
            raise ValueError(f"unknown entropy kind {kind!r}")
        self.dim = int(dim)
        self._phi = phi
        self._jac = jac
        self.kind = kind
        self.tag = tag
        self.meta = dict(meta or {})

    def phi(self, z):
        return np.asarray(self._phi(np.asarray(z, dtype=float)), dtype=float)

    def phi1(self, z):
        return self.phi(z)[..., 0]

    def jac(self, z):
        return np.asarray(self._jac(np.asarray(z, dtype=float)), dtype=float)

    def __repr__(self):
        return f"Entropy(tag={self.tag!r}, kind={self.kind!r}, dim={self.dim})"


@dataclass
class EntropyReport:
    criterion_ok: bool
    max_violation: float
    saturation_gap: float
    kind: str
    structure_residual: float = 0.0
    jac_fd_error: float = 0.0
    box: float = 0.0

    def to_dict(self):
        return {
            "criterion_ok": bool(self.criterion_ok),
            "max_violation": self.max_violation,
            "saturation_gap": self.saturation_gap,
            "kind": self.kind,
            "structure_residual": self.structure_residual,
            "jac_fd_error": self.jac_fd_error,
            "box": self.box,
        }


def _sample_box(dim, box, n_grid, n_random, seed, extra=None):
    axes = [np.linspace(-box, box, n_grid)] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack(mesh, axis=-1).reshape(-1, dim)
    rng = np.random.default_rng(seed)
    pts = np.vstack([pts, rng.uniform(-box, box, size=(n_random, dim))])
    if extra is not None:
        pts = np.vstack([pts, np.asarray(extra, dtype=float).reshape(-1, dim)])
    return pts


def check_punctual(e, p, kind=None, box=2.0, n_grid=9, n_random=2000, seed=0,
                   samples=None, tol=1e-10):
    """Verify the punctual entropy criterion on a sampled box.

    kind "strg": |P0 grad Phi|^2 <= 2 W.  kind "sym"/"asym": the traceless
    Jacobian must be symmetric resp. antisymmetric and |P0 grad Phi|^2 <= 4 W.
    Violations are max(0, |P0 grad Phi|^2 - c W) over the samples.
    """
    kind = kind or e.kind
    if samples is None:
        samples = _sample_box(e.dim, box, n_grid if e.dim <= 3 else 5,
                              n_random, seed)
    J = e.jac(samples)
    P0 = traceless(J)
    W = p(samples)
    c = 2.0 if kind == "strg" else 4.0
    violation = float(np.max(np.maximum(_frob2(P0) - c * W, 0.0)))

    structure = 0.0
    if kind == "sym":
        structure = float(np.max(np.abs(J - np.swapaxes(J, -1, -2))))
    elif kind == "asym":
        structure = float(np.max(np.abs(P0 + np.swapaxes(P0, -1, -2))))

    fd = _jac_fd_error(e, samples[:: max(1, len(samples) // 50)])
    ok = violation <= tol and structure <= 1e-10
    return EntropyReport(criterion_ok=ok, max_violation=violation,
                         saturation_gap=float("nan"), kind=kind,
                         structure_residual=structure, jac_fd_error=fd, box=box)


def _jac_fd_error(e, pts, h=1e-6):
    J = e.jac(pts)
    err = 0.0
    for j in range(e.dim):
        step = np.zeros(e.dim)
        step[j] = h
        fd = (e.phi(pts + step) - e.phi(pts - step)) / (2 * h)
        scale = np.maximum(1.0, np.abs(J[..., :, j]))
        err = max(err, float(np.max(np.abs(fd - J[..., :, j]) / scale)))
    return err


def check_saturation(e, p, a, u_minus, u_plus, tol=1e-4, **geo_kw):
    """Signed saturation gap: geod_slice(u-, u+) - (Phi1(u+) - Phi1(u-))."""
    from . import profiles

    u_minus = np.asarray(u_minus, dtype=float)
    u_plus = np.asarray(u_plus, dtype=float)
    if np.allclose(u_minus, u_plus):
        return 0.0
    if p.dim == 2:
        geod = profiles.geodesic_cost_2d(p, a, u_minus[1], u_plus[1])
    else:
        geod = profiles.geodesic_cost(p, u_minus, u_plus, path_space="slice",
                                      a=a, **geo_kw).cost
    diff = float(e.phi1(u_plus) - e.phi1(u_minus))
    return float(geod - diff)


# ---------------------------------------------------------------------------
# calibration value (nonstandard Gauss-Green)
# ---------------------------------------------------------------------------

def calibration_value(e, f):
    """Discrete integral of div[Phi(u)] over the cylinder.

    Axial forward differences telescope exactly and the periodic sums cancel
    exactly, so the value depends on the boundary slices alone (for Dirichlet
    well data it equals Phi1(u+) - Phi1(u-) to round-off).
    """
    grid = f.grid
    P = e.phi(f.values)
    per_cell = grid.hper ** (grid.d - 1)
    p1 = P[..., 0]
    axial = float(np.sum(p1[1:] - p1[:-1]) * per_cell)
    periodic = 0.0
    for j in range(1, grid.d):
        pj = P[..., j]
        dj = np.roll(pj, -1, axis=j) - pj
        # cell-wise axial weights: each of the n1-1 cells counts its two rows
        wcell = np.zeros(grid.n1)
        wcell[:-1] += 0.5
        wcell[1:] += 0.5
        periodic += float(np.sum(dj * wcell.reshape((-1,) + (1,) * (grid.d - 1)))
                          * per_cell)
    return axial + periodic


# ---------------------------------------------------------------------------
# planar constructions: harmonic / wave / Tricomi scalar fields
# ---------------------------------------------------------------------------

class ConstructionError(ValueError):
    """The scalar field does not satisfy the required PDE (or loop audit)."""


def _pde_residual_samples(w, kind, f=None, box=2.0, n=400, seed=0):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-box, box, size=(n, 2))
    H = w.hess(pts)
    if kind == "harmonic":
        return np.max(np.abs(H[..., 0, 0] + H[..., 1, 1]))
    if kind == "wave":
        return np.max(np.abs(H[..., 0, 0] - H[..., 1, 1]))
    fv = f(pts[..., 0]) if callable(f) else float(f)
    return np.max(np.abs(H[..., 0, 0] - fv * H[..., 1, 1]))


def _loop_audit(phi_grad, box=2.0, n_loops=100, seed=0, k=24):
    """Max circulation of a gradient field around random rectangles."""
    rng = np.random.default_rng(seed)
    nodes, weights = np.polynomial.legendre.leggauss(k)
    worst = 0.0
    for _ in range(n_loops):
        x0, y0 = rng.uniform(-box, box, 2)
        dx, dy = rng.uniform(0.1, box, 2)
        corners = np.array([[x0, y0], [x0 + dx, y0], [x0 + dx, y0 + dy],
                            [x0, y0 + dy], [x0, y0]])
        circ = 0.0
        for a, b in zip(corners[:-1], corners[1:]):
            ts = 0.5 * (nodes + 1.0)
            pts = a[None, :] + ts[:, None] * (b - a)[None, :]
            tangent = (b - a)
            g = phi_grad(pts)
            circ += 0.5 * float(np.sum(weights * (g @ tangent)))
        worst = max(worst, abs(circ))
    return worst


def _entropy_from_rows(w, s_val, tag, kind, meta=None):
    """Assemble Phi from P0 grad Phi = [[0, w], [s*w, 0]] for Poly2 w.

    Row structure: grad Phi1 = (-alpha, w), grad Phi2 = (s*w, -alpha) with
    grad alpha = (-s dz2 w, -dz1 w); everything stays polynomial, so path
    integrals and closedness are exact.
    """
    if not isinstance(w, Poly2):
        raise ConstructionError(
            "entropy construction requires a polynomial scalar field")
    s = float(s_val)  # +1 wave, -1 harmonic, or the constant tricomi f
    alpha = path_potential(-s * w.dz2(), -w.dz1())
    phi1 = path_potential(-alpha, w)
    phi2 = path_potential(s * w, -alpha)

    def phi(z):
        return np.stack([phi1(z), phi2(z)], axis=-1)

    def jac(z):
        a = alpha(z)
        wv = w(z)
        row1 = np.stack([-a, wv], axis=-1)
        row2 = np.stack([s * wv, -a], axis=-1)
        return np.stack([row1, row2], axis=-2)

    meta = dict(meta or {})
    meta.update({"alpha": alpha, "w": w, "s": s})
    return Entropy(2, phi, jac, kind, tag=tag, meta=meta)


def entropy_from_harmonic(w, tol=1e-8):
    """Entropy with antisymmetric traceless Jacobian for harmonic w.

    |P0 grad Phi|^2 = 2 w^2 = 4 W for W = w^2/2; Phi is holomorphic as a map
    of the plane.  Rejects w whose Laplacian exceeds ``tol`` on samples.
    """
    res = _pde_residual_samples(w, "harmonic")
    if res > tol:
        raise ConstructionError(f"Laplace residual {res:.2e} exceeds {tol:.0e}")
    e = _entropy_from_rows(w, -1.0, "harmonic-conjugate", "asym")
    _audit_entropy(e)
    return e


def entropy_from_wave(w, tol=1e-8):
    """Entropy with symmetric Jacobian for w solving the wave equation."""
    res = _pde_residual_samples(w, "wave")
    if res > tol:
        raise ConstructionError(f"wave residual {res:.2e} exceeds {tol:.0e}")
    e = _entropy_from_rows(w, 1.0, "wave-partner", "sym")
    _audit_entropy(e)
    return e


def entropy_tricomi(w, f, tol=1e-8):
    """Entropy for w solving d11 w = f(z1) d22 w with |f| <= 1.

    P0 grad Phi = [[0, w], [f w, 0]]; for |f| < 1 this is neither symmetric
    nor antisymmetric but still an entropy through the exact energy
    decomposition (see :func:`tricomi_identity_check`).
    """
    fconst = None if callable(f) else float(f)
    if fconst is not None and abs(fconst) > 1.0 + 1e-12:
        raise ConstructionError("tricomi coefficient violates |f| <= 1")
    if callable(f):
        ts = np.linspace(-3, 3, 601)
        if np.max(np.abs(np.asarray([f(t) for t in ts]))) > 1.0 + 1e-12:
            raise ConstructionError("tricomi coefficient violates |f| <= 1")
    res = _pde_residual_samples(w, "tricomi", f=f)
    if res > tol:
        raise ConstructionError(f"tricomi residual {res:.2e} exceeds {tol:.0e}")
    if fconst is None:
        raise ConstructionError(
            "non-constant tricomi coefficients need a polynomial f(z1)")
    e = _entropy_from_rows(w, fconst, "tricomi-partner", "tricomi",
                           meta={"f": fconst})
    _audit_entropy(e)
    return e


def _audit_entropy(e, box=2.0, tol=1e-8):
    alpha = e.meta["alpha"]
    w = e.meta["w"]
    s = e.meta["s"]

    def grad_alpha(pts):
        return np.stack([-s * w.dz2()(pts), -w.dz1()(pts)], axis=-1)

    worst = _loop_audit(lambda pts: alpha.grad(pts), box=box)
    target = _loop_audit(grad_alpha, box=box)
    if worst > tol or target > tol:
        raise ConstructionError(f"loop audit failed: {max(worst, target):.2e}")
    if _jac_fd_error(e, _sample_box(2, box, 5, 100, 1)) > 1e-6:
        raise ConstructionError("Jacobian disagrees with finite differences")


@dataclass
class TricomiReport:
    lhs: float
    rhs: float
    residual: float
    defect_gradient: float
    defect_eikonal: float
    defect_diagonal: float
    energy: float


def tricomi_identity_check(w, f, field, p=None):
    """Exact planar energy decomposition for the Tricomi entropy.

    Computes both sides of
      Phi1(u+) - Phi1(u-) = E(u) - 0.5 int (1 - f^2) |grad u1|^2
                                  - 0.5 int (w(u) - (f d2 u1 + d1 u2))^2
                                  - 0.5 int (d2 u2 - f d1 u1)^2
    with the grid quadrature; the residual is O(h^2) for smooth fields.
    """
    from .cylinder import energy
    from .potentials import builtin_w_squared

    fconst = float(f)
    e = entropy_tricomi(w, fconst)
    if p is None:
        p = builtin_w_squared(w, "tricomi", f=fconst)
    grid = field.grid
    u = field.values
    u1, u2 = u[..., 0], u[..., 1]
    d1u1 = diff_axial(u1, grid.h1)
    d2u1 = diff_periodic(u1, grid.hper, axis=1)
    d1u2 = diff_axial(u2, grid.h1)
    d2u2 = diff_periodic(u2, grid.hper, axis=1)
    wq = grid.axial_weights()[:, None]
    cell = grid.cell

    def integ(x):
        return float(np.sum(x * wq) * cell)

    wv = w(u)
    d_grad = 0.5 * integ((1.0 - fconst**2) * (d1u1**2 + d2u1**2))
    d_eik = 0.5 * integ((wv - (fconst * d2u1 + d1u2)) ** 2)
    d_diag = 0.5 * integ((d2u2 - fconst * d1u1) ** 2)
    E = energy(p, field)
    lhs = calibration_value(e, field)
    rhs = E - d_grad - d_eik - d_diag
    return TricomiReport(lhs=lhs, rhs=rhs, residual=abs(lhs - rhs),
                         defect_gradient=d_grad, defect_eikonal=d_eik,
                         defect_diagonal=d_diag, energy=E)


# ---------------------------------------------------------------------------
# gradient-of-Psi family in dimension d
# ---------------------------------------------------------------------------

def psi_extend(psi_bar):
    """Wave-type extension of a scalar on R^(d-1) to R^d:
    Psi(z) = (Psi_bar(..., z_{d-1}+z_d) + Psi_bar(..., z_{d-1}-z_d)) / 2.

    Preserves equality of all repeated second derivatives."""

    def psi(z):
        z = np.asarray(z, dtype=float)
        zp = np.concatenate([z[..., :-2], (z[..., -2] + z[..., -1])[..., None]],
                            axis=-1)
        zm = np.concatenate([z[..., :-2], (z[..., -2] - z[..., -1])[..., None]],
                            axis=-1)
        return 0.5 * (psi_bar(zp) + psi_bar(zm))

    return psi


def psi_d(z):
    """Closed form Psi_d(z) = -z1 z2 ((z1^2 + z2^2)/3 + |z''|^2 - 1)."""
    z = np.asarray(z, dtype=float)
    s = z[..., 0] ** 2 + z[..., 1] ** 2
    t = np.sum(z[..., 2:] ** 2, axis=-1)
    return -z[..., 0] * z[..., 1] * (s / 3.0 + t - 1.0)


def entropy_phi_d(d):
    """The entropy grad Psi_d with its closed-form (symmetric) Hessian.

    The Hessian has identical diagonal entries -2 z1 z2, so the potential
    |P0 Hess|^2 / 4 equals the d-dimensional double-well extension exactly.
    """
    if d < 2:
        raise ValueError("d must be >= 2")

    def phi(z):
        z = np.asarray(z, dtype=float)
        s = z[..., 0] ** 2 + z[..., 1] ** 2
        t = np.sum(z[..., 2:] ** 2, axis=-1)
        base = s / 3.0 + t - 1.0
        out = np.empty(z.shape)
        out[..., 0] = -z[..., 1] * base - (2.0 / 3.0) * z[..., 0] ** 2 * z[..., 1]
        out[..., 1] = -z[..., 0] * base - (2.0 / 3.0) * z[..., 0] * z[..., 1] ** 2
        out[..., 2:] = -2.0 * (z[..., 0] * z[..., 1])[..., None] * z[..., 2:]
        return out

    def jac(z):
        z = np.asarray(z, dtype=float)
        r2 = np.sum(z * z, axis=-1)
        out = np.zeros(z.shape + (d,))
        diag = -2.0 * z[..., 0] * z[..., 1]
        idx = np.arange(d)
        out[..., idx, idx] = diag[..., None]
        out[..., 0, 1] = out[..., 1, 0] = 1.0 - r2
        if d >= 3:
            out[..., 0, 2:] = -2.0 * z[..., 1, None] * z[..., 2:]
            out[..., 2:, 0] = out[..., 0, 2:]
            out[..., 1, 2:] = -2.0 * z[..., 0, None] * z[..., 2:]
            out[..., 2:, 1] = out[..., 1, 2:]
        return out

    return Entropy(d, phi, jac, "sym", tag=f"grad-psi-{d}")


# ---------------------------------------------------------------------------
# first-order optimality PDEs
# ---------------------------------------------------------------------------

def pde_residual(e, p, f, kind=None):
    """L2 defects of the first-order optimality system and equipartition.

    strg:  grad u^T = P0 grad Phi(u)        and W(u) = |P0 grad Phi(u)|^2 / 2
    asym:  2 P- grad u^T = P0 grad Phi(u)   and W(u) = |P0 grad Phi(u)|^2 / 4
    sym:   2 P+ grad u = P0 grad Phi(u)     and W(u) = |P0 grad Phi(u)|^2 / 4

    Returns ``(pde_defect, equipartition_defect)``; both vanish (to O(h^2))
    on global minimizers when the entropy saturates.
    """
    from .cylinder import _grad_tensor

    kind = kind or e.kind
    grid = f.grid
    gt = _grad_tensor(grid, f.values)  # gt[..., i, j] = D_j u_i
    P0 = traceless(e.jac(f.values))
    gt_T = np.swapaxes(gt, -1, -2)
    if kind == "strg":
        defect = gt_T - P0
        c = 0.5
    elif kind == "asym":
        defect = 2.0 * asym_part(gt_T) - P0
        c = 0.25
    elif kind == "sym":
        defect = 2.0 * sym_part(gt) - P0
        c = 0.25
    else:
        raise ValueError(f"unsupported kind {kind!r}")
    wq = grid.axial_weights().reshape((-1,) + (1,) * (grid.d - 1))
    pde = float(np.sqrt(np.sum(_frob2(defect) * wq) * grid.cell))
    equi = float(np.sqrt(np.sum((p(f.values) - c * _frob2(P0)) ** 2 * wq)
                         * grid.cell))
    return pde, equi


# ---------------------------------------------------------------------------
# antisymmetric rigidity: the quadratic family
# ---------------------------------------------------------------------------

def asym_rigidity_entropy(c, L, phi0=None):
    """Quadratic map whose traceless Jacobian is antisymmetric everywhere:

    Phi^i(z) = Phi^i(0) + L^i z + sum_j (c_j z_j z_i - c_i z_j^2 / 2),
    giving P0 grad Phi(z) = L + z (x) c - c (x) z.
    """
    c = np.asarray(c, dtype=float)
    d = c.shape[0]
    L = np.zeros((d, d)) if L is None else np.asarray(L, dtype=float)
    if np.max(np.abs(L + L.T)) > 1e-12:
        raise ValueError("L must be antisymmetric")
    phi0 = np.zeros(d) if phi0 is None else np.asarray(phi0, dtype=float)

    def phi(z):
        z = np.asarray(z, dtype=float)
        cz = np.tensordot(z, c, axes=([-1], [0]))
        z2 = np.sum(z * z, axis=-1)
        lin = np.tensordot(z, L.T, axes=([-1], [0]))
        return phi0 + lin + cz[..., None] * z - 0.5 * z2[..., None] * c

    def jac(z):
        z = np.asarray(z, dtype=float)
        cz = np.tensordot(z, c, axes=([-1], [0]))
        outer_zc = z[..., :, None] * c[None, :]
        outer_cz = c[:, None] * z[..., None, :]
        eye = np.eye(d)
        return L + outer_zc - outer_cz + cz[..., None, None] * eye

    return Entropy(d, phi, jac, "asym", tag="asym-quadratic",
                   meta={"c": c, "L": L})


def _cubic_basis_exponents(d, deg=3):
    exps = []
    for total in range(deg + 1):
        def rec(prefix, remaining, slots):
            if slots == 0:
                if remaining == 0:
                    exps.append(tuple(prefix))
                return
            for k in range(remaining + 1):
                rec(prefix + [k], remaining - k, slots - 1)
        rec([], total, d)
    return exps


def asym_rigidity_regression(d=3, n_samples=120, seed=0):
    """Brute-force check of the antisymmetric rigidity at polynomial degree 3.

    Builds the linear map from cubic-coefficient space to the sampled
    symmetric parts of P0 grad Phi, extracts its null space by SVD, and
    returns (null_dim, family_dim, residual): residual is how far the null
    space sits from the span of the known solutions (constants, the affine
    homothety z -> z, antisymmetric linear maps, and the quadratic family).
    """
    rng = np.random.default_rng(seed)
    exps = _cubic_basis_exponents(d)
    nb = len(exps)
    pts = rng.uniform(-1.5, 1.5, size=(n_samples, d))

    def monomial_grads(z):
        # grad of each monomial at z: (nb, d)
        out = np.zeros((nb, d))
        for b, ex in enumerate(exps):
            for j in range(d):
                if ex[j] == 0:
                    continue
                val = ex[j]
                for k in range(d):
                    e = ex[k] - 1 if k == j else ex[k]
                    val *= z[k] ** e
                out[b, j] = val
        return out

    rows = []
    for z in pts:
        G = monomial_grads(z)  # (nb, d): d_j of each basis monomial
        # unknowns: coeffs[i, b] for component i, basis b
        # constraint: sym part of P0 grad Phi = 0 at z
        # grad Phi[i, j] = sum_b coeffs[i, b] G[b, j]
        for i in range(d):
            for j in range(i, d):
                row = np.zeros((d, nb))
                if i == j:
                    # diagonal of traceless part must vanish:
                    # d_i Phi_i - (1/d) sum_k d_k Phi_k = 0
                    row[i] += G[:, i]
                    for k in range(d):
                        row[k] -= G[:, k] / d
                else:
                    row[i] += 0.5 * G[:, j]
                    row[j] += 0.5 * G[:, i]
                rows.append(row.reshape(-1))
    T = np.asarray(rows)

    _u, s, vt = np.linalg.svd(T)
    tol = max(T.shape) * np.finfo(float).eps * s[0]
    null = vt[int(np.sum(s > tol)):]
    null_dim = null.shape[0]

    # family basis in coefficient space
    def coeffs_of(fn):
        # fit exact polynomial coefficients by solving on a lattice
        pts_f = rng.uniform(-1, 1, size=(3 * nb, d))
        M = np.zeros((len(pts_f), nb))
        for r, z in enumerate(pts_f):
            for b, ex in enumerate(exps):
                M[r, b] = np.prod(z**np.asarray(ex))
        vals = np.asarray([fn(z) for z in pts_f])  # (n, d)
        sol, *_ = np.linalg.lstsq(M, vals, rcond=None)
        return sol.T.reshape(-1)  # (d * nb,)

    basis = []
    for i in range(d):  # constants
        basis.append(coeffs_of(lambda z, i=i: np.eye(d)[i]))
    basis.append(coeffs_of(lambda z: z))  # homothety (trivial entropy)
    for i in range(d):
        for j in range(i + 1, d):
            Lm = np.zeros((d, d))
            Lm[i, j], Lm[j, i] = 1.0, -1.0
            basis.append(coeffs_of(lambda z, Lm=Lm: Lm @ z))
    for k in range(d):  # quadratic family, c = e_k
        ck = np.eye(d)[k]
        ent = asym_rigidity_entropy(ck, np.zeros((d, d)))
        basis.append(coeffs_of(lambda z, ent=ent: ent.phi(z)))
    B = np.asarray(basis)

    # residual of projecting the null space onto span(B)
    Q, _ = np.linalg.qr(B.T)
    resid = 0.0
    for v in null:
        proj = Q @ (Q.T @ v)
        resid = max(resid, float(np.linalg.norm(v - proj)))
    return null_dim, B.shape[0], resid


# ---------------------------------------------------------------------------
# the planar reduction of the 3D optimality system
# ---------------------------------------------------------------------------

@dataclass
class OdeTrajectory:
    t: np.ndarray
    v: np.ndarray  # columns (v2, v3)
    omega_limit: str  # "plus", "minus", "blowup", "undecided"

    def conserved_u1(self):
        return self.v[:, 0] + self.v[:, 1]


def ode3d_solve(b, v0, t_span=12.0, dt=1e-3):
    """RK4 trajectory of (v2', v3') = (b^2 - v2^2 - v3^2, -2 v2 v3).

    Classifies the omega-limit among the equilibria (+/- b, 0); blow-up is
    detected by magnitude escape.  {v3 = 0} is invariant, so the sign of v3
    never changes along trajectories.
    """
    if b <= 0:
        raise ValueError("b must be positive")
    nsteps = int(round(t_span / dt))
    traj = rk4_planar(b, np.asarray(v0, dtype=float), dt, nsteps)
    t = np.arange(traj.shape[0]) * dt
    end = traj[-1]
    if np.max(np.abs(end)) > 1e5:
        omega = "blowup"
    elif np.linalg.norm(end - np.array([b, 0.0])) < 1e-4:
        omega = "plus"
    elif np.linalg.norm(end - np.array([-b, 0.0])) < 1e-4:
        omega = "minus"
    else:
        omega = "undecided"
    return OdeTrajectory(t=t, v=traj, omega_limit=omega)
