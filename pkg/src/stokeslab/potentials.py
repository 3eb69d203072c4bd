"""Nonnegative multi-well potentials on R^d and their zero sets.

A :class:`Potential` is a pure evaluator (value + gradient, vectorized over
leading array dimensions) with optional metadata about known wells.  Builtins
cover the double-well potential 0.5*(1-|z|^2)^2 in the plane, potentials of
the form 0.5*w^2 for a scalar field w, and the d-dimensional extension
0.5*(|z|^2-1)^2 + 2*|z''|^2*(z1^2+z2^2).
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .poly import Poly2

TOL_WELL_CLOSED_FORM = 1e-10
TOL_WELL_SAMPLED = 1e-6


class Potential:
    """Evaluator for a potential W >= 0 and its gradient.

    Parameters
    ----------
    dim :
        Target-space dimension d >= 2.
    fn :
        Callable mapping arrays of shape (..., d) to values of shape (...).
    grad :
        Callable mapping (..., d) to (..., d).  When omitted, a central
        finite-difference fallback (step 1e-6) is used.
    known_wells :
        Optional sequence of points z with W(z) = 0.
    tag :
        Short descriptive name used by the CLI potential registry.
    """

    def __init__(self, dim, fn, grad=None, known_wells=None, tag="custom",
                 tol_well=TOL_WELL_CLOSED_FORM, meta=None):
        if dim < 2:
            raise ValueError("potential dimension must be >= 2")
        self.dim = int(dim)
        self._fn = fn
        self._grad = grad
        self.known_wells = [np.asarray(w, dtype=float) for w in (known_wells or [])]
        self.tag = tag
        self.tol_well = tol_well
        self.meta = dict(meta or {})
        for w in self.known_wells:
            if w.shape != (self.dim,):
                raise ValueError("well has wrong dimension")

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return np.asarray(self._fn(z), dtype=float)

    def grad(self, z):
        z = np.asarray(z, dtype=float)
        if self._grad is not None:
            return np.asarray(self._grad(z), dtype=float)
        return self._fd_grad(z)

    def _fd_grad(self, z, h=1e-6):
        z = np.asarray(z, dtype=float)
        out = np.empty(z.shape)
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = h
            out[..., k] = (self(z + e) - self(z - e)) / (2 * h)
        return out

    def __repr__(self):
        return f"Potential(tag={self.tag!r}, dim={self.dim})"


@dataclass(frozen=True)
class Well:
    """A zero of the potential, with its slice coordinate a = point . e1."""

    point: np.ndarray
    slice_coord: float

    @classmethod
    def at(cls, point):
        point = np.asarray(point, dtype=float)
        return cls(point=point, slice_coord=float(point[0]))


@dataclass
class WellScan:
    """Result of a well search on a slice.

    Iterable over the polished wells; carries flags for the degenerate cases
    (non-isolated zero sets, candidates whose Newton polish failed).
    """

    wells: list = field(default_factory=list)
    non_isolated: bool = False
    unpolished: list = field(default_factory=list)
    grid_spacing: float = 0.0

    def __iter__(self):
        return iter(self.wells)

    def __len__(self):
        return len(self.wells)

    def points(self):
        return [w.point for w in self.wells]


@dataclass(frozen=True)
class RotationFrame:
    """Orthogonal change of frame: R in SO(d) with R nu = e1."""

    R: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        nu = np.asarray(self.nu, dtype=float)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "nu", nu)
        d = R.shape[0]
        if R.shape != (d, d):
            raise ValueError("R must be square")
        if np.max(np.abs(R.T @ R - np.eye(d))) > 1e-12:
            raise ValueError("R is not orthogonal to 1e-12")
        if abs(np.linalg.det(R) - 1.0) > 1e-10:
            raise ValueError("R must have det 1")
        if abs(np.linalg.norm(nu) - 1.0) > 1e-12:
            raise ValueError("nu must be a unit vector")
        e1 = np.zeros(d)
        e1[0] = 1.0
        if np.max(np.abs(R @ nu - e1)) > 1e-10:
            raise ValueError("frame requires R nu = e1")

    @classmethod
    def identity(cls, d):
        R = np.eye(d)
        return cls(R=R, nu=R[0].copy())

    @classmethod
    def from_direction(cls, nu):
        """Build some R in SO(d) with R nu = e1 (Householder + sign fix)."""
        nu = np.asarray(nu, dtype=float)
        nu = nu / np.linalg.norm(nu)
        d = nu.shape[0]
        e1 = np.zeros(d)
        e1[0] = 1.0
        v = nu - e1
        if np.linalg.norm(v) < 1e-14:
            return cls.identity(d)
        H = np.eye(d) - 2.0 * np.outer(v, v) / (v @ v)
        # Householder reflects (det -1); flip one of the remaining axes.
        R = H.copy()
        if np.linalg.det(R) < 0:
            R[-1] = -R[-1]
            if np.max(np.abs(R @ nu - e1)) > 1e-10:  # flipped row hit e1
                R = H.copy()
                R[-2] = -R[-2]
        return cls(R=R, nu=nu)

    @classmethod
    def rotation_2d(cls, theta):
        c, s = np.cos(theta), np.sin(theta)
        R = np.array([[c, -s], [s, c]])
        return cls(R=R, nu=R.T @ np.array([1.0, 0.0]))


# ---------------------------------------------------------------------------
# builtin potentials
# ---------------------------------------------------------------------------

def builtin_ginzburg_landau():
    """Planar double-well potential W(z) = 0.5*(1-|z|^2)^2."""

    def fn(z):
        r2 = z[..., 0] ** 2 + z[..., 1] ** 2
        return 0.5 * (1.0 - r2) ** 2

    def grad(z):
        r2 = z[..., 0] ** 2 + z[..., 1] ** 2
        return -2.0 * (1.0 - r2)[..., None] * z

    wells = [(0.0, 1.0), (0.0, -1.0), (1.0, 0.0), (-1.0, 0.0),
             (0.6, 0.8), (0.6, -0.8)]
    return Potential(2, fn, grad, known_wells=wells, tag="gl")


def builtin_w_squared(w, kind, f=None, check_box=2.0, n_check=400, seed=0):
    """Potential W = 0.5*w^2 on the plane for a scalar field w.

    ``w`` is either a :class:`~stokeslab.poly.Poly2` or an object with
    vectorized ``__call__`` and ``grad``.  ``kind`` is one of "harmonic",
    "wave", "tricomi"; the tricomi case takes the coefficient ``f`` (a scalar
    or a callable of z1) and rejects |f| > 1 on the sampled range.
    """
    if kind not in ("harmonic", "wave", "tricomi"):
        raise ValueError(f"unknown kind {kind!r}")
    if kind == "tricomi":
        if f is None:
            raise ValueError("tricomi potential requires coefficient f")
        fvals = _sample_f(f, check_box, n_check, seed)
        if np.max(np.abs(fvals)) > 1.0 + 1e-12:
            raise ValueError("tricomi coefficient violates |f| <= 1 on sampled range")

    def fn(z):
        return 0.5 * np.asarray(w(z)) ** 2

    def grad(z):
        return np.asarray(w(z))[..., None] * np.asarray(w.grad(z))

    meta = {"kind": kind}
    if kind == "tricomi":
        meta["f"] = f
    return Potential(2, fn, grad, tag=f"w2-{kind}", meta=meta)


def _sample_f(f, box, n, seed):
    ts = np.linspace(-box, box, n)
    rng = np.random.default_rng(seed)
    ts = np.concatenate([ts, rng.uniform(-box, box, n)])
    if callable(f):
        return np.asarray([f(t) for t in ts], dtype=float)
    return np.full(ts.shape, float(f))


def builtin_wd(d):
    """Extension of the planar double-well potential to dimension d >= 2.

    W_d(z) = 0.5*(|z|^2 - 1)^2 + 2*|z''|^2*(z1^2 + z2^2), z'' = (z3, ..., zd).
    """
    if d < 2:
        raise ValueError("dimension must be >= 2")

    def fn(z):
        r2 = np.sum(z**2, axis=-1)
        s = z[..., 0] ** 2 + z[..., 1] ** 2
        t = r2 - s
        return 0.5 * (r2 - 1.0) ** 2 + 2.0 * t * s

    def grad(z):
        r2 = np.sum(z**2, axis=-1)
        s = z[..., 0] ** 2 + z[..., 1] ** 2
        t = r2 - s
        out = 2.0 * (r2 - 1.0)[..., None] * z
        out[..., 0] += 4.0 * t * z[..., 0]
        out[..., 1] += 4.0 * t * z[..., 1]
        out[..., 2:] += 4.0 * s[..., None] * z[..., 2:]
        return out

    wells = []
    for a, b in [(0.0, 1.0), (0.0, -1.0), (1.0, 0.0), (-1.0, 0.0),
                 (0.6, 0.8), (0.6, -0.8)]:
        p = np.zeros(d)
        p[0], p[1] = a, b
        wells.append(p)
    if d >= 3:
        for s in (1.0, -1.0):
            p = np.zeros(d)
            p[2] = s
            wells.append(p)
    return Potential(d, fn, grad, known_wells=wells, tag=f"wd{d}")


def poly_w_from_json(spec):
    if spec.get("w") != "poly":
        raise ValueError("only polynomial w descriptors are supported")
    return Poly2.from_terms(spec["coeffs"])


def potential_from_json(obj):
    """Load a potential from its JSON descriptor.

    Supported forms::

        {"kind": "builtin", "tag": "gl"}
        {"kind": "builtin", "tag": "wd3"}
        {"kind": "w_squared", "w": "poly", "coeffs": [[i, j, c], ...],
         "pde": "wave" | "harmonic" | "tricomi", "f": 0.5}
    """
    if isinstance(obj, str):
        obj = json.loads(obj)
    kind = obj.get("kind")
    if kind == "builtin":
        return resolve_potential(obj["tag"])
    if kind == "w_squared":
        w = poly_w_from_json(obj)
        pde = obj.get("pde", "wave")
        return builtin_w_squared(w, pde, f=obj.get("f"))
    raise ValueError(f"unknown potential descriptor kind {kind!r}")


_SEPARATION_W = Poly2({(1, 1): 1.0})  # w(z) = z1*z2


def resolve_potential(tag):
    """Resolve a builtin potential by tag string ("gl", "wd3", "sep", ...)."""
    if tag == "gl":
        return builtin_ginzburg_landau()
    if tag == "sep":
        return builtin_w_squared(_SEPARATION_W, "harmonic")
    if tag.startswith("wd"):
        return builtin_wd(int(tag[2:]))
    if tag.startswith("tricomi:"):
        delta = float(tag.split(":", 1)[1])
        w = Poly2({(0, 0): 1.0, (2, 0): -delta, (0, 2): -1.0})
        return builtin_w_squared(w, "tricomi", f=delta)
    raise ValueError(f"unknown potential tag {tag!r}")


# ---------------------------------------------------------------------------
# well discovery
# ---------------------------------------------------------------------------

def find_wells_on_slice(p, a, box=2.0, n=81, tol_well=None):
    """Locate the zeros of W restricted to the slice {z1 = a}.

    Coarse grid scan over [-box, box]^(d-1) for local minima, Newton polish
    on the in-slice gradient, deduplication within 1e-6.  Clusters of
    candidates wider than 10 grid spacings are reported as a non-isolated
    zero set instead of being polished (the finite-well hypothesis fails
    there).
    """
    tol_well = p.tol_well if tol_well is None else tol_well
    m = p.dim - 1
    axes = [np.linspace(-box, box, n)] * m
    h = 2.0 * box / (n - 1)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([np.full(mesh[0].shape, float(a))] + list(mesh), axis=-1)
    vals = p(pts)

    is_min = np.ones(vals.shape, dtype=bool)
    for ax in range(m):
        lo = np.roll(vals, 1, axis=ax)
        hi = np.roll(vals, -1, axis=ax)
        # no wraparound on the scan box: mask the rolled-in edges
        sl_lo = [slice(None)] * m
        sl_lo[ax] = 0
        lo[tuple(sl_lo)] = np.inf
        sl_hi = [slice(None)] * m
        sl_hi[ax] = -1
        hi[tuple(sl_hi)] = np.inf
        is_min &= (vals <= lo) & (vals <= hi)

    # keep only candidates that can plausibly reach zero after polish
    cand_mask = is_min & (vals < max(1e2 * tol_well, (10 * h) ** 2))
    cand = pts[cand_mask].reshape(-1, p.dim)

    scan = WellScan(grid_spacing=h)
    if cand.size == 0:
        return scan

    clusters = _cluster(cand, radius=2.5 * h)
    for cluster in clusters:
        diam = _diameter(cluster)
        if diam > 10.0 * h:
            scan.non_isolated = True
            continue
        rep = min(cluster, key=lambda q: float(p(q)))
        z, ok = _newton_polish_slice(p, a, rep)
        if ok and float(p(z)) <= tol_well:
            scan.wells.append(Well.at(z))
        else:
            scan.unpolished.append(np.asarray(rep))

    # dedupe within 1e-6
    unique = []
    for w in scan.wells:
        if all(np.linalg.norm(w.point - u.point) > 1e-6 for u in unique):
            unique.append(w)
    scan.wells = unique
    return scan


def _cluster(points, radius):
    points = [np.asarray(q) for q in points]
    clusters = []
    for q in points:
        placed = False
        for cl in clusters:
            if any(np.linalg.norm(q - r) <= radius for r in cl):
                cl.append(q)
                placed = True
                break
        if not placed:
            clusters.append([q])
    # merge clusters that grew into contact
    merged = True
    while merged:
        merged = False
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                if any(np.linalg.norm(qi - qj) <= radius
                       for qi in clusters[i] for qj in clusters[j]):
                    clusters[i].extend(clusters[j])
                    del clusters[j]
                    merged = True
                    break
            if merged:
                break
    return clusters


def _diameter(cluster):
    if len(cluster) < 2:
        return 0.0
    pts = np.asarray(cluster)
    return max(np.linalg.norm(pts[i] - pts[j])
               for i in range(len(pts)) for j in range(i + 1, len(pts)))


def _newton_polish_slice(p, a, z0, max_iter=60, h=1e-6):
    """Newton on the in-slice gradient of W; FD Hessian, damped steps."""
    z = np.asarray(z0, dtype=float).copy()
    m = p.dim - 1
    for _ in range(max_iter):
        g = p.grad(z)[1:]
        if np.linalg.norm(g) < 1e-14:
            return z, True
        H = np.empty((m, m))
        for k in range(m):
            e = np.zeros(p.dim)
            e[k + 1] = h
            H[:, k] = (p.grad(z + e)[1:] - p.grad(z - e)[1:]) / (2 * h)
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            return z, False
        if not np.all(np.isfinite(step)) or np.linalg.norm(step) > 1.0:
            step = -g * min(1.0, 1.0 / np.linalg.norm(g))
        z[1:] += step
        z[0] = a
        if np.linalg.norm(step) < 1e-13:
            break
    return z, bool(np.linalg.norm(p.grad(z)[1:]) < 1e-8)


def rotate_potential(p, frame):
    """Potential in the rotated frame: W_R(z) = W(R z)."""
    R = frame.R

    def fn(z):
        return p(np.asarray(z) @ R.T)

    def grad(z):
        return p.grad(np.asarray(z) @ R.T) @ R

    wells = [R.T @ w for w in p.known_wells]
    return Potential(p.dim, fn, grad, known_wells=wells,
                     tag=f"{p.tag}-rot", tol_well=p.tol_well)
