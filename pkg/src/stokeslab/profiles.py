"""One-dimensional transition profiles and degenerate geodesic costs.

The metric is 2*W*g0: curve length is the integral of sqrt(2 W) |gamma'|.
Optimal 1D transitions between wells solve phi' = +/- sqrt(2 W(a, phi)) and
carry the equipartition identity 0.5*|gamma'|^2 = W(gamma).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate


class IntermediateWellError(ValueError):
    """W vanishes strictly between the requested wells; no monotone profile."""


@dataclass
class Path:
    """Ordered polyline in R^d, optionally confined to a slice {z1 = a}."""

    points: np.ndarray
    constrained_slice: float | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2:
            raise ValueError("points must be an (N+1, d) array")
        self.cleanup()
        if self.constrained_slice is not None:
            self.points[:, 0] = self.constrained_slice

    def cleanup(self, tol=0.0):
        """Drop consecutive duplicate points."""
        pts = self.points
        keep = [0]
        for k in range(1, len(pts)):
            if np.linalg.norm(pts[k] - pts[keep[-1]]) > tol:
                keep.append(k)
        self.points = pts[keep]

    @property
    def dim(self):
        return self.points.shape[1]

    def segment_lengths(self):
        return np.linalg.norm(np.diff(self.points, axis=0), axis=1)

    def length(self):
        return float(self.segment_lengths().sum())


@dataclass
class Profile1D:
    """Sampled optimal 1D transition t -> gamma(t) in the slice {z1 = a}."""

    t_samples: np.ndarray
    values: np.ndarray
    a: float
    wells: tuple
    attached: tuple = (True, True)
    equipartition_residual: float = 0.0

    def __post_init__(self):
        self.t_samples = np.asarray(self.t_samples, dtype=float)
        self.values = np.asarray(self.values, dtype=float)

    @property
    def dim(self):
        return self.values.shape[1]

    def as_path(self):
        return Path(points=self.values.copy(), constrained_slice=self.a)


@dataclass
class GeodesicResult:
    cost: float
    path: Path
    converged: bool
    n_nodes: int
    n_evals: int = 0

    def __iter__(self):  # allows ``cost, path = geodesic_cost(...)``
        return iter((self.cost, self.path))


@dataclass
class TriangleReport:
    strict: bool
    margin_table: list = field(default_factory=list)
    direct_cost: float = 0.0


# ---------------------------------------------------------------------------
# costs
# ---------------------------------------------------------------------------

def geodesic_cost_2d(p, a, y_minus, y_plus):
    """Slice geodesic cost in the plane: integral of sqrt(2 W(a, y)) dy.

    Adaptive quadrature to absolute tolerance 1e-9; exact 0 for an empty
    interval.  Valid for d = 2 only, where slice geodesics are monotone.
    """
    if p.dim != 2:
        raise ValueError("geodesic_cost_2d requires a planar potential")
    if y_minus == y_plus:
        return 0.0
    lo, hi = min(y_minus, y_plus), max(y_minus, y_plus)

    def integrand(y):
        return math.sqrt(max(2.0 * float(p(np.array([a, y]))), 0.0))

    val, _err = integrate.quad(integrand, lo, hi, epsabs=1e-9, limit=200)
    return float(val)


def path_cost(p, path):
    """Trapezoid discrete length of a polyline in the metric 2 W g0."""
    pts = path.points if isinstance(path, Path) else np.asarray(path, dtype=float)
    m = np.sqrt(np.maximum(2.0 * p(pts), 0.0))
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return float(np.sum(0.5 * (m[:-1] + m[1:]) * seg))


def path_cost_fine(p, path, k=8):
    """Polyline length with k-point Gauss quadrature per segment."""
    pts = path.points if isinstance(path, Path) else np.asarray(path, dtype=float)
    nodes, weights = np.polynomial.legendre.leggauss(k)
    a = pts[:-1]
    b = pts[1:]
    seg = np.linalg.norm(b - a, axis=1)
    ts = 0.5 * (nodes + 1.0)
    samples = a[:, None, :] + ts[None, :, None] * (b - a)[:, None, :]
    m = np.sqrt(np.maximum(2.0 * p(samples), 0.0))
    return float(np.sum(seg * 0.5 * (m @ weights)))


def _cost_and_grad(p, pts, slice_constrained):
    """Discrete length and its gradient w.r.t. interior nodes."""
    m = np.sqrt(np.maximum(2.0 * p(pts), 1e-300))
    diffs = np.diff(pts, axis=0)
    seg = np.linalg.norm(diffs, axis=1)
    seg_safe = np.maximum(seg, 1e-300)
    w = 0.5 * (m[:-1] + m[1:])
    cost = float(np.sum(w * seg))

    # dm/dz = grad W / sqrt(2 W)
    dm = p.grad(pts) / np.maximum(m, 1e-12)[..., None]
    units = diffs / seg_safe[:, None]
    g = np.zeros_like(pts)
    # d cost / d node_j: metric term + endpoint terms of adjacent segments
    g += 0.5 * dm * (np.concatenate([[0.0], seg]) + np.concatenate([seg, [0.0]]))[:, None]
    g[:-1] -= w[:, None] * units
    g[1:] += w[:, None] * units
    g[0] = 0.0
    g[-1] = 0.0
    if slice_constrained:
        g[:, 0] = 0.0
    return cost, g


def _descend_path(p, pts, slice_constrained, max_iter=400, gtol=1e-8):
    """Backtracking gradient descent on interior nodes. Returns (pts, cost, ok)."""
    cost, g = _cost_and_grad(p, pts, slice_constrained)
    step = 1.0 / max(np.max(np.abs(g)), 1e-8)
    n_ok = 0
    for _ in range(max_iter):
        gn = np.max(np.abs(g))
        if gn < gtol:
            return pts, cost, True
        trial_step = step
        improved = False
        for _bt in range(40):
            cand = pts - trial_step * g
            if slice_constrained:
                cand[:, 0] = pts[:, 0]
            cand[0], cand[-1] = pts[0], pts[-1]
            c2, g2 = _cost_and_grad(p, cand, slice_constrained)
            if c2 <= cost - 1e-4 * trial_step * float(np.sum(g * g)):
                pts, cost, g = cand, c2, g2
                improved = True
                break
            trial_step *= 0.5
        if not improved:
            return pts, cost, True  # stalled at line-search resolution
        step = min(trial_step * 2.0, 1e3)
        n_ok += 1
    return pts, cost, False


def _resample(pts, n_nodes):
    """Resample a polyline to n_nodes+1 points uniformly by chord length."""
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total <= 0:
        return np.repeat(pts[:1], n_nodes + 1, axis=0)
    su = np.linspace(0.0, total, n_nodes + 1)
    out = np.empty((n_nodes + 1, pts.shape[1]))
    for k in range(pts.shape[1]):
        out[:, k] = np.interp(su, s, pts[:, k])
    return out


def geodesic_cost(p, z_minus, z_plus, path_space="ambient", a=None,
                  n_nodes=64, n_restarts=5, seed=0, max_nodes=512,
                  extra_seeds=None):
    """Upper bound on the geodesic cost between two points, with the path.

    Multi-start interior-node descent on the discrete length; node count is
    doubled (up to ``max_nodes``) until the best cost changes by < 1e-5.
    ``path_space`` is "ambient" or "slice"; the slice variant requires ``a``
    and keeps every node's first coordinate pinned to it.

    Returns a :class:`GeodesicResult`; the cost is an upper bound on the true
    value by construction, and ``converged`` reports whether the node-doubling
    loop stabilized.
    """
    z_minus = np.asarray(z_minus, dtype=float)
    z_plus = np.asarray(z_plus, dtype=float)
    slice_constrained = path_space == "slice"
    if slice_constrained:
        if a is None:
            a = float(z_minus[0])
        if abs(z_minus[0] - a) > 1e-12 or abs(z_plus[0] - a) > 1e-12:
            raise ValueError("slice geodesic endpoints must lie on the slice")

    if np.linalg.norm(z_plus - z_minus) == 0.0:
        path = Path(points=np.stack([z_minus, z_plus]),
                    constrained_slice=a if slice_constrained else None)
        return GeodesicResult(cost=0.0, path=path, converged=True, n_nodes=1)

    rng = np.random.default_rng(seed)
    scale = np.linalg.norm(z_plus - z_minus)

    def straight(n):
        ts = np.linspace(0.0, 1.0, n + 1)[:, None]
        return z_minus[None, :] * (1 - ts) + z_plus[None, :] * ts

    starts = [straight(n_nodes)]
    for _ in range(max(0, n_restarts - 1)):
        pts = straight(n_nodes)
        bend = rng.normal(size=p.dim) * 0.35 * scale
        if slice_constrained:
            bend[0] = 0.0
        bump = np.sin(np.pi * np.linspace(0, 1, n_nodes + 1))[:, None]
        pts = pts + bump * bend[None, :]
        starts.append(pts)
    for s in (extra_seeds or []):
        starts.append(_resample(np.asarray(s, dtype=float), n_nodes))

    best_pts, best_fine = None, np.inf
    for pts in starts:
        pts, _cost, _ok = _descend_path(p, pts.copy(), slice_constrained)
        fine = path_cost_fine(p, pts)
        if fine < best_fine:
            best_fine, best_pts = fine, pts

    # node doubling: descend both the inherited path and a fresh straight
    # candidate at each level, ranked by accurate quadrature (the coarse
    # trapezoid objective is biased low on curved paths)
    converged = n_nodes >= max_nodes
    n = n_nodes
    prev_fine = best_fine
    while n < max_nodes:
        n *= 2
        level_best, level_fine = None, np.inf
        for cand in (_resample(best_pts, n), straight(n)):
            cand, _cost, _ok = _descend_path(p, cand, slice_constrained)
            fine = path_cost_fine(p, cand)
            if fine < level_fine:
                level_fine, level_best = fine, cand
        best_pts, best_fine = level_best, level_fine
        if abs(best_fine - prev_fine) < 1e-5:
            converged = True
            break
        prev_fine = best_fine
    path = Path(points=best_pts, constrained_slice=a if slice_constrained else None)
    # certified upper bound: the true metric length of the final polyline
    return GeodesicResult(cost=float(best_fine), path=path,
                          converged=converged, n_nodes=len(best_pts) - 1)


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------

def solve_profile_ode(p, a, y_minus, y_plus, dt=1e-3, attach_tol=1e-8,
                      t_max=200.0, store_every=1):
    """Integrate phi' = +/- sqrt(2 W(a, phi)) from the midpoint value.

    RK4 in both directions from phi(0) = (y_minus + y_plus)/2, stopping when
    |phi - well| < ``attach_tol`` (constant extension beyond is exact).  The
    profile is normalized so the midpoint value sits at t = 0.

    Raises :class:`IntermediateWellError` when W vanishes strictly between
    the wells.  A profile that fails to attach within ``t_max`` is returned
    with the corresponding ``attached`` flag set to False.
    """
    if p.dim != 2:
        raise ValueError("solve_profile_ode requires a planar potential")
    if y_minus == y_plus:
        raise ValueError("wells must be distinct")
    sign = 1.0 if y_minus <= y_plus else -1.0

    ys = np.linspace(y_minus, y_plus, 2001)[1:-1]
    interior = p(np.stack([np.full(ys.shape, a), ys], axis=-1))
    if np.min(interior) <= max(p.tol_well, 1e-12):
        raise IntermediateWellError(
            "intermediate well: W vanishes inside the transition interval")

    def speed(y):
        return math.sqrt(max(2.0 * float(p(np.array([a, y]))), 0.0))

    def march(direction):
        """direction=+1 integrates toward y_plus, -1 toward y_minus."""
        target = y_plus if direction > 0 else y_minus
        h = dt * direction
        y = 0.5 * (y_minus + y_plus)
        t = 0.0
        ts, ys_ = [], []
        attached = False
        k = 0
        while abs(t) < t_max:
            if k % store_every == 0:
                ts.append(t)
                ys_.append(y)
            k1 = sign * speed(y)
            k2 = sign * speed(y + 0.5 * h * k1)
            k3 = sign * speed(y + 0.5 * h * k2)
            k4 = sign * speed(y + h * k3)
            y_new = y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
            crossed = (y_new - target) * (y - target) <= 0.0 and y_new != y
            y = y_new
            t += h
            if crossed or abs(y - target) < attach_tol:
                y = target if crossed else y
                attached = True
                ts.append(t)
                ys_.append(target if crossed else y)
                break
            k += 1
        return np.asarray(ts), np.asarray(ys_), attached

    t_fwd, y_fwd, att_plus = march(+1.0)
    t_bwd, y_bwd, att_minus = march(-1.0)
    ts = np.concatenate([t_bwd[::-1], t_fwd[1:]])
    ys_all = np.concatenate([y_bwd[::-1], y_fwd[1:]])
    values = np.stack([np.full(ts.shape, float(a)), ys_all], axis=-1)
    prof = Profile1D(t_samples=ts, values=values, a=float(a),
                     wells=(np.array([a, y_minus]), np.array([a, y_plus])),
                     attached=(att_minus, att_plus))
    prof.equipartition_residual = equipartition_residual(p, prof)
    return prof


def reparametrize_equipartition(p, path, n_arc=6000, dt_target=5e-4):
    """Reparametrize a curve so that 0.5*|gamma'|^2 = W(gamma) along it.

    Arc-length parametrization followed by the time change
    dt = v dsigma / sqrt(2 W); the resulting profile has energy equal to the
    curve's metric length.  Raises :class:`IntermediateWellError` when W
    vanishes at an interior node.
    """
    from scipy.interpolate import CubicSpline

    pts = path.points if isinstance(path, Path) else np.asarray(path, dtype=float)
    a = float(pts[0, 0])
    if np.linalg.norm(pts[-1] - pts[0]) == 0.0 or len(pts) < 2:
        values = pts[:1].repeat(2, axis=0)
        return Profile1D(t_samples=np.array([0.0, 0.0]), values=values, a=a,
                         wells=(pts[0], pts[-1]))

    arc = _resample(pts, n_arc)
    w_vals = p(arc)
    if np.min(w_vals[1:-1]) <= max(p.tol_well, 1e-14):
        raise IntermediateWellError("W vanishes at an interior point of the path")

    seg = np.linalg.norm(np.diff(arc, axis=0), axis=1)
    speed = np.sqrt(2.0 * np.maximum(w_vals, 0.0))
    mid_speed = 0.5 * (speed[:-1] + speed[1:])
    dt_seg = seg / np.maximum(mid_speed, 1e-300)
    t_nodes = np.concatenate([[0.0], np.cumsum(dt_seg)])

    # uniform-in-t resampling for accurate trapezoid energies downstream
    t0, t1 = t_nodes[0], t_nodes[-1]
    span = t1 - t0
    n_t = int(min(60000, max(2000, span / dt_target)))
    tu = np.linspace(t0, t1, n_t)
    values = CubicSpline(t_nodes, arc, axis=0)(tu)

    # shift so the (interpolated) crossing of the well midpoint sits at t = 0
    midval = 0.5 * (arc[0] + arc[-1])
    axis = arc[-1] - arc[0]
    s = (values - midval[None, :]) @ axis
    icross = int(np.argmin(np.abs(s)))
    if 0 < icross < len(s) - 1 and s[icross + 1] != s[icross - 1]:
        # linear interpolation of the sign change around the nearest sample
        j = icross if s[icross] * s[icross + 1] <= 0 else icross - 1
        j = max(0, min(j, len(s) - 2))
        frac = -s[j] / (s[j + 1] - s[j]) if s[j + 1] != s[j] else 0.0
        t0_cross = tu[j] + frac * (tu[j + 1] - tu[j])
    else:
        t0_cross = tu[icross]
    tu = tu - t0_cross

    prof = Profile1D(t_samples=tu, values=values, a=a,
                     wells=(arc[0], arc[-1]), attached=(True, True))
    prof.equipartition_residual = equipartition_residual(p, prof)
    return prof


def equipartition_residual(p, prof):
    """max_t |0.5 |gamma'|^2 - W(gamma)|, derivative by central differences."""
    t, v = prof.t_samples, prof.values
    if len(t) < 3:
        return 0.0
    dv = np.gradient(v, t, axis=0)
    kinetic = 0.5 * np.sum(dv**2, axis=-1)
    res = np.abs(kinetic - p(v))
    return float(np.max(res[2:-2])) if len(res) > 4 else float(np.max(res))


def energy_1d(p, prof):
    """Trapezoid energy of a sampled profile: int 0.5|gamma'|^2 + W(gamma)."""
    t, v = prof.t_samples, prof.values
    if len(t) < 2 or t[-1] == t[0]:
        return 0.0
    dv = np.gradient(v, t, axis=0)
    dens = 0.5 * np.sum(dv**2, axis=-1) + p(v)
    return float(np.trapezoid(dens, t))


def check_triangle_strict(p, a, wells, u_minus, u_plus, margin_tol=1e-6,
                          **geo_kw):
    """Strict triangle inequality of the slice geodesic cost at the wells.

    For every well z distinct from u_minus/u_plus, reports the margin
    geod(u-, z) + geod(z, u+) - geod(u-, u+); the verdict is strict only when
    every margin exceeds ``margin_tol`` (margins inside the tolerance are
    numerically indistinguishable from the equality case).
    """
    u_minus = np.asarray(u_minus, dtype=float)
    u_plus = np.asarray(u_plus, dtype=float)

    def cost(x, y):
        if np.linalg.norm(x - y) == 0.0:
            return 0.0
        if p.dim == 2:
            return geodesic_cost_2d(p, a, x[1], y[1])
        return geodesic_cost(p, x, y, path_space="slice", a=a, **geo_kw).cost

    direct = cost(u_minus, u_plus)
    table = []
    strict = True
    for z in wells:
        z = np.asarray(z, dtype=float)
        if (np.linalg.norm(z - u_minus) < 1e-12
                or np.linalg.norm(z - u_plus) < 1e-12):
            continue
        via = cost(u_minus, z) + cost(z, u_plus)
        margin = via - direct
        table.append({"z": z.tolist(), "via_cost": via, "margin": margin})
        if margin <= margin_tol:
            strict = False
    return TriangleReport(strict=strict, margin_table=table, direct_cost=direct)
