"""Cut pseudo-metrics, smooth calibrations, and weight potentials.

A pseudo-metric on a finite point set decomposes (when feasible) into
nonnegative combinations of cut pseudo-metrics delta_Y.  For an affine basis
X in R^d each cut carries a smooth compactly supported calibration phi_Y
with |phi_Y(x) - phi_Y(y)| = delta_Y(x, y) and gradients collinear with the
separating segments; the weight w = sum lambda_Y |grad phi_Y| then realizes
the prescribed distances as geodesic costs of W = w^2 / 2, with straight
segments optimal.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .poly import Poly2  # noqa: F401  (shared idiom: exact small algebra)

_GAUSS_K = 48
_G_NODES, _G_WEIGHTS = np.polynomial.legendre.leggauss(_GAUSS_K)


# ---------------------------------------------------------------------------
# pseudo-metric validation and cut decomposition
# ---------------------------------------------------------------------------

@dataclass
class MetricReport:
    valid: bool
    symmetry_error: float
    diagonal_error: float
    min_entry: float
    worst_triangle: tuple | None
    triangle_violation: float


def validate_pseudo_metric(delta):
    """Audit symmetry, zero diagonal, nonnegativity, triangle inequality."""
    delta = np.asarray(delta, dtype=float)
    n = delta.shape[0]
    if delta.shape != (n, n):
        raise ValueError("delta must be square")
    sym = float(np.max(np.abs(delta - delta.T))) if n else 0.0
    diag = float(np.max(np.abs(np.diag(delta)))) if n else 0.0
    min_entry = float(np.min(delta)) if n else 0.0
    worst = None
    worst_v = 0.0
    for i in range(n):
        for j in range(n):
            for k in range(n):
                v = delta[i, j] - delta[i, k] - delta[k, j]
                if v > worst_v:
                    worst_v = v
                    worst = (i, k, j)
    valid = (sym <= 1e-12 and diag <= 1e-12 and min_entry >= -1e-12
             and worst_v <= 1e-12)
    return MetricReport(valid=valid, symmetry_error=sym, diagonal_error=diag,
                        min_entry=min_entry, worst_triangle=worst,
                        triangle_violation=float(worst_v))


def cut_metric(Y, n):
    """0/1 pseudo-metric separating the index subset Y from its complement."""
    Y = set(int(i) for i in Y)
    if not Y or Y >= set(range(n)) or not Y <= set(range(n)):
        raise ValueError("Y must be a proper nonempty subset of range(n)")
    ind = np.zeros(n)
    for i in Y:
        ind[i] = 1.0
    return np.abs(ind[:, None] - ind[None, :])


def canonical_cut(Y, n):
    """Merge Y with its complement: keep the side containing index 0."""
    Y = frozenset(int(i) for i in Y)
    return Y if 0 in Y else frozenset(range(n)) - Y


def _proper_subsets_containing_0(n):
    rest = list(range(1, n))
    out = []
    for mask in range(2 ** (n - 1)):
        Y = {0} | {rest[k] for k in range(n - 1) if mask >> k & 1}
        if len(Y) < n:
            out.append(frozenset(Y))
    return out


@dataclass
class CutDecomposition:
    weights: dict
    feasible: bool
    residual: float
    n: int

    def reconstruct(self):
        out = np.zeros((self.n, self.n))
        for Y, lam in self.weights.items():
            out += lam * cut_metric(Y, self.n)
        return out


def decompose_cuts(delta, n=None, residual_tol=1e-9):
    """Nonnegative decomposition of delta into cut pseudo-metrics.

    Solves the NNLS problem over the canonical cut columns (subsets
    containing point 0).  ``feasible`` requires reconstruction residual below
    ``residual_tol``; honest infeasibility is reported for metrics outside
    the cut cone (possible from 5 points on).
    """
    delta = np.asarray(delta, dtype=float)
    n = delta.shape[0] if n is None else int(n)
    if n > 12:
        raise ValueError("cut decomposition limited to n <= 12")
    report = validate_pseudo_metric(delta)
    if not report.valid:
        raise ValueError(f"not a pseudo-metric: {report}")
    iu = np.triu_indices(n, k=1)
    subsets = _proper_subsets_containing_0(n)
    A = np.column_stack([cut_metric(Y, n)[iu] for Y in subsets])
    b = delta[iu]
    x, rnorm = nnls(A, b)
    weights = {Y: float(lam) for Y, lam in zip(subsets, x) if lam > 1e-13}
    feasible = rnorm <= residual_tol
    return CutDecomposition(weights=weights, feasible=feasible,
                            residual=float(rnorm), n=n)


# ---------------------------------------------------------------------------
# the smooth transition profile g
# ---------------------------------------------------------------------------

def _bump(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = (t > 0.0) & (t < 1.0)
    ti = t[inside]
    out[inside] = np.exp(-1.0 / (ti * (1.0 - ti)))
    return out


def _gauss_int(lo, hi):
    """Vectorized Gauss-Legendre integral of the bump over [lo, hi]."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    pts = mid[..., None] + half[..., None] * _G_NODES
    return half * np.sum(_G_WEIGHTS * _bump(pts), axis=-1)


_I_HALF = float(_gauss_int(np.array(0.0), np.array(0.5)))  # int_0^{1/2} bump


def smooth_g(t):
    """Smooth monotone switch: g = 0 on t <= 0, 1 on t >= 1, g' > 0 inside,
    with the exact symmetry g(t) + g(1 - t) = 1.

    Returns ``(value, derivative)``, vectorized.  The symmetry holds by
    construction: values above 1/2 are defined through the reflection.
    """
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    val = np.empty_like(t)
    low = t <= 0.0
    high = t >= 1.0
    mid_lo = (~low) & (t <= 0.5)
    mid_hi = (~high) & (t > 0.5)
    val[low] = 0.0
    val[high] = 1.0
    if np.any(mid_lo):
        q = _gauss_int(t[mid_lo], np.full(np.sum(mid_lo), 0.5)) / (2 * _I_HALF)
        val[mid_lo] = 0.5 - q
    if np.any(mid_hi):
        q = _gauss_int(1.0 - t[mid_hi], np.full(np.sum(mid_hi), 0.5)) / (2 * _I_HALF)
        val[mid_hi] = 0.5 + q
    deriv = _bump(t) / (2 * _I_HALF)
    deriv[low | high] = 0.0
    if scalar:
        return float(val[0]), float(deriv[0])
    return val, deriv


def g_value(t):
    return smooth_g(t)[0]


# ---------------------------------------------------------------------------
# calibration of a cut
# ---------------------------------------------------------------------------

def _check_affine_basis(X):
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if n != d + 1:
        raise ValueError("X must contain exactly d+1 points in R^d")
    M = X[1:] - X[0]
    if np.linalg.matrix_rank(M, tol=1e-10) != d:
        raise ValueError("X must be an affine basis (affinely independent)")
    return X


@dataclass
class CalibrationFn:
    """Smooth compactly supported calibration of a cut pseudo-metric."""

    X: np.ndarray
    Y: frozenset
    lambda0: float
    r: np.ndarray = field(repr=False, default=None)  # pairwise distances

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.r is None:
            diff = self.X[:, None, :] - self.X[None, :, :]
            self.r = np.linalg.norm(diff, axis=-1)

    # transitions g^lambda_ij supported in the cone C^l0_ij from x_i
    def _p(self, z, i, j):
        e = (self.X[j] - self.X[i]) / self.r[i, j]
        return np.tensordot(z - self.X[i], e, axes=([-1], [0])), e

    def _g_lambda(self, z, i, j, lam):
        p, e = self._p(z, i, j)
        dist = np.linalg.norm(z - self.X[i], axis=-1)
        safe = np.maximum(dist, 1e-300)
        arg2 = 1.0 - (dist - p) / (self.lambda0 * safe)
        g1, dg1 = smooth_g(p / lam)
        g2, dg2 = smooth_g(arg2)
        val = np.where(dist > 0, g1 * g2, 0.0)
        # gradient: d p = e; d dist = (z - x_i)/dist
        u = (z - self.X[i]) / safe[..., None]
        darg2 = -((u - e) * safe[..., None] - (dist - p)[..., None] * u) \
            / (self.lambda0 * safe**2)[..., None]
        grad = (dg1 / lam)[..., None] * e * g2[..., None] \
            + g1[..., None] * dg2[..., None] * darg2
        grad = np.where(dist[..., None] > 1e-12, grad, 0.0)
        return val, grad

    def _xi(self, z, i, j):
        if i == j:
            dist = np.linalg.norm(z - self.X[i], axis=-1)
            val, dval = smooth_g(1.0 - dist / self.lambda0)
            safe = np.maximum(dist, 1e-300)
            grad = (-dval / self.lambda0)[..., None] * (z - self.X[i]) / safe[..., None]
            grad = np.where(dist[..., None] > 1e-12, grad, 0.0)
            return val, grad
        va, ga = self._g_lambda(z, i, j, self.lambda0)
        vb, gb = self._g_lambda(z, j, i, self.lambda0)
        return va * vb, ga * vb[..., None] + gb * va[..., None]

    def value_grad(self, z):
        """phi(z) and grad phi(z), vectorized over leading dimensions."""
        z = np.asarray(z, dtype=float)
        n = len(self.X)
        inY = [i in self.Y for i in range(n)]
        val = np.zeros(z.shape[:-1])
        grad = np.zeros(z.shape)
        for i in range(n):
            for j in range(n):
                if inY[i] or not inY[j] or i == j:
                    continue
                # i in Y, j outside: transition g^{r_ij}_ij weighted by the
                # partition functions xi_ij + xi_ii, minus the reverse
                # transition weighted by xi_jj
                lo, hi = (i, j) if i < j else (j, i)
                xij, dxij = self._xi(z, lo, hi)
                xii, dxii = self._xi(z, i, i)
                xjj, dxjj = self._xi(z, j, j)
                gij, dgij = self._g_lambda(z, i, j, self.r[i, j])
                gji, dgji = self._g_lambda(z, j, i, self.r[i, j])
                val += (xij + xii) * gij - xjj * gji
                grad += (dxij + dxii) * gij[..., None] \
                    + (xij + xii)[..., None] * dgij \
                    - dxjj * gji[..., None] - xjj[..., None] * dgji
        for i in range(n):
            for j in range(i, n):
                if inY[i] or inY[j]:
                    continue
                xij, dxij = self._xi(z, i, j)
                val += xij
                grad += dxij
        return val, grad

    def __call__(self, z):
        return self.value_grad(z)[0]

    def grad(self, z):
        return self.value_grad(z)[1]


def _cone_audit(X, lambda0, n_samples=4000, seed=0):
    """Check the partition geometry: pairwise supports only meet near X."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    r = np.linalg.norm(X[:, None] - X[None, :], axis=-1)
    rmin = np.min(r[np.triu_indices(n, 1)])
    if 2.0 * lambda0 > rmin:
        return False  # balls around the points must be disjoint

    rng = np.random.default_rng(seed)
    lo = X.min(axis=0) - 0.5
    hi = X.max(axis=0) + 0.5
    pts = rng.uniform(lo, hi, size=(n_samples, d))
    # bias samples toward the segments where overlaps would appear
    for i in range(n):
        for j in range(i + 1, n):
            ts = rng.uniform(0, 1, size=40)[:, None]
            seg = X[i] + ts * (X[j] - X[i])
            seg = seg + rng.normal(scale=0.6 * lambda0, size=seg.shape)
            pts = np.vstack([pts, seg])

    cal = CalibrationFn(X=X, Y=frozenset([0]), lambda0=lambda0)
    # pair supports must avoid the remaining basis points entirely
    for i in range(n):
        for j in range(i + 1, n):
            others = np.asarray([X[k] for k in range(n) if k not in (i, j)])
            if len(others) and np.max(cal._xi(others, i, j)[0]) > 1e-12:
                return False
    pair_active = []
    for i in range(n):
        for j in range(i + 1, n):
            v, _ = cal._xi(pts, i, j)
            pair_active.append(v > 1e-12)
    pair_active = np.asarray(pair_active)
    multiple = np.sum(pair_active, axis=0) > 1
    if not np.any(multiple):
        return True
    # two distinct pair supports may only meet at basis points themselves
    bad = pts[multiple]
    dmin = np.min(np.linalg.norm(bad[:, None, :] - X[None, :, :], axis=-1), axis=1)
    return bool(np.all(dmin <= 1e-9))


def pick_lambda0(X, start_frac=0.25, max_halvings=20, seed=0):
    """Auto-shrink lambda0 until the cone-intersection audit passes."""
    X = _check_affine_basis(X)
    n = len(X)
    r = np.linalg.norm(X[:, None] - X[None, :], axis=-1)
    rmin = float(np.min(r[np.triu_indices(n, 1)]))
    lam = start_frac * rmin
    for _ in range(max_halvings):
        if _cone_audit(X, lam, seed=seed):
            return lam
        lam *= 0.5
    raise ValueError("no admissible lambda0 found (pathological basis)")


def calibration_phi(X, Y, lambda0=None):
    """Smooth calibration phi for the cut Y of an affine basis X.

    phi = 0 on Y, 1 on X - Y; grad phi vanishes along segments inside Y or
    inside the complement and is positively collinear with y - x along
    separating segments.
    """
    X = _check_affine_basis(X)
    n = len(X)
    Y = frozenset(int(i) for i in Y)
    if not Y <= set(range(n)):
        raise ValueError("Y must index points of X")
    if lambda0 is None:
        lambda0 = pick_lambda0(X)
    return CalibrationFn(X=X, Y=Y, lambda0=float(lambda0))


# ---------------------------------------------------------------------------
# weight potentials realizing a prescribed metric
# ---------------------------------------------------------------------------

@dataclass
class FiniteMetric:
    X: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.delta = np.asarray(self.delta, dtype=float)
        report = validate_pseudo_metric(self.delta)
        if not report.valid:
            raise ValueError(f"delta is not a pseudo-metric: {report}")
        if self.delta.shape[0] != len(self.X):
            raise ValueError("delta size must match the point count")

    @property
    def n(self):
        return len(self.X)


@dataclass
class WeightFunction:
    """w = sum lambda_Y |grad phi_Y| + sqrt(2) g(dist(., G)/rho): zero on X,
    sqrt(2) far away, realizing the metric as segment costs."""

    metric: FiniteMetric
    calibrations: list
    weights: list
    lambda0: float
    rho: float

    def segments(self):
        X = self.metric.X
        n = len(X)
        return [(X[i], X[j]) for i in range(n) for j in range(i + 1, n)]

    def _dist_to_graph(self, z):
        z = np.asarray(z, dtype=float)
        best = None
        for a, b in self.segments():
            ab = b - a
            t = np.clip(np.tensordot(z - a, ab, axes=([-1], [0])) / (ab @ ab),
                        0.0, 1.0)
            proj = a + t[..., None] * ab
            dist = np.linalg.norm(z - proj, axis=-1)
            best = dist if best is None else np.minimum(best, dist)
        return best

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        out = np.zeros(z.shape[:-1])
        for lam, cal in zip(self.weights, self.calibrations):
            out = out + lam * np.linalg.norm(cal.grad(z), axis=-1)
        far = smooth_g(self._dist_to_graph(z) / self.rho)[0]
        return out + np.sqrt(2.0) * far

    def as_potential(self):
        """The associated Potential W = w^2 / 2 (finite-difference gradient)."""
        from .potentials import Potential

        def fn(z):
            return 0.5 * self(np.asarray(z, dtype=float)) ** 2

        return Potential(self.metric.X.shape[1], fn, grad=None,
                         known_wells=list(self.metric.X), tag="cut-weight",
                         tol_well=1e-9)


def build_weight_w(metric, lambda0=None):
    """Assemble the weight function realizing a finite metric on an affine
    basis; requires a feasible cut decomposition."""
    if not isinstance(metric, FiniteMetric):
        metric = FiniteMetric(X=metric[0], delta=metric[1])
    X = _check_affine_basis(metric.X)
    dec = decompose_cuts(metric.delta, metric.n)
    if not dec.feasible:
        raise ValueError(
            f"cut decomposition infeasible (residual {dec.residual:.2e})")
    if lambda0 is None:
        lambda0 = pick_lambda0(X)
    cals, weights = [], []
    for Y, lam in sorted(dec.weights.items(), key=lambda kv: sorted(kv[0])):
        cals.append(calibration_phi(X, Y, lambda0))
        weights.append(lam)
    return WeightFunction(metric=metric, calibrations=cals, weights=weights,
                          lambda0=float(lambda0), rho=float(lambda0) / 2.0)


def segment_cost(w, a, b, n_panels=400):
    """L_w along the straight segment [a, b] by composite Gauss quadrature."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    edges = np.linspace(0.0, 1.0, n_panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    ts = (mid[:, None] + half * _G_NODES[None, :]).reshape(-1)
    pts = a[None, :] + ts[:, None] * (b - a)[None, :]
    vals = w(pts).reshape(n_panels, _GAUSS_K)
    seg_len = np.linalg.norm(b - a)
    return float(seg_len * half * np.sum(vals @ _G_WEIGHTS))


def polyline_cost(w, pts, k=8):
    """L_w along a polyline, k-point Gauss per sub-segment."""
    pts = np.asarray(pts, dtype=float)
    nodes, weights = np.polynomial.legendre.leggauss(k)
    a, b = pts[:-1], pts[1:]
    seg = np.linalg.norm(b - a, axis=1)
    ts = 0.5 * (nodes + 1.0)
    samples = a[:, None, :] + ts[None, :, None] * (b - a)[:, None, :]
    vals = w(samples)
    return float(np.sum(seg * 0.5 * (vals @ weights)))


@dataclass
class OptimalityReport:
    passed: bool
    pair_results: list
    worst_gap: float


def verify_segment_optimality(w, metric=None, trials=200, seed=0,
                              n_nodes=96, tol=1e-5):
    """Audit that straight segments realize the metric as geodesics.

    For every pair of basis points: the segment cost must match delta within
    1e-6, random perturbed competitor polylines must never undercut it by
    more than 1e-6, and a geodesic search (seeded with the segment) must not
    beat it by more than ``tol``.
    """
    from .potentials import Potential
    from .profiles import geodesic_cost

    metric = metric if metric is not None else w.metric
    X = np.asarray(metric.X, dtype=float)
    delta = np.asarray(metric.delta, dtype=float)
    rng = np.random.default_rng(seed)

    pot = w.as_potential() if isinstance(w, WeightFunction) else None

    results = []
    worst_gap = 0.0
    passed = True
    n = len(X)
    for i in range(n):
        for j in range(i + 1, n):
            a, b = X[i], X[j]
            seg_val = segment_cost(w, a, b)
            match_err = abs(seg_val - delta[i, j])
            # random competitor polylines
            undercut = 0.0
            for _ in range(trials):
                m = rng.integers(6, 24)
                ts = np.linspace(0, 1, m)[:, None]
                pts = a[None, :] + ts * (b - a)[None, :]
                bump = np.sin(np.pi * ts) * rng.normal(
                    scale=0.3 * np.linalg.norm(b - a), size=(1, X.shape[1]))
                wiggle = rng.normal(scale=0.05 * np.linalg.norm(b - a),
                                    size=pts.shape) * np.sin(np.pi * ts)
                cand = pts + bump + wiggle
                cand[0], cand[-1] = a, b
                undercut = max(undercut, seg_val - polyline_cost(w, cand))
            # geodesic search with the segment among the starts
            search_gap = 0.0
            if pot is not None:
                seg_pts = a[None, :] + np.linspace(0, 1, n_nodes + 1)[:, None] \
                    * (b - a)[None, :]
                res = geodesic_cost(pot, a, b, path_space="ambient",
                                    n_nodes=n_nodes, n_restarts=3, seed=seed,
                                    max_nodes=n_nodes, extra_seeds=[seg_pts])
                fine = polyline_cost(w, res.path.points)
                search_gap = seg_val - min(fine, res.cost)
            pair_pass = (match_err <= 1e-6 and undercut <= 1e-6
                         and search_gap <= tol)
            passed &= pair_pass
            worst_gap = max(worst_gap, search_gap, undercut)
            results.append({
                "pair": (i, j), "segment_cost": seg_val,
                "delta": float(delta[i, j]), "match_error": match_err,
                "max_undercut": float(undercut),
                "search_gap": float(search_gap), "pass": bool(pair_pass),
            })
    return OptimalityReport(passed=bool(passed), pair_results=results,
                            worst_gap=float(worst_gap))
