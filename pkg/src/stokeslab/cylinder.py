"""Energy minimization of divergence-free fields on a truncated cylinder.

The domain [-L, L] x T^{d-1} discretizes with n1 vertex nodes in the axial
direction (Dirichlet rows pinned to the wells) and nper periodic nodes per
torus direction.  In the plane the divergence constraint is enforced exactly
through a stream function; in higher dimension through a spectral/least-
squares projection applied after every step.

Derivatives are second-order centered (one-sided at the axial ends); the
energy quadrature is trapezoid in x1, uniform on the torus.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from ._accel import diff_axial, diff_axial_T, diff_periodic

COLLAR = 3  # stream perturbations vanish on this many rows at each axial end


@dataclass(frozen=True)
class CylinderGrid:
    d: int
    L: float
    n1: int
    nper: int

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if self.n1 < 8 or self.nper < 8:
            raise ValueError("need n1 >= 8 and nper >= 8")

    @property
    def h1(self):
        return 2.0 * self.L / (self.n1 - 1)

    @property
    def hper(self):
        return 1.0 / self.nper

    @property
    def x1(self):
        return np.linspace(-self.L, self.L, self.n1)

    @property
    def shape(self):
        return (self.n1,) + (self.nper,) * (self.d - 1)

    @property
    def cell(self):
        return self.h1 * self.hper ** (self.d - 1)

    def axial_weights(self):
        w = np.ones(self.n1)
        w[0] = w[-1] = 0.5
        return w


@dataclass
class Field:
    """Discretized map u on the cylinder with Dirichlet well values at x1=-/+L."""

    grid: CylinderGrid
    values: np.ndarray
    bc: tuple

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expect = self.grid.shape + (self.grid.d,)
        if self.values.shape != expect:
            raise ValueError(f"values must have shape {expect}")
        um, up = self.bc
        self.bc = (np.asarray(um, dtype=float), np.asarray(up, dtype=float))

    def copy(self):
        return Field(grid=self.grid, values=self.values.copy(), bc=self.bc)

    def pin_boundaries(self):
        self.values[0] = self.bc[0]
        self.values[-1] = self.bc[1]
        return self


@dataclass
class StreamFunction:
    """Planar stream representation: u = (a - d2 psi, d1 psi).

    ``psi`` splits into an x1-only background whose axial derivative
    ``bg_du2`` interpolates the boundary values of u2, plus a perturbation
    ``pert`` vanishing on a 3-row collar at each axial end, so the induced
    field matches the wells exactly and is discretely divergence-free.
    """

    grid: CylinderGrid
    a: float
    bg_du2: np.ndarray
    pert: np.ndarray

    def __post_init__(self):
        if self.grid.d != 2:
            raise ValueError("stream functions are planar")
        self.bg_du2 = np.asarray(self.bg_du2, dtype=float)
        self.pert = np.asarray(self.pert, dtype=float)
        if self.bg_du2.shape != (self.grid.n1,):
            raise ValueError("background derivative must be sampled per axial node")
        if self.pert.shape != self.grid.shape:
            raise ValueError("perturbation must live on the grid")
        self.enforce_collar()

    def enforce_collar(self):
        self.pert[:COLLAR] = 0.0
        self.pert[-COLLAR:] = 0.0

    @classmethod
    def zero(cls, grid, a, u2_minus=0.0, u2_plus=0.0):
        """Background only, with a smooth switch between the boundary slopes."""
        x = grid.x1
        s = 0.5 * (1.0 + np.tanh(x / max(grid.L / 6.0, 1e-9)))
        g = u2_minus + (u2_plus - u2_minus) * s
        g[:COLLAR] = u2_minus
        g[-COLLAR:] = u2_plus
        return cls(grid=grid, a=a, bg_du2=g, pert=np.zeros(grid.shape))

    @classmethod
    def from_profile(cls, grid, profile, a, u2_minus, u2_plus):
        """Background whose derivative is the sampled 1D profile (clamped ends)."""
        g = np.interp(grid.x1, profile.t_samples, profile.values[:, 1])
        g[:COLLAR] = u2_minus
        g[-COLLAR:] = u2_plus
        return cls(grid=grid, a=a, bg_du2=g, pert=np.zeros(grid.shape))


@dataclass
class MinimizeReport:
    energy: float
    iterations: int
    grad_norm: float
    slice_variance: float
    boundary_avg_error: float
    converged: bool
    trace: list = field(default_factory=list)  # rows (iter, energy, gnorm, svar)

    def to_dict(self):
        return {
            "energy": self.energy,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "slice_variance": self.slice_variance,
            "boundary_avg_error": self.boundary_avg_error,
            "converged": self.converged,
        }


@dataclass
class TorusSlice:
    """Map on the torus cross-section with its prescribed mean."""

    v: np.ndarray
    mean: np.ndarray

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float)
        self.mean = np.asarray(self.mean, dtype=float)
        got = self.v.mean(axis=tuple(range(self.v.ndim - 1)))
        if np.max(np.abs(got - self.mean)) > 1e-12:
            raise ValueError("slice values do not average to the declared mean")


# ---------------------------------------------------------------------------
# differential helpers
# ---------------------------------------------------------------------------

def _grad_tensor(grid, values):
    """Discrete Jacobian: out[..., i, j] = D_j u_i."""
    d = grid.d
    out = np.empty(grid.shape + (d, d))
    for i in range(d):
        ui = values[..., i]
        out[..., i, 0] = diff_axial(ui, grid.h1)
        for j in range(1, d):
            out[..., i, j] = diff_periodic(ui, grid.hper, axis=j)
    return out


def divergence_field(f):
    """Centered discrete divergence on interior axial rows (boundary rows 0)."""
    grid = f.grid
    div = diff_axial(f.values[..., 0], grid.h1)
    for j in range(1, grid.d):
        div += diff_periodic(f.values[..., j], grid.hper, axis=j)
    div[0] = 0.0
    div[-1] = 0.0
    return div


def divergence_max(f):
    return float(np.max(np.abs(divergence_field(f))))


def energy(p, f):
    """Discrete energy: trapezoid x1-quadrature of 0.5|grad u|^2 + W(u)."""
    grid = f.grid
    gt = _grad_tensor(grid, f.values)
    dens = 0.5 * np.sum(gt * gt, axis=(-2, -1)) + p(f.values)
    wq = grid.axial_weights().reshape((-1,) + (1,) * (grid.d - 1))
    return float(np.sum(dens * wq) * grid.cell)


def slice_average(f):
    """x'-average per axial node; an (n1, d) array."""
    axes = tuple(range(1, f.grid.d))
    return f.values.mean(axis=axes)


def slice_variance(f):
    """max over x1 of the mean squared deviation from the slice average,
    normalized by |u+ - u-|^2."""
    avg = slice_average(f)
    dev = f.values - avg.reshape((f.grid.n1,) + (1,) * (f.grid.d - 1) + (f.grid.d,))
    msd = np.mean(dev**2, axis=tuple(range(1, f.grid.d))).sum(axis=-1)
    denom = float(np.sum((f.bc[1] - f.bc[0]) ** 2))
    if denom == 0.0:
        denom = 1.0
    return float(np.max(msd) / denom)


def from_stream(s):
    """Field induced by a stream function; discretely divergence-free."""
    grid = s.grid
    u1 = s.a - diff_periodic(s.pert, grid.hper, axis=1)
    u2 = s.bg_du2[:, None] + diff_axial(s.pert, grid.h1)
    values = np.stack([u1, u2], axis=-1)
    bc = (np.array([s.a, s.bg_du2[0]]), np.array([s.a, s.bg_du2[-1]]))
    return Field(grid=grid, values=values, bc=bc)


# ---------------------------------------------------------------------------
# divergence-free projection (d >= 2)
# ---------------------------------------------------------------------------

def _axial_d2_matrix(n, h):
    """Matrix of the composed centered operator D1(D1 q) on n axial nodes."""
    D = np.zeros((n, n))
    c = 1.0 / (2.0 * h)
    for i in range(1, n - 1):
        D[i, i + 1] = c
        D[i, i - 1] = -c
    D[0, 0], D[0, 1], D[0, 2] = -3 * c, 4 * c, -c
    D[-1, -1], D[-1, -2], D[-1, -3] = 3 * c, -4 * c, c
    return D @ D


def project_div_free(f, passes=2):
    """Remove the discrete-gradient part of a field.

    Solves D1(D1 q) + sum_j D2j(D2j q) = div u per torus Fourier mode
    (least squares over the interior rows, min-norm in the null directions)
    and subtracts the centered-difference gradient of q.  Boundary rows are
    re-pinned to the Dirichlet values afterwards.  Idempotent to round-off.
    """
    grid = f.grid
    out = f.copy()
    n1, d = grid.n1, grid.d
    A = _axial_d2_matrix(n1, grid.h1)
    E = np.eye(n1)[1:-1]  # selection of interior rows
    A_int = A[1:-1]

    per_axes = tuple(range(1, d))
    for _ in range(passes):
        div = divergence_field(out)
        if np.max(np.abs(div)) < 1e-13:
            break
        rhs_hat = np.fft.fftn(div, axes=per_axes)
        # symbol of the composed centered second difference per direction
        q_hat = np.zeros_like(rhs_hat)
        nper, hper = grid.nper, grid.hper
        freqs = [np.fft.fftfreq(nper) for _ in per_axes]
        mu_1d = [(np.sin(2.0 * np.pi * fr) / hper) ** 2 for fr in freqs]
        mesh = np.meshgrid(*mu_1d, indexing="ij") if mu_1d else []
        mu = np.zeros(rhs_hat.shape[1:])
        for m in mesh:
            mu = mu + m
        flat_mu = mu.reshape(-1)
        rhs_flat = rhs_hat.reshape(n1, -1)
        q_flat = np.zeros_like(rhs_flat)
        # group identical symbols to reuse factorizations
        order = np.argsort(flat_mu, kind="stable")
        k = 0
        while k < len(order):
            j = k
            muv = flat_mu[order[k]]
            while j < len(order) and flat_mu[order[j]] <= muv + 1e-12:
                j += 1
            cols = order[k:j]
            M = A_int - muv * E
            sol, *_ = np.linalg.lstsq(M, rhs_flat[1:-1][:, cols], rcond=None)
            q_flat[:, cols] = sol
            k = j
        q_hat = q_flat.reshape(rhs_hat.shape)
        q = np.real(np.fft.ifftn(q_hat, axes=per_axes))
        out.values[..., 0] -= diff_axial(q, grid.h1)
        for jx in range(1, d):
            out.values[..., jx] -= diff_periodic(q, grid.hper, axis=jx)
        # normal components at the axial boundary re-pinned to the bc
        out.values[0, ..., 0] = out.bc[0][0]
        out.values[-1, ..., 0] = out.bc[1][0]
    return out


def residual_stokes(p, f):
    """L2 norm of the divergence-free part of -Laplacian(u) + grad W(u)."""
    grid = f.grid
    r = np.empty_like(f.values)
    for i in range(grid.d):
        ui = f.values[..., i]
        lap = diff_axial(diff_axial(ui, grid.h1), grid.h1)
        for j in range(1, grid.d):
            lap += diff_periodic(diff_periodic(ui, grid.hper, axis=j),
                                 grid.hper, axis=j)
        r[..., i] = -lap
    r += p.grad(f.values)
    rf = Field(grid=grid, values=r, bc=(np.zeros(grid.d), np.zeros(grid.d)))
    rf.values[0] = 0.0
    rf.values[-1] = 0.0
    rproj = project_div_free(rf, passes=1)
    rproj.values[0] = 0.0
    rproj.values[-1] = 0.0
    v = rproj.values
    return float(np.sqrt(np.sum(v * v) * grid.cell))


def jin_kohn_check(f):
    """The three gradient integrals (|P+ grad u|^2, |P- grad u|^2, |grad u|^2).

    For divergence-free fields with well boundary data the first two agree
    (up to O(h^2) + boundary truncation): both equal half of the third.
    """
    grid = f.grid
    gt = _grad_tensor(grid, f.values)
    sym = 0.5 * (gt + np.swapaxes(gt, -1, -2))
    asym = 0.5 * (gt - np.swapaxes(gt, -1, -2))
    wq = grid.axial_weights().reshape((-1,) + (1,) * (grid.d - 1))

    def integ(t):
        return float(np.sum(np.sum(t * t, axis=(-2, -1)) * wq) * grid.cell)

    return integ(sym), integ(asym), integ(gt)


# ---------------------------------------------------------------------------
# minimization
# ---------------------------------------------------------------------------

@dataclass
class MinimizeOptions:
    tol: float = 1e-6
    max_iter: int = 2000
    memory: int = 10
    seed: int = 0
    noise_amp: float = 0.2
    noise_modes: int = 4
    trace_every: int = 1


def _lbfgs(x0, fun_grad, tol, max_iter, memory, callback=None, project=None):
    """Two-loop L-BFGS with Armijo backtracking.

    ``fun_grad`` maps x -> (f, g); ``project`` (optional) maps a trial x back
    to the feasible set before evaluation.  Returns (x, f, g, iters,
    converged); the energy trace is strictly non-increasing.
    """
    x = x0.copy()
    if project is not None:
        x = project(x)
    fval, g = fun_grad(x)
    S, Y, RHO = [], [], []
    n_iter = 0
    converged = False
    for n_iter in range(1, max_iter + 1):
        gnorm = float(np.linalg.norm(g))
        if callback is not None:
            callback(n_iter - 1, fval, gnorm, x)
        if gnorm <= tol:
            converged = True
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(S), reversed(Y), reversed(RHO)):
            a = rho * float(np.dot(s, q))
            alphas.append(a)
            q -= a * y
        if Y:
            gamma = float(np.dot(S[-1], Y[-1]) / np.dot(Y[-1], Y[-1]))
            q *= max(gamma, 1e-12)
        else:
            q *= 1.0 / max(gnorm, 1.0)
        for (s, y, rho), a in zip(zip(S, Y, RHO), reversed(alphas)):
            b = rho * float(np.dot(y, q))
            q += (a - b) * s
        direction = -q
        gd = float(np.dot(g, direction))
        if gd >= 0:
            direction = -g
            gd = -float(np.dot(g, g))
        step = 1.0
        accepted = False
        for _ in range(50):
            x_new = x + step * direction
            if project is not None:
                x_new = project(x_new)
            f_new, g_new = fun_grad(x_new)
            if f_new <= fval + 1e-4 * step * gd:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        s_vec = x_new - x
        y_vec = g_new - g
        sy = float(np.dot(s_vec, y_vec))
        if sy > 1e-14:
            S.append(s_vec)
            Y.append(y_vec)
            RHO.append(1.0 / sy)
            if len(S) > memory:
                S.pop(0)
                Y.pop(0)
                RHO.pop(0)
        x, fval, g = x_new, f_new, g_new
    return x, fval, g, n_iter, converged


def _stream_noise(grid, seed, n_modes, delta_u):
    """Seeded smooth periodic stream perturbation with |du| ~ delta_u."""
    rng = np.random.default_rng(seed)
    x1 = grid.x1
    x2 = np.arange(grid.nper) * grid.hper
    window = np.exp(-((x1 / (0.45 * grid.L)) ** 6))
    window[:COLLAR] = 0.0
    window[-COLLAR:] = 0.0
    pert = np.zeros(grid.shape)
    for k in range(1, n_modes + 1):
        amp_c = rng.normal()
        amp_s = rng.normal()
        ax = rng.normal(scale=1.0)
        phase = np.cos(2 * np.pi * k * x2) * amp_c + np.sin(2 * np.pi * k * x2) * amp_s
        axial = np.sin(np.pi * (x1 + grid.L) / (2 * grid.L) * (k + 1)) + 0.3 * ax
        pert += np.outer(window * axial, phase)
    # scale so that the induced velocity perturbation has the requested size
    s = StreamFunction(grid=grid, a=0.0, bg_du2=np.zeros(grid.n1), pert=pert.copy())
    du = from_stream(s).values
    amp = np.max(np.sqrt(np.sum(du**2, axis=-1)))
    if amp > 0:
        pert *= delta_u / amp
    return pert


def minimize(p, grid, u_minus, u_plus, init="profile-embed",
             opts: MinimizeOptions | None = None, profile=None):
    """Minimize the energy under the divergence constraint and well bc.

    ``init`` is "profile-embed", "perturbed", "random", or an explicit
    :class:`StreamFunction` (d = 2) / :class:`Field` (d >= 3).  Wells must
    share their first coordinate (the slice average of u1 is constant for
    divergence-free fields, so transitions happen inside a slice).

    Returns ``(field, report)``; non-convergence is flagged on the report and
    the best iterate is returned.
    """
    opts = opts or MinimizeOptions()
    u_minus = np.asarray(u_minus, dtype=float)
    u_plus = np.asarray(u_plus, dtype=float)
    if abs(u_minus[0] - u_plus[0]) > 1e-12:
        raise ValueError("wells must share their first coordinate")
    if float(p(u_minus)) > p.tol_well or float(p(u_plus)) > p.tol_well:
        raise ValueError("boundary values must be wells of the potential")
    if grid.d == 2:
        return _minimize_stream(p, grid, u_minus, u_plus, init, opts, profile)
    return _minimize_projected(p, grid, u_minus, u_plus, init, opts, profile)


def _profile_background(p, grid, u_minus, u_plus, profile):
    from . import profiles as prof_mod

    a = float(u_minus[0])
    if profile is None:
        try:
            profile = prof_mod.solve_profile_ode(p, a, u_minus[1], u_plus[1])
        except prof_mod.IntermediateWellError:
            return StreamFunction.zero(grid, a, u_minus[1], u_plus[1])
    return StreamFunction.from_profile(grid, profile, a, u_minus[1], u_plus[1])


def _minimize_stream(p, grid, u_minus, u_plus, init, opts, profile):
    a = float(u_minus[0])
    delta_u = float(np.linalg.norm(u_plus - u_minus))
    if isinstance(init, StreamFunction):
        s0 = init
    elif init == "profile-embed":
        s0 = _profile_background(p, grid, u_minus, u_plus, profile)
    elif init == "perturbed":
        s0 = _profile_background(p, grid, u_minus, u_plus, profile)
        s0.pert += _stream_noise(grid, opts.seed, opts.noise_modes,
                                 opts.noise_amp * max(delta_u, 1.0))
        s0.enforce_collar()
    elif init == "random":
        s0 = StreamFunction.zero(grid, a, u_minus[1], u_plus[1])
        s0.pert += _stream_noise(grid, opts.seed, opts.noise_modes,
                                 max(delta_u, 1.0))
        s0.enforce_collar()
    else:
        raise ValueError(f"unknown init {init!r}")

    g_bg = s0.bg_du2
    wq = grid.axial_weights()[:, None]
    cell = grid.cell
    h1, hper = grid.h1, grid.hper

    def unpack(x):
        return x.reshape(grid.shape)

    def build_u(pert):
        u1 = a - diff_periodic(pert, hper, axis=1)
        u2 = g_bg[:, None] + diff_axial(pert, h1)
        return u1, u2

    def fun_grad(x):
        pert = unpack(x)
        u1, u2 = build_u(pert)
        u = np.stack([u1, u2], axis=-1)
        d11 = diff_axial(u1, h1)
        d21 = diff_periodic(u1, hper, axis=1)
        d12 = diff_axial(u2, h1)
        d22 = diff_periodic(u2, hper, axis=1)
        wvals = p(u)
        dens = 0.5 * (d11**2 + d21**2 + d12**2 + d22**2) + wvals
        f = float(np.sum(dens * wq) * cell)

        gw = p.grad(u) * wq[..., None] * cell
        # transpose of the periodic centered difference is its negative
        du1 = gw[..., 0] + diff_axial_T(wq * d11 * cell, h1) \
            - diff_periodic(wq * d21 * cell, hper, axis=1)
        du2 = gw[..., 1] + diff_axial_T(wq * d12 * cell, h1) \
            - diff_periodic(wq * d22 * cell, hper, axis=1)
        # chain to the stream perturbation: u1 = a - D2 pert, u2 = g + D1 pert
        gp = diff_periodic(du1, hper, axis=1) + diff_axial_T(du2, h1)
        gp[:COLLAR] = 0.0
        gp[-COLLAR:] = 0.0
        return f, gp.reshape(-1)

    trace = []

    def callback(it, fval, gnorm, x):
        if it % opts.trace_every == 0:
            fld = Field(grid=grid, values=np.stack(build_u(unpack(x)), axis=-1),
                        bc=(u_minus, u_plus))
            trace.append((it, fval, gnorm, slice_variance(fld)))

    x0 = s0.pert.reshape(-1).copy()
    x, fval, g, iters, converged = _lbfgs(
        x0, fun_grad, opts.tol, opts.max_iter, opts.memory, callback=callback)

    pert = unpack(x)
    u1, u2 = build_u(pert)
    fld = Field(grid=grid, values=np.stack([u1, u2], axis=-1), bc=(u_minus, u_plus))
    avg = slice_average(fld)
    bnd_err = max(float(np.linalg.norm(avg[0] - u_minus)),
                  float(np.linalg.norm(avg[-1] - u_plus)))
    report = MinimizeReport(
        energy=fval, iterations=iters, grad_norm=float(np.linalg.norm(g)),
        slice_variance=slice_variance(fld), boundary_avg_error=bnd_err,
        converged=converged, trace=trace)
    return fld, report


def embed_profile_field(grid, profile, u_minus, u_plus):
    """Extend a 1D profile constantly in x' (exactly divergence-free)."""
    u_minus = np.asarray(u_minus, dtype=float)
    u_plus = np.asarray(u_plus, dtype=float)
    d = grid.d
    vals1d = np.empty((grid.n1, d))
    t, v = profile.t_samples, profile.values
    for k in range(d):
        vals1d[:, k] = np.interp(grid.x1, t, v[:, k])
    vals1d[0] = u_minus
    vals1d[-1] = u_plus
    values = np.broadcast_to(
        vals1d.reshape((grid.n1,) + (1,) * (d - 1) + (d,)), grid.shape + (d,)
    ).copy()
    return Field(grid=grid, values=values, bc=(u_minus, u_plus))


def random_div_free_field(p, grid, u_minus, u_plus, seed=0, amp=0.3,
                          n_modes=3, profile=None):
    """Seeded random divergence-free field respecting the well bc.

    d = 2: profile background + random stream perturbation.  d >= 3:
    embedded profile plus the discrete curl of a random smooth vector
    potential supported away from the axial ends (curl of anything is
    exactly divergence-free for commuting difference stencils).
    """
    u_minus = np.asarray(u_minus, dtype=float)
    u_plus = np.asarray(u_plus, dtype=float)
    delta = float(np.linalg.norm(u_plus - u_minus))
    if grid.d == 2:
        s = _profile_background(p, grid, u_minus, u_plus, profile)
        s.pert += _stream_noise(grid, seed, n_modes, amp * max(delta, 1.0))
        s.enforce_collar()
        return from_stream(s)

    from . import profiles as prof_mod

    if profile is None:
        a = float(u_minus[0])
        res = prof_mod.geodesic_cost(p, u_minus, u_plus, path_space="slice",
                                     a=a, n_nodes=48, n_restarts=3, seed=seed,
                                     max_nodes=96)
        profile = prof_mod.reparametrize_equipartition(p, res.path)
    base = embed_profile_field(grid, profile, u_minus, u_plus)

    rng = np.random.default_rng(seed)
    x1 = grid.x1
    window = np.exp(-((x1 / (0.45 * grid.L)) ** 6))
    window[:COLLAR] = 0.0
    window[-COLLAR:] = 0.0
    shape = grid.shape
    A = np.zeros(shape + (grid.d,))
    coords = [np.arange(grid.nper) * grid.hper for _ in range(grid.d - 1)]
    for comp in range(grid.d):
        acc = np.zeros(shape)
        for _ in range(n_modes):
            ks = rng.integers(1, 3, size=grid.d - 1)
            phases = rng.uniform(0, 2 * np.pi, size=grid.d - 1)
            term = np.ones(shape)
            for ax, (k, ph) in enumerate(zip(ks, phases), start=1):
                c = np.cos(2 * np.pi * k * coords[ax - 1] + ph)
                term = term * c.reshape((1,) * ax + (-1,) + (1,) * (grid.d - 1 - ax))
            axial = window * np.sin(np.pi * (x1 + grid.L) / (2 * grid.L)
                                    * rng.integers(1, 4))
            acc += rng.normal() * term * axial.reshape((-1,) + (1,) * (grid.d - 1))
        A[..., comp] = acc

    def dpart(arr, j):
        if j == 0:
            return diff_axial(arr, grid.h1)
        return diff_periodic(arr, grid.hper, axis=j)

    curl = np.zeros_like(A)
    if grid.d == 3:
        curl[..., 0] = dpart(A[..., 2], 1) - dpart(A[..., 1], 2)
        curl[..., 1] = dpart(A[..., 0], 2) - dpart(A[..., 2], 0)
        curl[..., 2] = dpart(A[..., 1], 0) - dpart(A[..., 0], 1)
    else:
        raise ValueError("random fields implemented for d in (2, 3)")
    m = np.max(np.sqrt(np.sum(curl**2, axis=-1)))
    if m > 0:
        curl *= amp * max(delta, 1.0) / m
    out = base.copy()
    out.values += curl
    out.pin_boundaries()
    return out


def _minimize_projected(p, grid, u_minus, u_plus, init, opts, profile):
    from . import profiles as prof_mod

    a = float(u_minus[0])
    if isinstance(init, Field):
        f0 = init.copy()
    else:
        if profile is None:
            res = prof_mod.geodesic_cost(p, u_minus, u_plus, path_space="slice",
                                         a=a, n_nodes=48, n_restarts=3,
                                         seed=opts.seed, max_nodes=96)
            profile = prof_mod.reparametrize_equipartition(p, res.path)
        f0 = embed_profile_field(grid, profile, u_minus, u_plus)
        if init == "perturbed":
            f0 = random_div_free_field(p, grid, u_minus, u_plus, seed=opts.seed,
                                       amp=opts.noise_amp, profile=profile)
        elif init == "random":
            f0 = random_div_free_field(p, grid, u_minus, u_plus, seed=opts.seed,
                                       amp=1.0, profile=profile)
        elif init != "profile-embed":
            raise ValueError(f"unknown init {init!r}")

    shape = grid.shape + (grid.d,)
    wq = grid.axial_weights().reshape((-1,) + (1,) * (grid.d - 1))

    def project_x(x):
        vals = x.reshape(shape)
        fld = Field(grid=grid, values=vals.copy(), bc=(u_minus, u_plus))
        fld.pin_boundaries()
        fld = project_div_free(fld, passes=1)
        fld.pin_boundaries()
        return fld.values.reshape(-1)

    def fun_grad(x):
        vals = x.reshape(shape)
        fld = Field(grid=grid, values=vals, bc=(u_minus, u_plus))
        gt = _grad_tensor(grid, vals)
        dens = 0.5 * np.sum(gt * gt, axis=(-2, -1)) + p(vals)
        f = float(np.sum(dens * wq) * grid.cell)
        g = p.grad(vals) * wq[..., None] * grid.cell
        for i in range(grid.d):
            g[..., i] += diff_axial_T(wq * gt[..., i, 0] * grid.cell, grid.h1)
            for j in range(1, grid.d):
                g[..., i] -= diff_periodic(wq * gt[..., i, j] * grid.cell,
                                           grid.hper, axis=j)
        g[0] = 0.0
        g[-1] = 0.0
        # descend inside the divergence-free subspace
        gf = Field(grid=grid, values=g, bc=(u_minus * 0, u_plus * 0))
        gf = project_div_free(gf, passes=1)
        gf.values[0] = 0.0
        gf.values[-1] = 0.0
        return f, gf.values.reshape(-1)

    trace = []

    def callback(it, fval, gnorm, x):
        if it % opts.trace_every == 0:
            fld = Field(grid=grid, values=x.reshape(shape), bc=(u_minus, u_plus))
            trace.append((it, fval, gnorm, slice_variance(fld)))

    x0 = f0.values.reshape(-1).copy()
    x, fval, g, iters, converged = _lbfgs(
        x0, fun_grad, opts.tol, opts.max_iter, opts.memory,
        callback=callback, project=project_x)
    fld = Field(grid=grid, values=x.reshape(shape), bc=(u_minus, u_plus))
    fld.pin_boundaries()
    avg = slice_average(fld)
    bnd_err = max(float(np.linalg.norm(avg[0] - u_minus)),
                  float(np.linalg.norm(avg[-1] - u_plus)))
    report = MinimizeReport(
        energy=fval, iterations=iters, grad_norm=float(np.linalg.norm(g)),
        slice_variance=slice_variance(fld), boundary_avg_error=bnd_err,
        converged=converged, trace=trace)
    return fld, report


# ---------------------------------------------------------------------------
# effective potential on the torus cross-section
# ---------------------------------------------------------------------------

def effective_potential_V(p, a, z, torus_n=24, tol=1e-8, max_iter=500):
    """Constrained cross-section energy V(z): infimum of
    int_T 0.5 |grad' v|^2 + W(v) over maps with mean z.

    The zero-mean part is the optimization variable, so V(z) <= W(z) holds by
    construction (the search starts at the constant competitor).  Returns
    ``(value, converged)``.
    """
    z = np.asarray(z, dtype=float)
    if abs(z[0] - a) > 1e-12:
        raise ValueError("z must lie on the slice")
    d = p.dim
    m = d - 1
    shape = (torus_n,) * m + (d,)
    hper = 1.0 / torus_n
    cellp = hper**m

    def fun_grad(x):
        w = x.reshape(shape)
        w0 = w - w.mean(axis=tuple(range(m)))
        v = z + w0
        grads = [diff_periodic(v[..., i], hper, axis=ax)
                 for i in range(d) for ax in range(m)]
        dens = 0.5 * sum(g * g for g in grads) + p(v)
        f = float(np.sum(dens) * cellp)
        g = p.grad(v) * cellp
        idx = 0
        for i in range(d):
            for ax in range(m):
                g[..., i] -= diff_periodic(grads[idx] * cellp, hper, axis=ax)
                idx += 1
        g -= g.mean(axis=tuple(range(m)))  # chain rule of the mean removal
        return f, g.reshape(-1)

    x0 = np.zeros(shape).reshape(-1)
    x, fval, g, iters, converged = _lbfgs(x0, fun_grad, tol, max_iter, 10)
    return float(fval), bool(converged)


def effective_potential_as_potential(p, a, torus_n=16, tol=1e-7, cache=None):
    """Wrap V as a Potential on the slice for geodesic computations.

    Evaluations are memoized on rounded coordinates; the gradient falls back
    to finite differences.  Intended for coarse, desk-scale geodesic runs.
    """
    from .potentials import Potential

    memo = cache if cache is not None else {}

    def fn(z):
        z = np.asarray(z, dtype=float)
        flat = z.reshape(-1, p.dim)
        out = np.empty(flat.shape[0])
        for k, q in enumerate(flat):
            key = tuple(np.round(q, 9))
            if key not in memo:
                q2 = q.copy()
                q2[0] = a
                memo[key], _ = effective_potential_V(p, a, q2, torus_n=torus_n,
                                                     tol=tol, max_iter=200)
            out[k] = memo[key]
        return out.reshape(z.shape[:-1])

    return Potential(p.dim, fn, grad=None, tag=f"{p.tag}-effective",
                     tol_well=1e-6)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_field(f, path_base):
    """Write <base>.bin (raw float64, C order) + <base>.json sidecar header."""
    f.values.astype("<f8").tofile(path_base + ".bin")
    header = {
        "schema": 1,
        "d": f.grid.d,
        "L": f.grid.L,
        "n1": f.grid.n1,
        "nper": f.grid.nper,
        "component_order": "C",
        "dtype": "<f8",
        "shape": list(f.values.shape),
        "bc_minus": f.bc[0].tolist(),
        "bc_plus": f.bc[1].tolist(),
    }
    with open(path_base + ".json", "w") as fh:
        json.dump(header, fh, indent=1, sort_keys=True)


def load_field(path_base):
    with open(path_base + ".json") as fh:
        header = json.load(fh)
    grid = CylinderGrid(d=header["d"], L=header["L"], n1=header["n1"],
                        nper=header["nper"])
    values = np.fromfile(path_base + ".bin", dtype="<f8").reshape(header["shape"])
    return Field(grid=grid, values=values,
                 bc=(np.array(header["bc_minus"]), np.array(header["bc_plus"])))


def field_to_csv(f, path):
    """Flat CSV: x1, x'..., u_1..u_d (one row per node)."""
    grid = f.grid
    coords = [grid.x1] + [np.arange(grid.nper) * grid.hper] * (grid.d - 1)
    mesh = np.meshgrid(*coords, indexing="ij")
    cols = [m.reshape(-1) for m in mesh]
    cols += [f.values[..., k].reshape(-1) for k in range(grid.d)]
    header = ",".join([f"x{k + 1}" for k in range(grid.d)]
                      + [f"u{k + 1}" for k in range(grid.d)])
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=header,
               comments="")
