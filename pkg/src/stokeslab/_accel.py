"""Hot finite-difference kernels: numba-jitted with a pure-numpy fallback.

The backend is chosen once at import time from the environment variable
``STOKES_LAB_NUMBA`` ("0"/"off" forces the numpy path; anything else, or the
variable being unset, uses numba when it is importable).  ``set_backend`` can
switch at runtime, which is what ``benchmarks/bench_kernels.py`` uses to time
the two paths against each other.

All kernels act along axis 0 of a 2-d ``(n, m)`` float64 array; callers with
higher-rank arrays reshape/moveaxis around them (see ``stokeslab.cylinder``).
"""

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def _diff_axial_np(f, h):
    """d/dx along axis 0: centered interior, 2nd-order one-sided ends."""
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (2.0 * h)
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
    out[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * h)
    return out


def _diff_axial_T_np(y, h):
    """Exact transpose of ``_diff_axial_np`` under the plain sum inner product."""
    out = np.zeros_like(y)
    c = 1.0 / (2.0 * h)
    out[2:] += y[1:-1] * c
    out[:-2] -= y[1:-1] * c
    out[0] += -3.0 * c * y[0]
    out[1] += 4.0 * c * y[0]
    out[2] += -1.0 * c * y[0]
    out[-1] += 3.0 * c * y[-1]
    out[-2] += -4.0 * c * y[-1]
    out[-3] += 1.0 * c * y[-1]
    return out


def _diff_periodic_np(f, h):
    """Centered periodic difference along axis 0."""
    return (np.roll(f, -1, axis=0) - np.roll(f, 1, axis=0)) / (2.0 * h)


# ---------------------------------------------------------------------------
# numba implementations (same contracts)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _diff_axial_nb(f, h):  # pragma: no cover - numerics identical to numpy path
    n, m = f.shape
    out = np.empty((n, m))
    c = 1.0 / (2.0 * h)
    for j in range(m):
        out[0, j] = (-3.0 * f[0, j] + 4.0 * f[1, j] - f[2, j]) * c
        out[n - 1, j] = (3.0 * f[n - 1, j] - 4.0 * f[n - 2, j] + f[n - 3, j]) * c
    for i in range(1, n - 1):
        for j in range(m):
            out[i, j] = (f[i + 1, j] - f[i - 1, j]) * c
    return out


@njit(cache=True)
def _diff_axial_T_nb(y, h):  # pragma: no cover
    n, m = y.shape
    out = np.zeros((n, m))
    c = 1.0 / (2.0 * h)
    for i in range(1, n - 1):
        for j in range(m):
            out[i + 1, j] += y[i, j] * c
            out[i - 1, j] -= y[i, j] * c
    for j in range(m):
        out[0, j] += -3.0 * c * y[0, j]
        out[1, j] += 4.0 * c * y[0, j]
        out[2, j] += -1.0 * c * y[0, j]
        out[n - 1, j] += 3.0 * c * y[n - 1, j]
        out[n - 2, j] += -4.0 * c * y[n - 1, j]
        out[n - 3, j] += 1.0 * c * y[n - 1, j]
    return out


@njit(cache=True)
def _diff_periodic_nb(f, h):  # pragma: no cover
    n, m = f.shape
    out = np.empty((n, m))
    c = 1.0 / (2.0 * h)
    for i in range(n):
        ip = i + 1 if i + 1 < n else 0
        im = i - 1 if i - 1 >= 0 else n - 1
        for j in range(m):
            out[i, j] = (f[ip, j] - f[im, j]) * c
    return out


@njit(cache=True)
def _rk4_planar_nb(b, v2, v3, dt, nsteps):  # pragma: no cover
    out = np.empty((nsteps + 1, 2))
    out[0, 0] = v2
    out[0, 1] = v3
    for k in range(nsteps):
        x, y = out[k, 0], out[k, 1]
        k1x = b * b - x * x - y * y
        k1y = -2.0 * x * y
        x1, y1 = x + 0.5 * dt * k1x, y + 0.5 * dt * k1y
        k2x = b * b - x1 * x1 - y1 * y1
        k2y = -2.0 * x1 * y1
        x2, y2 = x + 0.5 * dt * k2x, y + 0.5 * dt * k2y
        k3x = b * b - x2 * x2 - y2 * y2
        k3y = -2.0 * x2 * y2
        x3, y3 = x + dt * k3x, y + dt * k3y
        k4x = b * b - x3 * x3 - y3 * y3
        k4y = -2.0 * x3 * y3
        out[k + 1, 0] = x + dt * (k1x + 2.0 * k2x + 2.0 * k3x + k4x) / 6.0
        out[k + 1, 1] = y + dt * (k1y + 2.0 * k2y + 2.0 * k3y + k4y) / 6.0
        if abs(out[k + 1, 0]) > 1e6 or abs(out[k + 1, 1]) > 1e6:
            return out[: k + 2]
    return out


def _rk4_planar_np(b, v2, v3, dt, nsteps):
    out = np.empty((nsteps + 1, 2))
    out[0] = (v2, v3)

    def rhs(v):
        return np.array([b * b - v[0] * v[0] - v[1] * v[1], -2.0 * v[0] * v[1]])

    for k in range(nsteps):
        v = out[k]
        k1 = rhs(v)
        k2 = rhs(v + 0.5 * dt * k1)
        k3 = rhs(v + 0.5 * dt * k2)
        k4 = rhs(v + dt * k3)
        out[k + 1] = v + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        if np.max(np.abs(out[k + 1])) > 1e6:
            return out[: k + 2]
    return out


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

_NUMPY_BACKEND = {
    "diff_axial": _diff_axial_np,
    "diff_axial_T": _diff_axial_T_np,
    "diff_periodic": _diff_periodic_np,
    "rk4_planar": _rk4_planar_np,
}

_NUMBA_BACKEND = {
    "diff_axial": _diff_axial_nb,
    "diff_axial_T": _diff_axial_T_nb,
    "diff_periodic": _diff_periodic_nb,
    "rk4_planar": _rk4_planar_nb,
}

_ACTIVE = dict(_NUMPY_BACKEND)


def backend_name():
    return _ACTIVE["__name__"]


def set_backend(name):
    """Select 'numba' or 'numpy'. Returns the name actually in effect."""
    if name == "numba" and HAVE_NUMBA:
        _ACTIVE.update(_NUMBA_BACKEND)
        _ACTIVE["__name__"] = "numba"
    else:
        _ACTIVE.update(_NUMPY_BACKEND)
        _ACTIVE["__name__"] = "numpy"
    return _ACTIVE["__name__"]


_env = os.environ.get("STOKES_LAB_NUMBA", "").strip().lower()
if _env in ("0", "off", "false", "no"):
    set_backend("numpy")
else:
    set_backend("numba" if HAVE_NUMBA else "numpy")


def _as2d(f):
    f = np.asarray(f, dtype=np.float64)
    if f.ndim == 1:
        return f.reshape(f.shape[0], 1), f.shape
    if f.ndim == 2:
        return np.ascontiguousarray(f), f.shape
    return np.ascontiguousarray(f.reshape(f.shape[0], -1)), f.shape


def diff_axial(f, h):
    """Axial derivative along axis 0 of an array of any rank."""
    g, shape = _as2d(f)
    return _ACTIVE["diff_axial"](g, float(h)).reshape(shape)


def diff_axial_T(y, h):
    g, shape = _as2d(y)
    return _ACTIVE["diff_axial_T"](g, float(h)).reshape(shape)


def diff_periodic(f, h, axis=0):
    """Centered periodic derivative along ``axis`` of an array of any rank."""
    f = np.asarray(f, dtype=np.float64)
    if axis != 0:
        f = np.moveaxis(f, axis, 0)
    g, shape = _as2d(f)
    out = _ACTIVE["diff_periodic"](g, float(h)).reshape(shape)
    if axis != 0:
        out = np.moveaxis(out, 0, axis)
    return out


def rk4_planar(b, v0, dt, nsteps):
    """RK4 trajectory of (v2', v3') = (b^2 - v2^2 - v3^2, -2 v2 v3)."""
    return _ACTIVE["rk4_planar"](float(b), float(v0[0]), float(v0[1]), float(dt), int(nsteps))
