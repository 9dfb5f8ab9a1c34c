"""Hot numeric kernels for the max-min solvers.

Each kernel is written once as a plain-Python/numpy function and compiled
with numba's @njit when available. Setting the environment variable
``INFOCOUPLING_NO_NUMBA=1`` (or running without numba installed) selects the
pure-numpy path instead; results agree to floating-point noise and the grid
kernel gets a vectorized fallback so large sweeps stay fast either way.

``benchmarks/bench_kernels.py`` times the two paths side by side.
"""

import os

import numpy as np

_ENV_FLAG = "INFOCOUPLING_NO_NUMBA"


def _numba_requested() -> bool:
    return os.environ.get(_ENV_FLAG, "").strip() not in ("1", "true", "yes")


try:  # pragma: no cover - import guard
    import numba as _numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _numba = None
    _HAVE_NUMBA = False

USING_NUMBA = _HAVE_NUMBA and _numba_requested()


def backend() -> str:
    """Name of the active kernel backend: 'numba' or 'numpy'."""
    return "numba" if USING_NUMBA else "numpy"


def _jit(fn):
    if USING_NUMBA:
        return _numba.njit(cache=True)(fn)
    return fn


# ---------------------------------------------------------------------------
# kernel bodies (numba-compatible subset of numpy)
# ---------------------------------------------------------------------------


def _project_simplex_impl(v):
    # Euclidean projection onto the probability simplex (sort-based).
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = 0
    for i in range(n):
        if u[i] + (1.0 - css[i]) / (i + 1.0) > 0.0:
            rho = i
    tau = (1.0 - css[rho]) / (rho + 1.0)
    w = v + tau
    for i in range(n):
        if w[i] < 0.0:
            w[i] = 0.0
    return w / w.sum()


def _minmax_ascent_impl(a_stack, starts, max_iters, step0):
    # Projected supergradient ascent of min_i x'A_i x on the unit sphere,
    # one pass per start row; returns the best point seen anywhere.
    k = a_stack.shape[0]
    m = a_stack.shape[1]
    n_starts = starts.shape[0]
    best_val = -1.0
    best_x = np.zeros(m)
    for si in range(n_starts):
        x = starts[si].copy()
        nrm = np.sqrt(np.sum(x * x))
        if nrm <= 0.0:
            continue
        x = x / nrm
        for t in range(max_iters):
            vmin = 1e300
            imin = 0
            for i in range(k):
                v = x @ (a_stack[i] @ x)
                if v < vmin:
                    vmin = v
                    imin = i
            if vmin > best_val:
                best_val = vmin
                best_x = x.copy()
            g = 2.0 * (a_stack[imin] @ x)
            g = g - (g @ x) * x
            gn = np.sqrt(np.sum(g * g))
            if gn < 1e-14:
                break
            x = x + (step0 / np.sqrt(1.0 + t)) * (g / gn)
            x = x / np.sqrt(np.sum(x * x))
        vmin = 1e300
        for i in range(k):
            v = x @ (a_stack[i] @ x)
            if v < vmin:
                vmin = v
        if vmin > best_val:
            best_val = vmin
            best_x = x.copy()
    return best_val, best_x


def _minmax_grid_2d_impl(a_stack, n_points):
    # Exhaustive sweep of min_i over unit directions (cos t, sin t),
    # t in [0, pi); returns the grid maximum and its angle.
    k = a_stack.shape[0]
    best_v = -1.0
    best_t = 0.0
    for j in range(n_points):
        th = np.pi * j / n_points
        c = np.cos(th)
        s = np.sin(th)
        vmin = 1e300
        for i in range(k):
            v = (
                a_stack[i, 0, 0] * c * c
                + 2.0 * a_stack[i, 0, 1] * c * s
                + a_stack[i, 1, 1] * s * s
            )
            if v < vmin:
                vmin = v
        if vmin > best_v:
            best_v = vmin
            best_t = th
    return best_v, best_t


def _dual_subgradient_impl(a_stack, lam0, max_iters, step0):
    # Projected subgradient descent of lam -> lambda_max(sum lam_i A_i)
    # over the simplex, tracking the best iterate.
    k = a_stack.shape[0]
    m = a_stack.shape[1]
    lam = lam0.copy()
    best_val = 1e300
    best_lam = lam.copy()
    for t in range(max_iters):
        blend = np.zeros((m, m))
        for i in range(k):
            blend += lam[i] * a_stack[i]
        w, vecs = np.linalg.eigh(blend)
        val = w[m - 1]
        if val < best_val:
            best_val = val
            best_lam = lam.copy()
        top = vecs[:, m - 1].copy()
        g = np.empty(k)
        for i in range(k):
            g[i] = top @ (a_stack[i] @ top)
        lam = _project_simplex_ref(lam - (step0 / np.sqrt(1.0 + t)) * g)
    return best_val, best_lam


# The dual kernel calls the simplex projection; keep one reference that is
# rebound to the jitted version when numba is active so both paths share code.
_project_simplex_ref = _project_simplex_impl

project_simplex = _jit(_project_simplex_impl)
if USING_NUMBA:
    _project_simplex_ref = project_simplex

minmax_ascent = _jit(_minmax_ascent_impl)
dual_subgradient = _jit(_dual_subgradient_impl)

_minmax_grid_2d_jit = _jit(_minmax_grid_2d_impl)


def _minmax_grid_2d_numpy(a_stack, n_points, chunk=262144):
    # Vectorized fallback for the angular sweep; chunked to bound memory.
    best_v = -1.0
    best_t = 0.0
    for lo in range(0, n_points, chunk):
        hi = min(lo + chunk, n_points)
        th = np.pi * np.arange(lo, hi) / n_points
        x = np.stack([np.cos(th), np.sin(th)])
        vals = np.einsum("kab,aj,bj->kj", a_stack, x, x)
        mins = vals.min(axis=0)
        j = int(np.argmax(mins))
        if mins[j] > best_v:
            best_v = float(mins[j])
            best_t = float(th[j])
    return best_v, best_t


def minmax_grid_2d(a_stack, n_points):
    """Max over an angular grid of the minimum quadratic-form value.

    Returns ``(value, theta)`` where value is the grid maximum of
    min_i x(theta)' A_i x(theta) and theta its angle in [0, pi).
    """
    a_stack = np.ascontiguousarray(a_stack, dtype=float)
    if USING_NUMBA:
        return _minmax_grid_2d_jit(a_stack, n_points)
    return _minmax_grid_2d_numpy(a_stack, n_points)
