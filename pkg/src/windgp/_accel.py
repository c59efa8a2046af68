"""Hot numeric kernels, compiled with numba when available.

Every kernel exists twice: a loop version decorated with ``@njit`` and a
vectorised numpy version. ``WINDGP_NUMBA=0`` in the environment (read once at
import) forces the numpy path; so does a missing numba install. Both paths
are exercised by the test-suite and compared in ``benchmarks/bench_backends.py``.

Correlation family codes: 0 = M12, 1 = M32, 2 = M52, 3 = SE.
"""

import math
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional extra
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("WINDGP_NUMBA", "1").strip().lower() not in (
    "0",
    "false",
    "no",
    "off",
)

SQRT3 = math.sqrt(3.0)
SQRT5 = math.sqrt(5.0)


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def corr_from_dist_np(d, code, rho):
    r = np.asarray(d, dtype=float) / rho
    if code == 0:
        return np.exp(-r)
    if code == 1:
        return (1.0 + SQRT3 * r) * np.exp(-SQRT3 * r)
    if code == 2:
        return (1.0 + SQRT5 * r + 5.0 * r * r / 3.0) * np.exp(-SQRT5 * r)
    return np.exp(-0.5 * r * r)


def pairwise_corr_np(xa, xb, code, rho):
    diff = xa[:, None, :] - xb[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    return corr_from_dist_np(d, code, rho)


def periodic_matrix_np(ta, tb, rho_p, period):
    d = np.abs(ta[:, None] - tb[None, :])
    s = np.sin(np.pi * d / (2.0 * period))
    return np.exp(-2.0 * s * s / (rho_p * rho_p))


def rbf_layer_np(x, w, gamma, a):
    diff = x - gamma[None, :]
    bump = np.exp(-np.sum(diff * diff, axis=1) / (2.0 * a * a))
    return x + w[None, :] * diff * bump[:, None]


def ks_sup_np(q_sorted):
    n = q_sorted.shape[0]
    i = np.arange(1, n + 1, dtype=float)
    d_plus = np.max(i / n - q_sorted)
    d_minus = np.max(q_sorted - (i - 1.0) / n)
    return max(d_plus, d_minus)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _corr_scalar(d, code, rho):
        r = d / rho
        if code == 0:
            return math.exp(-r)
        if code == 1:
            return (1.0 + SQRT3 * r) * math.exp(-SQRT3 * r)
        if code == 2:
            return (1.0 + SQRT5 * r + 5.0 * r * r / 3.0) * math.exp(-SQRT5 * r)
        return math.exp(-0.5 * r * r)

    @njit(cache=True)
    def corr_from_dist_nb(d, code, rho):
        flat = d.ravel()
        out = np.empty(flat.shape[0])
        for i in range(flat.shape[0]):
            out[i] = _corr_scalar(flat[i], code, rho)
        return out.reshape(d.shape)

    @njit(cache=True)
    def pairwise_corr_nb(xa, xb, code, rho):
        na, nb, dim = xa.shape[0], xb.shape[0], xa.shape[1]
        out = np.empty((na, nb))
        for i in range(na):
            for j in range(nb):
                acc = 0.0
                for k in range(dim):
                    diff = xa[i, k] - xb[j, k]
                    acc += diff * diff
                out[i, j] = _corr_scalar(math.sqrt(acc), code, rho)
        return out

    @njit(cache=True)
    def periodic_matrix_nb(ta, tb, rho_p, period):
        out = np.empty((ta.shape[0], tb.shape[0]))
        scale = math.pi / (2.0 * period)
        inv = 2.0 / (rho_p * rho_p)
        for i in range(ta.shape[0]):
            for j in range(tb.shape[0]):
                s = math.sin(scale * abs(ta[i] - tb[j]))
                out[i, j] = math.exp(-inv * s * s)
        return out

    @njit(cache=True)
    def rbf_layer_nb(x, w, gamma, a):
        n, dim = x.shape
        out = np.empty_like(x)
        inv = 1.0 / (2.0 * a * a)
        for i in range(n):
            acc = 0.0
            for k in range(dim):
                diff = x[i, k] - gamma[k]
                acc += diff * diff
            bump = math.exp(-acc * inv)
            for k in range(dim):
                out[i, k] = x[i, k] + w[k] * (x[i, k] - gamma[k]) * bump
        return out

    @njit(cache=True)
    def ks_sup_nb(q_sorted):
        n = q_sorted.shape[0]
        best = 0.0
        for i in range(n):
            hi = (i + 1.0) / n - q_sorted[i]
            lo = q_sorted[i] - i / n
            if hi > best:
                best = hi
            if lo > best:
                best = lo
        return best


def select(name):
    """Return the active implementation of kernel ``name``."""
    if USE_NUMBA:
        return globals()[name + "_nb"]
    return globals()[name + "_np"]


def _float2d(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def pairwise_corr(xa, xb, code, rho):
    xa = _float2d(xa)
    xb = _float2d(xb)
    if xa.ndim == 1:
        xa = xa[:, None]
        xb = xb[:, None]
    return select("pairwise_corr")(xa, xb, int(code), float(rho))


def corr_from_dist(d, code, rho):
    d = np.asarray(d, dtype=np.float64)
    if d.ndim == 0:
        return float(corr_from_dist_np(d, int(code), float(rho)))
    return select("corr_from_dist")(np.ascontiguousarray(d), int(code), float(rho))


def periodic_matrix(ta, tb, rho_p, period):
    return select("periodic_matrix")(
        _float2d(ta).ravel(), _float2d(tb).ravel(), float(rho_p), float(period)
    )


def rbf_layer(x, w, gamma, a):
    return select("rbf_layer")(
        _float2d(x), _float2d(w).ravel(), _float2d(gamma).ravel(), float(a)
    )


def ks_sup(q_sorted):
    return float(select("ks_sup")(_float2d(q_sorted).ravel()))
