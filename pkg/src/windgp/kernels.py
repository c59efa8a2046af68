"""Unit-variance correlation functions and the separable warped space-time kernel.

The full kernel between inputs ``(s_i, t_i)`` and ``(s_j, t_j)`` is::

    eta * k_S(||g_S(s_i) - g_S(s_j)||; rho_S)
        * [k_T(|g_T(t_i) - g_T(t_j)|; rho_T) + eta_p * k_p(|t_i - t_j|; rho_p, p)]

where ``k_S``, ``k_T`` are Matérn/SE correlations (value 1 at distance 0),
``g_S``/``g_T`` are RBF warp stacks and the periodic add-on uses the raw
time lag. The diagonal therefore equals ``eta * (1 + eta_p)``.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg as sla

from . import _accel
from .errors import InvalidRange, NotPositiveDefinite
from .warping import WarpStack, warp_batch

log = logging.getLogger(__name__)

JITTER_START = 1e-10
JITTER_MAX = 1e-6


class KernelFamily(str, Enum):
    M12 = "M12"
    M32 = "M32"
    M52 = "M52"
    SE = "SE"

    @property
    def code(self) -> int:
        return _CODES[self]

    @property
    def nu(self) -> float:
        return {"M12": 0.5, "M32": 1.5, "M52": 2.5, "SE": float("inf")}[self.value]


_CODES = {KernelFamily.M12: 0, KernelFamily.M32: 1, KernelFamily.M52: 2, KernelFamily.SE: 3}


def _identity_stack(dim):
    return lambda: WarpStack(dim)


@dataclass
class KernelSpec:
    """Hyperparameters of the separable kernel (nugget excluded).

    ``eta_p = 0`` switches the periodic add-on off; ``rho_p`` and ``period``
    are then ignored.
    """

    eta: float
    spatial_family: KernelFamily
    rho_s: float
    temporal_family: KernelFamily
    rho_t: float
    eta_p: float = 0.0
    rho_p: float = 1.0
    period: float = 0.5
    spatial_warp: WarpStack = field(default_factory=_identity_stack(2))
    temporal_warp: WarpStack = field(default_factory=_identity_stack(1))

    def __post_init__(self):
        self.spatial_family = KernelFamily(self.spatial_family)
        self.temporal_family = KernelFamily(self.temporal_family)

    def validate(self):
        for name in ("eta", "rho_s", "rho_t", "rho_p", "period"):
            value = getattr(self, name)
            if not (value > 0.0 and np.isfinite(value)):
                raise InvalidRange(f"{name}={value} must be positive and finite")
        if not (self.eta_p >= 0.0 and np.isfinite(self.eta_p)):
            raise InvalidRange(f"eta_p={self.eta_p} must be non-negative")
        if self.spatial_warp.dim != 2 or self.temporal_warp.dim != 1:
            raise InvalidRange("spatial warp must be 2-d and temporal warp 1-d")
        self.spatial_warp.validate()
        self.temporal_warp.validate()

    @property
    def diagonal(self) -> float:
        return self.eta * (1.0 + self.eta_p)


# ---------------------------------------------------------------------------
# scalar correlation functions
# ---------------------------------------------------------------------------


def matern_corr(family, d, rho):
    """Matérn-family correlation at distance ``d`` (scalar or array)."""
    if not rho > 0.0:
        raise InvalidRange(f"range must be positive, got {rho}")
    if np.any(np.asarray(d) < 0.0):
        raise InvalidRange("distance must be non-negative")
    return _accel.corr_from_dist(d, KernelFamily(family).code, rho)


def periodic_corr(d, rho_p, period):
    """``exp(-(2 / rho_p^2) sin^2(pi d / (2 period)))``; periodic in ``d`` with period ``2 * period``."""
    if not (rho_p > 0.0 and period > 0.0):
        raise InvalidRange("periodic range and period must be positive")
    d = np.asarray(d, dtype=float)
    if np.any(d < 0.0):
        raise InvalidRange("distance must be non-negative")
    s = np.sin(np.pi * d / (2.0 * period))
    out = np.exp(-2.0 * s * s / (rho_p * rho_p))
    return float(out) if out.ndim == 0 else out


def temporal_kernel(t_i, t_j, spec: KernelSpec) -> float:
    gi = warp_batch(spec.temporal_warp, [[t_i]])[0, 0]
    gj = warp_batch(spec.temporal_warp, [[t_j]])[0, 0]
    value = matern_corr(spec.temporal_family, abs(gi - gj), spec.rho_t)
    if spec.eta_p > 0.0:
        value += spec.eta_p * periodic_corr(abs(t_i - t_j), spec.rho_p, spec.period)
    return float(value)


def spatiotemporal_kernel(x_i, x_j, spec: KernelSpec) -> float:
    """Kernel between two inputs given as ``((lon, lat), t)`` pairs in normalized units."""
    (s_i, t_i), (s_j, t_j) = x_i, x_j
    g = warp_batch(spec.spatial_warp, np.array([s_i, s_j], dtype=float))
    d = float(np.linalg.norm(g[0] - g[1]))
    return float(
        spec.eta
        * matern_corr(spec.spatial_family, d, spec.rho_s)
        * temporal_kernel(t_i, t_j, spec)
    )


# ---------------------------------------------------------------------------
# matrix assembly
# ---------------------------------------------------------------------------


def spatial_factor(spec: KernelSpec, s_a, s_b=None, check: bool = True) -> np.ndarray:
    """Unit-variance spatial correlation matrix between two site sets."""
    ga = warp_batch(spec.spatial_warp, s_a, check=check)
    gb = ga if s_b is None else warp_batch(spec.spatial_warp, s_b, check=check)
    return _accel.pairwise_corr(ga, gb, spec.spatial_family.code, spec.rho_s)


def temporal_factor(spec: KernelSpec, t_a, t_b=None, check: bool = True) -> np.ndarray:
    """Temporal kernel matrix (warped Matérn plus periodic add-on)."""
    t_a = np.asarray(t_a, dtype=float).ravel()
    t_b = t_a if t_b is None else np.asarray(t_b, dtype=float).ravel()
    ga = warp_batch(spec.temporal_warp, t_a[:, None], check=check)
    gb = ga if t_b is t_a else warp_batch(spec.temporal_warp, t_b[:, None], check=check)
    out = _accel.pairwise_corr(ga, gb, spec.temporal_family.code, spec.rho_t)
    if spec.eta_p > 0.0:
        out = out + spec.eta_p * _accel.periodic_matrix(t_a, t_b, spec.rho_p, spec.period)
    return out


def build_covariance(grid, spec: KernelSpec) -> np.ndarray:
    """Noise-free covariance over all (site, hour) cells of ``grid``.

    Rows are ordered site-major, hour-minor: index ``m * T + t``.
    """
    spec.validate()
    ks = spatial_factor(spec, grid.spatial_coords, check=False)
    kt = temporal_factor(spec, grid.temporal_coords, check=False)
    return spec.eta * np.kron(ks, kt)


def cross_covariance(points_a, points_b, spec: KernelSpec) -> np.ndarray:
    """Kernel matrix between two arbitrary point lists.

    Each point list is a pair ``(S, t)`` with ``S`` of shape ``[n, 2]`` and
    ``t`` of shape ``[n]``.
    """
    s_a, t_a = points_a
    s_b, t_b = points_b
    ks = spatial_factor(spec, np.asarray(s_a, float).reshape(-1, 2), np.asarray(s_b, float).reshape(-1, 2))
    kt = temporal_factor(spec, t_a, t_b)
    return spec.eta * ks * kt


def cholesky_jitter(A: np.ndarray, what: str = "covariance"):
    """Lower Cholesky factor with an escalating diagonal jitter on failure.

    Tries the bare matrix first, then adds 1e-10, 1e-9, ... up to 1e-6.

    Returns
    -------
    L : ndarray
    jitter : float
        The jitter that was finally added (0.0 if none).
    """
    jitter = 0.0
    while True:
        try:
            M = A if jitter == 0.0 else A + jitter * np.eye(A.shape[0])
            return sla.cholesky(M, lower=True, check_finite=True), jitter
        except (np.linalg.LinAlgError, ValueError):
            jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX * (1.0 + 1e-9):
                raise NotPositiveDefinite(
                    f"{what} is not positive definite even with jitter {JITTER_MAX:g}"
                ) from None
            log.warning("Cholesky of %s failed; adding jitter %.0e", what, jitter)
