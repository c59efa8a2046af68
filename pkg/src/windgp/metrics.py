"""Point and probabilistic scores for Gaussian predictive distributions.

All scores work on the forecast-error scale: the prediction for cell
``(m, t, n)`` is ``N(mu, sigma^2)`` with ``sigma^2`` the full predictive
variance (latent plus nugget).
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple

import numpy as np
from scipy.special import ndtr, ndtri

from . import _accel
from .errors import EmptyInput, NonpositiveSigma, OutOfRange

KS_TERM_TOL = 1e-10
KS_MAX_TERMS = 100


@dataclass
class MetricsReport:
    rmse: float
    ks_statistic: float
    ks_p_value: float
    coverage: Dict[float, float] = field(default_factory=dict)
    avg_interval_score: Dict[float, float] = field(default_factory=dict)
    counts: Tuple[int, int, int] = (0, 0, 0)

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "ks": {"D": self.ks_statistic, "p": self.ks_p_value},
            "coverage": {f"{k:g}": v for k, v in self.coverage.items()},
            "avg_is": {f"{k:g}": v for k, v in self.avg_interval_score.items()},
            "counts": {"M": self.counts[0], "T": self.counts[1], "N": self.counts[2]},
        }


def rmse(predictions, actuals) -> float:
    p = np.asarray(predictions, dtype=float).ravel()
    a = np.asarray(actuals, dtype=float).ravel()
    if p.size == 0:
        raise EmptyInput("rmse of an empty set")
    if p.shape != a.shape:
        raise ValueError("predictions and actuals differ in size")
    return float(np.sqrt(np.mean((a - p) ** 2)))


def _check_sigma(sigma):
    sigma = np.asarray(sigma, dtype=float)
    if np.any(~(sigma > 0.0)):
        raise NonpositiveSigma("predictive standard deviations must be positive")
    return sigma


def pit(y, mu, sigma):
    """Probability integral transform ``Phi((y - mu) / sigma)``."""
    sigma = _check_sigma(sigma)
    out = ndtr((np.asarray(y, dtype=float) - np.asarray(mu, dtype=float)) / sigma)
    return float(out) if np.ndim(out) == 0 else out


def kolmogorov_sf(lam: float) -> float:
    """Kolmogorov survival function ``2 sum_j (-1)^(j-1) exp(-2 j^2 lam^2)``.

    Returns 1.0 when the alternating series has not settled within 100 terms
    (only happens for tiny ``lam``, where the true value is 1).
    """
    if lam <= 0.0:
        return 1.0
    a2 = -2.0 * lam * lam
    total, sign = 0.0, 1.0
    for j in range(1, KS_MAX_TERMS + 1):
        term = 2.0 * sign * math.exp(a2 * j * j)
        total += term
        if abs(term) < KS_TERM_TOL:
            return min(max(total, 0.0), 1.0)
        sign = -sign
    return 1.0


def ks_uniform(q) -> Tuple[float, float]:
    """One-sample KS test of ``q`` against Uniform(0, 1).

    The p-value uses the asymptotic distribution at the effective argument
    ``(sqrt(n) + 0.12 + 0.11 / sqrt(n)) * D``.
    """
    q = np.asarray(q, dtype=float).ravel()
    if q.size == 0:
        raise EmptyInput("KS test of an empty sample")
    if np.any((q < 0.0) | (q > 1.0)) or np.any(np.isnan(q)):
        raise OutOfRange("PIT values must lie in [0, 1]")
    D = _accel.ks_sup(np.sort(q))
    rn = math.sqrt(q.size)
    return D, kolmogorov_sf((rn + 0.12 + 0.11 / rn) * D)


def coverage(q, alpha: float) -> float:
    """Fraction of PIT values in the closed band ``[alpha/2, 1 - alpha/2]``."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    q = np.asarray(q, dtype=float)
    return float(np.mean((q >= alpha / 2.0) & (q <= 1.0 - alpha / 2.0)))


def z_crit(alpha: float) -> float:
    """Upper ``alpha/2`` standard-normal critical value."""
    return float(ndtri(1.0 - alpha / 2.0))


def interval_score_bounds(y, lower, upper, alpha: float):
    """Interval score of ``[lower, upper]`` at level ``alpha`` for outcomes ``y``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    y = np.asarray(y, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    score = (upper - lower) + (2.0 / alpha) * (lower - y) * (y < lower) + (2.0 / alpha) * (y - upper) * (y > upper)
    return float(score) if score.ndim == 0 else score


def interval_score(y, mu, sigma, alpha: float):
    sigma = _check_sigma(sigma)
    z = z_crit(alpha)
    mu = np.asarray(mu, dtype=float)
    return interval_score_bounds(y, mu - z * sigma, mu + z * sigma, alpha)


def avg_interval_score(y, mu, sigma, alpha: float) -> float:
    return float(np.mean(interval_score(y, mu, sigma, alpha)))


def evaluate_predictions(
    actual,
    mean,
    sigma,
    coverage_levels: Sequence[float] = (0.2,),
    interval_levels: Sequence[float] = (0.05,),
) -> MetricsReport:
    """Full report for arrays of test outcomes, predictive means and standard deviations.

    Arrays shaped ``[M*, T*, N*]`` fill in ``counts``; ``sigma`` broadcasts.
    """
    actual = np.asarray(actual, dtype=float)
    mean = np.asarray(mean, dtype=float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), actual.shape)
    q = pit(actual, mean, sigma)
    D, p = ks_uniform(q)
    counts = tuple(actual.shape) if actual.ndim == 3 else (actual.size, 1, 1)
    return MetricsReport(
        rmse=rmse(mean, actual),
        ks_statistic=D,
        ks_p_value=p,
        coverage={float(a): coverage(q, a) for a in coverage_levels},
        avg_interval_score={float(a): avg_interval_score(actual, mean, sigma, a) for a in interval_levels},
        counts=counts,
    )
