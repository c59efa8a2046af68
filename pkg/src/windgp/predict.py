"""Posterior prediction, joint scenario sampling and zonal aggregation.

Targets and observations are addressed as ``(site, hour)`` pairs where
``site`` is a site id (or a row index into the model's input grid) and
``hour`` indexes the temporal grid.
"""

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla

from .errors import DuplicateTarget, UnknownZone
from .kernels import KernelSpec, cholesky_jitter, cross_covariance

log = logging.getLogger(__name__)

SCENARIO_BATCH = 256
NEG_VAR_TOL = 1e-10


@dataclass
class PredictiveDistribution:
    targets: List[tuple]
    mean: np.ndarray
    cov: np.ndarray
    nugget: float

    @property
    def latent_var(self) -> np.ndarray:
        return np.diag(self.cov).copy()

    @property
    def predictive_var(self) -> np.ndarray:
        """Marginal variance of an observation: latent variance plus nugget."""
        return self.latent_var + self.nugget


@dataclass
class ScenarioSet:
    samples: np.ndarray  # [n_scenarios, n_targets]
    targets: List[tuple]
    seed: int
    conditioning: dict = field(default_factory=lambda: {"mode": "unconditional"})
    units: str = "error"

    @property
    def n_scenarios(self) -> int:
        return self.samples.shape[0]


@dataclass
class PanelPredictions:
    """Same-day conditional predictions for every test site, hour and test day."""

    site_ids: List[str]
    day_ids: List[str]
    actual: np.ndarray  # [M*, T, N*]
    mean: np.ndarray  # [M*, T, N*]
    latent_var: np.ndarray  # [M*, T]
    nugget: float

    @property
    def sigma_full(self) -> np.ndarray:
        """Predictive standard deviation shaped ``[M*, T, 1]`` so it broadcasts over days."""
        return np.sqrt(self.latent_var + self.nugget)[:, :, None]


# ---------------------------------------------------------------------------
# Gaussian conditioning
# ---------------------------------------------------------------------------


def _condition(K_oo, K_ot, K_tt, y):
    """Mean and covariance of the targets given noisy observations ``y``.

    ``K_oo`` already includes the nugget. ``y`` may be a vector or an
    ``[n_obs, n_sets]`` matrix of several observation sets sharing inputs.
    """
    L, _ = cholesky_jitter(K_oo, "observed covariance")
    alpha = sla.cho_solve((L, True), y, check_finite=False)
    mean = K_ot.T @ alpha
    V = sla.solve_triangular(L, K_ot, lower=True, check_finite=False)
    cov = K_tt - V.T @ V
    cov = 0.5 * (cov + cov.T)
    return mean, _clamp_diag(cov)


def _clamp_diag(cov):
    d = np.diag(cov)
    if np.any(d < -NEG_VAR_TOL):
        log.warning("posterior variance below zero (min %.3e); clamping", d.min())
    np.fill_diagonal(cov, np.maximum(d, 0.0))
    return cov


def posterior_points(spec: KernelSpec, sigma2: float, obs_points, y, target_points) -> Tuple[np.ndarray, np.ndarray]:
    """Conditional mean and covariance at arbitrary input points.

    Point lists are ``(S, t)`` pairs as taken by
    :func:`windgp.kernels.cross_covariance`. An empty observation set returns
    the prior.
    """
    K_tt = cross_covariance(target_points, target_points, spec)
    y = np.asarray(y, dtype=float)
    if y.shape[0] == 0:
        return np.zeros(K_tt.shape[0]), K_tt
    K_oo = cross_covariance(obs_points, obs_points, spec)
    K_oo[np.diag_indices_from(K_oo)] += sigma2
    K_ot = cross_covariance(obs_points, target_points, spec)
    return _condition(K_oo, K_ot, K_tt, y)


def _site_row(model, site) -> int:
    if isinstance(site, (int, np.integer)):
        if not 0 <= site < model.grid.n_sites:
            raise IndexError(f"site index {site} outside the grid")
        return int(site)
    try:
        return list(model.site_ids).index(site)
    except ValueError:
        raise KeyError(f"unknown site {site!r}") from None


def _points(model, pairs):
    rows = np.array([_site_row(model, s) for s, _ in pairs], dtype=int)
    hours = np.array([int(h) for _, h in pairs], dtype=int)
    if hours.size and (hours.min() < 0 or hours.max() >= model.grid.n_hours):
        raise IndexError("hour outside the temporal grid")
    return model.grid.spatial_coords[rows].reshape(-1, 2), model.grid.temporal_coords[hours]


def posterior(model, observed: Sequence[tuple], targets: Sequence[tuple]) -> PredictiveDistribution:
    """Predictive distribution of ``targets`` given ``observed = [((site, hour), y), ...]``."""
    targets = [(s, int(h)) for s, h in targets]
    if not targets:
        raise ValueError("targets must be nonempty")
    keys = [(_site_row(model, s), h) for s, h in targets]
    if len(set(keys)) != len(keys):
        raise DuplicateTarget("a (site, hour) target appears more than once")
    obs_pairs = [p for p, _ in observed]
    y = np.array([v for _, v in observed], dtype=float)
    mean, cov = posterior_points(model.spec, model.sigma2, _points(model, obs_pairs), y, _points(model, targets))
    return PredictiveDistribution(targets, mean, cov, model.sigma2)


def test_panel_predictions(model, panel) -> PanelPredictions:
    """Predict every test-site hour on every test day from that day's training sites.

    The conditioning inputs are the same every day, so one factorization
    serves all days and the predictive variance is day-invariant.
    """
    test_sites = np.flatnonzero(panel.test_site_mask)
    obs_sites = np.flatnonzero(~panel.test_site_mask)
    test_days = np.flatnonzero(panel.test_day_mask)
    if test_sites.size == 0 or test_days.size == 0:
        raise ValueError("panel has no test split")
    if obs_sites.size == 0:
        raise ValueError("no sites left to condition on")
    grid = panel.inputs
    T = grid.n_hours
    hours = np.arange(T)

    def pts(rows):
        S = np.repeat(grid.spatial_coords[rows], T, axis=0)
        t = np.tile(grid.temporal_coords[hours], rows.size)
        return S, t

    obs, tgt = pts(obs_sites), pts(test_sites)
    spec = model.spec
    K_oo = cross_covariance(obs, obs, spec)
    K_oo[np.diag_indices_from(K_oo)] += model.sigma2
    K_ot = cross_covariance(obs, tgt, spec)
    K_tt = cross_covariance(tgt, tgt, spec)
    # site-major vectorization matches pts(); columns are test days
    Y_obs = panel.y[obs_sites][:, :, test_days].reshape(obs_sites.size * T, test_days.size)
    mean, cov = _condition(K_oo, K_ot, K_tt, Y_obs)
    return PanelPredictions(
        site_ids=[panel.site_ids[i] for i in test_sites],
        day_ids=[panel.day_ids[i] for i in test_days],
        actual=panel.y[test_sites][:, :, test_days].copy(),
        mean=mean.reshape(test_sites.size, T, test_days.size),
        latent_var=np.diag(cov).reshape(test_sites.size, T),
        nugget=model.sigma2,
    )


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------


def sample_scenarios(
    dist: PredictiveDistribution,
    n_scenarios: int,
    seed: int,
    include_nugget: bool = True,
    threads: int = 1,
    conditioning: Optional[dict] = None,
) -> ScenarioSet:
    """Joint draws from ``N(mean, cov [+ nugget I])``.

    Scenarios are generated in fixed batches of 256, batch ``b`` using the
    generator seeded by ``(seed, b)``, so the output does not depend on
    ``threads``. Targets with exactly zero variance are returned as their
    mean.
    """
    if n_scenarios < 1:
        raise ValueError("n_scenarios must be at least 1")
    cov = np.array(dist.cov, dtype=float)
    if include_nugget:
        cov[np.diag_indices_from(cov)] += dist.nugget
    live = np.flatnonzero(np.diag(cov) > 0.0)
    L = cholesky_jitter(cov[np.ix_(live, live)], "scenario covariance")[0] if live.size else None
    k = len(dist.targets)
    starts = list(range(0, n_scenarios, SCENARIO_BATCH))

    def batch(b):
        n = min(SCENARIO_BATCH, n_scenarios - starts[b])
        out = np.tile(np.asarray(dist.mean, dtype=float), (n, 1))
        if L is not None:
            Z = np.random.default_rng([int(seed), b]).standard_normal((n, live.size))
            out[:, live] += Z @ L.T
        return out

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(batch, range(len(starts))))
    else:
        parts = [batch(b) for b in range(len(starts))]
    samples = np.vstack(parts) if parts else np.empty((0, k))
    return ScenarioSet(samples, list(dist.targets), int(seed), conditioning or {"mode": "unconditional"})


def to_power_ratio(scen: ScenarioSet, forecast, site_means) -> ScenarioSet:
    """Map error scenarios to power ratios ``clip(y + forecast + site_mean, 0, 1)`` per target."""
    forecast = np.asarray(forecast, dtype=float)
    site_means = np.asarray(site_means, dtype=float)
    ratios = np.clip(scen.samples + forecast[None, :] + site_means[None, :], 0.0, 1.0)
    return ScenarioSet(ratios, list(scen.targets), scen.seed, dict(scen.conditioning), units="ratio")


@dataclass
class ZonalSeries:
    zones: List[str]
    hours: List[int]
    values: np.ndarray  # [n_scenarios, n_zones, n_hours]; NaN where a zone has no target that hour


def aggregate_zone(scen: ScenarioSet, capacities: Mapping[str, float], zone_of: Mapping[str, str]) -> ZonalSeries:
    """Capacity-weighted average ratio per zone and hour."""
    sites = [s for s, _ in scen.targets]
    for s in sites:
        if s not in zone_of:
            raise UnknownZone(f"site {s!r} has no zone")
        if s not in capacities:
            raise UnknownZone(f"site {s!r} has no capacity")
    zones = sorted({zone_of[s] for s in sites})
    hours = sorted({int(h) for _, h in scen.targets})
    zi = {z: i for i, z in enumerate(zones)}
    hi = {h: i for i, h in enumerate(hours)}
    num = np.zeros((scen.n_scenarios, len(zones), len(hours)))
    den = np.zeros((len(zones), len(hours)))
    for j, (s, h) in enumerate(scen.targets):
        cap = float(capacities[s])
        num[:, zi[zone_of[s]], hi[int(h)]] += cap * scen.samples[:, j]
        den[zi[zone_of[s]], hi[int(h)]] += cap
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)
    return ZonalSeries(zones, hours, values)


def quantile_bands(samples, levels: Sequence[float]) -> Dict[float, Tuple[np.ndarray, np.ndarray]]:
    """Central empirical bands per column.

    ``level`` is the central probability: the band is the ``(1 - level)/2``
    and ``(1 + level)/2`` quantiles, by linear interpolation between order
    statistics.
    """
    X = np.asarray(samples.samples if isinstance(samples, ScenarioSet) else samples, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("quantile bands need at least two scenarios")
    out = {}
    for level in levels:
        if not 0.0 <= level <= 1.0:
            raise ValueError("band level must lie in [0, 1]")
        lo, hi = np.quantile(X, [(1.0 - level) / 2.0, (1.0 + level) / 2.0], axis=0)
        out[float(level)] = (lo, hi)
    return out


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------


def _g(x) -> str:
    return format(float(x), ".10g")


def write_scenarios_csv(path, scen: ScenarioSet, day: str):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario_id", "site_id", "day", "hour", "value"])
        for i in range(scen.n_scenarios):
            for j, (s, h) in enumerate(scen.targets):
                w.writerow([i, s, day, h, _g(scen.samples[i, j])])


def band_rows(labels: Sequence[tuple], samples: np.ndarray, levels: Sequence[float], day: str) -> List[list]:
    """Rows ``label, day, hour, level, lower, upper, mean`` for columns labelled ``(label, hour)``."""
    bands = quantile_bands(samples, levels)
    means = np.mean(samples, axis=0)
    rows = []
    for j, (label, hour) in enumerate(labels):
        for level in levels:
            lo, hi = bands[float(level)]
            rows.append([label, day, hour, _g(level), _g(lo[j]), _g(hi[j]), _g(means[j])])
    return rows


def write_bands_csv(path, rows: Sequence[list], label: str = "site_id"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([label, "day", "hour", "level", "lower", "upper", "mean"])
        w.writerows(rows)


# keep pytest from collecting the function when imported by name
test_panel_predictions.__test__ = False
