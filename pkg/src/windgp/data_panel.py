"""Forecast/actual panels, centered forecast errors and exploratory diagnostics.

Input CSV columns (header required, any column order)::

    site_id,longitude,latitude,zone,capacity_mw,day,hour,actual_mw,forecast_mw

``day`` is an ISO-8601 date and ``hour`` an integer in ``0..T-1``. Every
(site, day, hour) cell must appear exactly once.
"""

import csv
import io
import json
import logging
import os
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateExtent,
    DuplicateRow,
    EmptyTrainingSlice,
    MissingCell,
    NonpositiveCapacity,
    WindGPError,
)

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "site_id",
    "longitude",
    "latitude",
    "zone",
    "capacity_mw",
    "day",
    "hour",
    "actual_mw",
    "forecast_mw",
)
DEFAULT_EPS = 0.05


@dataclass(frozen=True)
class SiteRecord:
    site_id: str
    longitude: float
    latitude: float
    zone: str = ""
    capacity: float = 1.0


@dataclass
class SitePanel:
    """Raw generation in MW; ``actual`` and ``forecast`` have shape ``[M, T, N]``."""

    sites: List[SiteRecord]
    days: List[str]
    actual: np.ndarray
    forecast: np.ndarray

    @property
    def hours(self) -> np.ndarray:
        return np.arange(self.actual.shape[1])

    @property
    def shape(self):
        return self.actual.shape


@dataclass
class InputGrid:
    """Normalized site coordinates ``[M, 2]`` and hour coordinates ``[T]``.

    Raw coordinates map to ``(raw - shift) / scale + eps``; both spatial
    dimensions share ``scale`` so distance ratios are preserved.
    """

    spatial_coords: np.ndarray
    temporal_coords: np.ndarray
    shift: np.ndarray
    scale: float
    eps: float = DEFAULT_EPS

    @property
    def n_sites(self) -> int:
        return self.spatial_coords.shape[0]

    @property
    def n_hours(self) -> int:
        return self.temporal_coords.shape[0]

    def subset(self, site_idx) -> "InputGrid":
        return InputGrid(
            self.spatial_coords[np.asarray(site_idx, dtype=int)],
            self.temporal_coords,
            self.shift,
            self.scale,
            self.eps,
        )

    def to_dict(self) -> dict:
        return {
            "spatial_coords": self.spatial_coords.tolist(),
            "temporal_coords": self.temporal_coords.tolist(),
            "shift": list(map(float, self.shift)),
            "scale": float(self.scale),
            "eps": float(self.eps),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InputGrid":
        return cls(
            np.asarray(d["spatial_coords"], dtype=float).reshape(-1, 2),
            np.asarray(d["temporal_coords"], dtype=float),
            np.asarray(d["shift"], dtype=float),
            float(d["scale"]),
            float(d["eps"]),
        )


@dataclass
class SplitSpec:
    test_site_ids: frozenset
    test_day_ids: frozenset
    rng_seed: Optional[int] = None

    def __post_init__(self):
        self.test_site_ids = frozenset(self.test_site_ids)
        self.test_day_ids = frozenset(self.test_day_ids)


def make_split(
    site_ids: Sequence[str],
    day_ids: Sequence[str],
    n_test_sites: int,
    n_test_days: int,
    seed: int,
) -> SplitSpec:
    """Draw test sites and test days without replacement from one seeded generator."""
    if not (0 <= n_test_sites <= len(site_ids) and 0 <= n_test_days < len(day_ids)):
        raise ValueError("test set sizes out of range")
    rng = np.random.default_rng(seed)
    sites = rng.choice(len(site_ids), size=n_test_sites, replace=False)
    days = rng.choice(len(day_ids), size=n_test_days, replace=False)
    return SplitSpec(
        {site_ids[i] for i in sites}, {day_ids[i] for i in days}, rng_seed=seed
    )


@dataclass
class ErrorPanel:
    """Centered forecast errors ``y`` with shape ``[M, T, N]`` plus metadata.

    Training cells are all sites on days outside ``split.test_day_ids``;
    test cells are the test sites on test days.
    """

    y: np.ndarray
    site_means: np.ndarray
    inputs: InputGrid
    split: SplitSpec
    site_ids: List[str]
    day_ids: List[str]
    zones: List[str] = field(default_factory=list)
    capacities: Optional[np.ndarray] = None
    forecast_ratio: Optional[np.ndarray] = None
    actual_ratio: Optional[np.ndarray] = None
    clamp_count: int = 0

    @property
    def shape(self):
        return self.y.shape

    @property
    def train_day_mask(self) -> np.ndarray:
        return np.array([d not in self.split.test_day_ids for d in self.day_ids])

    @property
    def test_day_mask(self) -> np.ndarray:
        return ~self.train_day_mask

    @property
    def test_site_mask(self) -> np.ndarray:
        return np.array([s in self.split.test_site_ids for s in self.site_ids])

    def training_days(self) -> np.ndarray:
        """Training day-vectors as an ``[N_train, M, T]`` array."""
        return np.moveaxis(self.y[:, :, self.train_day_mask], 2, 0)

    def site_index(self, site_id: str) -> int:
        return self.site_ids.index(site_id)

    def day_index(self, day_id: str) -> int:
        return self.day_ids.index(day_id)


@dataclass
class VariogramCloud:
    d: np.ndarray
    v: np.ndarray
    id_a: list
    id_b: list

    def __len__(self):
        return len(self.d)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["d", "v", "site_a", "site_b"])
            for row in zip(self.d, self.v, self.id_a, self.id_b):
                w.writerow([repr(float(row[0])), repr(float(row[1])), row[2], row[3]])


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------


def _open_text(source):
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, str):
        return open(source, newline="")
    if hasattr(source, "read"):
        head = source.read()
        if isinstance(head, bytes):
            head = head.decode("utf-8")
        return io.StringIO(head)
    return open(source, newline="")


def ingest_panel(csv_source, n_hours: int = 24, exclude_sites: Sequence[str] = ()) -> SitePanel:
    """Parse a forecast/actual CSV into a dense :class:`SitePanel`.

    ``csv_source`` may be a path, raw bytes or a text/binary stream. Sites
    are ordered by ``site_id`` and days chronologically.
    """
    excluded = set(exclude_sites)
    with _open_text(csv_source) as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise WindGPError("CSV is empty")
        missing = set(CSV_COLUMNS) - set(h.strip() for h in reader.fieldnames)
        if missing:
            raise WindGPError(f"CSV header lacks columns: {sorted(missing)}")
        meta: Dict[str, SiteRecord] = {}
        cells = {}
        for lineno, row in enumerate(reader, start=2):
            row = {k.strip(): (v.strip() if v is not None else "") for k, v in row.items() if k}
            try:
                sid = row["site_id"]
                if sid in excluded:
                    continue
                rec = SiteRecord(
                    sid,
                    float(row["longitude"]),
                    float(row["latitude"]),
                    row["zone"],
                    float(row["capacity_mw"]),
                )
                day = row["day"]
                hour = int(row["hour"])
                actual = float(row["actual_mw"])
                forecast = float(row["forecast_mw"])
            except (KeyError, ValueError) as exc:
                raise WindGPError(f"line {lineno}: cannot parse row ({exc})") from None
            if not rec.capacity > 0.0:
                raise NonpositiveCapacity(f"line {lineno}: site {sid} has capacity {rec.capacity}")
            if not 0 <= hour < n_hours:
                raise WindGPError(f"line {lineno}: hour {hour} outside 0..{n_hours - 1}")
            if not (actual >= 0.0 and np.isfinite(actual) and np.isfinite(forecast)):
                raise WindGPError(f"line {lineno}: invalid generation values")
            if sid in meta and meta[sid] != rec:
                raise WindGPError(f"line {lineno}: metadata for site {sid} changed")
            meta[sid] = rec
            key = (sid, day, hour)
            if key in cells:
                raise DuplicateRow(f"line {lineno}: duplicate row for {key}")
            cells[key] = (actual, forecast)

    if not cells:
        raise WindGPError("CSV contains no data rows")
    site_ids = sorted(meta)
    days = sorted({k[1] for k in cells})
    coords = {(meta[s].longitude, meta[s].latitude) for s in site_ids}
    if len(coords) != len(site_ids):
        raise WindGPError("two sites share the same coordinates")
    M, N = len(site_ids), len(days)
    actual = np.empty((M, n_hours, N))
    forecast = np.empty((M, n_hours, N))
    for m, sid in enumerate(site_ids):
        for n, day in enumerate(days):
            for t in range(n_hours):
                try:
                    actual[m, t, n], forecast[m, t, n] = cells[(sid, day, t)]
                except KeyError:
                    raise MissingCell(f"no row for site {sid}, day {day}, hour {t}") from None
    return SitePanel([meta[s] for s in site_ids], days, actual, forecast)


# ---------------------------------------------------------------------------
# preprocessing
# ---------------------------------------------------------------------------


def normalize_inputs(sites: Sequence[SiteRecord], n_hours: int = 24, eps: float = DEFAULT_EPS) -> InputGrid:
    """Map site coordinates into ``(eps, 1 - eps)`` with one shared scale; hours to ``(j + 0.5) / T``."""
    if not 0.0 < eps < 0.25:
        raise ValueError("eps must lie in (0, 0.25)")
    if len(sites) < 1:
        raise ValueError("need at least one site")
    raw = np.array([[s.longitude, s.latitude] for s in sites], dtype=float)
    temporal = (np.arange(n_hours) + 0.5) / n_hours
    if len(sites) == 1:
        # a lone site has no extent; place it at the center with unit scale
        shift = raw[0] - (0.5 - eps)
        return InputGrid(np.full((1, 2), 0.5), temporal, shift, 1.0, eps)
    shift = raw.min(axis=0)
    extent = float((raw.max(axis=0) - shift).max())
    if extent <= 0.0:
        raise DegenerateExtent("all sites sit at a single point")
    scale = extent / (1.0 - 2.0 * eps)
    spatial = (raw - shift) / scale + eps
    return InputGrid(spatial, temporal, shift, scale, eps)


def compute_error_panel(
    panel: SitePanel, split: SplitSpec, eps: float = DEFAULT_EPS
) -> ErrorPanel:
    """Capacity-normalize, difference and center the panel by per-site training means."""
    M, T, N = panel.shape
    cap = np.array([s.capacity for s in panel.sites], dtype=float)[:, None, None]
    raw_a = panel.actual / cap
    raw_f = panel.forecast / cap
    ratio_a = np.clip(raw_a, 0.0, 1.0)
    ratio_f = np.clip(raw_f, 0.0, 1.0)
    clamped = int(np.count_nonzero(ratio_a != raw_a) + np.count_nonzero(ratio_f != raw_f))
    if clamped:
        log.info("clamped %d power ratios into [0, 1]", clamped)
    diff = ratio_a - ratio_f

    site_ids = [s.site_id for s in panel.sites]
    unknown = (split.test_site_ids - set(site_ids)) | (split.test_day_ids - set(panel.days))
    if unknown:
        raise WindGPError(f"split refers to unknown sites/days: {sorted(unknown)}")
    train = np.array([d not in split.test_day_ids for d in panel.days])
    if not train.any():
        raise EmptyTrainingSlice("no training days remain after the split")
    means = diff[:, :, train].mean(axis=(1, 2))
    y = diff - means[:, None, None]
    # re-center exactly: the subtraction above can leave a few ulps of drift
    y -= y[:, :, train].mean(axis=(1, 2))[:, None, None]
    return ErrorPanel(
        y=y,
        site_means=means,
        inputs=normalize_inputs(panel.sites, T, eps),
        split=split,
        site_ids=site_ids,
        day_ids=list(panel.days),
        zones=[s.zone for s in panel.sites],
        capacities=cap.ravel().copy(),
        forecast_ratio=ratio_f,
        actual_ratio=ratio_a,
        clamp_count=clamped,
    )


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def spatial_variogram(ep: ErrorPanel) -> VariogramCloud:
    """One (distance, mean squared difference) pair per unordered site pair."""
    M = ep.y.shape[0]
    if M < 2:
        raise ValueError("spatial variogram needs at least two sites")
    s = ep.inputs.spatial_coords
    d, v, a, b = [], [], [], []
    for i, j in combinations(range(M), 2):
        d.append(float(np.linalg.norm(s[i] - s[j])))
        v.append(float(np.mean((ep.y[i] - ep.y[j]) ** 2)))
        a.append(ep.site_ids[i])
        b.append(ep.site_ids[j])
    return VariogramCloud(np.array(d), np.array(v), a, b)


def temporal_variogram(ep: ErrorPanel) -> VariogramCloud:
    """One (lag, mean squared difference) pair per unordered hour pair."""
    T = ep.y.shape[1]
    if T < 2:
        raise ValueError("temporal variogram needs at least two hours")
    t = ep.inputs.temporal_coords
    d, v, a, b = [], [], [], []
    for i, j in combinations(range(T), 2):
        d.append(abs(float(t[i] - t[j])))
        v.append(float(np.mean((ep.y[:, i, :] - ep.y[:, j, :]) ** 2)))
        a.append(i)
        b.append(j)
    return VariogramCloud(np.array(d), np.array(v), a, b)


def site_acf(y_site: np.ndarray, max_lag: int) -> np.ndarray:
    """Within-day autocorrelation of one site's ``[T, N]`` error block.

    Lag-``k`` products are averaged over the ``T - k`` hour pairs of every
    day and divided by the mean square, so lag 0 is exactly 1.
    """
    z = y_site - y_site.mean()
    denom = np.mean(z * z)
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = np.mean(z[:-k, :] * z[k:, :]) / denom if denom > 0 else 0.0
    return out


def regional_acf(ep: ErrorPanel, max_lag: int, grouping: Optional[Dict[str, str]] = None):
    """Mean within-day ACF per region.

    ``grouping`` maps site id to region; by default each site's zone is used.

    Returns
    -------
    list of (region, lag, mean_acf) tuples, regions sorted by name.
    """
    T = ep.y.shape[1]
    if not 0 <= max_lag < T:
        raise ValueError("max_lag must be smaller than the number of hours")
    if grouping is None:
        zones = ep.zones or [""] * len(ep.site_ids)
        grouping = dict(zip(ep.site_ids, zones))
    per_region: Dict[str, list] = {}
    for m, sid in enumerate(ep.site_ids):
        per_region.setdefault(grouping[sid], []).append(site_acf(ep.y[m], max_lag))
    rows = []
    for region in sorted(per_region):
        mean = np.mean(per_region[region], axis=0)
        rows.extend((region, k, float(mean[k])) for k in range(max_lag + 1))
    return rows


def write_acf_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region", "lag", "acf"])
        for region, lag, value in rows:
            w.writerow([region, lag, repr(value)])


# ---------------------------------------------------------------------------
# on-disk bundle
# ---------------------------------------------------------------------------

BUNDLE_VERSION = 1


def _r(x) -> str:
    return repr(float(x))


def save_bundle(ep: ErrorPanel, directory):
    """Write ``panel.json`` (metadata, grid, split) and ``cells.csv`` (values) to ``directory``.

    Floats are written with ``repr`` so a reload is bit-exact, and the output
    contains nothing run-dependent, so equal inputs give identical files.
    """
    os.makedirs(directory, exist_ok=True)
    M, T, N = ep.y.shape
    meta = {
        "bundle_version": BUNDLE_VERSION,
        "shape": {"M": M, "T": T, "N": N},
        "site_ids": list(ep.site_ids),
        "day_ids": list(ep.day_ids),
        "zones": list(ep.zones),
        "capacities": None if ep.capacities is None else [_r(c) for c in ep.capacities],
        "site_means": [_r(v) for v in ep.site_means],
        "clamp_count": int(ep.clamp_count),
        "split": {
            "test_site_ids": sorted(ep.split.test_site_ids),
            "test_day_ids": sorted(ep.split.test_day_ids),
            "seed": ep.split.rng_seed,
        },
        "grid": ep.inputs.to_dict(),
    }
    with open(os.path.join(directory, "panel.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    has_ratio = ep.forecast_ratio is not None and ep.actual_ratio is not None
    with open(os.path.join(directory, "cells.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["site_id", "day", "hour", "y", "forecast_ratio", "actual_ratio"])
        for m, sid in enumerate(ep.site_ids):
            for n, day in enumerate(ep.day_ids):
                for t in range(T):
                    extra = [_r(ep.forecast_ratio[m, t, n]), _r(ep.actual_ratio[m, t, n])] if has_ratio else ["", ""]
                    w.writerow([sid, day, t, _r(ep.y[m, t, n])] + extra)


def load_bundle(directory) -> ErrorPanel:
    with open(os.path.join(directory, "panel.json")) as fh:
        meta = json.load(fh)
    if meta.get("bundle_version") != BUNDLE_VERSION:
        raise WindGPError(f"unsupported bundle version {meta.get('bundle_version')!r}")
    M, T, N = meta["shape"]["M"], meta["shape"]["T"], meta["shape"]["N"]
    si = {s: i for i, s in enumerate(meta["site_ids"])}
    di = {d: i for i, d in enumerate(meta["day_ids"])}
    y = np.full((M, T, N), np.nan)
    fr = np.full((M, T, N), np.nan)
    ar = np.full((M, T, N), np.nan)
    path = os.path.join(directory, "cells.csv")
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                m, n, t = si[row["site_id"]], di[row["day"]], int(row["hour"])
                y[m, t, n] = float(row["y"])
                if row["forecast_ratio"]:
                    fr[m, t, n] = float(row["forecast_ratio"])
                    ar[m, t, n] = float(row["actual_ratio"])
            except (KeyError, ValueError, IndexError) as exc:
                raise WindGPError(f"{path}:{lineno}: bad bundle row ({exc})") from None
    if np.isnan(y).any():
        raise MissingCell(f"{path}: bundle is missing cells")
    has_ratio = not np.isnan(fr).any()
    sp = meta["split"]
    caps = meta.get("capacities")
    return ErrorPanel(
        y=y,
        site_means=np.array([float(v) for v in meta["site_means"]]),
        inputs=InputGrid.from_dict(meta["grid"]),
        split=SplitSpec(sp["test_site_ids"], sp["test_day_ids"], sp.get("seed")),
        site_ids=list(meta["site_ids"]),
        day_ids=list(meta["day_ids"]),
        zones=list(meta.get("zones", [])),
        capacities=None if caps is None else np.array([float(c) for c in caps]),
        forecast_ratio=fr if has_ratio else None,
        actual_ratio=ar if has_ratio else None,
        clamp_count=int(meta.get("clamp_count", 0)),
    )
