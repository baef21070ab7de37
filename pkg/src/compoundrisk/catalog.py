"""Synthetic storm catalogs: loading, bias correction, blending, resampling.

A catalog file is JSON-lines. The first line is a header object::

    {"annual_frequency": 1.5, "climate_label": "historical-reanalysis",
     "source_weight": 1.0, "hist_annual_max": [...]}

Every following line is one storm::

    {"id": "H0001", "seasonal_day": 241, "weight": 1.0, "landfall_index": 4,
     "track": [[t_hours, lat, lon, v_max_ms, r_max_km, trans_speed_ms,
                trans_bearing_deg], ...]}

A track row may carry an eighth element, the pressure deficit in hPa.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

MIN_LANDFALL_VMAX = 22.0
N_QUANTILE_BINS = 20
CVM_FLOOR = 1e-3


class CatalogError(ValueError):
    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


class WeightCollapseWarning(RuntimeWarning):
    pass


class StormTrackPoint(NamedTuple):
    time_offset: float
    lat: float
    lon: float
    v_max: float
    r_max: float
    trans_speed: float
    trans_bearing: float
    pressure_deficit: float | None = None


@dataclass(frozen=True)
class SyntheticStorm:
    id: str
    track: tuple[StormTrackPoint, ...]
    landfall_index: int
    seasonal_day: int
    weight: float = 1.0

    @property
    def landfall_vmax(self) -> float:
        return self.track[self.landfall_index].v_max

    def track_array(self) -> np.ndarray:
        """(n, 7) float array of the track without pressure deficits."""
        return np.array([p[:7] for p in self.track], dtype=float)


@dataclass(frozen=True)
class StormCatalog:
    storms: tuple[SyntheticStorm, ...]
    annual_frequency: float
    climate_label: str = ""
    source_weight: float = 1.0
    hist_annual_max: np.ndarray | None = field(default=None, compare=False)
    rejected: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not self.annual_frequency > 0:
            raise CatalogError(f"annual_frequency must be positive, got {self.annual_frequency}")
        w = self.weights
        if len(w) and not (np.isfinite(w.sum()) and w.sum() > 0):
            raise CatalogError("storm weights must sum to a positive finite value")

    @property
    def weights(self) -> np.ndarray:
        return np.array([s.weight for s in self.storms], dtype=float)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.storms]

    def landfall_intensities(self) -> np.ndarray:
        return np.array([s.landfall_vmax for s in self.storms], dtype=float)

    def index_of(self) -> dict[str, int]:
        return {s.id: i for i, s in enumerate(self.storms)}

    def with_weights(self, weights) -> "StormCatalog":
        weights = np.asarray(weights, dtype=float)
        storms = tuple(replace(s, weight=float(w)) for s, w in zip(self.storms, weights))
        return replace(self, storms=storms)


@dataclass(frozen=True)
class EventSequence:
    period_years: int
    events: tuple[tuple[int, int, str], ...]
    rng_seed: int | None
    storm_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64), compare=False)

    def __eq__(self, other):
        if not isinstance(other, EventSequence):
            return NotImplemented
        return (self.period_years, self.events, self.rng_seed) == (
            other.period_years, other.events, other.rng_seed)

    def __len__(self):
        return len(self.events)


# -- loading -----------------------------------------------------------------

def _parse_storm(obj, lineno):
    try:
        sid = str(obj["id"])
    except (KeyError, TypeError):
        raise CatalogError(f"line {lineno}: storm record without id")
    try:
        rows = obj["track"]
        points = []
        for row in rows:
            if len(row) not in (7, 8):
                raise ValueError(f"track row of length {len(row)}")
            vals = [float(v) for v in row[:7]]
            pdef = float(row[7]) if len(row) == 8 and row[7] is not None else None
            points.append(StormTrackPoint(*vals, pdef))
        seasonal_day = int(obj["seasonal_day"])
        weight = float(obj.get("weight", 1.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise CatalogError(f"storm {sid}: malformed record ({exc})")
    if len(points) < 2:
        raise CatalogError(f"storm {sid}: track needs at least 2 points")
    times = [p.time_offset for p in points]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise CatalogError(f"storm {sid}: time_offset not strictly increasing")
    if any(p.v_max <= 0 or p.r_max <= 0 for p in points):
        raise CatalogError(f"storm {sid}: v_max and r_max must be positive")
    if not 1 <= seasonal_day <= 366:
        raise CatalogError(f"storm {sid}: seasonal_day {seasonal_day} outside 1..366")
    if not (weight >= 0 and np.isfinite(weight)):
        raise CatalogError(f"storm {sid}: weight must be nonnegative")
    if "landfall_index" in obj:
        li = int(obj["landfall_index"])
        if not 0 <= li < len(points):
            raise CatalogError(f"storm {sid}: landfall_index {li} out of range")
    else:
        li = int(np.argmax([p.v_max for p in points]))
    return SyntheticStorm(sid, tuple(points), li, seasonal_day, weight)


def parse_catalog(lines: Sequence[str], source="<catalog>") -> StormCatalog:
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise CatalogError(f"{source}: empty file")
    try:
        header = json.loads(lines[0])
        freq = float(header["annual_frequency"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CatalogError(f"{source}: bad header ({exc})")
    storms, rejected, seen = [], [], set()
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CatalogError(f"{source}: line {lineno} is not valid JSON ({exc})")
        storm = _parse_storm(obj, lineno)
        if storm.id in seen:
            raise CatalogError(f"{source}: duplicate storm id {storm.id}")
        seen.add(storm.id)
        if storm.landfall_vmax < MIN_LANDFALL_VMAX:
            rejected.append(f"storm {storm.id}: landfall v_max {storm.landfall_vmax:g} m/s "
                            f"below admission threshold {MIN_LANDFALL_VMAX:g} m/s")
            continue
        storms.append(storm)
    if not storms:
        raise CatalogError(f"{source}: no storms left after admission filtering", rejected)
    ham = header.get("hist_annual_max")
    return StormCatalog(
        storms=tuple(storms),
        annual_frequency=freq,
        climate_label=str(header.get("climate_label", "")),
        source_weight=float(header.get("source_weight", 1.0)),
        hist_annual_max=None if ham is None else np.asarray(ham, dtype=float),
        rejected=tuple(rejected),
    )


def load_catalog(path) -> StormCatalog:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CatalogError(f"{path}: cannot read ({exc})")
    return parse_catalog(text.splitlines(), source=str(path))


def _num(x):
    return float(format(float(x), ".10g"))


def dump_catalog(catalog: StormCatalog, path) -> None:
    header = {"annual_frequency": _num(catalog.annual_frequency),
              "climate_label": catalog.climate_label,
              "source_weight": _num(catalog.source_weight)}
    if catalog.hist_annual_max is not None:
        header["hist_annual_max"] = [_num(v) for v in catalog.hist_annual_max]
    out = [json.dumps(header)]
    for s in catalog.storms:
        track = []
        for p in s.track:
            row = [_num(v) for v in p[:7]]
            if p.pressure_deficit is not None:
                row.append(_num(p.pressure_deficit))
            track.append(row)
        out.append(json.dumps({"id": s.id, "seasonal_day": s.seasonal_day,
                               "weight": _num(s.weight), "landfall_index": s.landfall_index,
                               "track": track}))
    Path(path).write_text("\n".join(out) + "\n")


# -- bias correction ---------------------------------------------------------

def bias_correct_frequency(ref_hist_freq, model_hist_freq, model_future_freq) -> float:
    """Scale the model's future storm rate by its historical rate bias."""
    if min(ref_hist_freq, model_hist_freq, model_future_freq) <= 0:
        raise ValueError("storm frequencies must be positive")
    return model_future_freq * (ref_hist_freq / model_hist_freq)


def quantile_map(values, model_hist, ref_hist) -> np.ndarray:
    """Transport values through F_ref^-1(F_model_hist(v))."""
    mh = np.sort(np.asarray(model_hist, dtype=float))
    ref = np.sort(np.asarray(ref_hist, dtype=float))
    # mid-rank plotting positions on both sides: identical samples map to identity
    u = np.interp(values, mh, (np.arange(1, len(mh) + 1) - 0.5) / len(mh))
    return np.interp(u, (np.arange(1, len(ref) + 1) - 0.5) / len(ref), ref)


def quantile_map_weights(model_future, model_hist, ref_hist, n_bins=N_QUANTILE_BINS) -> np.ndarray:
    """Importance weights that carry the model's future intensities onto the
    bias-corrected future distribution.

    Densities are histogram masses over equal-probability bins of the
    reference sample. The result is nonnegative with mean exactly 1.
    """
    samples = [np.asarray(a, dtype=float) for a in (model_future, model_hist, ref_hist)]
    for name, a in zip(("model_future", "model_hist", "ref_hist"), samples):
        if len(a) < 30:
            raise ValueError(f"{name} needs at least 30 samples, got {len(a)}")
        if np.ptp(a) == 0:
            raise ValueError(f"{name} is degenerate (all values identical); mapping undefined")
    fut, mh, ref = samples
    if len(mh) == len(ref) and np.array_equal(np.sort(mh), np.sort(ref)):
        return np.ones(len(fut))

    target = quantile_map(fut, mh, ref)
    inner = np.quantile(ref, np.linspace(0, 1, n_bins + 1)[1:-1])
    bin_fut = np.searchsorted(inner, fut, side="right")
    bin_tgt = np.searchsorted(inner, target, side="right")
    m_model = np.bincount(bin_fut, minlength=n_bins) / len(fut)
    m_target = np.bincount(bin_tgt, minlength=n_bins) / len(fut)
    w = m_target[bin_fut] / m_model[bin_fut]
    if not w.sum() > 0:
        raise ValueError("reweighting left no mass on the future sample")
    w = w / w.mean()
    ess = w.sum() ** 2 / np.sum(w ** 2)
    if ess < 0.05 * len(w):
        warnings.warn(f"importance weights collapsed: effective sample size {ess:.1f} "
                      f"of {len(w)}", WeightCollapseWarning, stacklevel=2)
    return w


def correct_catalog(future: StormCatalog, model_hist: StormCatalog, reference: StormCatalog,
                    annual_max_years=2000, seed=0) -> StormCatalog:
    """Frequency and intensity bias correction of one model's future catalog.

    The corrected catalog carries the model's historical annual-maximum
    intensity samples for later blending.
    """
    freq = bias_correct_frequency(reference.annual_frequency, model_hist.annual_frequency,
                                  future.annual_frequency)
    w = quantile_map_weights(future.landfall_intensities(), model_hist.landfall_intensities(),
                             reference.landfall_intensities())
    out = future.with_weights(future.weights * w)
    mean_w = out.weights.mean()
    out = out.with_weights(out.weights / mean_w)
    ham = annual_max_samples(model_hist, annual_max_years, seed)
    return replace(out, annual_frequency=freq, hist_annual_max=ham)


def cramer_von_mises_distance(a, b) -> float:
    return float(stats.cramervonmises_2samp(a, b).statistic)


def blend_catalogs(corrected: Sequence[StormCatalog], ref_hist) -> StormCatalog:
    """Merge bias-corrected model catalogs into one projection.

    Models are weighted by inverse Cramer-von Mises distance between their
    historical annual-maximum intensity CDF and the reference one.
    """
    corrected = list(corrected)
    if not corrected:
        raise ValueError("need at least one catalog to blend")
    if len(corrected) == 1:
        return replace(corrected[0], source_weight=1.0)
    ref_hist = np.asarray(ref_hist, dtype=float)
    raw = []
    for cat in corrected:
        if cat.hist_annual_max is None:
            raise ValueError(f"catalog {cat.climate_label!r} lacks historical annual-max samples")
        d = cramer_von_mises_distance(cat.hist_annual_max, ref_hist)
        raw.append(1.0 / (CVM_FLOOR + d))
    raw = np.array(raw)
    sw = raw / raw.sum()
    n_total = sum(len(c.storms) for c in corrected)
    labels = [c.climate_label for c in corrected]
    storms = []
    for m, (cat, s_m) in enumerate(zip(corrected, sw)):
        w = cat.weights
        scale = s_m * n_total / w.sum()
        # prefix keeps storm ids unique even when sources share a label
        label = cat.climate_label if cat.climate_label and labels.count(cat.climate_label) == 1 else f"m{m}"
        for storm, wi in zip(cat.storms, w):
            storms.append(replace(storm, id=f"{label}:{storm.id}", weight=float(wi * scale)))
    freq = float(np.sum(sw * [c.annual_frequency for c in corrected]) / sw.sum())
    label = "blend(" + ",".join(c.climate_label for c in corrected) + ")"
    return StormCatalog(tuple(storms), freq, label, 1.0)


def blend_weights(corrected: Sequence[StormCatalog], ref_hist) -> np.ndarray:
    raw = np.array([1.0 / (CVM_FLOOR + cramer_von_mises_distance(c.hist_annual_max, ref_hist))
                    for c in corrected])
    return raw / raw.sum()


# -- resampling --------------------------------------------------------------

def period_rng(master_seed: int, period_index: int) -> np.random.Generator:
    """Independent stream for one simulated period."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(period_index)]))


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed, None
    return np.random.default_rng(int(seed)), int(seed)


def poisson_inversion(lam: float, u: np.ndarray) -> np.ndarray:
    """Poisson variates from uniforms by sequential search of the CDF."""
    u = np.asarray(u, dtype=float)
    k = np.zeros(u.shape, dtype=np.int64)
    p = np.exp(-lam)
    cdf = np.full(u.shape, p)
    active = u > cdf
    j = 0
    while active.any():
        j += 1
        p = p * lam / j
        k[active] += 1
        cdf = cdf + p
        active &= u > cdf
        if j > 1000:  # only reachable for u == 1 - tiny; cap the search
            break
    return k


def resample_period(catalog: StormCatalog, years: int, seed) -> EventSequence:
    """Draw a multi-year event sequence from a compound Poisson process."""
    if years < 1:
        raise ValueError("years must be >= 1")
    rng, seed_int = _as_rng(seed)
    counts = poisson_inversion(catalog.annual_frequency, rng.random(years))
    n = int(counts.sum())
    cum = np.cumsum(catalog.weights)
    idx = np.searchsorted(cum, rng.random(n) * cum[-1], side="right")
    idx = np.minimum(idx, len(cum) - 1)
    yrs = np.repeat(np.arange(years), counts)
    days = np.array([catalog.storms[i].seasonal_day for i in idx], dtype=np.int64)
    order = np.lexsort((days, yrs))
    idx, yrs, days = idx[order], yrs[order], days[order]
    events = tuple((int(y), int(d), catalog.storms[i].id) for y, d, i in zip(yrs, days, idx))
    return EventSequence(years, events, seed_int, idx)


def annual_max_samples(catalog: StormCatalog, n_years: int, seed=0) -> np.ndarray:
    """Annual maximum landfall intensity per simulated year (0 for quiet years)."""
    seq = resample_period(catalog, n_years, seed)
    v = catalog.landfall_intensities()
    out = np.zeros(n_years)
    for (year, _, _), i in zip(seq.events, seq.storm_index):
        out[year] = max(out[year], v[i])
    return out


def weighted_cdf(values, weights):
    """Right-continuous weighted empirical CDF as (sorted values, cumulative mass)."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(values, kind="stable")
    x = values[order]
    c = np.cumsum(weights[order])
    return x, c / c[-1]
