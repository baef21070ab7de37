"""Heat index, temperature bias correction and post-landfall heatwave runs."""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

HI_THRESHOLD = 40.6
HI_FLOOR_C = 26.7
WINDOW_DAYS = 30
DAYS_PER_YEAR = 366
MONTH_DAYS = np.array([31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31])
# non-authoritative placeholder shape for days 0..10 after landfall
DEFAULT_ANOMALY = (-3.0, -2.5, -2.0, -1.5, -1.0, -0.5, -0.3, -0.2, -0.1, 0.0, 0.0)


def vapor_pressure(q, p):
    """Vapour pressure (hPa) from specific humidity (kg/kg) and pressure (hPa)."""
    q = np.asarray(q, dtype=float)
    return q * np.asarray(p, dtype=float) / (0.622 + 0.378 * q)


def saturation_vapor_pressure(t):
    """Magnus formula over water, hPa."""
    t = np.asarray(t, dtype=float)
    return 6.112 * np.exp(17.62 * t / (243.12 + t))


def saturation_specific_humidity(t, p):
    es = saturation_vapor_pressure(t)
    p = np.asarray(p, dtype=float)
    return 0.622 * es / (p - 0.378 * es)


def relative_humidity(t, q, p):
    return 100.0 * vapor_pressure(q, p) / saturation_vapor_pressure(t)


def rothfusz_f(tf, rh):
    """NWS heat index in deg F from temperature (deg F) and RH (%)."""
    tf = np.asarray(tf, dtype=float)
    rh = np.asarray(rh, dtype=float)
    simple = 0.5 * (tf + 61.0 + (tf - 68.0) * 1.2 + rh * 0.094)
    hi = (-42.379 + 2.04901523 * tf + 10.14333127 * rh - 0.22475541 * tf * rh
          - 6.83783e-3 * tf ** 2 - 5.481717e-2 * rh ** 2 + 1.22874e-3 * tf ** 2 * rh
          + 8.5282e-4 * tf * rh ** 2 - 1.99e-6 * tf ** 2 * rh ** 2)
    dry = (rh < 13) & (tf >= 80) & (tf <= 112)
    with np.errstate(invalid="ignore"):
        hi = np.where(dry, hi - (13 - rh) / 4 * np.sqrt(np.clip(17 - np.abs(tf - 95), 0, None) / 17), hi)
    humid = (rh > 85) & (tf >= 80) & (tf <= 87)
    hi = np.where(humid, hi + (rh - 85) / 10 * (87 - tf) / 5, hi)
    return np.where(0.5 * (simple + tf) < 80, simple, hi)


def heat_index_rh(t, rh):
    """Heat index (deg C) from temperature (deg C) and RH (%)."""
    t = np.asarray(t, dtype=float)
    rh = np.clip(np.asarray(rh, dtype=float), 0.0, 100.0)
    hi = (rothfusz_f(t * 1.8 + 32.0, rh) - 32.0) / 1.8
    out = np.where(t < HI_FLOOR_C, t, hi)
    return out if out.ndim else float(out)


def heat_index(t, q, p):
    """Heat index (deg C) from 2 m temperature, specific humidity and pressure."""
    return heat_index_rh(t, relative_humidity(t, q, p))


# -- bias correction ---------------------------------------------------------

def month_centers() -> np.ndarray:
    """Month mid-points on the continuous day axis [0, 366)."""
    start = np.concatenate([[0], np.cumsum(MONTH_DAYS)[:-1]])
    return start + MONTH_DAYS / 2.0


def monthly_means(daily) -> np.ndarray:
    """(..., 366) daily series to (..., 12) monthly means."""
    daily = np.asarray(daily, dtype=float)
    edges = np.concatenate([[0], np.cumsum(MONTH_DAYS)])
    return np.stack([daily[..., a:b].mean(axis=-1) for a, b in zip(edges[:-1], edges[1:])], axis=-1)


def daily_correction(model_monthly, reference_monthly) -> np.ndarray:
    """Periodic cubic spline of (reference - model) monthly means at days 1..366."""
    diff = np.asarray(reference_monthly, dtype=float) - np.asarray(model_monthly, dtype=float)
    if diff.shape != (12,):
        raise ValueError("monthly climatologies must have 12 values")
    x = month_centers()
    spline = CubicSpline(np.append(x, x[0] + DAYS_PER_YEAR), np.append(diff, diff[0]), bc_type="periodic")
    days = np.arange(DAYS_PER_YEAR) + 0.5
    return spline(np.where(days < x[0], days + DAYS_PER_YEAR, days))


def bias_correct_temperature(series, model_monthly, reference_monthly):
    """Add the daily bias correction to a (..., 366) temperature series."""
    series = np.asarray(series, dtype=float)
    if series.shape[-1] != DAYS_PER_YEAR:
        raise ValueError("temperature series must cover 366 days")
    return series + daily_correction(model_monthly, reference_monthly)


# -- climatology -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HeatClimatology:
    temperature: np.ndarray          # (N, 366) deg C
    humidity: np.ndarray             # (N, 366) kg/kg
    pressure: np.ndarray             # (N, 366) hPa
    climate_label: str = ""
    model_monthly_t: np.ndarray | None = None       # model historical monthly means
    reference_monthly_t: np.ndarray | None = None   # reference historical monthly means

    def __post_init__(self):
        shape = self.temperature.shape
        if len(shape) != 2 or shape[1] != DAYS_PER_YEAR or shape[0] < 1:
            raise ValueError(f"climatology arrays must be (N, {DAYS_PER_YEAR}), got {shape}")
        if self.humidity.shape != shape or self.pressure.shape != shape:
            raise ValueError("T, q, p arrays differ in shape")
        errs = []
        if not np.all((self.temperature >= -50) & (self.temperature <= 60)):
            errs.append("temperature outside [-50, 60] C")
        if not np.all(self.humidity >= 0):
            errs.append("negative specific humidity")
        if not np.all((self.pressure >= 800) & (self.pressure <= 1100)):
            errs.append("pressure outside [800, 1100] hPa")
        if errs:
            raise ValueError(f"climatology {self.climate_label!r}: " + "; ".join(errs))

    @property
    def n_years(self) -> int:
        return self.temperature.shape[0]

    def corrected(self) -> "HeatClimatology":
        """Temperature bias-corrected copy, if monthly climatologies are attached."""
        if self.model_monthly_t is None or self.reference_monthly_t is None:
            return self
        t = bias_correct_temperature(self.temperature, self.model_monthly_t, self.reference_monthly_t)
        return HeatClimatology(np.clip(t, -50, 60), self.humidity, self.pressure, self.climate_label)

    @cached_property
    def heat_index(self) -> np.ndarray:
        # humidity is held fixed, so RH follows the corrected temperature
        return np.asarray(heat_index(self.temperature, self.humidity, self.pressure))


def load_climatology(path, bias_correct=True) -> HeatClimatology:
    """Climatology JSON: header fields plus per-year {T, q, p} arrays of 366 days."""
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})") from None
    years = d.get("years")
    if not years:
        raise ValueError(f"{path}: no sample years")
    if "n_years" in d and int(d["n_years"]) != len(years):
        raise ValueError(f"{path}: header says {d['n_years']} years, file holds {len(years)}")
    try:
        t = np.array([y["T"] for y in years], dtype=float)
        q = np.array([y["q"] for y in years], dtype=float)
        p = np.array([y["p"] for y in years], dtype=float)
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: malformed year record ({exc})") from None
    mm = d.get("model_monthly_t")
    rm = d.get("reference_monthly_t")
    clim = HeatClimatology(t, q, p, str(d.get("climate_label", "")),
                           None if mm is None else np.asarray(mm, dtype=float),
                           None if rm is None else np.asarray(rm, dtype=float))
    return clim.corrected() if bias_correct else clim


def dump_climatology(clim: HeatClimatology, path) -> None:
    def r(a, nd):
        return np.round(a, nd).tolist()

    d = {"climate_label": clim.climate_label, "n_years": clim.n_years}
    if clim.model_monthly_t is not None:
        d["model_monthly_t"] = r(clim.model_monthly_t, 4)
    if clim.reference_monthly_t is not None:
        d["reference_monthly_t"] = r(clim.reference_monthly_t, 4)
    d["years"] = [{"T": r(clim.temperature[i], 3), "q": r(clim.humidity[i], 6), "p": r(clim.pressure[i], 2)}
                  for i in range(clim.n_years)]
    Path(path).write_text(json.dumps(d, separators=(",", ":")) + "\n")


# -- event series ------------------------------------------------------------

@dataclass(frozen=True)
class HeatEventSeries:
    hi: np.ndarray                 # daily HI, index = days since landfall
    adjusted: bool = False

    @property
    def days(self) -> np.ndarray:
        return np.arange(len(self.hi))


def load_anomaly_table(path) -> np.ndarray:
    d = json.loads(Path(path).read_text())
    vals = d["anomaly_c"] if isinstance(d, dict) else d
    return validate_anomaly_table(vals)


def validate_anomaly_table(values) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    if a.shape != (11,):
        raise ValueError("anomaly table must hold 11 values for days 0..10")
    if not np.all(np.isfinite(a)):
        raise ValueError("anomaly table has non-finite values")
    return a


def event_series(clim: HeatClimatology, year: int, seasonal_day: int, window=WINDOW_DAYS) -> HeatEventSeries:
    """Daily HI for `window` days starting at landfall, wrapping past year end."""
    days = (seasonal_day - 1 + np.arange(window)) % DAYS_PER_YEAR
    return HeatEventSeries(clim.heat_index[year, days].copy())


def tc_composite_adjust(series: HeatEventSeries, anomaly=DEFAULT_ANOMALY) -> HeatEventSeries:
    a = validate_anomaly_table(anomaly)
    hi = series.hi.copy()
    n = min(len(hi), len(a))
    hi[:n] += a[:n]
    return HeatEventSeries(hi, True)


def longest_run(mask) -> int:
    best = cur = 0
    for m in np.asarray(mask, dtype=bool):
        cur = cur + 1 if m else 0
        best = max(best, cur)
    return best


def heatwave_duration(series, threshold=HI_THRESHOLD) -> int:
    hi = series.hi if isinstance(series, HeatEventSeries) else np.asarray(series, dtype=float)
    if hi.size < 1:
        raise ValueError("empty series")
    return longest_run(hi > threshold)


def prefix_longest_runs(hot: np.ndarray) -> np.ndarray:
    """For boolean (..., W) arrays, longest run of True within the first m days, m = 0..W."""
    hot = np.asarray(hot, dtype=bool)
    w = hot.shape[-1]
    out = np.zeros(hot.shape[:-1] + (w + 1,), dtype=np.int16)
    cur = np.zeros(hot.shape[:-1], dtype=np.int16)
    for k in range(w):
        cur = np.where(hot[..., k], cur + 1, 0).astype(np.int16)
        out[..., k + 1] = np.maximum(out[..., k], cur)
    return out


class HeatLookup:
    """Precomputed compound-run tables for every (sample year, landfall day)."""

    def __init__(self, clim: HeatClimatology, anomaly=DEFAULT_ANOMALY, threshold=HI_THRESHOLD,
                 window=WINDOW_DAYS, adjust=True):
        self.clim, self.window, self.threshold = clim, window, threshold
        days = (np.arange(DAYS_PER_YEAR)[:, None] + np.arange(window)[None, :]) % DAYS_PER_YEAR
        hi = clim.heat_index[:, days]                     # (N, 366, W)
        if adjust:
            a = validate_anomaly_table(anomaly)
            n = min(window, len(a))
            hi = hi.copy()
            hi[..., :n] += a[:n]
        self.table = prefix_longest_runs(hi > threshold)  # (N, 366, W+1)

    def runs(self, year, seasonal_day) -> np.ndarray:
        return self.table[year, seasonal_day - 1]

    def heatwave(self, year, seasonal_day) -> int:
        return int(self.table[year, seasonal_day - 1, -1])
