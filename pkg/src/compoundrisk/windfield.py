"""Parametric surface wind field of a moving storm.

Gradient wind follows the v_max-normalised Holland profile; the surface wind
is a reduced vortex plus a rotated fraction of the storm translation vector.
Distances are great-circle; the azimuth at each location comes from the local
tangent plane of the storm centre.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

EARTH_RADIUS_KM = 6371.0


@dataclass(frozen=True)
class WindParams:
    holland_b: float = 1.3
    background_fraction: float = 0.55
    background_rotation: float = 20.0
    swrf: float = 0.85
    gust_factor: float = 1.3

    def __post_init__(self):
        if not 0.8 <= self.holland_b <= 2.5:
            raise ValueError(f"holland_b {self.holland_b} outside [0.8, 2.5]")
        if not 0.0 <= self.background_fraction <= 1.0:
            raise ValueError("background_fraction must lie in [0, 1]")
        if not 0.0 < self.swrf <= 1.0:
            raise ValueError("swrf must lie in (0, 1]")
        if self.gust_factor < 1.0:
            raise ValueError("gust_factor must be >= 1")


@dataclass(frozen=True)
class WindFieldMap:
    locations: np.ndarray      # (n, 2) lat, lon
    max_sustained: np.ndarray  # m/s
    max_gust: np.ndarray       # m/s
    time_step: float           # hours


def holland_profile(r, v_max, r_max, b):
    """Axisymmetric wind speed at radius r (km); 0 at the centre."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        x = (r_max / r) ** b
        v = v_max * np.sqrt(x * np.exp(1.0 - x))
    v = np.where(r > 0, v, 0.0)
    v = np.nan_to_num(v, nan=0.0)
    return v if v.ndim else float(v)


def great_circle_km(lat1, lon1, lat2, lon2):
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def _bearing_vector(speed, bearing_deg):
    th = np.radians(bearing_deg)
    return speed * np.sin(th), speed * np.cos(th)  # east, north


def interpolate_track(track: np.ndarray, time_step: float):
    """Linear interpolation of a (n, 7) track array onto a regular time grid."""
    t = track[:, 0]
    if len(t) == 1:
        grid = t.copy()
    else:
        n = int(np.floor((t[-1] - t[0]) / time_step + 1e-9))
        grid = t[0] + time_step * np.arange(n + 1)
        if grid[-1] < t[-1] - 1e-9:
            grid = np.append(grid, t[-1])
    ue, un = _bearing_vector(track[:, 5], track[:, 6])
    cols = [track[:, 1], track[:, 2], track[:, 3], track[:, 4], ue, un]
    if len(t) == 1:
        return grid, [c.copy() for c in cols]
    return grid, [np.interp(grid, t, c) for c in cols]


def wind_vectors(lat_c, lon_c, v_max, r_max, trans_e, trans_n, lats, lons, params: WindParams):
    """Surface wind (east, north) components at points for one storm snapshot.

    All storm arguments are scalars or (T, 1) columns broadcasting against
    the (n,) location arrays.
    """
    r = great_circle_km(lat_c, lon_c, lats, lons)
    dx = np.radians(lons - lon_c) * np.cos(np.radians(lat_c))
    dy = np.radians(lats - lat_c)
    norm = np.hypot(dx, dy)
    safe = np.where(norm > 0, norm, 1.0)
    # counterclockwise tangential unit vector
    te, tn = -dy / safe, dx / safe
    vt = params.swrf * holland_profile(r, v_max, r_max, params.holland_b)
    rot = np.radians(params.background_rotation)
    c, s = np.cos(rot), np.sin(rot)
    be = params.background_fraction * (c * trans_e - s * trans_n)
    bn = params.background_fraction * (s * trans_e + c * trans_n)
    return vt * te + be, vt * tn + bn


def event_wind_map(storm, locations, params: WindParams | None = None, time_step=0.5) -> WindFieldMap:
    """Per-location event maximum sustained wind and gust."""
    params = params or WindParams()
    if not 0 < time_step <= 6:
        raise ValueError("time_step must lie in (0, 6] hours")
    locations = np.asarray(locations, dtype=float).reshape(-1, 2)
    track = storm.track_array() if hasattr(storm, "track_array") else np.asarray(storm, dtype=float)
    _, (lat, lon, vm, rm, ue, un) = interpolate_track(track, time_step)
    lats, lons = locations[:, 0], locations[:, 1]
    vmax = np.zeros(len(locations))
    # chunk the time axis to bound memory on long tracks
    for k in range(0, len(lat), 64):
        sl = slice(k, k + 64)
        we, wn = wind_vectors(lat[sl, None], lon[sl, None], vm[sl, None], rm[sl, None],
                              ue[sl, None], un[sl, None], lats, lons, params)
        vmax = np.maximum(vmax, np.hypot(we, wn).max(axis=0))
    return WindFieldMap(locations, vmax, params.gust_factor * vmax, float(time_step))


# -- study grid --------------------------------------------------------------

def load_study_grid(path):
    """Study-grid CSV with columns id, lat, lon."""
    ids, pts = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"id", "lat", "lon"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: study grid lacks columns {sorted(missing)}")
        for row in reader:
            ids.append(row["id"])
            pts.append((float(row["lat"]), float(row["lon"])))
    if not pts:
        raise ValueError(f"{path}: study grid is empty")
    return ids, np.array(pts)


def write_study_grid(path, ids, points):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "lat", "lon"])
        for i, (la, lo) in zip(ids, points):
            w.writerow([i, format(la, ".6f"), format(lo, ".6f")])


def regular_grid(lat_min, lat_max, lon_min, lon_max, spacing_km=2.0):
    """Regular lat/lon grid with roughly the requested spacing."""
    lat0 = 0.5 * (lat_min + lat_max)
    dlat = spacing_km / 111.195
    dlon = dlat / np.cos(np.radians(lat0))
    la = np.arange(lat_min, lat_max + dlat / 2, dlat)
    lo = np.arange(lon_min, lon_max + dlon / 2, dlon)
    g = np.array([(a, b) for a in la for b in lo])
    ids = [f"g{i:05d}" for i in range(len(g))]
    return ids, g


def nearest_grid_index(grid_points, query_points):
    """Nearest study-grid point for each query (local equirectangular metric)."""
    from scipy.spatial import cKDTree

    grid_points = np.asarray(grid_points, dtype=float)
    query_points = np.asarray(query_points, dtype=float).reshape(-1, 2)
    c = np.cos(np.radians(grid_points[:, 0].mean()))
    tree = cKDTree(np.column_stack([grid_points[:, 0], grid_points[:, 1] * c]))
    _, idx = tree.query(np.column_stack([query_points[:, 0], query_points[:, 1] * c]))
    return np.asarray(idx, dtype=np.int64)


def storm_gust_table(storms, grid_points, params: WindParams, time_step=0.5) -> np.ndarray:
    """(n_storms, n_grid) event maximum gust for a list of storms."""
    out = np.empty((len(storms), len(grid_points)))
    for i, s in enumerate(storms):
        out[i] = event_wind_map(s, grid_points, params, time_step).max_gust
    return out
