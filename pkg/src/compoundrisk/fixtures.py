"""Deterministic synthetic inputs: network, storm catalogs, climatologies, event fixtures.

The network imitates a coastal metro: a dense urban core with short
feeders and a rural ring with long, sparse feeders. Each feeder is a trunk
run out from its substation followed by a minimum spanning tree over a
cluster of service points. Storm tracks come ashore on a SW-NE coastline
south of the metro and head inland. Climatologies are AR(1) daily series
around a seasonal cycle.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import minimum_spanning_tree
from scipy.spatial.distance import pdist, squareform

from .catalog import (StormCatalog, StormTrackPoint, SyntheticStorm, annual_max_samples, blend_catalogs,
                      correct_catalog, dump_catalog)
from .grid import (DistributionBranch, DistributionNode, DistributionTree, Plant, PowerNetwork, Substation,
                   TransmissionLine, EXTERNAL_BUS, dump_network, manifest_totals)
from .heat import DAYS_PER_YEAR, HeatClimatology, dump_climatology, monthly_means
from .windfield import great_circle_km, regular_grid, write_study_grid

CENTER = (29.76, -95.37)
KM_LAT = 111.195


def _km_to_deg(center_lat, dx_km, dy_km):
    return dy_km / KM_LAT, dx_km / (KM_LAT * np.cos(np.radians(center_lat)))


@dataclass(frozen=True)
class NetworkSpec:
    n_urban_subs: int = 5
    n_rural_subs: int = 3
    feeders_per_sub: int = 5
    urban_points: int = 21          # service points per urban feeder
    rural_points: int = 17
    urban_customers: float = 55.0   # mean customers per point
    rural_customers: float = 22.0
    urban_trunk_km: float = 1.5
    rural_trunk_km: float = 6.0
    urban_spread_km: float = 1.6
    rural_spread_km: float = 5.0
    urban_ring_km: float = 9.0
    rural_ring_km: float = 30.0
    critical_fraction: float = 0.04
    tract_cell_deg: float = 0.06
    detour: float = 1.25            # wire length / straight-line length
    plant_capacity_mw: float = 30.0
    tie_limit_mw: float = 150.0

    def scaled(self, scale: float) -> "NetworkSpec":
        from dataclasses import replace

        return replace(self, urban_points=max(2, int(round(self.urban_points * scale))),
                       rural_points=max(2, int(round(self.rural_points * scale))))


def _feeder(rng, sub_id, sub_lat, sub_lon, angle, n_pts, trunk_km, spread_km, mean_cust, detour, prefix):
    """One distribution tree: trunk chain then an MST over a point cluster."""
    lat0 = sub_lat
    n_trunk = max(1, int(round(trunk_km / 1.5)))
    ux, uy = np.cos(angle), np.sin(angle)
    pts = [(ux * trunk_km * (k + 1) / n_trunk, uy * trunk_km * (k + 1) / n_trunk) for k in range(n_trunk)]
    end = np.array(pts[-1])
    # cluster extends away from the substation
    c = end + np.array([ux, uy]) * spread_km * 0.8
    cloud = c + rng.normal(scale=spread_km * 0.6, size=(max(1, n_pts - n_trunk), 2))
    allp = np.vstack([end[None, :], cloud])
    mst = minimum_spanning_tree(squareform(pdist(allp))).toarray()
    adj = {i: [] for i in range(len(allp))}
    for i, j in zip(*np.nonzero(mst)):
        adj[i].append(j)
        adj[j].append(i)
    nodes, branches = [], []
    xy = {}

    def add_node(name, x, y):
        dlat, dlon = _km_to_deg(lat0, x, y)
        xy[name] = (x, y)
        cust = int(rng.poisson(mean_cust))
        nodes.append(dict(id=name, lat=sub_lat + dlat, lon=sub_lon + dlon, customers=cust))

    prev, prev_xy = sub_id, (0.0, 0.0)
    for k, (x, y) in enumerate(pts):
        name = f"{prefix}n{k:02d}"
        add_node(name, x, y)
        L = detour * float(np.hypot(x - prev_xy[0], y - prev_xy[1]))
        branches.append(dict(id=f"{prefix}b{k:02d}", parent=prev, child=name, length_km=max(L, 0.05)))
        prev, prev_xy = name, (x, y)
    # breadth-first over the cluster MST from the trunk end
    names = {0: prev}
    order, seen = [0], {0}
    k = len(pts)
    while order:
        i = order.pop(0)
        for j in sorted(adj[i]):
            if j in seen:
                continue
            seen.add(j)
            name = f"{prefix}n{k:02d}"
            add_node(name, *allp[j])
            L = detour * float(np.hypot(*(allp[j] - allp[i])))
            branches.append(dict(id=f"{prefix}b{k:02d}", parent=names[i], child=name, length_km=max(L, 0.05)))
            names[j] = name
            order.append(j)
            k += 1
    return nodes, branches


def generate_network(seed=7, scale=1.0, spec: NetworkSpec = NetworkSpec()) -> PowerNetwork:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 101]))
    spec = spec.scaled(scale) if scale != 1.0 else spec
    lat_c, lon_c = CENTER
    subs = []
    for k in range(spec.n_urban_subs):
        if k == 0:
            x = y = 0.0
        else:
            a = 2 * np.pi * (k - 1) / max(1, spec.n_urban_subs - 1) + 0.3
            x, y = spec.urban_ring_km * np.cos(a), spec.urban_ring_km * np.sin(a)
        subs.append(("urban", f"S{k + 1:02d}", x, y))
    for k in range(spec.n_rural_subs):
        a = 2 * np.pi * k / spec.n_rural_subs + 1.0
        subs.append(("rural", f"S{spec.n_urban_subs + k + 1:02d}",
                     spec.rural_ring_km * np.cos(a), spec.rural_ring_km * np.sin(a)))
    substations, trees = [], []
    node_xy = {}
    for kind, sid, x, y in subs:
        dlat, dlon = _km_to_deg(lat_c, x, y)
        slat, slon = lat_c + dlat, lon_c + dlon
        substations.append(Substation(sid, slat, slon))
        for f in range(spec.feeders_per_sub):
            angle = 2 * np.pi * f / spec.feeders_per_sub + rng.uniform(-0.3, 0.3)
            urban = kind == "urban"
            nodes, branches = _feeder(
                rng, sid, slat, slon, angle,
                spec.urban_points if urban else spec.rural_points,
                spec.urban_trunk_km if urban else spec.rural_trunk_km,
                spec.urban_spread_km if urban else spec.rural_spread_km,
                spec.urban_customers if urban else spec.rural_customers,
                spec.detour, f"{sid}F{f}")
            trees.append((f"{sid}F{f}", sid, nodes, branches))
            for n in nodes:
                node_xy[n["id"]] = (n["lat"], n["lon"])
    # critical facilities on a random subset of nodes, tracts from grid cells
    all_nodes = [n for _, _, ns, _ in trees for n in ns]
    crit = rng.random(len(all_nodes)) < spec.critical_fraction
    cell = spec.tract_cell_deg
    dist_trees = []
    k = 0
    for tid, sid, nodes, branches in trees:
        dn = []
        for n in nodes:
            tract = f"T{int(np.floor((n['lat'] - 29.0) / cell)):02d}{int(np.floor((n['lon'] + 96.5) / cell)):02d}"
            dn.append(DistributionNode(n["id"], round(n["lat"], 6), round(n["lon"], 6), n["customers"], tract,
                                       bool(crit[k])))
            k += 1
        db = [DistributionBranch(b["id"], b["parent"], b["child"], round(b["length_km"], 4)) for b in branches]
        dist_trees.append(DistributionTree(tid, sid, tuple(dn), tuple(db)))
    # plants next to the ring substations, lines as ring plus chords
    plants = []
    sub_pos = {s.id: (s.lat, s.lon) for s in substations}
    plant_hosts = [substations[1].id, substations[3].id, substations[spec.n_urban_subs].id,
                   substations[-1].id]
    for k, host in enumerate(plant_hosts):
        la, lo = sub_pos[host]
        plants.append(Plant(f"P{k + 1}", round(la + 0.01, 6), round(lo + 0.01, 6), spec.plant_capacity_mw))
    edges = []
    urban = [s.id for s in substations[:spec.n_urban_subs]]
    rural = [s.id for s in substations[spec.n_urban_subs:]]
    ring = urban[1:]
    for a, b in zip(ring, ring[1:] + ring[:1]):
        edges.append((a, b))
    for s in ring[::2]:
        edges.append((urban[0], s))
    for k, r in enumerate(rural):
        # two links from each rural substation into the urban ring
        d = sorted(ring, key=lambda s: great_circle_km(*sub_pos[r], *sub_pos[s]))
        edges += [(r, d[0]), (r, d[1])]
    for k, host in enumerate(plant_hosts):
        edges.append((f"P{k + 1}", host))
    pos = dict(sub_pos)
    pos.update({p.id: (p.lat, p.lon) for p in plants})
    lines = []
    for k, (a, b) in enumerate(edges):
        L = max(1.0, 1.1 * float(great_circle_km(*pos[a], *pos[b])))
        lines.append(TransmissionLine(f"L{k + 1:02d}", a, b, round(0.0004 * L + 0.002, 6), 120.0, round(L, 3)))
    ties = (TransmissionLine("X1", EXTERNAL_BUS, rural[0], 0.004, spec.tie_limit_mw, 12.0),
            TransmissionLine("X2", EXTERNAL_BUS, ring[-1], 0.004, spec.tie_limit_mw, 12.0))
    net = PowerNetwork(tuple(plants), tuple(substations), tuple(lines), ties, tuple(dist_trees))
    return PowerNetwork(net.plants, net.substations, net.transmission_lines, net.boundary_ties, net.trees,
                        net.mw_per_customer, manifest_totals(net))


# -- storms ------------------------------------------------------------------

@dataclass(frozen=True)
class CatalogSpec:
    n_storms: int = 600
    annual_frequency: float = 1.5
    vmax_loc: float = 22.0          # admission floor; landfall intensity = loc + gamma
    vmax_shape: float = 1.0
    vmax_scale: float = 3.0
    vmax_shift: float = 0.0
    season_peak: float = 250.0
    season_sd: float = 22.0
    label: str = "historical-reanalysis"


def _coast_point(u):
    """Point on a SW-NE coastline south of the metro, u in [0, 1]."""
    a = np.array([27.9, -97.4])
    b = np.array([29.75, -93.3])
    return a + u * (b - a)


def storm_from_landfall(sid, lat, lon, vmax, rmax, speed, bearing, day, hours_before=18, hours_after=36,
                        dt=3.0, decay_h=28.0, weight=1.0) -> SyntheticStorm:
    """Straight track through a landfall point with exponential inland decay."""
    ts = np.arange(-hours_before, hours_after + 1e-9, dt)
    th = np.radians(bearing)
    pts = []
    for t in ts:
        dist = speed * 3.6 * t
        dlat, dlon = _km_to_deg(lat, dist * np.sin(th), dist * np.cos(th))
        v = vmax if t <= 0 else max(vmax * np.exp(-t / decay_h), 8.0)
        pts.append(StormTrackPoint(float(t + hours_before), round(lat + dlat, 4), round(lon + dlon, 4),
                                   round(float(v), 3), round(float(rmax * (1 + 0.01 * max(t, 0))), 3),
                                   round(float(speed), 3), round(float(bearing), 2)))
    return SyntheticStorm(sid, tuple(pts), int(np.argmin(np.abs(ts))), int(day), float(weight))


def generate_catalog(seed, spec: CatalogSpec = CatalogSpec(), prefix="h") -> StormCatalog:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 202]))
    storms = []
    for i in range(spec.n_storms):
        u = rng.uniform(0.15, 0.95)
        lat, lon = _coast_point(u)
        vmax = spec.vmax_loc + spec.vmax_shift + rng.gamma(spec.vmax_shape, spec.vmax_scale)
        vmax = float(min(vmax, 75.0))
        rmax = float(np.clip(rng.lognormal(np.log(40.0), 0.3), 15, 110))
        speed = float(rng.uniform(3.0, 8.0))
        bearing = float(rng.normal(345.0, 18.0))
        day = int(np.clip(round(rng.normal(spec.season_peak, spec.season_sd)), 152, 320))
        storms.append(storm_from_landfall(f"{prefix}{i:04d}", lat, lon, vmax, rmax, speed, bearing, day))
    return StormCatalog(tuple(storms), spec.annual_frequency, spec.label)


GCM_SPECS = (
    # (label, hist bias m/s, hist lambda, future shift m/s, future lambda, season shift days)
    ("gcmA", 2.0, 1.8, 5.0, 2.6, -3),
    ("gcmB", -1.5, 1.2, 2.5, 1.6, -2),
    ("gcmC", 4.0, 2.1, 8.0, 3.0, -5),
)


def generate_future_catalog(seed, reference: StormCatalog, n_storms=600, ref_annual_max=None):
    """Bias-corrected, blended future projection from three synthetic model catalogs."""
    if ref_annual_max is None:
        ref_annual_max = annual_max_samples(reference, 2000, seed)
    corrected = []
    for k, (label, bias, lam_h, shift, lam_f, dshift) in enumerate(GCM_SPECS):
        hist = generate_catalog(seed * 10 + 2 * k + 1, CatalogSpec(n_storms, lam_h, vmax_shift=bias,
                                                                  label=f"{label}-hist"), f"{label}h")
        fut = generate_catalog(seed * 10 + 2 * k + 2, CatalogSpec(n_storms, lam_f, vmax_shift=bias + shift,
                                                                 season_peak=250.0 + dshift,
                                                                 label=f"{label}-future"), f"{label}f")
        c = correct_catalog(fut, hist, reference, 2000, seed)
        corrected.append(StormCatalog(c.storms, c.annual_frequency, label, c.source_weight, c.hist_annual_max))
    return blend_catalogs(corrected, ref_annual_max), corrected


# -- climatology -------------------------------------------------------------

@dataclass(frozen=True)
class ClimateSpec:
    n_years: int = 20
    annual_mean: float = 25.8       # daily maximum temperature, deg C
    amplitude: float = 7.0
    peak_day: float = 215.0
    ar_phi: float = 0.75
    ar_sd: float = 1.3
    year_sd: float = 0.6
    q_summer: float = 0.0172
    q_winter: float = 0.0085
    q_sd: float = 0.0009
    label: str = "historical-reanalysis"


def _seasonal(days, mean, amp, peak):
    return mean + amp * np.cos(2 * np.pi * (days - peak) / DAYS_PER_YEAR)


def generate_climatology(seed, spec: ClimateSpec = ClimateSpec(), warming=0.0, bias=None) -> HeatClimatology:
    """Synthetic daily (T, q, p). `bias` (12 monthly values) mimics a model's mean error."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 303]))
    days = np.arange(1, DAYS_PER_YEAR + 1)
    base = _seasonal(days, spec.annual_mean, spec.amplitude, spec.peak_day)
    qbase = _seasonal(days, 0.5 * (spec.q_summer + spec.q_winter), 0.5 * (spec.q_summer - spec.q_winter),
                      spec.peak_day + 10)
    T = np.empty((spec.n_years, DAYS_PER_YEAR))
    Q = np.empty_like(T)
    for y in range(spec.n_years):
        e = np.empty(DAYS_PER_YEAR)
        e[0] = rng.normal(scale=spec.ar_sd / np.sqrt(1 - spec.ar_phi ** 2))
        shocks = rng.normal(scale=spec.ar_sd, size=DAYS_PER_YEAR)
        for d in range(1, DAYS_PER_YEAR):
            e[d] = spec.ar_phi * e[d - 1] + shocks[d]
        T[y] = base + warming + rng.normal(scale=spec.year_sd) + e
        Q[y] = np.clip(qbase * (1 + 0.05 * warming) + rng.normal(scale=spec.q_sd, size=DAYS_PER_YEAR)
                       + 0.0003 * e, 0.002, 0.03)
    if bias is not None:
        edges = np.concatenate([[0], np.cumsum([31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31])])
        for m in range(12):
            T[:, edges[m]:edges[m + 1]] += bias[m]
    P = 1013.0 + rng.normal(scale=4.0, size=T.shape)
    return HeatClimatology(np.clip(T, -50, 60), Q, np.clip(P, 800, 1100), spec.label)


MODEL_T_BIAS = tuple(1.0 + 0.8 * np.sin(2 * np.pi * (m + 0.5) / 12) for m in range(12))


def generate_future_climatology(seed, reference: HeatClimatology, warming=1.8,
                                spec: ClimateSpec = ClimateSpec()) -> HeatClimatology:
    """Raw warm-biased model future series with monthly means for bias correction attached."""
    from dataclasses import replace

    model_hist = generate_climatology(seed + 1, replace(spec, label="model-hist"), 0.0, MODEL_T_BIAS)
    fut = generate_climatology(seed + 2, replace(spec, label="future-model"), warming, MODEL_T_BIAS)
    return HeatClimatology(fut.temperature, fut.humidity, fut.pressure, "future-model",
                           monthly_means(model_hist.temperature).mean(axis=0),
                           monthly_means(reference.temperature).mean(axis=0))


# -- calibration events ------------------------------------------------------

def ike_like() -> SyntheticStorm:
    """Strong storm making landfall just south-east of the metro heading north-west."""
    return storm_from_landfall("ike_like", 29.30, -94.80, 37.0, 55.0, 5.5, 325.0, 256)


def harvey_like() -> SyntheticStorm:
    """Landfall far to the south-west; the metro sees only the weak outer field."""
    return storm_from_landfall("harvey_like", 27.90, -97.30, 55.0, 22.0, 2.0, 315.0, 237, hours_after=48)


# -- writer ------------------------------------------------------------------

@dataclass
class FixtureSet:
    network: PowerNetwork
    historical: StormCatalog
    future: StormCatalog
    clim_hist: HeatClimatology
    clim_future: HeatClimatology
    grid_ids: list = field(default_factory=list)
    grid_points: np.ndarray = None


def build_fixtures(seed=7, scale=1.0, n_storms=600, n_years=20) -> FixtureSet:
    from dataclasses import replace

    net = generate_network(seed, scale)
    hist = generate_catalog(seed, CatalogSpec(n_storms))
    fut, _ = generate_future_catalog(seed, hist, n_storms)
    cspec = replace(ClimateSpec(), n_years=n_years)
    ch = generate_climatology(seed, cspec)
    cf = generate_future_climatology(seed, ch, spec=cspec)
    lats = [n.lat for t in net.trees for n in t.nodes] + [s.lat for s in net.substations]
    lons = [n.lon for t in net.trees for n in t.nodes] + [s.lon for s in net.substations]
    ids, pts = regular_grid(min(lats) - 0.02, max(lats) + 0.02, min(lons) - 0.02, max(lons) + 0.02, 2.0)
    return FixtureSet(net, hist, fut, ch, cf, ids, pts)


FILES = {
    "network": "network.json",
    "historical": "catalog_historical.jsonl",
    "future": "catalog_future.jsonl",
    "clim_hist": "climatology_historical.json",
    "clim_future": "climatology_future.json",
    "grid": "study_grid.csv",
    "ike": "event_ike_like.jsonl",
    "harvey": "event_harvey_like.jsonl",
}


def write_fixtures(outdir, seed=7, scale=1.0, n_storms=600, n_years=20) -> dict:
    """Write the full fixture set; returns the manifest (also written as manifest.json)."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    fx = build_fixtures(seed, scale, n_storms, n_years)
    dump_network(fx.network, out / FILES["network"])
    dump_catalog(fx.historical, out / FILES["historical"])
    dump_catalog(fx.future, out / FILES["future"])
    dump_climatology(fx.clim_hist, out / FILES["clim_hist"])
    dump_climatology(fx.clim_future, out / FILES["clim_future"])
    write_study_grid(out / FILES["grid"], fx.grid_ids, fx.grid_points)
    dump_catalog(StormCatalog((ike_like(),), 1.0, "event-ike-like"), out / FILES["ike"])
    dump_catalog(StormCatalog((harvey_like(),), 1.0, "event-harvey-like"), out / FILES["harvey"])
    manifest = {"seed": seed, "scale": scale, "files": FILES, "network": manifest_totals(fx.network),
                "historical_storms": len(fx.historical.storms), "future_storms": len(fx.future.storms),
                "historical_frequency": fx.historical.annual_frequency,
                "future_frequency": round(fx.future.annual_frequency, 10),
                "climatology_years": n_years, "study_grid_points": len(fx.grid_ids)}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest
