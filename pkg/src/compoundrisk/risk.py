"""Monte Carlo engine: periods of storms run through wind, damage, flow, repair and heat.

Every period draws its own RNG stream from (master seed, period index) and
every event inside a period from (master seed, period index, event index),
so results do not depend on how periods are spread over workers.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .catalog import EventSequence, StormCatalog, period_rng, resample_period
from .damage import ComponentTable, FragilitySet, draw_failures
from .grid import PowerNetwork
from .heat import DEFAULT_ANOMALY, HI_THRESHOLD, WINDOW_DAYS, HeatClimatology, HeatLookup
from .powerflow import CapacityScale
from .recovery import RepairPlanner, RepairResources, Restorer
from .scaling import Attributor
from .windfield import WindParams, event_wind_map, nearest_grid_index, regular_grid


@dataclass(frozen=True)
class SimulationSettings:
    period_years: int = 20
    outage_threshold_days: int = 5
    hi_threshold: float = HI_THRESHOLD
    window_days: int = WINDOW_DAYS
    capacity_multiplier: float = 1.0
    composite_adjust: bool = True
    anomaly: tuple = DEFAULT_ANOMALY
    wind: WindParams = field(default_factory=WindParams)
    wind_time_step: float = 0.5
    collect_impacts: bool = False

    def __post_init__(self):
        if self.period_years < 1:
            raise ValueError("period_years must be >= 1")
        if self.window_days < 1:
            raise ValueError("window_days must be >= 1")


@dataclass(frozen=True)
class EventRecord:
    year: int
    day: int
    storm_id: str
    n_failed: int
    full_restoration_h: float
    outage_fraction: float          # customers out longer than the outage threshold
    heatwave_days: int
    impacts: tuple = ()


@dataclass
class PeriodRiskResult:
    outage_days: np.ndarray         # per node, max over the period's events
    compound_days: np.ndarray
    events: list
    seed: tuple

    def __eq__(self, other):
        return (isinstance(other, PeriodRiskResult) and self.seed == other.seed
                and np.array_equal(self.outage_days, other.outage_days)
                and np.array_equal(self.compound_days, other.compound_days)
                and self.events == other.events)


class GustCache:
    """Event-maximum gust per storm at a fixed set of study-grid points."""

    def __init__(self, catalog: StormCatalog, grid_points, params: WindParams, time_step=0.5):
        self.catalog, self.grid_points = catalog, np.asarray(grid_points, dtype=float)
        self.params, self.time_step = params, time_step
        self._maps: dict = {}

    def __getitem__(self, storm_index) -> np.ndarray:
        g = self._maps.get(storm_index)
        if g is None:
            g = event_wind_map(self.catalog.storms[storm_index], self.grid_points, self.params,
                               self.time_step).max_gust
            self._maps[storm_index] = g
        return g

    def fill(self, indices=None):
        for i in (range(len(self.catalog.storms)) if indices is None else indices):
            self[i]
        return self


class RiskModel:
    """Everything needed to simulate events on one network under one climate."""

    def __init__(self, network: PowerNetwork, catalog: StormCatalog, climatology: HeatClimatology,
                 fragility: FragilitySet, resources: RepairResources, grid_points=None,
                 settings: SimulationSettings = SimulationSettings(), gust_cache: GustCache | None = None):
        self.network, self.catalog, self.climatology = network, catalog, climatology
        self.fragility, self.resources, self.settings = fragility, resources, settings
        self.table = ComponentTable(network)
        if grid_points is None:
            loc = self.table.location
            _, grid_points = regular_grid(loc[:, 0].min(), loc[:, 0].max(), loc[:, 1].min(),
                                          loc[:, 1].max(), 2.0)
        self.grid_index = nearest_grid_index(grid_points, self.table.location)
        used = np.unique(self.grid_index)
        self._local = np.searchsorted(used, self.grid_index)
        if gust_cache is None:
            gust_cache = GustCache(catalog, np.asarray(grid_points)[used], settings.wind, settings.wind_time_step)
        elif len(gust_cache.grid_points) != len(used):
            raise ValueError("gust cache was built for a different component layout")
        self.gusts = gust_cache
        self.planner = RepairPlanner(network, self.table)
        self.restorer = Restorer(network, self.table, CapacityScale(settings.capacity_multiplier))
        self.heat = HeatLookup(climatology, settings.anomaly, settings.hi_threshold, settings.window_days,
                               settings.composite_adjust)
        self.attributor = Attributor(network, self.table) if settings.collect_impacts else None
        self.customers = network.index.customers
        self.total_customers = int(self.customers.sum())
        self._prob: dict = {}

    def with_network(self, network: PowerNetwork, **kw) -> "RiskModel":
        """Same hazard inputs and gust cache on a modified network with identical layout."""
        args = dict(fragility=self.fragility, resources=self.resources, settings=self.settings)
        args.update(kw)
        return _rebuild(self, network, args)

    def probabilities(self, storm_index) -> np.ndarray:
        p = self._prob.get(storm_index)
        if p is None:
            gust = self.gusts[storm_index][self._local]
            p = self.table.probabilities(gust, self.fragility)
            self._prob[storm_index] = p
        return p

    def event_restoration(self, storm_index, rng: np.random.Generator, jitter_seed: int):
        """Per-node restoration hours, failed mask and substation status at landfall."""
        failed = draw_failures(self.probabilities(storm_index), rng)
        if not failed.any():
            return np.zeros(len(self.customers)), failed, None
        done = self.planner.schedule(failed, self.resources, jitter_seed)
        energ = self.restorer.energization(done)
        return self.restorer.restoration_with(done, energ), failed, energ


def _rebuild(model: RiskModel, network, args) -> RiskModel:
    m = object.__new__(RiskModel)
    m.__dict__.update(model.__dict__)
    m.network = network
    m.fragility, m.resources, m.settings = args["fragility"], args["resources"], args["settings"]
    m.table = ComponentTable(network)
    if list(m.table.ids) != list(model.table.ids):
        raise ValueError("modified network must keep the component layout")
    m.planner = RepairPlanner(network, m.table)
    m.restorer = Restorer(network, m.table, CapacityScale(m.settings.capacity_multiplier))
    m.attributor = Attributor(network, m.table) if m.settings.collect_impacts else None
    if m.settings != model.settings:
        s = m.settings
        m.heat = HeatLookup(m.climatology, s.anomaly, s.hi_threshold, s.window_days, s.composite_adjust)
    m._prob = {}
    return m


def event_seed(master: int, period: int, k: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master), int(period), int(k) + 1])


def simulate_sequence(model: RiskModel, seq: EventSequence, period_index: int, master_seed: int
                      ) -> PeriodRiskResult:
    n = len(model.customers)
    s = model.settings
    out_days = np.zeros(n, dtype=np.int16)
    comp_days = np.zeros(n, dtype=np.int16)
    thr_h = 24.0 * s.outage_threshold_days
    events = []
    year_rng = np.random.default_rng(np.random.SeedSequence([int(master_seed), int(period_index), 0]))
    for k, (ev, si) in enumerate(zip(seq.events, seq.storm_index)):
        year, day, sid = ev
        heat_year = int(year_rng.integers(model.climatology.n_years))
        ss = event_seed(master_seed, period_index, k)
        rng = np.random.default_rng(ss)
        jitter_seed = int(np.random.SeedSequence(ss.entropy, spawn_key=(1,)).generate_state(1, np.uint64)[0])
        R, failed, energ = model.event_restoration(int(si), rng, jitter_seed)
        runs = model.heat.runs(heat_year, day)
        impacts = ()
        if failed.any():
            days = np.ceil(R / 24.0).astype(np.int16)
            # a day counts as dark when the node is unserved for more than 12 of its hours
            dark = np.clip(np.ceil((R - 12.0) / 24.0), 0, s.window_days).astype(np.int64)
            np.maximum(out_days, days, out=out_days)
            np.maximum(comp_days, runs[dark], out=comp_days)
            frac = float(model.customers[R > thr_h].sum()) / model.total_customers
            if model.attributor is not None:
                impacts = tuple(sorted(model.attributor(failed, energ == 0).values(), reverse=True))
            full = float(R.max())
        else:
            frac, full = 0.0, 0.0
        events.append(EventRecord(int(year), int(day), sid, int(failed.sum()), full, frac,
                                  int(runs[-1]), impacts))
    return PeriodRiskResult(out_days, comp_days, events, (int(master_seed), int(period_index)))


def simulate_period(model: RiskModel, period_index: int, master_seed: int) -> PeriodRiskResult:
    seq = resample_period(model.catalog, model.settings.period_years, period_rng(master_seed, period_index))
    return simulate_sequence(model, seq, period_index, master_seed)


@dataclass
class EnsembleResult:
    periods: list
    master_seed: int
    customers: np.ndarray
    tracts: np.ndarray = None       # tract index per node
    tract_ids: list = field(default_factory=list)

    @property
    def outage_days(self) -> np.ndarray:
        return np.stack([p.outage_days for p in self.periods]) if self.periods else np.zeros((0, len(self.customers)))

    @property
    def compound_days(self) -> np.ndarray:
        return np.stack([p.compound_days for p in self.periods]) if self.periods else np.zeros((0, len(self.customers)))

    @property
    def events(self) -> list:
        return [e for p in self.periods for e in p.events]


_WORKER_MODEL = None


def _worker_init(model):
    global _WORKER_MODEL
    _WORKER_MODEL = model


def _worker_run(args):
    lo, hi, seed = args
    return [simulate_period(_WORKER_MODEL, i, seed) for i in range(lo, hi)]


def run_ensemble(model: RiskModel, n_periods: int, master_seed: int, workers: int = 1,
                 chunk: int = 50) -> EnsembleResult:
    """Simulate periods 0..n-1; output order is period order whatever the worker count."""
    if n_periods < 0:
        raise ValueError("n_periods must be nonnegative")
    workers = max(1, min(int(workers), os.cpu_count() or 1, max(1, n_periods)))
    if workers == 1:
        periods = [simulate_period(model, i, master_seed) for i in range(n_periods)]
    else:
        import multiprocessing as mp

        tasks = [(lo, min(lo + chunk, n_periods), master_seed) for lo in range(0, n_periods, chunk)]
        ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
        with ProcessPoolExecutor(workers, mp_context=ctx, initializer=_worker_init, initargs=(model,)) as ex:
            periods = [p for part in ex.map(_worker_run, tasks) for p in part]
    idx = model.network.index
    return EnsembleResult(periods, int(master_seed), idx.customers, idx.node_tract, list(idx.tract_ids))
