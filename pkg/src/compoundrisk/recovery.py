"""Priority list scheduling of repair crews and the resulting outage curve.

Transmission crews work substations first, then lines, each by descending
downstream customers. Distribution crews work branches and poles feeding
critical facilities first, then the rest by descending downstream
customers, then service drops. Every job occupies one crew; jobs are handed
to whichever crew frees up first.
"""
from __future__ import annotations

import heapq
import json
import zlib
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .damage import (BRANCH, CIRCUIT, CLASSES, LINE, NODE, SUBSTATION, TRANSMISSION_CLASSES,
                     ComponentTable, DamageState)
from .grid import PowerNetwork
from .powerflow import CapacityScale, served_customers, solve_flow

DEFAULT_DURATIONS = {
    SUBSTATION: 48.0,
    LINE: 24.0,
    NODE: 8.0,
    BRANCH: 10.0,
    CIRCUIT: 4.0,
}


@dataclass(frozen=True)
class RepairResources:
    transmission_crews: int = 4
    distribution_crews: int = 20
    durations: dict = field(default_factory=lambda: dict(DEFAULT_DURATIONS))
    jitter: float = 0.2
    mobilization_delay: float = 12.0

    def __post_init__(self):
        if self.transmission_crews < 1 or self.distribution_crews < 1:
            raise ValueError("crew counts must be >= 1")
        if set(self.durations) != set(CLASSES):
            raise ValueError(f"durations must cover exactly {CLASSES}")
        if any(v <= 0 for v in self.durations.values()):
            raise ValueError("repair durations must be positive")
        if not 0 <= self.jitter < 1:
            raise ValueError("jitter must lie in [0, 1)")
        if self.mobilization_delay < 0:
            raise ValueError("mobilization delay must be nonnegative")

    def to_dict(self) -> dict:
        return {"transmission_crews": self.transmission_crews,
                "distribution_crews": self.distribution_crews,
                "durations_h": dict(self.durations),
                "jitter": self.jitter,
                "mobilization_delay_h": self.mobilization_delay}


def resources_from_dict(d: dict) -> RepairResources:
    allowed = {"transmission_crews", "distribution_crews", "durations_h", "jitter",
               "mobilization_delay_h", "provenance"}
    extra = set(d) - allowed
    if extra:
        raise ValueError(f"unknown resource keys {sorted(extra)}")
    durations = dict(DEFAULT_DURATIONS)
    durations.update({k: float(v) for k, v in d.get("durations_h", {}).items()})
    return RepairResources(int(d.get("transmission_crews", 4)), int(d.get("distribution_crews", 20)),
                           durations, float(d.get("jitter", 0.2)),
                           float(d.get("mobilization_delay_h", 12.0)))


def load_resources(path) -> RepairResources:
    return resources_from_dict(json.loads(Path(path).read_text()))


# -- deterministic jitter ----------------------------------------------------

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix64(z: np.ndarray) -> np.ndarray:
    z = (z + np.uint64(0x9E3779B97F4A7C15)) & _M64
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _M64
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _M64
    return z ^ (z >> np.uint64(31))


def component_hash(cls: str, cid: str) -> int:
    return zlib.crc32(f"{cls}:{cid}".encode())


def jitter_uniform(seed: int, hashes) -> np.ndarray:
    """Uniform [0, 1) keyed by (seed, component hash); independent of draw order."""
    h = np.asarray(hashes, dtype=np.uint64)
    s = _splitmix64(np.array([int(seed) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
    with np.errstate(over="ignore"):
        z = _splitmix64(s ^ (h * np.uint64(0x100000001B3)))
    return (z >> np.uint64(11)).astype(np.float64) / float(2 ** 53)


# -- scheduling --------------------------------------------------------------

class RepairPlanner:
    """Static priority ranks and durations for every component of a network."""

    def __init__(self, net: PowerNetwork, table: ComponentTable | None = None):
        self.net = net
        self.table = table or ComponentTable(net)
        t, idx = self.table, net.index
        n = len(t.ids)
        tier = np.zeros(n, dtype=np.int64)
        cust = np.zeros(n, dtype=np.int64)
        sl = t.block(SUBSTATION)
        cust[sl] = idx.sub_customers
        sl = t.block(LINE)
        tier[sl] = 1
        sub_c = dict(zip(idx.sub_ids, idx.sub_customers.tolist()))
        cust[sl] = [sub_c.get(ln.from_bus, 0) + sub_c.get(ln.to_bus, 0) for ln in idx.lines]
        for cls in (NODE, BRANCH):
            sl = t.block(cls)
            tier[sl] = np.where(idx.feeds_critical, 0, 1)
            cust[sl] = idx.downstream
        sl = t.block(CIRCUIT)
        tier[sl] = 2
        cust[sl] = idx.customers
        self.transmission = np.isin(t.classes, TRANSMISSION_CLASSES)
        # rank = position in one global priority order within each crew pool
        order = sorted(range(n), key=lambda k: (tier[k], -cust[k], t.ids[k], t.classes[k]))
        self.rank = np.empty(n, dtype=np.int64)
        self.rank[order] = np.arange(n)
        self.tier, self.downstream = tier, cust
        self.hashes = np.array([component_hash(c, i) for c, i in zip(t.classes, t.ids)], dtype=np.uint64)
        self.class_code = np.array([CLASSES.index(c) for c in t.classes], dtype=np.int64)

    def durations(self, resources: RepairResources, seed: int, which=None) -> np.ndarray:
        base = np.array([resources.durations[c] for c in CLASSES])[self.class_code]
        if which is not None:
            base = base[which]
            h = self.hashes[which]
        else:
            h = self.hashes
        if resources.jitter:
            base = base * (1.0 + resources.jitter * (2.0 * jitter_uniform(seed, h) - 1.0))
        return base

    def schedule(self, failed: np.ndarray, resources: RepairResources, seed: int) -> np.ndarray:
        """Completion hour per component (0 for intact ones)."""
        done = np.zeros(len(failed))
        ks = np.flatnonzero(failed)
        if not len(ks):
            return done
        dur = self.durations(resources, seed, ks)
        ks_order = np.argsort(self.rank[ks], kind="stable")
        ks, dur = ks[ks_order], dur[ks_order]
        tr = self.transmission[ks]
        for pool, crews in ((tr, resources.transmission_crews), (~tr, resources.distribution_crews)):
            jobs, d = ks[pool], dur[pool]
            if not len(jobs):
                continue
            if crews == 1:
                done[jobs] = resources.mobilization_delay + np.cumsum(d)
                continue
            free = [resources.mobilization_delay] * min(crews, len(jobs))
            out = np.empty(len(jobs))
            for j in range(len(jobs)):
                t0 = heapq.heappop(free)
                out[j] = t0 + d[j]
                heapq.heappush(free, out[j])
            done[jobs] = out
        return done


@dataclass(frozen=True)
class RepairTimeline:
    completion: dict            # (class, id) -> completion hour
    order: tuple = ()           # keys in dispatch order per crew pool

    def __len__(self):
        return len(self.completion)

    @property
    def end(self) -> float:
        return max(self.completion.values(), default=0.0)


def schedule_repairs(damage: DamageState, net: PowerNetwork, resources: RepairResources, seed: int,
                     planner: RepairPlanner | None = None) -> RepairTimeline:
    planner = planner or RepairPlanner(net)
    mask = planner.table.to_mask(damage)
    done = planner.schedule(mask, resources, seed)
    ks = np.flatnonzero(mask)
    ks = ks[np.argsort(planner.rank[ks], kind="stable")]
    keys = [(str(planner.table.classes[k]), planner.table.ids[k]) for k in ks]
    return RepairTimeline({key: float(done[k]) for key, k in zip(keys, ks)}, tuple(keys))


# -- restoration -------------------------------------------------------------

@dataclass(frozen=True)
class OutageTimeSeries:
    time: np.ndarray                  # hours since landfall
    fraction_out: np.ndarray          # customers without power / total
    restoration: np.ndarray           # per-node restoration hour (index order)

    @property
    def full_restoration(self) -> float:
        return float(self.restoration.max(initial=0.0))


class Restorer:
    """Exact per-node restoration hours from component completion hours."""

    def __init__(self, net: PowerNetwork, table: ComponentTable, scale: CapacityScale = CapacityScale()):
        self.net, self.table, self.scale = net, table, scale
        self.idx = net.index
        self.base_served = self._served_subs(np.zeros(len(table.ids), dtype=bool))
        if not self.base_served.all():
            raise ValueError("some substations are unserved in the undamaged network")
        self.tr_blocks = np.concatenate([np.arange(table.block(SUBSTATION).start, table.block(SUBSTATION).stop),
                                         np.arange(table.block(LINE).start, table.block(LINE).stop)])

    @cached_property
    def _sl(self):
        t = self.table
        return t.block(NODE), t.block(BRANCH), t.block(CIRCUIT)

    def _served_subs(self, failed_mask):
        t = self.table
        keys = frozenset((str(t.classes[k]), t.ids[k]) for k in np.flatnonzero(failed_mask)
                         if t.classes[k] in TRANSMISSION_CLASSES)
        sol = solve_flow(self.net, DamageState(keys), self.scale)
        return np.array([sol.served[s] for s in self.idx.sub_ids], dtype=bool)

    def energization(self, completion: np.ndarray) -> np.ndarray:
        """Hour from which each substation stays served."""
        tr = self.tr_blocks
        c = completion[tr]
        if not np.any(c > 0):
            return np.zeros(len(self.idx.sub_ids))
        times = np.unique(np.concatenate([[0.0], c[c > 0]]))
        full = np.zeros(len(completion), dtype=bool)
        served_at = []
        for t in times:
            full[:] = False
            full[tr] = c > t
            served_at.append(self._served_subs(full))
        served_at = np.array(served_at)          # (n_times, n_sub)
        energ = np.zeros(served_at.shape[1])
        for s in range(served_at.shape[1]):
            bad = np.flatnonzero(~served_at[:, s])
            if len(bad):
                k = bad[-1]
                energ[s] = times[k + 1] if k + 1 < len(times) else np.inf
        return energ

    def restoration(self, completion: np.ndarray) -> np.ndarray:
        return self.restoration_with(completion, self.energization(completion))

    def restoration_with(self, completion: np.ndarray, energ: np.ndarray) -> np.ndarray:
        idx = self.idx
        sl_node, sl_branch, sl_circ = self._sl
        own = np.maximum(completion[sl_node], completion[sl_branch])
        path = np.zeros(idx.n_nodes)
        for level in idx.levels:
            par = idx.parent[level]
            up = np.where(par >= 0, path[np.maximum(par, 0)], energ[idx.node_sub[level]])
            path[level] = np.maximum(up, own[level])
        return np.maximum(path, completion[sl_circ])


def restoration_times(net, damage, timeline: RepairTimeline, scale=CapacityScale(), table=None):
    table = table or ComponentTable(net)
    completion = np.zeros(len(table.ids))
    for key, t in timeline.completion.items():
        completion[table.lookup[key]] = t
    missing = table.to_mask(damage) & ~(completion > 0)
    if missing.any():
        raise ValueError("timeline does not cover every failed component")
    return Restorer(net, table, scale).restoration(completion)


def outage_series(net: PowerNetwork, damage: DamageState, timeline: RepairTimeline,
                  scale: CapacityScale = CapacityScale(), step: float = 1.0, max_hours=24 * 365) -> OutageTimeSeries:
    """Outage fraction on a fixed time grid by re-solving the grid at every step."""
    uncovered = set(damage.failed) - set(timeline.completion)
    if uncovered:
        raise ValueError(f"timeline misses failed components {sorted(uncovered)[:5]}")
    total = net.total_customers
    times, frac = [], []
    t = 0.0
    while True:
        still = frozenset(k for k in damage.failed if timeline.completion[k] > t)
        state = DamageState(still)
        ok, n_ok = served_customers(net, state, solve_flow(net, state, scale))
        times.append(t)
        frac.append(1.0 - n_ok / total if total else 0.0)
        if not still:
            break
        t += step
        if t > max_hours:
            raise RuntimeError("restoration did not terminate")
    restoration = restoration_times(net, damage, timeline, scale)
    return OutageTimeSeries(np.array(times), np.array(frac), restoration)
