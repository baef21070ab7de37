"""Undergrounding plans and their risk evaluation under common random numbers."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import PowerNetwork, tree_sectors, with_underground

RANDOM_TRANSMISSION = "random_transmission"
RANDOM_DISTRIBUTION = "random_distribution"
GREEDY = "greedy_distribution"
STRATEGIES = (RANDOM_TRANSMISSION, RANDOM_DISTRIBUTION, GREEDY)


@dataclass(frozen=True)
class HardeningPlan:
    protected: tuple               # component ids in selection order
    enhancement_rate: float        # protected length / protectable length
    strategy: str
    seed: int | None = None
    target_rate: float = 0.0
    protected_km: float = 0.0
    protectable_km: float = 0.0

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "target_rate": self.target_rate,
                "enhancement_rate": self.enhancement_rate, "seed": self.seed,
                "protected_km": self.protected_km, "protectable_km": self.protectable_km,
                "protected": list(self.protected)}


def plan_from_dict(d: dict) -> HardeningPlan:
    return HardeningPlan(tuple(d["protected"]), float(d["enhancement_rate"]), d["strategy"], d.get("seed"),
                         float(d.get("target_rate", d["enhancement_rate"])), float(d.get("protected_km", 0.0)),
                         float(d.get("protectable_km", 0.0)))


def dump_plan(plan: HardeningPlan, path) -> None:
    Path(path).write_text(json.dumps(plan.to_dict(), indent=1) + "\n")


def load_plan(path) -> HardeningPlan:
    return plan_from_dict(json.loads(Path(path).read_text()))


def _check_rate(rate):
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate {rate} outside [0, 1]")


class _Budget:
    """Length budget with the half-fit rule for the last component."""

    def __init__(self, total, rate):
        self.total, self.budget, self.used = total, rate * total, 0.0
        self.closed = rate <= 0 or total <= 0

    def offer(self, length) -> bool:
        if self.closed:
            return False
        room = self.budget - self.used
        if length <= room + 1e-9:
            self.used += length
            return True
        self.closed = True
        if room >= 0.5 * length:
            self.used += length
            return True
        return False


def _random_plan(items, rate, seed, strategy) -> HardeningPlan:
    _check_rate(rate)
    total = float(sum(L for _, L in items))
    b = _Budget(total, rate)
    order = np.random.default_rng(seed).permutation(len(items))
    chosen = []
    for k in order:
        cid, L = items[k]
        if not b.offer(L):
            break
        chosen.append(cid)
    return HardeningPlan(tuple(chosen), b.used / total if total else 0.0, strategy, seed, rate, b.used, total)


def random_transmission_plan(net: PowerNetwork, rate, seed) -> HardeningPlan:
    items = [(ln.id, ln.length_km) for ln in net.all_lines() if not ln.underground]
    return _random_plan(items, rate, seed, RANDOM_TRANSMISSION)


def random_distribution_plan(net: PowerNetwork, rate, seed) -> HardeningPlan:
    items = [(b.id, b.length_km) for t in net.trees for b in t.branches if not b.underground]
    return _random_plan(items, rate, seed, RANDOM_DISTRIBUTION)


def greedy_distribution_plan(net: PowerNetwork, rate) -> HardeningPlan:
    """Repeatedly protect the shallowest unprotected sector of the tree with most overhead length.

    Within a tree, the next sector is the one adjacent to the already
    protected region (or the substation) with the most downstream customers.
    If a whole sector does not fit the budget, its leading branches are taken
    root-first under the half-fit rule and the plan stops there, so plans at
    increasing rates are nested.
    """
    _check_rate(rate)
    idx = net.index
    overhead = {b.id: b.length_km for t in net.trees for b in t.branches if not b.underground}
    total = float(sum(overhead.values()))
    b = _Budget(total, rate)
    trees = []
    for t in net.trees:
        secs = tree_sectors(t)
        first_parent = {}
        for s in secs:
            first_parent[s.branch_ids[0]] = t.substation if s.root_adjacent else s.node_ids[0]
        # sector whose chain ends at node v
        end_at = {s.node_ids[-1]: k for k, s in enumerate(secs)}
        parent_sec = []
        for s in secs:
            p = first_parent[s.branch_ids[0]]
            parent_sec.append(end_at.get(p, -1) if not s.root_adjacent else -1)
        remaining = sum(overhead.get(x, 0.0) for s in secs for x in s.branch_ids)
        trees.append({"id": t.id, "secs": secs, "parent": parent_sec, "done": [False] * len(secs),
                      "remaining": remaining})
    chosen = []

    def down(s):
        return int(idx.downstream[idx.branch_pos[s.branch_ids[0]]])

    stop = b.closed
    while not stop:
        live = [tr for tr in trees if tr["remaining"] > 1e-12]
        if not live:
            break
        tr = sorted(live, key=lambda x: (-x["remaining"], x["id"]))[0]
        frontier = [k for k, s in enumerate(tr["secs"]) if not tr["done"][k]
                    and (tr["parent"][k] < 0 or tr["done"][tr["parent"][k]])]
        k = sorted(frontier, key=lambda k: (-down(tr["secs"][k]), tr["secs"][k].branch_ids[0]))[0]
        s = tr["secs"][k]
        tr["done"][k] = True
        ov = [x for x in s.branch_ids if x in overhead]
        L = sum(overhead[x] for x in ov)
        if L <= 0:
            continue
        if L <= b.budget - b.used + 1e-9:
            b.used += L
            chosen.extend(ov)
            tr["remaining"] -= L
            continue
        for x in ov:
            if not b.offer(overhead[x]):
                break
            chosen.append(x)
        stop = True
    return HardeningPlan(tuple(chosen), b.used / total if total else 0.0, GREEDY, None, rate, b.used, total)


def make_plan(net: PowerNetwork, strategy: str, rate, seed=0) -> HardeningPlan:
    if strategy == RANDOM_TRANSMISSION:
        return random_transmission_plan(net, rate, seed)
    if strategy == RANDOM_DISTRIBUTION:
        return random_distribution_plan(net, rate, seed)
    if strategy == GREEDY:
        return greedy_distribution_plan(net, rate)
    raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")


def apply_plan(net: PowerNetwork, plan: HardeningPlan) -> PowerNetwork:
    """Copy of the network with the plan's components flagged underground."""
    return with_underground(net, plan.protected)


def evaluate_strategies(model, strategies, rates, n_periods, seed, workers=1, plan_seed=0, d=5):
    """Risk-vs-rate rows; every (strategy, rate) reuses the same period and event seeds."""
    from .risk import run_ensemble
    from .stats import exceedance_stats

    rates = list(rates)
    if rates != sorted(rates):
        raise ValueError("rates must be sorted")
    rows, plans = [], []
    cache = {}
    for strategy in strategies:
        for rate in rates:
            plan = make_plan(model.network, strategy, rate, plan_seed)
            key = frozenset(plan.protected)
            if key not in cache:
                m = model.with_network(apply_plan(model.network, plan)) if plan.protected else model
                cache[key] = exceedance_stats(run_ensemble(m, n_periods, seed, workers), d)
            e = cache[key]
            plans.append(plan)
            rows.append({"strategy": strategy, "rate": rate, "enhancement_rate": plan.enhancement_rate,
                         "compound_mean": e.compound.mean, "compound_std": e.compound.std,
                         "outage_mean": e.outage.mean, "outage_std": e.outage.std})
    return rows, plans
