"""DC power flow on the damaged transmission graph with islanding and shedding.

Load shedding is uniform within an island: every substation's demand is
scaled by a common factor until no line exceeds its limit. Generators are
dispatched in proportion to capacity; an island tied to the external grid
uses the tie as slack and imports whatever local plants cannot cover.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .damage import BRANCH, CIRCUIT, LINE, NODE, SUBSTATION, DamageState
from .grid import EXTERNAL_BUS, PowerNetwork

LIMIT_TOL = 1e-9
MAX_SHED_ITERATIONS = 50


class FlowError(RuntimeError):
    pass


@dataclass(frozen=True)
class CapacityScale:
    multiplier: float = 1.0

    def __post_init__(self):
        if not self.multiplier > 0:
            raise ValueError("capacity multiplier must be positive")


@dataclass(frozen=True)
class Island:
    buses: tuple[str, ...]
    lines: tuple = ()              # TransmissionLine objects inside the island
    externally_supplied: bool = False


@dataclass
class IslandSolution:
    buses: tuple[str, ...]
    alpha: float                   # served fraction of island demand
    served_demand: dict            # bus -> MW
    generation: dict               # bus -> MW (external bus = import)
    flows: dict                    # line id -> MW (from -> to positive)
    iterations: int = 0
    supplied: bool = False


@dataclass
class FlowSolution:
    islands: list
    flows: dict = field(default_factory=dict)
    served_demand: dict = field(default_factory=dict)
    served: dict = field(default_factory=dict)       # substation -> bool
    shed_log: list = field(default_factory=list)
    island_solutions: list = field(default_factory=list)


def _components(n, edges):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    return [find(i) for i in range(n)]


def partition_arrays(idx, bus_alive, line_alive):
    """Island label per bus (-1 for dead buses) from alive masks."""
    edges = [(int(idx.line_from[k]), int(idx.line_to[k])) for k in np.flatnonzero(line_alive)
             if bus_alive[idx.line_from[k]] and bus_alive[idx.line_to[k]]]
    roots = _components(len(idx.buses), edges)
    labels = np.array([r if bus_alive[i] else -1 for i, r in enumerate(roots)], dtype=np.int64)
    return labels


def _masks(net: PowerNetwork, damage: DamageState):
    idx = net.index
    bus_alive = np.ones(len(idx.buses), dtype=bool)
    for sid in damage.ids(SUBSTATION):
        bus_alive[idx.bus_pos[sid]] = False
    line_alive = np.ones(len(idx.lines), dtype=bool)
    for lid in damage.ids(LINE):
        line_alive[idx.line_pos[lid]] = False
    return bus_alive, line_alive


def island_partition(net: PowerNetwork, damage: DamageState) -> list[Island]:
    idx = net.index
    bus_alive, line_alive = _masks(net, damage)
    labels = partition_arrays(idx, bus_alive, line_alive)
    return _islands_from_labels(idx, labels, line_alive)


def _islands_from_labels(idx, labels, line_alive):
    out = []
    for lab in sorted(set(labels[labels >= 0].tolist())):
        members = np.flatnonzero(labels == lab)
        names = tuple(idx.buses[i] for i in members)
        if names == (EXTERNAL_BUS,):
            continue
        lines = tuple(idx.lines[k] for k in np.flatnonzero(line_alive)
                      if labels[idx.line_from[k]] == lab and labels[idx.line_to[k]] == lab)
        out.append(Island(names, lines, EXTERNAL_BUS in names))
    return out


def _dc_flows(n, line_pairs, x, injections, slack):
    """Line flows for net bus injections; slack angle fixed at zero."""
    if not len(line_pairs):
        return np.zeros(0)
    b = 1.0 / x
    B = np.zeros((n, n))
    fi, ti = line_pairs[:, 0], line_pairs[:, 1]
    np.add.at(B, (fi, fi), b)
    np.add.at(B, (ti, ti), b)
    np.add.at(B, (fi, ti), -b)
    np.add.at(B, (ti, fi), -b)
    keep = np.arange(n) != slack
    theta = np.zeros(n)
    if n > 1:
        try:
            theta[keep] = np.linalg.solve(B[np.ix_(keep, keep)], injections[keep])
        except np.linalg.LinAlgError as exc:
            raise FlowError("singular DC flow system; island is internally disconnected") from exc
    return (theta[fi] - theta[ti]) * b


def solve_island(island: Island, demands: dict, capacities: dict, scale: CapacityScale = CapacityScale()
                 ) -> IslandSolution:
    """Dispatch, DC flow and proportional shedding for one island."""
    buses = list(island.buses)
    if not buses:
        raise ValueError("island has no buses")
    pos = {b: i for i, b in enumerate(buses)}
    n = len(buses)
    demand = np.array([float(demands.get(b, 0.0)) for b in buses])
    cap = np.array([float(capacities.get(b, 0.0)) * scale.multiplier for b in buses])
    if EXTERNAL_BUS in pos:
        cap[pos[EXTERNAL_BUS]] = 0.0
    tie = EXTERNAL_BUS in pos
    D, C = demand.sum(), cap.sum()
    supplied = tie or C > 0
    lines = island.lines
    pairs = np.array([(pos[ln.from_bus], pos[ln.to_bus]) for ln in lines], dtype=np.int64).reshape(-1, 2)
    x = np.array([ln.reactance for ln in lines])
    limit = np.array([ln.limit_mw for ln in lines])

    if tie:
        slack = pos[EXTERNAL_BUS]
    elif C > 0:
        best = max(cap)
        slack = min((b for b in buses if cap[pos[b]] == best))
        slack = pos[slack]
    else:
        slack = 0

    def dispatch(alpha):
        served = alpha * D
        if tie:
            gen = cap * (min(1.0, served / C) if C > 0 else 0.0)
            gen[slack] += served - gen.sum()
        else:
            gen = cap * (served / C) if C > 0 else np.zeros(n)
        return gen

    def flows(alpha):
        return _dc_flows(n, pairs, x, dispatch(alpha) - alpha * demand, slack)

    def feasible(f):
        return not np.any(np.abs(f) > limit * (1 + LIMIT_TOL))

    if not supplied or D <= 0:
        alpha = 0.0 if not supplied else 1.0
        iterations = 0
    else:
        alpha = 1.0 if tie else min(1.0, C / D)
        iterations = 0
        f = flows(alpha)
        while not feasible(f):
            if iterations >= MAX_SHED_ITERATIONS:
                lo, hi = 0.0, alpha
                for _ in range(60):
                    mid = 0.5 * (lo + hi)
                    if feasible(flows(mid)):
                        lo = mid
                    else:
                        hi = mid
                alpha = lo
                f = flows(alpha)
                break
            viol = np.abs(f) > limit * (1 + LIMIT_TOL)
            alpha *= float(np.min(limit[viol] / np.abs(f[viol])))
            iterations += 1
            f = flows(alpha)
    gen = dispatch(alpha) if supplied else np.zeros(n)
    f = flows(alpha) if supplied and D > 0 else np.zeros(len(lines))
    return IslandSolution(
        buses=tuple(buses), alpha=alpha,
        served_demand={b: alpha * demand[pos[b]] for b in buses},
        generation={b: float(gen[pos[b]]) for b in buses},
        flows={ln.id: float(v) for ln, v in zip(lines, f)},
        iterations=iterations, supplied=supplied)


def solve_flow(net: PowerNetwork, damage: DamageState, scale: CapacityScale = CapacityScale()) -> FlowSolution:
    idx = net.index
    demands = dict(zip(idx.sub_ids, idx.sub_demand.tolist()))
    capacities = {p.id: p.capacity_mw for p in net.plants}
    islands = island_partition(net, damage)
    sol = FlowSolution(islands)
    for k, isl in enumerate(islands):
        s = solve_island(isl, demands, capacities, scale)
        sol.island_solutions.append(s)
        sol.flows.update(s.flows)
        island_demand = sum(demands.get(b, 0.0) for b in isl.buses)
        for b in isl.buses:
            if b in demands:
                sol.served_demand[b] = s.served_demand[b]
                sol.served[b] = bool(s.supplied and (s.alpha > 0 or island_demand == 0))
        if s.alpha < 1.0 and island_demand > 0:
            sol.shed_log.append((k, isl.buses, s.alpha, s.iterations))
    for sid in idx.sub_ids:
        sol.served.setdefault(sid, False)
        sol.served_demand.setdefault(sid, 0.0)
    return sol


def substation_served_mask(net: PowerNetwork, damage: DamageState, scale: CapacityScale = CapacityScale()):
    sol = solve_flow(net, damage, scale)
    return np.array([sol.served[s] for s in net.index.sub_ids], dtype=bool)


def served_customers(net: PowerNetwork, damage: DamageState, flow: FlowSolution):
    """Per-node served flags (network index order) and total customers with power.

    A node has power when its substation is served, every branch and node on
    the path from the substation is intact, and its own service drop is intact.
    """
    idx = net.index
    sub_ok = np.array([flow.served[s] for s in idx.sub_ids], dtype=bool)
    own = np.ones(idx.n_nodes, dtype=bool)
    for cid in damage.ids(BRANCH):
        own[idx.branch_pos[cid]] = False
    for cid in damage.ids(NODE):
        own[idx.node_pos[cid]] = False
    path_ok = np.zeros(idx.n_nodes, dtype=bool)
    for level in idx.levels:
        par = idx.parent[level]
        up = np.where(par >= 0, path_ok[np.maximum(par, 0)], sub_ok[idx.node_sub[level]])
        path_ok[level] = up & own[level]
    ok = path_ok.copy()
    for cid in damage.ids(CIRCUIT):
        ok[idx.node_pos[cid]] = False
    return ok, int(idx.customers[ok].sum())
