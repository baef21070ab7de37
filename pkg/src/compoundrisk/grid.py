"""Two-layer power network: meshed transmission plus radial distribution forests.

Network file (JSON)::

    {"manifest": {"plants": 3, "substations": 8, "transmission_lines": 14,
                  "boundary_ties": 2, "distribution_trees": 40,
                  "distribution_branches": 800, "customers": 34000},
     "mw_per_customer": 0.003,
     "plants": [{"id", "lat", "lon", "capacity_mw"}],
     "substations": [{"id", "lat", "lon", "underground"?}],
     "transmission_lines": [{"id", "from", "to", "reactance", "limit_mw",
                             "length_km", "underground"?}],
     "boundary_ties": [{... same fields, "to" is the substation}],
     "distribution_trees": [{"id", "substation",
         "nodes": [{"id", "lat", "lon", "customers", "tract", "critical"?,
                    "underground"?}],
         "branches": [{"id", "parent", "child", "length_km", "underground"?}]}]}

A branch's parent is either a node of the same tree or the tree's
substation (root edges). Boundary ties join a substation to the external
grid, which is modelled as a single bus ``EXTERNAL_BUS``.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

EXTERNAL_BUS = "__external__"
DEFAULT_MW_PER_CUSTOMER = 0.003


class NetworkError(ValueError):
    def __init__(self, message, diagnostics=()):
        super().__init__(message if not diagnostics else message + ": " + "; ".join(diagnostics))
        self.diagnostics = list(diagnostics)


@dataclass(frozen=True)
class Plant:
    id: str
    lat: float
    lon: float
    capacity_mw: float


@dataclass(frozen=True)
class Substation:
    id: str
    lat: float
    lon: float
    underground: bool = False


@dataclass(frozen=True)
class TransmissionLine:
    id: str
    from_bus: str
    to_bus: str
    reactance: float
    limit_mw: float
    length_km: float
    underground: bool = False


@dataclass(frozen=True)
class DistributionNode:
    id: str
    lat: float
    lon: float
    customers: int
    tract: str
    critical: bool = False
    underground: bool = False


@dataclass(frozen=True)
class DistributionBranch:
    id: str
    parent: str
    child: str
    length_km: float
    underground: bool = False


@dataclass(frozen=True)
class DistributionTree:
    id: str
    substation: str
    nodes: tuple[DistributionNode, ...]
    branches: tuple[DistributionBranch, ...]


@dataclass(frozen=True)
class SectorLengthSummary:
    tract: str
    harmonic_mean_length: float
    sector_count: int


@dataclass(frozen=True)
class Sector:
    branch_ids: tuple[str, ...]
    node_ids: tuple[str, ...]   # distribution nodes touched, excluding the substation
    length_km: float
    tree: str
    root_adjacent: bool


@dataclass(frozen=True, eq=False)
class PowerNetwork:
    plants: tuple[Plant, ...]
    substations: tuple[Substation, ...]
    transmission_lines: tuple[TransmissionLine, ...]
    boundary_ties: tuple[TransmissionLine, ...]
    trees: tuple[DistributionTree, ...]
    mw_per_customer: float = DEFAULT_MW_PER_CUSTOMER
    manifest: dict = field(default_factory=dict)

    def structure(self):
        """Comparable plain-data view (used for equality and hashing checks)."""
        return (self.plants, self.substations, self.transmission_lines, self.boundary_ties,
                self.trees, self.mw_per_customer)

    def __eq__(self, other):
        return isinstance(other, PowerNetwork) and self.structure() == other.structure()

    def __hash__(self):
        return hash(self.structure())

    @cached_property
    def index(self) -> "NetworkIndex":
        return NetworkIndex(self)

    @cached_property
    def sectors(self) -> list["Sector"]:
        return network_sectors(self)

    @property
    def total_customers(self) -> int:
        return int(sum(n.customers for t in self.trees for n in t.nodes))

    def tracts(self) -> list[str]:
        return sorted({n.tract for t in self.trees for n in t.nodes})

    def all_lines(self) -> tuple[TransmissionLine, ...]:
        return self.transmission_lines + self.boundary_ties

    def branch(self, branch_id) -> DistributionBranch:
        return self.index.branches[self.index.branch_pos[branch_id]]


class NetworkIndex:
    """Flat array views of a network for vectorised per-event work.

    Distribution nodes are numbered tree by tree in breadth-first order, so a
    node's parent always has a smaller index. Node i's incoming branch is
    branch i.
    """

    def __init__(self, net: PowerNetwork):
        self.net = net
        self.buses = [p.id for p in net.plants] + [s.id for s in net.substations]
        if net.boundary_ties:
            self.buses.append(EXTERNAL_BUS)
        self.bus_pos = {b: i for i, b in enumerate(self.buses)}
        self.n_plants = len(net.plants)
        self.sub_ids = [s.id for s in net.substations]
        self.sub_pos = {s: i for i, s in enumerate(self.sub_ids)}
        self.lines = list(net.all_lines())
        self.line_pos = {ln.id: i for i, ln in enumerate(self.lines)}
        self.line_from = np.array([self.bus_pos[ln.from_bus] for ln in self.lines], dtype=np.int64)
        self.line_to = np.array([self.bus_pos[ln.to_bus] for ln in self.lines], dtype=np.int64)
        self.line_x = np.array([ln.reactance for ln in self.lines])
        self.line_limit = np.array([ln.limit_mw for ln in self.lines])
        self.bus_capacity = np.zeros(len(self.buses))
        for i, p in enumerate(net.plants):
            self.bus_capacity[i] = p.capacity_mw

        nodes, branches, parent, sub, tree_of = [], [], [], [], []
        for tree in net.trees:
            children = defaultdict(list)
            by_child = {}
            for b in tree.branches:
                children[b.parent].append(b.child)
                by_child[b.child] = b
            node_by_id = {n.id: n for n in tree.nodes}
            order, queue = [], [tree.substation]
            while queue:
                nxt = []
                for u in queue:
                    for c in children.get(u, ()):
                        order.append(c)
                        nxt.append(c)
                queue = nxt
            base = len(nodes)
            local = {nid: base + k for k, nid in enumerate(order)}
            for nid in order:
                nodes.append(node_by_id[nid])
                b = by_child[nid]
                branches.append(b)
                parent.append(local.get(b.parent, -1))
                sub.append(self.sub_pos[tree.substation])
                tree_of.append(tree.id)
        self.nodes = nodes
        self.branches = branches
        self.node_pos = {n.id: i for i, n in enumerate(nodes)}
        self.branch_pos = {b.id: i for i, b in enumerate(branches)}
        self.parent = np.array(parent, dtype=np.int64)
        self.node_sub = np.array(sub, dtype=np.int64)
        self.tree_of = tree_of
        self.customers = np.array([n.customers for n in nodes], dtype=np.int64)
        self.critical = np.array([n.critical for n in nodes], dtype=bool)
        self.tract_ids = sorted({n.tract for n in nodes})
        tpos = {t: i for i, t in enumerate(self.tract_ids)}
        self.node_tract = np.array([tpos[n.tract] for n in nodes], dtype=np.int64)
        self.branch_length = np.array([b.length_km for b in branches])
        self.n_nodes = len(nodes)

        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.parent[i] >= 0:
                depth[i] = depth[self.parent[i]] + 1
        self.depth = depth
        self.levels = [np.flatnonzero(depth == d) for d in range(int(depth.max()) + 1)] if self.n_nodes else []

        down = self.customers.copy()
        crit = self.critical.copy()
        for i in range(self.n_nodes - 1, -1, -1):
            p = self.parent[i]
            if p >= 0:
                down[p] += down[i]
                crit[p] |= crit[i]
        self.downstream = down
        self.feeds_critical = crit
        self.sub_customers = np.bincount(self.node_sub, weights=self.customers,
                                         minlength=len(self.sub_ids)).astype(np.int64)
        self.sub_demand = self.sub_customers * net.mw_per_customer

    def path_nodes(self, i):
        """Node indices from node i up to its tree root (inclusive of i)."""
        out = []
        while i >= 0:
            out.append(i)
            i = int(self.parent[i])
        return out


# -- loading & validation ----------------------------------------------------

def _b(obj, key):
    return bool(obj.get(key, False))


def network_from_dict(data: dict, source="<network>") -> PowerNetwork:
    diags = []
    try:
        plants = tuple(Plant(str(p["id"]), float(p["lat"]), float(p["lon"]), float(p["capacity_mw"]))
                       for p in data.get("plants", []))
        subs = tuple(Substation(str(s["id"]), float(s["lat"]), float(s["lon"]), _b(s, "underground"))
                     for s in data["substations"])

        def line(d, tie=False):
            src = EXTERNAL_BUS if tie else str(d["from"])
            return TransmissionLine(str(d["id"]), src, str(d["to"]), float(d["reactance"]),
                                    float(d["limit_mw"]), float(d["length_km"]), _b(d, "underground"))

        lines = tuple(line(d) for d in data.get("transmission_lines", []))
        ties = tuple(line(d, tie=True) for d in data.get("boundary_ties", []))
        trees = []
        for t in data["distribution_trees"]:
            nodes = tuple(DistributionNode(str(n["id"]), float(n["lat"]), float(n["lon"]),
                                           int(n["customers"]), str(n["tract"]),
                                           _b(n, "critical"), _b(n, "underground"))
                          for n in t["nodes"])
            branches = tuple(DistributionBranch(str(b["id"]), str(b["parent"]), str(b["child"]),
                                                float(b["length_km"]), _b(b, "underground"))
                             for b in t["branches"])
            trees.append(DistributionTree(str(t["id"]), str(t["substation"]), nodes, branches))
        mpc = float(data.get("mw_per_customer", DEFAULT_MW_PER_CUSTOMER))
    except (KeyError, TypeError, ValueError) as exc:
        raise NetworkError(f"{source}: malformed network ({exc!r})")
    net = PowerNetwork(plants, subs, lines, ties, tuple(trees), mpc, dict(data.get("manifest", {})))
    diags = validate_network(net)
    if diags:
        raise NetworkError(f"{source}: invalid network", diags)
    return net


def load_network(path) -> PowerNetwork:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise NetworkError(f"{path}: cannot read ({exc})")
    except json.JSONDecodeError as exc:
        raise NetworkError(f"{path}: not valid JSON ({exc})")
    return network_from_dict(data, str(path))


def manifest_totals(net: PowerNetwork) -> dict:
    return {
        "plants": len(net.plants),
        "substations": len(net.substations),
        "transmission_lines": len(net.transmission_lines),
        "boundary_ties": len(net.boundary_ties),
        "distribution_trees": len(net.trees),
        "distribution_branches": sum(len(t.branches) for t in net.trees),
        "customers": net.total_customers,
    }


def validate_network(net: PowerNetwork) -> list[str]:
    """Every invariant violation, one message per offending element."""
    diags = []
    ids = defaultdict(int)
    for group in (net.plants, net.substations, net.transmission_lines, net.boundary_ties):
        for x in group:
            ids[x.id] += 1
    for t in net.trees:
        for x in t.nodes + t.branches:
            ids[x.id] += 1
    diags += [f"duplicate id {k}" for k, v in sorted(ids.items()) if v > 1]

    buses = {p.id for p in net.plants} | {s.id for s in net.substations}
    subs = {s.id for s in net.substations}
    for p in net.plants:
        if p.capacity_mw < 0:
            diags.append(f"plant {p.id}: negative capacity")
    for ln in net.transmission_lines:
        for end in (ln.from_bus, ln.to_bus):
            if end not in buses:
                diags.append(f"transmission line {ln.id}: dangling endpoint {end}")
    for ln in net.boundary_ties:
        if ln.to_bus not in subs:
            diags.append(f"boundary tie {ln.id}: dangling endpoint {ln.to_bus}")
    for ln in net.all_lines():
        if ln.reactance <= 0 or ln.limit_mw <= 0 or ln.length_km < 0:
            diags.append(f"transmission line {ln.id}: reactance and limit must be positive")

    for t in net.trees:
        if t.substation not in subs:
            diags.append(f"tree {t.id}: root substation {t.substation} does not exist")
        node_ids = {n.id for n in t.nodes}
        for n in t.nodes:
            if n.customers < 0:
                diags.append(f"node {n.id}: negative customer count {n.customers}")
        parents_of = defaultdict(list)
        for b in t.branches:
            if b.length_km <= 0:
                diags.append(f"branch {b.id}: length must be positive")
            if b.child not in node_ids:
                diags.append(f"branch {b.id}: dangling endpoint {b.child}")
                continue
            if b.parent != t.substation and b.parent not in node_ids:
                diags.append(f"branch {b.id}: dangling endpoint {b.parent}")
                continue
            parents_of[b.child].append(b)
        for cid, bs in parents_of.items():
            if len(bs) > 1:
                diags.append(f"tree {t.id}: node {cid} has several parents "
                             f"({', '.join(b.id for b in bs)})")
        for cyc in _find_cycles(t):
            diags.append(f"tree {t.id}: cycle through branches {', '.join(cyc)}")
        reached = _reachable(t)
        for n in t.nodes:
            if n.id not in reached:
                diags.append(f"tree {t.id}: orphan node {n.id} not connected to root")

    if not diags and not _transmission_connected(net):
        diags.append("transmission graph is disconnected when undamaged")
    if not diags and not net.plants and not net.boundary_ties:
        diags.append("network has no generation and no boundary tie")
    if not diags and net.manifest:
        totals = manifest_totals(net)
        for k, v in net.manifest.items():
            if k in totals and int(v) != totals[k]:
                diags.append(f"manifest {k}={v} does not match content ({totals[k]})")
    return diags


def _find_cycles(tree: DistributionTree) -> list[list[str]]:
    """Undirected cycles among the tree's branches, each as its branch ids."""
    parent = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    adj = defaultdict(list)
    cycles = []
    for b in tree.branches:
        ra, rb = find(b.parent), find(b.child)
        if ra == rb:
            path = _path_between(adj, b.parent, b.child)
            cycles.append(sorted(path + [b.id]))
        else:
            parent[ra] = rb
        adj[b.parent].append((b.child, b.id))
        adj[b.child].append((b.parent, b.id))
    return cycles


def _path_between(adj, a, z):
    stack, seen = [(a, [])], {a}
    while stack:
        u, path = stack.pop()
        if u == z:
            return path
        for v, eid in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append((v, path + [eid]))
    return []


def _reachable(tree: DistributionTree) -> set[str]:
    children = defaultdict(list)
    for b in tree.branches:
        children[b.parent].append(b.child)
    seen, stack = set(), [tree.substation]
    while stack:
        u = stack.pop()
        for c in children[u]:
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return seen


def _transmission_connected(net: PowerNetwork) -> bool:
    buses = [p.id for p in net.plants] + [s.id for s in net.substations]
    if net.boundary_ties:
        buses.append(EXTERNAL_BUS)
    adj = defaultdict(set)
    for ln in net.transmission_lines:
        adj[ln.from_bus].add(ln.to_bus)
        adj[ln.to_bus].add(ln.from_bus)
    for ln in net.boundary_ties:
        adj[EXTERNAL_BUS].add(ln.to_bus)
        adj[ln.to_bus].add(EXTERNAL_BUS)
    seen, stack = {buses[0]}, [buses[0]]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == len(buses)


def network_to_dict(net: PowerNetwork) -> dict:
    def num(x):
        return float(format(float(x), ".10g"))

    def line(ln):
        d = {"id": ln.id, "from": ln.from_bus, "to": ln.to_bus, "reactance": num(ln.reactance),
             "limit_mw": num(ln.limit_mw), "length_km": num(ln.length_km)}
        if ln.underground:
            d["underground"] = True
        return d

    trees = []
    for t in net.trees:
        nodes = []
        for n in t.nodes:
            d = {"id": n.id, "lat": num(n.lat), "lon": num(n.lon), "customers": n.customers,
                 "tract": n.tract}
            if n.critical:
                d["critical"] = True
            if n.underground:
                d["underground"] = True
            nodes.append(d)
        branches = []
        for b in t.branches:
            d = {"id": b.id, "parent": b.parent, "child": b.child, "length_km": num(b.length_km)}
            if b.underground:
                d["underground"] = True
            branches.append(d)
        trees.append({"id": t.id, "substation": t.substation, "nodes": nodes, "branches": branches})
    subs = []
    for s in net.substations:
        d = {"id": s.id, "lat": num(s.lat), "lon": num(s.lon)}
        if s.underground:
            d["underground"] = True
        subs.append(d)
    return {
        "manifest": manifest_totals(net),
        "mw_per_customer": net.mw_per_customer,
        "plants": [{"id": p.id, "lat": num(p.lat), "lon": num(p.lon),
                    "capacity_mw": num(p.capacity_mw)} for p in net.plants],
        "substations": subs,
        "transmission_lines": [line(ln) for ln in net.transmission_lines],
        "boundary_ties": [line(ln) for ln in net.boundary_ties],
        "distribution_trees": trees,
    }


def dump_network(net: PowerNetwork, path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net), indent=1) + "\n")


# -- topology queries --------------------------------------------------------

def customers_downstream(net: PowerNetwork, branch_id: str) -> int:
    idx = net.index
    if branch_id not in idx.branch_pos:
        raise KeyError(f"{branch_id} is not a distribution branch")
    return int(idx.downstream[idx.branch_pos[branch_id]])


def tree_sectors(tree: DistributionTree) -> list[Sector]:
    """Maximal unbranched chains of branches (Sector) of one tree.

    Chains end at the root, at leaves and at nodes whose tree degree is not 2.
    """
    children = defaultdict(list)
    for b in tree.branches:
        children[b.parent].append(b)
    for v in children.values():
        v.sort(key=lambda b: b.id)
    out = []
    starts = [(tree.substation, True)]
    while starts:
        start, at_root = starts.pop()
        for b in children[start]:
            chain, nodes = [b], [b.child]
            while len(children[chain[-1].child]) == 1:
                nb = children[chain[-1].child][0]
                chain.append(nb)
                nodes.append(nb.child)
            if start != tree.substation:
                nodes.insert(0, start)
            out.append(Sector(tuple(x.id for x in chain), tuple(nodes),
                              float(sum(x.length_km for x in chain)), tree.id, at_root))
            if children[chain[-1].child]:
                starts.append((chain[-1].child, False))
    return out


def network_sectors(net: PowerNetwork) -> list[Sector]:
    return [s for t in net.trees for s in tree_sectors(t)]


def harmonic_mean_sector_length(net: PowerNetwork, tract: str, sectors=None) -> SectorLengthSummary:
    if sectors is None:
        sectors = net.sectors
    tract_of = {n.id: n.tract for t in net.trees for n in t.nodes}
    lengths = [s.length_km for s in sectors if any(tract_of[n] == tract for n in s.node_ids)]
    if not lengths:
        return SectorLengthSummary(tract, float("nan"), 0)
    return SectorLengthSummary(tract, len(lengths) / sum(1.0 / L for L in lengths), len(lengths))


def with_underground(net: PowerNetwork, component_ids) -> PowerNetwork:
    """Copy of the network with the given lines/branches flagged underground."""
    ids = set(component_ids)
    known = {ln.id for ln in net.all_lines()} | {b.id for t in net.trees for b in t.branches}
    missing = ids - known
    if missing:
        raise KeyError(f"unknown components: {sorted(missing)}")
    lines = tuple(replace(ln, underground=True) if ln.id in ids else ln for ln in net.transmission_lines)
    ties = tuple(replace(ln, underground=True) if ln.id in ids else ln for ln in net.boundary_ties)
    trees = tuple(replace(t, branches=tuple(replace(b, underground=True) if b.id in ids else b
                                            for b in t.branches)) for t in net.trees)
    return replace(net, transmission_lines=lines, boundary_ties=ties, trees=trees)
