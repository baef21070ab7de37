"""Wind fragility of network components and sampled event damage."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .grid import PowerNetwork
from .windfield import WindFieldMap, nearest_grid_index

SUBSTATION = "transmission_substation"
LINE = "transmission_line"
NODE = "distribution_node"
BRANCH = "distribution_line"
CIRCUIT = "local_circuit"
CLASSES = (SUBSTATION, LINE, NODE, BRANCH, CIRCUIT)
TRANSMISSION_CLASSES = (SUBSTATION, LINE)


@dataclass(frozen=True)
class ClassFragility:
    median: float   # m/s gust with 50 % failure probability (per km for line classes)
    xi: float       # log standard deviation
    per_km: bool = False

    def __post_init__(self):
        if not (self.median > 0 and self.xi > 0):
            raise ValueError("fragility median and xi must be positive")


@dataclass(frozen=True)
class FragilitySet:
    classes: dict = field(default_factory=dict)
    provenance: str = ""

    def __post_init__(self):
        missing = set(CLASSES) - set(self.classes)
        if missing:
            raise ValueError(f"fragility set lacks classes {sorted(missing)}")
        unknown = set(self.classes) - set(CLASSES)
        if unknown:
            raise ValueError(f"unknown fragility classes {sorted(unknown)}")

    def __getitem__(self, cls) -> ClassFragility:
        try:
            return self.classes[cls]
        except KeyError:
            raise ValueError(f"unknown component class {cls!r}") from None

    def scaled(self, transmission=1.0, distribution=1.0) -> "FragilitySet":
        """Medians multiplied per layer (used by calibration)."""
        out = {}
        for cls, f in self.classes.items():
            k = transmission if cls in TRANSMISSION_CLASSES else distribution
            out[cls] = ClassFragility(f.median * k, f.xi, f.per_km)
        return FragilitySet(out, self.provenance)

    def to_dict(self) -> dict:
        d = {cls: {"median_ms": round(f.median, 6), "xi": f.xi, "per_km": f.per_km}
             for cls, f in self.classes.items()}
        if self.provenance:
            d["provenance"] = self.provenance
        return d


DEFAULT_FRAGILITY = FragilitySet({
    SUBSTATION: ClassFragility(75.0, 0.25),
    LINE: ClassFragility(95.0, 0.30, per_km=True),
    NODE: ClassFragility(80.0, 0.20),
    BRANCH: ClassFragility(60.0, 0.20, per_km=True),
    CIRCUIT: ClassFragility(70.0, 0.20),
}, "uncalibrated placeholder")


def fragility_from_dict(d: dict) -> FragilitySet:
    classes = {}
    for cls, v in d.items():
        if cls == "provenance":
            continue
        if cls not in CLASSES:
            raise ValueError(f"unknown fragility class {cls!r}")
        extra = set(v) - {"median_ms", "xi", "per_km"}
        if extra:
            raise ValueError(f"{cls}: unknown keys {sorted(extra)}")
        classes[cls] = ClassFragility(float(v["median_ms"]), float(v["xi"]), bool(v.get("per_km", False)))
    return FragilitySet(classes, str(d.get("provenance", "")))


def load_fragility(path) -> FragilitySet:
    return fragility_from_dict(json.loads(Path(path).read_text()))


def fragility_probability(cls, gust, exposed_length=1.0, params: FragilitySet = DEFAULT_FRAGILITY,
                          underground=False):
    """Failure probability of one component (or arrays of them) at a gust speed."""
    f = params[cls]
    gust = np.asarray(gust, dtype=float)
    if np.any(gust < 0):
        raise ValueError("gust must be nonnegative")
    with np.errstate(divide="ignore"):
        p = ndtr(np.log(gust / f.median) / f.xi)
    if f.per_km:
        p = 1.0 - (1.0 - p) ** np.asarray(exposed_length, dtype=float)
    p = np.where(underground, 0.0, p)
    return p if p.ndim else float(p)


@dataclass(frozen=True)
class DamageState:
    failed: frozenset   # of (class, component id)
    event_id: str = ""
    seed: int | None = None

    def __len__(self):
        return len(self.failed)

    def ids(self, cls) -> set:
        return {cid for c, cid in self.failed if c == cls}

    def without(self, components) -> "DamageState":
        return DamageState(self.failed - set(components), self.event_id, self.seed)


NO_DAMAGE = DamageState(frozenset())


class ComponentTable:
    """All wind-damageable components of a network in one fixed order.

    Order: substations, transmission lines (ties last), distribution nodes,
    distribution branches, local circuits. Node, branch and circuit blocks
    follow the network index order, so position k in each block is node k.
    """

    def __init__(self, net: PowerNetwork, grid_points=None):
        idx = net.index
        self.net = net
        subs = net.substations
        lines = idx.lines
        ni = idx.n_nodes
        self.n_sub, self.n_line, self.n_node = len(subs), len(lines), ni
        self.classes = np.array([SUBSTATION] * self.n_sub + [LINE] * self.n_line
                                + [NODE] * ni + [BRANCH] * ni + [CIRCUIT] * ni)
        self.ids = ([s.id for s in subs] + [ln.id for ln in lines] + [n.id for n in idx.nodes]
                    + [b.id for b in idx.branches] + [n.id for n in idx.nodes])
        self.length = np.concatenate([np.ones(self.n_sub), [ln.length_km for ln in lines],
                                      np.ones(ni), idx.branch_length, np.ones(ni)])
        self.underground = np.concatenate([
            [s.underground for s in subs], [ln.underground for ln in lines],
            [n.underground for n in idx.nodes], [b.underground for b in idx.branches],
            [n.underground for n in idx.nodes]]).astype(bool)
        self.location = np.array(self._locations())
        self.offsets = np.cumsum([0, self.n_sub, self.n_line, ni, ni, ni])
        self.grid_index = None if grid_points is None else nearest_grid_index(grid_points, self.location)

    def _locations(self):
        net, idx = self.net, self.net.index
        pos = {p.id: (p.lat, p.lon) for p in net.plants}
        pos.update({s.id: (s.lat, s.lon) for s in net.substations})
        node_pos = {n.id: (n.lat, n.lon) for n in idx.nodes}
        out = [(s.lat, s.lon) for s in net.substations]
        for ln in idx.lines:
            a = pos[ln.to_bus]
            b = pos.get(ln.from_bus, a)
            out.append(((a[0] + b[0]) / 2, (a[1] + b[1]) / 2))
        out += [(n.lat, n.lon) for n in idx.nodes]
        for b in idx.branches:
            c = node_pos[b.child]
            p = node_pos.get(b.parent, pos.get(b.parent, c))
            out.append(((c[0] + p[0]) / 2, (c[1] + p[1]) / 2))
        out += [(n.lat, n.lon) for n in idx.nodes]
        return out

    def block(self, cls) -> slice:
        k = CLASSES.index(cls)
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))

    def probabilities(self, gust_at_components, fragilities: FragilitySet) -> np.ndarray:
        p = np.empty(len(self.ids))
        for cls in CLASSES:
            sl = self.block(cls)
            p[sl] = fragility_probability(cls, gust_at_components[sl], self.length[sl], fragilities,
                                          self.underground[sl])
        return p

    def to_state(self, mask, event_id="", seed=None) -> DamageState:
        return DamageState(frozenset((str(self.classes[k]), self.ids[k]) for k in np.flatnonzero(mask)),
                           event_id, seed)

    @cached_property
    def lookup(self) -> dict:
        return {(str(c), i): k for k, (c, i) in enumerate(zip(self.classes, self.ids))}

    def to_mask(self, damage: DamageState) -> np.ndarray:
        lookup = self.lookup
        mask = np.zeros(len(self.ids), dtype=bool)
        for key in damage.failed:
            try:
                mask[lookup[key]] = True
            except KeyError:
                raise KeyError(f"damaged component {key} not in network") from None
        return mask


def draw_failures(probabilities, rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli draws; one uniform per component regardless of p."""
    return rng.random(len(probabilities)) < probabilities


def sample_damage(net: PowerNetwork, windmap: WindFieldMap, fragilities: FragilitySet, seed,
                  event_id="") -> DamageState:
    table = ComponentTable(net)
    gi = nearest_grid_index(windmap.locations, table.location)
    p = table.probabilities(windmap.max_gust[gi], fragilities)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return table.to_state(draw_failures(p, rng), event_id,
                          None if isinstance(seed, np.random.Generator) else seed)
