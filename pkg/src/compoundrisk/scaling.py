"""Disruption attribution and the W(x)/P(x) impact scaling curve.

Every customer without power right after landfall is charged to the failed
component nearest to it on the path back to an energised source: its own
service drop, then poles and wires walking up the tree, then the substation,
then the closest failed transmission line. A disruption is a failed
component that collects at least one customer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .damage import BRANCH, CIRCUIT, LINE, NODE, SUBSTATION, ComponentTable, DamageState
from .grid import PowerNetwork


@dataclass(frozen=True)
class ScalingCurve:
    x: np.ndarray          # sorted distinct impact values
    P: np.ndarray          # fraction of disruptions with impact > x
    W: np.ndarray          # fraction of interrupted customers from those disruptions
    top20_share: float
    n_disruptions: int

    @property
    def empty(self) -> bool:
        return self.n_disruptions == 0


EMPTY_CURVE = ScalingCurve(np.zeros(0), np.zeros(0), np.zeros(0), float("nan"), 0)


def _nearest_failed_line(net: PowerNetwork, sub: str, failed_lines: set) -> str | None:
    """Failed transmission line fewest hops from `sub` over the intact graph; lowest id on ties."""
    if not failed_lines:
        return None
    adj = {}
    for ln in net.index.lines:
        adj.setdefault(ln.from_bus, []).append(ln)
        adj.setdefault(ln.to_bus, []).append(ln)
    seen, frontier = {sub}, [sub]
    while frontier:
        hits = sorted({ln.id for b in frontier for ln in adj.get(b, ()) if ln.id in failed_lines})
        if hits:
            return hits[0]
        nxt = []
        for b in frontier:
            for ln in adj.get(b, ()):
                o = ln.to_bus if ln.from_bus == b else ln.from_bus
                if o not in seen:
                    seen.add(o)
                    nxt.append(o)
        frontier = sorted(nxt)
    return None


class Attributor:
    """Vectorised attribution over a component table."""

    def __init__(self, net: PowerNetwork, table: ComponentTable | None = None):
        self.net = net
        self.table = table or ComponentTable(net)
        self.idx = net.index
        t = self.table
        self.node0 = t.block(NODE).start
        self.branch0 = t.block(BRANCH).start
        self.circ0 = t.block(CIRCUIT).start
        self.sub0 = t.block(SUBSTATION).start
        self.line_sl = t.block(LINE)

    def __call__(self, failed: np.ndarray, sub_served) -> dict:
        """Failed component key -> customers charged to it (zero-impact entries dropped).

        Customers of an unserved substation whose trees are intact go to the
        substation when it failed itself, otherwise to the nearest failed
        line, otherwise to a synthetic ("island", substation) disruption.
        """
        idx, t = self.idx, self.table
        n = idx.n_nodes
        ar = np.arange(n)
        # a failed pole at node i is nearer its customers than the wire feeding it
        own = np.where(failed[self.node0 + ar], self.node0 + ar,
                       np.where(failed[self.branch0 + ar], self.branch0 + ar, -1))
        sub_key = np.full(len(idx.sub_ids), -1, dtype=np.int64)
        extra = {}
        failed_lines = None
        for s in np.flatnonzero(~np.asarray(sub_served, dtype=bool)):
            if failed[self.sub0 + s]:
                sub_key[s] = self.sub0 + s
                continue
            if failed_lines is None:
                ks = np.flatnonzero(failed[self.line_sl]) + self.line_sl.start
                failed_lines = {t.ids[k]: k for k in ks}
            lid = _nearest_failed_line(self.net, idx.sub_ids[s], set(failed_lines))
            if lid is not None:
                sub_key[s] = failed_lines[lid]
            else:
                sub_key[s] = len(t.ids) + s
                extra[len(t.ids) + s] = ("island", idx.sub_ids[s])
        nearest = np.full(n, -1, dtype=np.int64)
        for level in idx.levels:
            par = idx.parent[level]
            up = np.where(par >= 0, nearest[np.maximum(par, 0)], sub_key[idx.node_sub[level]])
            nearest[level] = np.where(own[level] >= 0, own[level], up)
        nearest = np.where(failed[self.circ0 + ar], self.circ0 + ar, nearest)
        hit = (nearest >= 0) & (idx.customers > 0)
        if not hit.any():
            return {}
        keys, inv = np.unique(nearest[hit], return_inverse=True)
        sums = np.bincount(inv, weights=idx.customers[hit])
        out = {}
        for k, v in zip(keys.tolist(), sums.tolist()):
            key = extra[k] if k >= len(t.ids) else (str(t.classes[k]), t.ids[k])
            out[key] = int(v)
        return out


def attribute_disruptions(net: PowerNetwork, damage: DamageState, sub_served,
                          attributor: Attributor | None = None) -> dict:
    """Map failed component key -> customers charged to it.

    ``sub_served`` is a boolean per substation in network index order.
    """
    attributor = attributor or Attributor(net)
    return attributor(attributor.table.to_mask(damage), sub_served)


def attribution_brute_force(net: PowerNetwork, damage: DamageState, sub_served) -> dict:
    """Per-customer path walk; slow reference for tests."""
    idx = net.index
    failed = set(damage.failed)
    sub_served = dict(zip(idx.sub_ids, sub_served))
    branch_of = {b.child: b for b in idx.branches}
    tree_sub = {n.id: idx.sub_ids[idx.node_sub[i]] for i, n in enumerate(idx.nodes)}
    impact = {}
    for node in idx.nodes:
        if node.customers == 0:
            continue
        key = None
        if (CIRCUIT, node.id) in failed:
            key = (CIRCUIT, node.id)
        else:
            cur = node.id
            while cur in branch_of:
                if (NODE, cur) in failed:
                    key = (NODE, cur)
                    break
                b = branch_of[cur]
                if (BRANCH, b.id) in failed:
                    key = (BRANCH, b.id)
                    break
                cur = b.parent
            if key is None:
                sid = tree_sub[node.id]
                if sub_served[sid]:
                    continue
                if (SUBSTATION, sid) in failed:
                    key = (SUBSTATION, sid)
                else:
                    lid = _nearest_failed_line(net, sid, damage.ids(LINE))
                    key = (LINE, lid) if lid is not None else ("island", sid)
        impact[key] = impact.get(key, 0) + node.customers
    return impact


def scaling_curve(impacts) -> ScalingCurve:
    """W(x), P(x) over the positive impacts; top-20 % share from the Lorenz curve."""
    v = np.asarray([i for i in impacts if i > 0], dtype=float)
    if not len(v):
        return EMPTY_CURVE
    v = np.sort(v)
    n, total = len(v), v.sum()
    x = np.concatenate([[0.0], np.unique(v)])
    # number / sum of impacts strictly above each x
    above = n - np.searchsorted(v, x, side="right")
    csum = np.concatenate([[0.0], np.cumsum(v)])
    w_above = (total - csum[n - above]) / total
    P = above / n
    return ScalingCurve(x, P, w_above, top_share(v, 0.2), n)


def top_share(impacts, frac=0.2) -> float:
    """Share of total impact carried by the largest `frac` of disruptions,
    linearly interpolated between whole disruptions."""
    v = np.sort(np.asarray(impacts, dtype=float))[::-1]
    v = v[v > 0]
    if not len(v):
        return float("nan")
    k = frac * len(v)
    whole = int(np.floor(k))
    s = v[:whole].sum() + (k - whole) * (v[whole] if whole < len(v) else 0.0)
    return float(s / v.sum())


def event_impacts(net: PowerNetwork, damage: DamageState, flow) -> list[int]:
    sub_ok = [flow.served[s] for s in net.index.sub_ids]
    return sorted(attribute_disruptions(net, damage, sub_ok).values(), reverse=True)


def pooled_curve(per_event_impacts) -> ScalingCurve:
    return scaling_curve([i for ev in per_event_impacts for i in ev])


def curve_rows(curve: ScalingCurve):
    return [{"x": float(a), "P": float(p), "W": float(w)} for a, p, w in zip(curve.x, curve.P, curve.W)]
