"""Fit fragility medians and crew counts to observed event outage fractions.

Each target names a single-storm event, the observed fraction of customers
out longer than five days, and a tolerance. A target may also give the
time to full restoration, which is what pins down crew numbers. The search is a coordinate
descent over per-layer fragility-median scales and crew counts, with
replicate damage draws pinned to fixed seeds so the objective is
deterministic.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .catalog import SyntheticStorm, load_catalog
from .damage import ComponentTable, FragilitySet, draw_failures
from .grid import PowerNetwork
from .powerflow import CapacityScale
from .recovery import RepairPlanner, RepairResources, Restorer
from .windfield import WindParams, event_wind_map, nearest_grid_index


class CalibrationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Target:
    name: str
    storm: SyntheticStorm
    outage_fraction: float
    tolerance: float
    days: float = 5.0
    restoration_days: float | None = None       # mean full-restoration time over replicates
    restoration_tolerance: float = 3.0


def load_targets(path) -> list[Target]:
    """Targets JSON: {"events": [{name, catalog, target, tolerance[, days]}]}; paths relative to the file."""
    path = Path(path)
    d = json.loads(path.read_text())
    out = []
    for e in d["events"]:
        extra = set(e) - {"name", "catalog", "target", "tolerance", "days", "restoration_days",
                          "restoration_tolerance", "note"}
        if extra:
            raise ValueError(f"{path}: unknown target keys {sorted(extra)}")
        cat = load_catalog(path.parent / e["catalog"])
        rd = e.get("restoration_days")
        out.append(Target(e["name"], cat.storms[0], float(e["target"]), float(e["tolerance"]),
                          float(e.get("days", 5.0)), None if rd is None else float(rd),
                          float(e.get("restoration_tolerance", 3.0))))
    return out


class EventEvaluator:
    """Outage statistics of single events under candidate parameters."""

    def __init__(self, net: PowerNetwork, grid_points, wind: WindParams = WindParams(), replicates=16,
                 seed=0, time_step=0.5):
        self.net = net
        self.table = ComponentTable(net)
        self.grid_index = nearest_grid_index(grid_points, self.table.location)
        self.grid_points = np.asarray(grid_points)
        self.planner = RepairPlanner(net, self.table)
        self.restorer = Restorer(net, self.table, CapacityScale())
        self.wind, self.replicates, self.seed, self.time_step = wind, replicates, seed, time_step
        self._gust = {}

    def gust(self, storm: SyntheticStorm) -> np.ndarray:
        g = self._gust.get(storm)
        if g is None:
            used = np.unique(self.grid_index)
            gm = event_wind_map(storm, self.grid_points[used], self.wind, self.time_step).max_gust
            g = gm[np.searchsorted(used, self.grid_index)]
            self._gust[storm] = g
        return g

    def restoration(self, storm, fragility: FragilitySet, resources: RepairResources):
        p = self.table.probabilities(self.gust(storm), fragility)
        out = []
        for r in range(self.replicates):
            ss = np.random.SeedSequence([int(self.seed), r])
            failed = draw_failures(p, np.random.default_rng(ss))
            done = self.planner.schedule(failed, resources, int(ss.generate_state(1, np.uint64)[0]))
            out.append(self.restorer.restoration(done) if failed.any() else np.zeros(self.net.index.n_nodes))
        return out

    def outage_fraction(self, storm, fragility, resources, days=5.0) -> float:
        return self.summary(storm, fragility, resources, days)[0]

    def summary(self, storm, fragility, resources, days=5.0) -> tuple[float, float]:
        """(mean fraction of customers out longer than `days`, mean full-restoration days)."""
        c = self.net.index.customers
        tot = c.sum()
        Rs = self.restoration(storm, fragility, resources)
        return (float(np.mean([c[R > 24.0 * days].sum() / tot for R in Rs])),
                float(np.mean([R.max() for R in Rs])) / 24.0)


@dataclass
class CalibrationResult:
    fragility: FragilitySet
    resources: RepairResources
    scales: dict
    achieved: dict
    residuals: dict
    iterations: int
    converged: bool
    history: list = field(default_factory=list)

    def report(self) -> dict:
        return {"converged": self.converged, "iterations": self.iterations, "scales": self.scales,
                "transmission_crews": self.resources.transmission_crews,
                "distribution_crews": self.resources.distribution_crews,
                "achieved": self.achieved, "residuals": self.residuals}


def _restoration_key(t: Target) -> str:
    return f"{t.name}:restoration_days"


def _objective(achieved, targets):
    total = 0.0
    for t in targets:
        total += ((achieved[t.name] - t.outage_fraction) / t.tolerance) ** 2
        if t.restoration_days is not None:
            total += ((achieved[_restoration_key(t)] - t.restoration_days) / t.restoration_tolerance) ** 2
    return total


def _met(achieved, targets):
    for t in targets:
        if abs(achieved[t.name] - t.outage_fraction) > t.tolerance:
            return False
        if t.restoration_days is not None and \
                abs(achieved[_restoration_key(t)] - t.restoration_days) > t.restoration_tolerance:
            return False
    return True


def calibrate(evaluator: EventEvaluator, targets, fragility: FragilitySet, resources: RepairResources,
              max_iterations=60, crew_bounds=(1, 200), scale_bounds=(0.2, 5.0)) -> CalibrationResult:
    """Coordinate search; stops as soon as every target is inside its tolerance."""
    targets = list(targets)

    def evaluate(state):
        frag = fragility.scaled(state["transmission_scale"], state["distribution_scale"])
        res = replace(resources, transmission_crews=state["transmission_crews"],
                      distribution_crews=state["distribution_crews"])
        ach = {}
        for t in targets:
            ach[t.name], full = evaluator.summary(t.storm, frag, res, t.days)
            if t.restoration_days is not None:
                ach[_restoration_key(t)] = full
        return ach, frag, res

    def ok(ach):
        return _met(ach, targets)

    state = {"distribution_scale": 1.0, "transmission_scale": 1.0,
             "transmission_crews": resources.transmission_crews,
             "distribution_crews": resources.distribution_crews}
    steps = {"distribution_scale": 0.25, "transmission_scale": 0.25,
             "distribution_crews": max(1, resources.distribution_crews // 4),
             "transmission_crews": max(1, resources.transmission_crews // 2)}
    ach, frag, res = evaluate(state)
    best = _objective(ach, targets)
    history = [(dict(state), best)]
    it = 0
    while not ok(ach) and it < max_iterations:
        it += 1
        improved = False
        for key in ("distribution_scale", "distribution_crews", "transmission_scale", "transmission_crews"):
            for sign in (1, -1):
                cand = dict(state)
                if key.endswith("scale"):
                    cand[key] = float(np.clip(state[key] * (1 + sign * steps[key]), *scale_bounds))
                else:
                    cand[key] = int(np.clip(state[key] + sign * steps[key], *crew_bounds))
                if cand[key] == state[key]:
                    continue
                a, f, r = evaluate(cand)
                obj = _objective(a, targets)
                if obj < best - 1e-12:
                    state, best, ach, frag, res = cand, obj, a, f, r
                    improved = True
                    break
            if ok(ach):
                break
        history.append((dict(state), best))
        if not improved:
            shrink = False
            for key in steps:
                if key.endswith("scale"):
                    if steps[key] > 0.01:
                        steps[key] /= 2
                        shrink = True
                elif steps[key] > 1:
                    steps[key] = max(1, steps[key] // 2)
                    shrink = True
            if not shrink:
                break
    converged = ok(ach)
    if not converged:
        warnings.warn(f"calibration did not meet all targets after {it} iterations; reporting best found",
                      CalibrationWarning, stacklevel=2)
    scales = {"distribution": state["distribution_scale"], "transmission": state["transmission_scale"]}
    residuals = {t.name: ach[t.name] - t.outage_fraction for t in targets}
    residuals.update({_restoration_key(t): ach[_restoration_key(t)] - t.restoration_days
                      for t in targets if t.restoration_days is not None})
    prov = (f"calibrated: distribution median x{scales['distribution']:.4g}, "
            f"transmission median x{scales['transmission']:.4g} from "
            f"{fragility.provenance or 'initial set'}")
    frag = replace(frag, provenance=prov)
    return CalibrationResult(frag, res, scales, ach, residuals, it, converged, history)
