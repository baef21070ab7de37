"""Ensemble statistics: exceedance fractions, relative climate risk, tract maps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import PowerNetwork, harmonic_mean_sector_length

QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


@dataclass(frozen=True)
class Band:
    mean: float
    std: float
    quantiles: tuple

    def as_dict(self, prefix=""):
        d = {f"{prefix}mean": self.mean, f"{prefix}std": self.std}
        d.update({f"{prefix}q{int(round(q * 100)):02d}": v for q, v in zip(QUANTILES, self.quantiles)})
        return d


def band(values) -> Band:
    v = np.asarray(values, dtype=float)
    if not len(v):
        raise ValueError("empty sample")
    return Band(float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0,
                tuple(float(x) for x in np.quantile(v, QUANTILES)))


@dataclass(frozen=True)
class Exceedance:
    d: float
    outage: Band
    compound: Band


def _arrays(ensemble):
    """(periods x nodes) outage and compound arrays plus node customer weights."""
    if hasattr(ensemble, "outage_days"):
        return (np.asarray(ensemble.outage_days), np.asarray(ensemble.compound_days),
                np.asarray(ensemble.customers, dtype=float))
    out, comp, cust = ensemble
    return np.atleast_2d(out), np.atleast_2d(comp), np.asarray(cust, dtype=float)


def period_fractions(durations, customers, d, mask=None) -> np.ndarray:
    """Customer-weighted fraction with a duration above d, one value per period."""
    w = customers if mask is None else customers * mask
    tot = w.sum()
    if tot <= 0:
        return np.zeros(len(durations))
    return (durations > d) @ w / tot


def exceedance_stats(ensemble, d) -> Exceedance:
    """Fraction of customers with at least one outage / compound hazard longer than d days."""
    out, comp, cust = _arrays(ensemble)
    if not len(out):
        raise ValueError("ensemble is empty")
    return Exceedance(d, band(period_fractions(out, cust, d)), band(period_fractions(comp, cust, d)))


def exceedance_table(ensemble, days=range(0, 31)):
    rows = []
    for d in days:
        e = exceedance_stats(ensemble, d)
        row = {"d": d}
        row.update(e.outage.as_dict("outage_"))
        row.update(e.compound.as_dict("compound_"))
        rows.append(row)
    return rows


@dataclass(frozen=True)
class RelativeRiskCurve:
    d: np.ndarray
    future: np.ndarray
    historical: np.ndarray       # floored
    ratio: np.ndarray
    floor: float


def heatwave_probabilities(durations, days) -> np.ndarray:
    v = np.asarray(durations, dtype=float)
    if not len(v):
        raise ValueError("no events")
    return np.array([(v > d).mean() for d in days])


def _heatwave_durations(ensemble):
    if hasattr(ensemble, "events"):
        return [e.heatwave_days for e in ensemble.events]
    return list(ensemble)


def heatwave_probability_curve(historical, future, floor=None, days=range(0, 31)) -> RelativeRiskCurve:
    """P(post-landfall heatwave longer than d days) per climate and their ratio.

    Inputs are ensembles or plain lists of per-event heatwave durations. The
    historical probability is floored at 1 / (number of historical events)
    unless a floor is given.
    """
    h = _heatwave_durations(historical)
    f = _heatwave_durations(future)
    days = np.asarray(list(days))
    if floor is None:
        floor = 1.0 / len(h) if h else 1.0
    ph = np.maximum(heatwave_probabilities(h, days), floor)
    pf = heatwave_probabilities(f, days)
    return RelativeRiskCurve(days, pf, ph, pf / ph, float(floor))


def tract_risk_map(ensemble, d, tracts=None, tract_ids=None):
    """Per-tract expected fraction of customers with a >d-day outage / compound hazard."""
    out, comp, cust = _arrays(ensemble)
    if tracts is None:
        tracts, tract_ids = ensemble.tracts, ensemble.tract_ids
    tracts = np.asarray(tracts)
    rows = []
    for k, tid in enumerate(tract_ids):
        m = tracts == k
        rows.append({"tract": tid, "customers": int(cust[m].sum()),
                     "outage_fraction": float(period_fractions(out, cust, d, m).mean()),
                     "compound_fraction": float(period_fractions(comp, cust, d, m).mean())})
    return rows


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    slope_se: float
    intercept_se: float

    def band(self, x):
        """Fitted line and its +/- 1 sigma envelope at x (parameter covariance ignored)."""
        x = np.asarray(x, dtype=float)
        y = self.intercept + self.slope * x
        s = np.hypot(self.intercept_se, self.slope_se * x)
        return y, y - s, y + s


def linear_fit(x, y) -> LinearFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        raise ValueError("need at least two points")
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    dof = len(x) - 2
    if dof > 0:
        resid = y - A @ coef
        s2 = resid @ resid / dof
        cov = s2 * np.linalg.pinv(A.T @ A)
        se = np.sqrt(np.clip(np.diag(cov), 0, None))
    else:
        se = np.zeros(2)
    return LinearFit(float(coef[1]), float(coef[0]), float(se[1]), float(se[0]))


def length_risk_correlation(network: PowerNetwork, ensemble, d=5):
    """Per-tract (harmonic mean sector length, >d-day outage fraction) and a linear fit."""
    rows = tract_risk_map(ensemble, d)
    sectors = network.sectors
    pairs = []
    for r in rows:
        s = harmonic_mean_sector_length(network, r["tract"], sectors)
        if s.sector_count:
            pairs.append((r["tract"], s.harmonic_mean_length, r["outage_fraction"]))
    if len(pairs) < 3:
        raise ValueError("need at least 3 tracts with sectors")
    fit = linear_fit([p[1] for p in pairs], [p[2] for p in pairs])
    return pairs, fit
