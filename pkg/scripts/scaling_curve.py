"""Disruption scaling curve W(x) vs P(x) and the top-20% impact share.

    python3 scripts/scaling_curve.py --periods 100
"""
import argparse

import numpy as np

from compoundrisk import cli
from compoundrisk.risk import run_ensemble
from compoundrisk.scaling import pooled_curve
from compoundrisk.stats import length_risk_correlation


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="historical")
    ap.add_argument("--periods", type=int, default=100)
    args = ap.parse_args()

    cfg = cli.resolve_config(args.config, {"n_periods": args.periods})
    inputs = cli.load_inputs(cfg)
    ens = run_ensemble(cli.build_model(cfg, inputs, collect_impacts=True), cfg.n_periods, cfg.seed)
    per_event = [e.impacts for e in ens.events if e.impacts]
    c = pooled_curve(per_event)
    print(f"{len(per_event)} damaging events, {c.n_disruptions} disruptions")
    print(f"top-20% share of interrupted customers: {c.top20_share:.3f}")
    print(f"W(x) >= P(x) everywhere: {bool(np.all(c.W >= c.P - 1e-12))}")
    for q in (0.5, 0.2, 0.1, 0.05, 0.01):
        k = int(np.searchsorted(-c.P, -q))
        if k < len(c.x):
            print(f"  P = {c.P[k]:.3f}  W = {c.W[k]:.3f}  (x > {c.x[k]:g} customers)")
    pairs, fit = length_risk_correlation(inputs.network, ens, cfg.outage_days)
    print(f"tract outage risk vs harmonic-mean sector length over {len(pairs)} tracts: "
          f"slope {fit.slope:.4f} +/- {fit.slope_se:.4f} per km")


if __name__ == "__main__":
    main()
