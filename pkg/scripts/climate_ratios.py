"""Historical vs future exceedance at d days for outage, heatwave and compound hazards.

    python3 scripts/climate_ratios.py --periods 2000
"""
import argparse
import time

from compoundrisk import cli
from compoundrisk.risk import run_ensemble


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--periods", type=int, default=500)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("-d", type=int, default=5)
    args = ap.parse_args()

    cfg = cli.resolve_config("future", {"n_periods": args.periods, "seed": args.seed})
    inputs = cli.load_inputs(cfg)
    t0 = time.perf_counter()
    hist = run_ensemble(cli.build_model(cfg, inputs, baseline=True), cfg.n_periods, cfg.seed, args.workers)
    fut = run_ensemble(cli.build_model(cfg, inputs), cfg.n_periods, cfg.seed, args.workers)
    rows, floor = cli.relative_risk_rows(hist, fut, cfg.floor)
    r = rows[args.d]
    print(f"{cfg.n_periods} periods per climate, seed {cfg.seed}, {time.perf_counter() - t0:.0f} s")
    print(f"{'metric':>10} {'historical':>12} {'future':>12} {'ratio':>9}")
    for k in ("outage", "heatwave", "compound"):
        print(f"{k:>10} {r[k + '_historical']:12.5f} {r[k + '_future']:12.5f} {r[k + '_ratio']:9.2f}")
    print(f"historical values floored at {floor:.2e}")
    print(f"P90 full restoration: historical {cli.full_restoration_p90(hist):.1f} d, "
          f"future {cli.full_restoration_p90(fut):.1f} d")


if __name__ == "__main__":
    main()
