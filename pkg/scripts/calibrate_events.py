"""Fit distribution fragility scale and crew count to the two event targets.

    python3 scripts/calibrate_events.py --out /tmp/cal
"""
import argparse
import json
import tempfile
import time

from compoundrisk import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out")
    args = ap.parse_args()

    cfg = cli.resolve_config("calibrate")
    out = args.out or tempfile.mkdtemp(prefix="calibrate-")
    t0 = time.perf_counter()
    rep = cli.cmd_calibrate(cfg, cli.output_dir(cfg, out, "calibrate"))
    print(json.dumps(rep, indent=1, default=float))
    print(f"wrote calibrated tables to {out} in {time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main()
