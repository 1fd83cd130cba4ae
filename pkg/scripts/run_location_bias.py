#!/usr/bin/env python3
"""Run the location-bias (tract-targeted) experiment and print the panels."""

import argparse
import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from fairlend.experiment import load_config, run_experiment  # noqa: E402

HERE = os.path.dirname(os.path.abspath(__file__))
DEFAULT_CONFIG = os.path.join(HERE, "..", "configs", "location_bias.toml")


def summarize(out_dir):
    with open(os.path.join(out_dir, "report.json"), "r", encoding="utf-8") as fh:
        report = json.load(fh)
    print("\nDisposition panels (denial rate, all rows in cell):")
    print(f"{'method':32s} {'approved_both':>14s} {'cf_denial':>10s} {'actual_denial':>14s}")
    for method, panel in sorted(report["disposition_panels"].items()):
        cells = [
            panel["approved_both"]["all"],
            panel["counterfactual_denial"]["all"],
            panel["actual_denial"]["all"],
        ]
        print(f"{method:32s} " + " ".join(f"{v:12.4f}" if v is not None else f"{'NA':>12s}" for v in cells))
    cf = report["disposition_panels"]
    mx = cf["max_over_groups"]["counterfactual_denial"]["all"]
    av = cf["average_over_prohibited"]["counterfactual_denial"]["all"]
    print(f"\ncounterfactual denials removed: max={1-mx:.3f} avg(group,county)={1-av:.3f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=DEFAULT_CONFIG)
    ap.add_argument("--out-dir", default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    cfg = load_config(args.config, seed_override=args.seed, out_dir_override=args.out_dir)
    run_experiment(cfg, n_threads=args.threads)
    summarize(cfg.out_dir)


if __name__ == "__main__":
    main()
