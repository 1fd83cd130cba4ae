#!/usr/bin/env python3
"""Run the random-bias experiment end to end and print the headline tables."""

import argparse
import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from fairlend.experiment import load_config, run_experiment  # noqa: E402

HERE = os.path.dirname(os.path.abspath(__file__))
DEFAULT_CONFIG = os.path.join(HERE, "..", "configs", "random_bias.toml")


def summarize(out_dir):
    with open(os.path.join(out_dir, "report.json"), "r", encoding="utf-8") as fh:
        report = json.load(fh)
    print("\nPredicted denial rates (test split):")
    print(f"{'row':32s} {'group':>8s} {'non_group':>10s} {'all':>8s}")
    for row, cells in sorted(report["denial_rates"].items()):
        vals = [cells[p] for p in ("group", "non_group", "all")]
        print(f"{row:32s} " + " ".join(f"{v:8.4f}" if v is not None else f"{'NA':>8s}" for v in vals))
    print("\nAUC vs actual labels (all rows):")
    for method, cells in sorted(report["auc"].items()):
        v = cells["all"]["actual"]
        print(f"{method:32s} {v:.4f}" if v is not None else f"{method:32s} NA")
    print("\nCounterfactual-denial panel (denial rate among rows flipped by injection):")
    for method, panel in sorted(report["disposition_panels"].items()):
        v = panel["counterfactual_denial"]["all"]
        print(f"{method:32s} {v:.4f}" if v is not None else f"{method:32s} NA")


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
