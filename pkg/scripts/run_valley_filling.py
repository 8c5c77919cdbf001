"""Valley filling and flattening on the default EV-charging game.

Prints per-hour EV aggregates for each epsilon and their variance, and
writes the CSVs (plus SVGs) to --out.
"""
import argparse
import sys

import numpy as np

from srwe.cli import parse_config, run_command
from srwe.scenarios import run_valley_filling


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="paper_default.json")
    ap.add_argument("--out", default="out/valley")
    args = ap.parse_args()

    cfg = parse_config(args.config)
    table = run_valley_filling(cfg.ev, cfg.solver)
    for eps, s in table.aggregates.items():
        print(f"eps={eps:g}  var={np.var(s):.4f}  peak={s.max():.3f} kW")
    return run_command(["valley", "--config", args.config, "--out", args.out, "--format", "csv+svg"])


if __name__ == "__main__":
    sys.exit(main())
