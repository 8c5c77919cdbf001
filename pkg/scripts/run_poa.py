"""Price of anarchy of the robust equilibrium as epsilon varies."""
import argparse
import sys

from srwe.cli import parse_config, run_command
from srwe.scenarios import run_poa


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="paper_poa.json")
    ap.add_argument("--out", default="out/poa")
    args = ap.parse_args()

    cfg = parse_config(args.config)
    table = run_poa(cfg.ev, cfg.poa, cfg.solver)
    for e, v in zip(table.epsilons, table.values):
        print(f"eps={e:<4g} PoA={v:.6f}")
    if table.failed:
        print(f"no convergence at {table.failed}", file=sys.stderr)
    best = min(zip(table.values, table.epsilons))
    print(f"minimum {best[0]:.6f} at eps={best[1]:g}")
    return run_command(["poa", "--config", args.config, "--out", args.out, "--format", "csv+svg"])


if __name__ == "__main__":
    sys.exit(main())
