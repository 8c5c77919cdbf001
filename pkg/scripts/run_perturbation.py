"""Realised cost of equilibrium schedules under random two-hour load bumps."""
import argparse
import sys

from srwe.cli import parse_config, run_command
from srwe.scenarios import build_ev_charging, run_perturbation, solve_for_epsilons


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="paper_default.json")
    ap.add_argument("--out", default="out/perturb")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = parse_config(args.config)
    cfg.perturbation.seed = args.seed
    game = build_ev_charging(cfg.ev)
    runs = solve_for_epsilons(game, cfg.perturbation.epsilons, cfg.solver)
    stats = run_perturbation(game, runs, cfg.perturbation)
    print("eps   " + "  ".join(f"avg@{m:g}kW  max@{m:g}kW" for m in stats.magnitudes))
    for e in stats.epsilons:
        cells = "  ".join(f"{stats.average[(e, m)]:9.3f} {stats.worst[(e, m)]:9.3f}" for m in stats.magnitudes)
        print(f"{e:<5g} {cells}")
    return run_command(["perturb", "--config", args.config, "--out", args.out,
                        "--seed", str(args.seed), "--format", "csv+svg"])


if __name__ == "__main__":
    sys.exit(main())
