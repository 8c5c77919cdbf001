"""Command line driver: strict JSON configs in, CSV (and optional SVG) out.

Exit codes: 0 success, 1 configuration or I/O error, 2 non-convergence or
a profile that fails certification.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import re
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import scenarios as sc
from .equilibrium import SolverOptions, solve_srwe, verify_equilibrium
from .game import StrategyProfile, aggregate
from .oracle import dual_oracle_suite
from .robust import RobustnessParams

log = logging.getLogger("srwe")

SCENARIOS = ("ev_charging", "poa")
FORMATS = ("csv", "csv+svg")
REQUIRED_KEYS = ("scenario",)
EXIT_OK, EXIT_ERROR, EXIT_NONCONVERGED = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class RobustnessConfig:
    p: int = 2


@dataclass
class RunConfig:
    scenario: str
    seed: int = 0
    output_dir: str = "out"
    format: str = "csv"
    ev: sc.EvChargingConfig = field(default_factory=sc.EvChargingConfig)
    robustness: RobustnessConfig = field(default_factory=RobustnessConfig)
    solver: SolverOptions = field(default_factory=SolverOptions)
    perturbation: sc.PerturbationConfig = field(default_factory=sc.PerturbationConfig)
    poa: sc.PoaConfig = field(default_factory=sc.PoaConfig)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}, got {self.format!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        # All randomness flows from the run seed.
        self.perturbation.seed = self.seed

    def game(self):
        if self.scenario == "poa":
            return sc.build_poa_game(self.ev, self.poa)
        return sc.build_ev_charging(self.ev)

    def params(self, epsilon: float, game) -> RobustnessParams:
        return RobustnessParams(epsilon=float(epsilon), support=game.support, p=self.robustness.p)


# Keys that are set from elsewhere and never read from a file.
_DERIVED = {"PerturbationConfig": {"seed"}}


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _build(cls, data, where: str, text: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    skip = _DERIVED.get(cls.__name__, set())
    fields = {f.name: f for f in dataclasses.fields(cls) if f.name not in skip}
    for key in data:
        if key not in fields:
            line = _line_of(text, key)
            at = f" (line {line})" if line else ""
            raise ConfigError(f"{where}: unknown key {key!r}{at}; allowed: {', '.join(sorted(fields))}")
    kwargs = {}
    for name, value in data.items():
        sub = _NESTED.get((cls.__name__, name))
        kwargs[name] = _build(sub, value, f"{where}.{name}", text) if sub else value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_NESTED = {
    ("RunConfig", "ev"): sc.EvChargingConfig,
    ("RunConfig", "robustness"): RobustnessConfig,
    ("RunConfig", "solver"): SolverOptions,
    ("RunConfig", "perturbation"): sc.PerturbationConfig,
    ("RunConfig", "poa"): sc.PoaConfig,
}


def shipped_config(name: str) -> Path | None:
    ref = resources.files("srwe") / "data" / "configs" / name
    return Path(str(ref)) if ref.is_file() else None


def resolve_config_path(path: str | Path) -> Path:
    """Use ``path`` if it exists, else fall back to a shipped config of that name."""
    p = Path(path)
    if p.exists():
        return p
    shipped = shipped_config(p.name)
    if shipped is not None:
        return shipped
    raise ConfigError(f"config file not found: {path}")


def parse_config(path: str | Path) -> RunConfig:
    """Strictly parse a JSON run configuration; unknown keys are rejected."""
    p = resolve_config_path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    return parse_config_text(text, str(p))


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    if not text.strip():
        raise ConfigError(f"{source}: empty config; required keys: {', '.join(REQUIRED_KEYS)}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be an object")
    missing = [k for k in REQUIRED_KEYS if k not in data]
    if missing:
        raise ConfigError(f"{source}: missing required keys: {', '.join(missing)}")
    cfg = _build(RunConfig, data, source, text)
    for block in (cfg.ev, cfg.perturbation, cfg.poa):
        try:
            block.validate()
        except ValueError as exc:
            raise ConfigError(f"{source}: {exc}") from exc
    RobustnessParams(epsilon=0.0, support=cfg.ev.support(), p=cfg.robustness.p)
    return cfg


def config_to_dict(cfg: RunConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["perturbation"].pop("seed")
    return d


# ---------------------------------------------------------------------------
# CSV


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if v == 0:
            v = 0.0  # no negative zero
        return f"{v:.12g}"
    return str(v)


def eps_label(eps: float) -> str:
    s = f"{float(eps):.12g}"
    return s if any(c in s for c in ".enai") else s + ".0"


def mag_label(m: float) -> str:
    return f"{float(m):g}kW"


def emit_csv(table, schema, path) -> Path:
    """Write rows (mappings or sequences) under a fixed header.

    UTF-8, comma separated, LF line endings, 12 significant digits.
    """
    schema = list(schema)
    path = Path(path)
    lines = []
    for i, row in enumerate(table):
        if isinstance(row, dict):
            if set(row) != set(schema):
                raise ValueError(f"row {i} keys {sorted(row)} do not match schema {schema}")
            row = [row[k] for k in schema]
        elif len(row) != len(schema):
            raise ValueError(f"row {i} has {len(row)} fields, schema has {len(schema)}")
        lines.append([format_value(v) for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(schema)
        w.writerows(lines)
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    return rows[0], rows[1:]


def profile_table(game, actions):
    sigma = aggregate(actions, game)
    schema = ["hour"] + [f"x_{i}" for i in range(len(actions))] + ["sigma"]
    rows = [[k] + [float(x[k]) for x in actions] + [float(sigma[k])] for k in range(game.dim)]
    return schema, rows


def read_profile(path, game) -> StrategyProfile:
    header, rows = read_csv(path)
    cols = [h for h in header if h.startswith("x_")]
    if header[0] != "hour" or len(cols) != len(game.classes):
        raise ValueError(f"{path}: expected columns hour,x_0..x_{len(game.classes) - 1}[,sigma]")
    if len(rows) != game.dim:
        raise ValueError(f"{path}: expected {game.dim} rows, got {len(rows)}")
    idx = [header.index(c) for c in cols]
    actions = [np.array([float(r[j]) for r in rows]) for j in idx]
    return StrategyProfile.build(actions, game)


REPORT_SCHEMA = ["epsilon", "class", "count", "lambda", "worst_case_cost", "gap",
                 "iterations", "residual", "converged", "certified"]


def _report_rows(eps, game, profile, report):
    rows = []
    for i, c in enumerate(game.classes):
        rows.append([float(eps), i, c.count, float(profile.lambdas[i]),
                     report.costs[i] if report.costs else float("nan"),
                     report.gaps[i] if report.gaps else float("nan"),
                     report.iterations, float(report.residual), report.converged,
                     bool(report.certified)])
    return rows


# ---------------------------------------------------------------------------
# subcommands


def _epsilons(args, default):
    return [float(e) for e in args.epsilon] if args.epsilon else [float(e) for e in default]


def cmd_solve(cfg: RunConfig, args, out: Path, robust: bool) -> int:
    game = cfg.game()
    eps_list = _epsilons(args, cfg.ev.epsilons) if robust else [0.0]
    status = EXIT_OK
    report_rows = []
    for eps in eps_list:
        profile, report = solve_srwe(game, cfg.params(eps, game), cfg.solver)
        schema, rows = profile_table(game, profile.actions)
        name = f"srwe_profile_eps{eps_label(eps)}.csv" if robust else "wardrop_profile.csv"
        emit_csv(rows, schema, out / name)
        report_rows += _report_rows(eps, game, profile, report)
        if not report.converged:
            log.error("epsilon=%g: no convergence (residual %.3g after %d iterations)",
                      eps, report.residual, report.iterations)
            status = EXIT_NONCONVERGED
        elif not report.certified:
            log.error("epsilon=%g: converged but failed certification, gaps %s", eps, report.gaps)
            status = EXIT_NONCONVERGED
    emit_csv(report_rows, REPORT_SCHEMA, out / ("srwe_report.csv" if robust else "wardrop_report.csv"))
    return status


def cmd_verify(cfg: RunConfig, args, out: Path) -> int:
    if not args.profile:
        raise ConfigError("verify needs --profile PATH")
    game = cfg.game()
    eps_list = _epsilons(args, [0.0])
    profile = read_profile(args.profile, game)
    status = EXIT_OK
    rows = []
    for eps in eps_list:
        res = verify_equilibrium(profile, game, cfg.params(eps, game), tol=cfg.solver.verify_tol)
        for i, (g, c) in enumerate(zip(res.gaps, res.costs)):
            print(f"epsilon={eps_label(eps)} class={i} cost={c:.12g} gap={g:.6g} "
                  f"relative_gap={g / (1 + abs(c)):.6g}", file=sys.stderr)
            rows.append([eps, i, c, g, g / (1 + abs(c)), res.certified])
        if not res.certified:
            status = EXIT_NONCONVERGED
    emit_csv(rows, ["epsilon", "class", "worst_case_cost", "gap", "relative_gap", "certified"],
             out / "verify_report.csv")
    return status


def cmd_valley(cfg: RunConfig, args, out: Path) -> int:
    ev = dataclasses.replace(cfg.ev, epsilons=_epsilons(args, cfg.ev.epsilons))
    table = sc.run_valley_filling(ev, cfg.solver)
    eps = [e for e in ev.epsilons if e in table.aggregates]
    total = [[k] + [float(table.total_demand(e)[k]) for e in eps] + [float(table.base_demand[k])]
             for k in table.hours]
    emit_csv(total, ["hour"] + [eps_label(e) for e in eps] + ["non_pev"], out / "valley_filling.csv")
    aggs = [[k] + [float(table.aggregates[e][k]) for e in eps] for k in table.hours]
    emit_csv(aggs, ["hour"] + [eps_label(e) for e in eps], out / "aggregates_by_hour.csv")
    return EXIT_NONCONVERGED if table.omitted else EXIT_OK


def cmd_perturb(cfg: RunConfig, args, out: Path) -> int:
    pc = dataclasses.replace(cfg.perturbation, epsilons=_epsilons(args, cfg.perturbation.epsilons))
    if args.seed is not None:
        pc.seed = args.seed
    game = sc.build_ev_charging(cfg.ev)
    runs = sc.solve_for_epsilons(game, pc.epsilons, cfg.solver, cfg.robustness.p)
    stats = sc.run_perturbation(game, runs, pc)
    schema = ["epsilon"]
    for m in pc.magnitudes:
        schema += [f"worst_individual_cost_{mag_label(m)}", f"average_individual_cost_{mag_label(m)}",
                   f"min_individual_cost_{mag_label(m)}"]
    rows = []
    for e in stats.epsilons:
        row = [e]
        for m in pc.magnitudes:
            row += [stats.worst[(e, m)], stats.average[(e, m)], stats.best[(e, m)]]
        rows.append(row)
    emit_csv(rows, schema, out / "robustness.csv")
    hist_eps = [e for e in stats.epsilons if e in stats.histogram]
    hrows = [[float(c)] + [int(stats.histogram[e][j]) for e in hist_eps]
             for j, c in enumerate(stats.histogram_centers)]
    emit_csv(hrows, ["bin_center"] + [f"count_{eps_label(e)}" for e in hist_eps], out / "histogram.csv")
    return EXIT_OK if all(r.converged for r in runs) else EXIT_NONCONVERGED


def cmd_poa(cfg: RunConfig, args, out: Path) -> int:
    pc = dataclasses.replace(cfg.poa, epsilons=sorted(_epsilons(args, cfg.poa.epsilons)))
    table = sc.run_poa(cfg.ev, pc, cfg.solver)
    emit_csv([[e, v] for e, v in zip(table.epsilons, table.values)],
             ["epsilon", "price_of_anarchy"], out / "poa.csv")
    return EXIT_NONCONVERGED if table.failed else EXIT_OK


def cmd_oracle_check(cfg: RunConfig, args, out: Path) -> int:
    seed = cfg.seed if args.seed is None else args.seed
    rows = dual_oracle_suite(seed)
    schema = ["instance", "n", "epsilon", "dual", "oracle", "abs_diff", "tolerance", "pass"]
    emit_csv(rows, schema, out / "oracle_check.csv")
    failed = [r for r in rows if not r["pass"]]
    print(f"oracle-check: {len(rows) - len(failed)}/{len(rows)} instances agree", file=sys.stderr)
    return EXIT_OK if not failed else EXIT_NONCONVERGED


def cmd_plot(cfg: RunConfig | None, args, out: Path) -> int:
    from .plots import render_directory

    written = render_directory(out)
    if not written:
        log.error("no known CSV files to plot in %s", out)
        return EXIT_ERROR
    for p in written:
        print(p, file=sys.stderr)
    return EXIT_OK


COMMANDS = {
    "wardrop": lambda cfg, a, o: cmd_solve(cfg, a, o, robust=False),
    "srwe": lambda cfg, a, o: cmd_solve(cfg, a, o, robust=True),
    "valley": cmd_valley,
    "perturb": cmd_perturb,
    "poa": cmd_poa,
    "verify": cmd_verify,
    "oracle-check": cmd_oracle_check,
    "plot": cmd_plot,
}


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srwe", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON run configuration (shipped names such as "
                                         "paper_default.json are found automatically)")
    parser.add_argument("--epsilon", type=float, action="append", help="robustness level (repeatable)")
    parser.add_argument("--out", help="output directory (overrides the config)")
    parser.add_argument("--seed", type=_u64, help="unsigned 64-bit seed (overrides the config)")
    parser.add_argument("--format", choices=FORMATS, help="also render SVG plots with csv+svg")
    parser.add_argument("--profile", help="profile CSV to certify (verify only)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.config:
            cfg = parse_config(args.config)
        elif args.command in ("plot", "oracle-check"):
            cfg = RunConfig(scenario="ev_charging")
        else:
            raise ConfigError(f"{args.command} needs --config PATH")
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.perturbation.seed = args.seed
        out = Path(args.out or cfg.output_dir)
        fmt = args.format or cfg.format
        if args.epsilon and any(e < 0 for e in args.epsilon):
            raise ConfigError("--epsilon must be nonnegative")
        status = COMMANDS[args.command](cfg, args, out)
        if fmt == "csv+svg" and args.command != "plot":
            cmd_plot(cfg, args, out)
        return status
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run_command())
