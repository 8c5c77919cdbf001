"""EV-charging games and the three experiments run on them.

Hour 0 of every 24-hour horizon is noon, so 5pm is hour 5, midnight is
hour 12 and 10am is hour 22.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .equilibrium import (
    SolverOptions,
    price_of_anarchy,
    solve_social_optimum,
    solve_srwe,
)
from .game import (
    ActionSpace,
    AffinePriceCost,
    AggregateSpace,
    GameInstance,
    PlayerClass,
    aggregate,
    nominal_cost,
)
from .robust import RobustnessParams

log = logging.getLogger(__name__)

HOURS = 24
NOON = 12


def clock_to_index(clock_hour: int) -> int:
    """Map a wall-clock hour (0-23) to the noon-based horizon index."""
    return (clock_hour - NOON) % HOURS


def load_demand_profile(path: str | os.PathLike) -> np.ndarray:
    """Read a ``hour,demand_kw`` CSV into a vector ordered by hour."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["hour", "demand_kw"]:
            raise ValueError(f"{path}: expected header 'hour,demand_kw', got {reader.fieldnames}")
        rows = [(int(r["hour"]), float(r["demand_kw"])) for r in reader]
    hours = sorted(h for h, _ in rows)
    if hours != list(range(len(rows))):
        raise ValueError(f"{path}: hours must be 0..{len(rows) - 1} without gaps")
    out = np.empty(len(rows))
    for h, v in rows:
        out[h] = v
    return out


def default_demand_profile() -> np.ndarray:
    """Non-EV base demand shipped with the package (kW per hour, noon first)."""
    ref = resources.files("srwe") / "data" / "demand_profile.csv"
    with resources.as_file(ref) as path:
        return load_demand_profile(path)


def workers() -> int:
    try:
        return max(1, int(os.environ.get("SRWE_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    items = list(items)
    n = min(workers(), len(items)) or 1
    if n == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass
class EvChargingConfig:
    n_hours: int = HOURS
    n_players: int = 100
    cap_kw: float = 2.0
    window_start: int = 5
    window_end: int = 22
    budget_kwh: float = 9.0
    capacity_kw: float = 1.0
    demand: list[float] | None = None
    sigma_max: float | None = None
    epsilons: list[float] = field(default_factory=lambda: [0.0, 2.0, 4.0])

    def upper(self) -> np.ndarray:
        """Charging caps; the availability window wraps around the horizon end."""
        ub = np.zeros(self.n_hours)
        k = self.window_start
        while k != self.window_end:
            ub[k] = self.cap_kw
            k = (k + 1) % self.n_hours
        return ub

    def demand_vector(self) -> np.ndarray:
        d = default_demand_profile() if self.demand is None else np.asarray(self.demand, dtype=float)
        if d.size != self.n_hours:
            raise ValueError(f"demand profile has {d.size} values, horizon has {self.n_hours}")
        return d

    def support(self) -> AggregateSpace:
        smax = 2.0 * self.cap_kw if self.sigma_max is None else self.sigma_max
        return AggregateSpace(sigma_max=smax, dim=self.n_hours)

    def validate(self) -> None:
        if not 0 <= self.window_start < self.n_hours or not 0 <= self.window_end < self.n_hours:
            raise ValueError("window hours must lie in the horizon")
        if self.window_start == self.window_end:
            raise ValueError("empty availability window")
        if self.cap_kw <= 0 or self.capacity_kw <= 0 or self.n_players < 1:
            raise ValueError("cap, capacity and player count must be positive")
        if self.budget_kwh < 0 or self.budget_kwh > self.upper().sum():
            raise ValueError(f"budget {self.budget_kwh} kWh cannot be met within the window")
        if any(e < 0 for e in self.epsilons):
            raise ValueError("epsilons must be nonnegative")


@dataclass
class PerturbationConfig:
    magnitudes: list[float] = field(default_factory=lambda: [1.0, 2.0, 4.0])
    duration: int = 2
    trials: int = 200
    seed: int = 0
    bin_width: float = 1.0
    epsilons: list[float] = field(default_factory=lambda: [float(e) for e in range(11)])

    def validate(self) -> None:
        if self.duration < 1 or self.trials < 1:
            raise ValueError("duration and trials must be at least one")
        if self.bin_width <= 0:
            raise ValueError("bin width must be positive")


@dataclass
class PoaConfig:
    epsilons: list[float] = field(default_factory=lambda: [round(0.1 * i, 1) for i in range(21)])
    constant_price: float = 0.15
    linear_slope: float = 0.15
    # Linear window runs from 2am up to 10am; every other hour has the constant price.
    linear_start: int = 14
    linear_end: int = 22

    def validate(self) -> None:
        if any(e < 0 for e in self.epsilons) or list(self.epsilons) != sorted(self.epsilons):
            raise ValueError("PoA epsilon grid must be nonnegative and sorted")


def build_ev_charging(cfg: EvChargingConfig) -> GameInstance:
    """One homogeneous class with prices (sigma_k + d_k) / kappa_k."""
    cfg.validate()
    d = cfg.demand_vector()
    kappa = np.full(cfg.n_hours, cfg.capacity_kw)
    cost = AffinePriceCost.from_capacity(kappa, d)
    space = ActionSpace(upper=cfg.upper(), budget=cfg.budget_kwh)
    return GameInstance(classes=(PlayerClass(space, cost, cfg.n_players),), support=cfg.support())


def build_poa_game(ev: EvChargingConfig, pcfg: PoaConfig) -> GameInstance:
    """No base demand; constant price except a linear-price window overnight."""
    ev.validate()
    pcfg.validate()
    n = ev.n_hours
    alpha = np.zeros(n)
    beta = np.full(n, pcfg.constant_price)
    lin = np.arange(pcfg.linear_start, pcfg.linear_end)
    alpha[lin] = pcfg.linear_slope
    beta[lin] = 0.0
    cost = AffinePriceCost(alpha=alpha, beta=beta, base_demand=np.zeros(n))
    space = ActionSpace(upper=ev.upper(), budget=ev.budget_kwh)
    return GameInstance(classes=(PlayerClass(space, cost, ev.n_players),), support=ev.support())


@dataclass
class EquilibriumRun:
    epsilon: float
    sigma: np.ndarray
    actions: list[np.ndarray]
    lambdas: list[float]
    converged: bool
    report: object


def solve_for_epsilons(game: GameInstance, epsilons, opts: SolverOptions | None = None, p: int = 2):
    """Solve the game once per epsilon; results keep the input order."""
    opts = opts or SolverOptions()

    def one(eps):
        params = RobustnessParams(epsilon=float(eps), support=game.support, p=p)
        prof, rep = solve_srwe(game, params, opts)
        return EquilibriumRun(float(eps), prof.sigma, prof.actions, prof.lambdas, rep.converged, rep)

    return _pmap(one, epsilons)


@dataclass
class ValleyTable:
    hours: np.ndarray
    base_demand: np.ndarray
    aggregates: dict[float, np.ndarray]
    omitted: list[float]

    def total_demand(self, eps: float) -> np.ndarray:
        return self.aggregates[eps] + self.base_demand


def run_valley_filling(cfg: EvChargingConfig, opts: SolverOptions | None = None,
                       runs: list[EquilibriumRun] | None = None) -> ValleyTable:
    """EV aggregate per hour for each epsilon; non-converged epsilons are omitted."""
    game = build_ev_charging(cfg)
    runs = runs if runs is not None else solve_for_epsilons(game, cfg.epsilons, opts)
    aggs, omitted = {}, []
    for r in runs:
        if r.converged:
            aggs[r.epsilon] = r.sigma
        else:
            log.warning("epsilon=%g did not converge; omitted", r.epsilon)
            omitted.append(r.epsilon)
    return ValleyTable(np.arange(cfg.n_hours), cfg.demand_vector(), aggs, omitted)


def bump_vector(n: int, start: int, duration: int, magnitude: float) -> np.ndarray:
    b = np.zeros(n)
    b[(start + np.arange(duration)) % n] = magnitude
    return b


@dataclass
class PerturbationStats:
    epsilons: list[float]
    magnitudes: list[float]
    worst: dict  # (eps, mag) -> float
    average: dict
    best: dict
    unperturbed: dict  # eps -> per-class nominal cost
    histogram_centers: np.ndarray
    histogram: dict  # eps -> counts at the histogram magnitude
    histogram_magnitude: float


def run_perturbation(game: GameInstance, runs: list[EquilibriumRun], pcfg: PerturbationConfig,
                     histogram_magnitude: float | None = None) -> PerturbationStats:
    """Realised cost of fixed equilibrium actions when the aggregate is bumped.

    Each trial raises the aggregate by ``magnitude`` for ``duration``
    consecutive hours starting at a uniformly drawn hour (wrapping).
    Start hours come from one seeded stream and are shared by all epsilons
    and magnitudes. Statistics are over players, counted with multiplicity.
    """
    pcfg.validate()
    n = game.dim
    rng = np.random.default_rng(pcfg.seed)
    starts = rng.integers(0, n, size=pcfg.trials)
    hist_mag = histogram_magnitude
    if hist_mag is None:
        hist_mag = 2.0 if 2.0 in pcfg.magnitudes else pcfg.magnitudes[0]
    weights = np.array([c.count for c in game.classes], dtype=float)

    worst, average, best, unperturbed, hist_costs = {}, {}, {}, {}, {}
    for r in runs:
        if not r.converged:
            continue
        unperturbed[r.epsilon] = [nominal_cost(x, r.sigma, c.cost) for c, x in zip(game.classes, r.actions)]
        for m in pcfg.magnitudes:
            costs = np.empty((pcfg.trials, len(game.classes)))
            for t, s in enumerate(starts):
                sig = r.sigma + bump_vector(n, int(s), pcfg.duration, m)
                costs[t] = [nominal_cost(x, sig, c.cost) for c, x in zip(game.classes, r.actions)]
            w = np.broadcast_to(weights, costs.shape)
            worst[(r.epsilon, m)] = float(costs.max())
            best[(r.epsilon, m)] = float(costs.min())
            average[(r.epsilon, m)] = float((costs * w).sum() / w.sum())
            if m == hist_mag:
                hist_costs[r.epsilon] = (costs.ravel(), w.ravel())

    centers = np.zeros(0)
    histogram = {}
    if hist_costs:
        bw = pcfg.bin_width
        lo = min(float(c.min()) for c, _ in hist_costs.values())
        hi = max(float(c.max()) for c, _ in hist_costs.values())
        first = np.floor(lo / bw + 0.5)
        last = np.floor(hi / bw + 0.5)
        centers = np.arange(first, last + 1) * bw
        for eps, (c, w) in hist_costs.items():
            idx = (np.floor(c / bw + 0.5) - first).astype(int)
            histogram[eps] = np.bincount(idx, weights=w, minlength=centers.size).astype(int)

    eps_done = [r.epsilon for r in runs if r.converged]
    return PerturbationStats(eps_done, list(pcfg.magnitudes), worst, average, best, unperturbed,
                             centers, histogram, hist_mag)


@dataclass
class PoaTable:
    epsilons: list[float]
    values: list[float]
    equilibrium_costs: list[float]
    optimal_cost: float
    failed: list[float]


def run_poa(ev: EvChargingConfig, pcfg: PoaConfig, opts: SolverOptions | None = None) -> PoaTable:
    game = build_poa_game(ev, pcfg)
    optimum = solve_social_optimum(game)

    def one(eps):
        params = RobustnessParams(epsilon=float(eps), support=game.support)
        try:
            return price_of_anarchy(game, params, opts, optimum=optimum)
        except RuntimeError as exc:
            log.warning("%s", exc)
            return None

    results = _pmap(one, pcfg.epsilons)
    eps_ok, vals, eqc, failed = [], [], [], []
    for eps, res in zip(pcfg.epsilons, results):
        if res is None:
            failed.append(float(eps))
            continue
        eps_ok.append(float(eps))
        vals.append(res.price_of_anarchy)
        eqc.append(res.equilibrium_cost)
    return PoaTable(eps_ok, vals, eqc, optimum[1], failed)


def aggregate_variance(sigma) -> float:
    return float(np.var(np.asarray(sigma, dtype=float)))
