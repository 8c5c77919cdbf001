"""Proximal best-response dynamics for (strategically robust) Wardrop equilibria.

Each player class keeps a pair (x, lambda) in X x [0, M]. At every
iteration all classes take a proximal step on the augmented cost against
the same aggregate, then the aggregate is recomputed (Jacobi order).
Convergence is not guaranteed in general; it is reported, not assumed.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .game import (
    ActionSpace,
    GameInstance,
    PlayerClass,
    StrategyProfile,
    aggregate,
    nominal_cost,
    project_action,
    validate_game,
)
from .robust import RobustnessParams, augmented_cost, augmented_grad, big_m, robust_cost

log = logging.getLogger(__name__)

INIT_MODES = ("uniform", "zero", "given")


@dataclass
class SolverOptions:
    rho: float = 1.0
    max_iter: int = 500
    tol_fix: float = 1e-6
    tol_sub: float = 1e-8
    init: str = "uniform"
    x0: list | None = None
    lam0: list | None = None
    sub_max_iter: int = 10_000
    verify_tol: float = 1e-4

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not (self.tol_fix > 0 and self.tol_sub > 0):
            raise ValueError("tolerances must be positive")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}")
        if self.init == "given" and self.x0 is None:
            raise ValueError("init='given' requires x0")


@dataclass
class AugmentedProfile:
    actions: list[np.ndarray]
    lambdas: list[float]
    caps: list[float]
    sigma: np.ndarray

    def strategy(self) -> StrategyProfile:
        return StrategyProfile(actions=self.actions, sigma=self.sigma)


@dataclass
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    gaps: list[float] = field(default_factory=list)
    costs: list[float] = field(default_factory=list)
    certified: bool | None = None
    wall_time: float = 0.0
    inner_failures: int = 0
    history: list[float] = field(default_factory=list)


@dataclass
class ProxInfo:
    iterations: int
    residual: float
    converged: bool


def initial_action(space: ActionSpace, mode: str = "uniform", given=None) -> np.ndarray:
    if mode == "given":
        return project_action(space, np.asarray(given, dtype=float))
    if mode == "zero":
        return project_action(space, np.zeros(space.dim))
    avail = space.upper > 0
    x = np.zeros(space.dim)
    if avail.any():
        x[avail] = space.budget / avail.sum()
    return project_action(space, x)


def _project_pair(space: ActionSpace, x, lam, cap):
    return project_action(space, x), float(np.clip(lam, 0.0, cap))


def _prox_x(cls: PlayerClass, x_t, lam: float, sigma, params: RobustnessParams, rho: float):
    """x-part of the proximal step for a fixed multiplier, solved exactly.

    The objective separates per hour up to the budget constraint. Each
    hour's stationarity condition h'(x) + (x - x_t) / rho = nu is
    piecewise linear and strictly increasing in x, so x(nu) has a closed
    form and the budget multiplier nu is found by root finding.
    """
    cost, space = cls.cost, cls.space
    a, b = cost.alpha, cost.beta
    smax = params.support.sigma_max
    sigma = np.asarray(sigma, dtype=float)

    if lam > 0:
        curv = a * a / (2.0 * lam)
        with np.errstate(divide="ignore", invalid="ignore"):
            # Breakpoints where the worst case hits 0 and sigma_max.
            k0 = np.where(a != 0, -sigma * 2.0 * lam / a, 0.0)
            k1 = np.where(a != 0, (smax - sigma) * 2.0 * lam / a, 0.0)
        x_lo_bp = np.minimum(k0, k1)
        x_hi_bp = np.maximum(k0, k1)
        slope_lo = b + np.where(a > 0, 0.0, a * smax)
        slope_hi = b + np.where(a > 0, a * smax, 0.0)

        def x_of(nu):
            inner = (nu - b - a * sigma + x_t / rho) / (curv + 1.0 / rho)
            lo = x_t + rho * (nu - slope_lo)
            hi = x_t + rho * (nu - slope_hi)
            x = np.where(lo <= x_lo_bp, lo, np.where(hi >= x_hi_bp, hi, inner))
            x = np.where(a == 0, x_t + rho * (nu - b), x)
            return np.clip(x, 0.0, space.upper)
    else:
        price = b + np.where(a > 0, a * smax, 0.0)

        def x_of(nu):
            return np.clip(x_t + rho * (nu - price), 0.0, space.upper)

    x = x_of(0.0)
    if x.sum() >= space.budget:
        return x
    hi = 1.0
    while x_of(hi).sum() < space.budget:
        hi *= 2.0
    nu = brentq(lambda v: x_of(v).sum() - space.budget, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    x = x_of(nu)
    free = (x > 0) & (x < space.upper)
    if free.any():
        x[free] += (space.budget - x.sum()) / free.sum()
        x = np.clip(x, 0.0, space.upper)
    return x


def proximal_step(cls: PlayerClass, x_t, lam_t: float, sigma, params: RobustnessParams, rho: float,
                  lam_cap: float | None = None, tol_sub: float = 1e-8, max_iter: int = 10_000,
                  method: str = "exact"):
    """argmin over X x [0, M] of augmented cost + ||(x, lam) - (x_t, lam_t)||^2 / (2 rho).

    ``method="exact"`` minimises over x in closed form for each lambda and
    finds the lambda where the (monotone) derivative of the reduced
    objective vanishes. ``method="pg"`` runs projected gradient on the
    pair with an adaptive step; it is slower and kept as a cross-check.
    For epsilon = 0 the lambda coordinate is dropped and the step is an
    exact projection, the nominal cost being linear in x.
    Returns ``(x, lam, ProxInfo)``.
    """
    x_t = np.asarray(x_t, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if params.epsilon**params.p == 0:
        x = project_action(cls.space, x_t - rho * cls.cost.prices(sigma))
        return x, 0.0, ProxInfo(0, 0.0, True)
    if lam_cap is None:
        lam_cap = big_m(cls, params)
    if method == "pg":
        return _proximal_step_pg(cls, x_t, lam_t, sigma, params, rho, lam_cap, tol_sub, max_iter)
    if method != "exact":
        raise ValueError(f"unknown method {method!r}")

    calls = [0]

    def dphi(lam):
        calls[0] += 1
        x = _prox_x(cls, x_t, lam, sigma, params, rho)
        _, _, gl = augmented_grad(x, lam, sigma, params, cls.cost)
        return gl + (lam - lam_t) / rho

    def phi(lam):
        x = _prox_x(cls, x_t, lam, sigma, params, rho)
        return augmented_cost(x, lam, sigma, params, cls.cost) + (
            (x - x_t) @ (x - x_t) + (lam - lam_t) ** 2) / (2 * rho)

    # The reduced objective is convex in lambda but x*(lambda) and the worst
    # case have a different limit as lambda -> 0+ than their value at 0, so
    # the slope is probed just to the right of the boundary.
    lam_lo = min(1e-12 * (1.0 + lam_cap), lam_cap)
    if dphi(lam_lo) >= 0:
        lam = 0.0 if phi(0.0) <= phi(lam_lo) else lam_lo
    elif dphi(lam_cap) <= 0:
        lam = lam_cap
    else:
        lam = brentq(dphi, lam_lo, lam_cap, xtol=tol_sub * 1e-2, rtol=4 * np.finfo(float).eps,
                     maxiter=max_iter)
    x = _prox_x(cls, x_t, lam, sigma, params, rho)
    return x, float(lam), ProxInfo(calls[0], abs(dphi(lam)) if 0 < lam < lam_cap else 0.0, True)


def _proximal_step_pg(cls, x_t, lam_t, sigma, params, rho, lam_cap, tol_sub, max_iter):
    def oracle(x, lam):
        f, gx, gl = augmented_grad(x, lam, sigma, params, cls.cost)
        dx = x - x_t
        dl = lam - lam_t
        f += (dx @ dx + dl * dl) / (2 * rho)
        return f, gx + dx / rho, gl + dl / rho

    x, lam = _project_pair(cls.space, x_t, lam_t, lam_cap)
    f, gx, gl = oracle(x, lam)
    L = 1.0 / rho
    residual = np.inf
    for it in range(1, max_iter + 1):
        while True:
            xn, ln = _project_pair(cls.space, x - gx / L, lam - gl / L, lam_cap)
            dx, dl = xn - x, ln - lam
            step2 = dx @ dx + dl * dl
            fn, gxn, gln = oracle(xn, ln)
            if step2 == 0.0:
                break
            # Accept when the gradient change along the step is consistent with L.
            curv = ((gxn - gx) @ dx + (gln - gl) * dl) / step2
            if curv <= L * (1 + 1e-12) or fn <= f + gx @ dx + gl * dl + 0.5 * L * step2:
                break
            L *= 2.0
        residual = L * np.sqrt(step2)
        x, lam, f, gx, gl = xn, ln, fn, gxn, gln
        if residual <= tol_sub:
            return x, lam, ProxInfo(it, residual, True)
        L = max(1.0 / rho, 0.5 * L)
    log.warning("proximal step hit the iteration cap (residual %.3g)", residual)
    return x, lam, ProxInfo(max_iter, residual, False)


def _init_profile(game: GameInstance, params: RobustnessParams, opts: SolverOptions):
    xs = []
    for i, c in enumerate(game.classes):
        given = opts.x0[i] if opts.init == "given" else None
        xs.append(initial_action(c.space, opts.init, given))
    if params.epsilon**params.p > 0:
        caps = [big_m(c, params) for c in game.classes]
    else:
        caps = [0.0 for _ in game.classes]
    if opts.lam0 is not None:
        lams = [float(np.clip(l, 0.0, m)) for l, m in zip(opts.lam0, caps)]
    elif params.epsilon**params.p > 0:
        # Warm start at the dual optimum of x0: the proximal dynamics in
        # lambda are very slow when epsilon is small and lambda* is large.
        sigma0 = aggregate(xs, game)
        lams = [robust_cost(x, sigma0, params, c.cost, lam_max=m).lambda_star
                for c, x, m in zip(game.classes, xs, caps)]
    else:
        lams = [0.0 for _ in caps]
    return xs, lams, caps


def _iterate(game: GameInstance, params: RobustnessParams, opts: SolverOptions, callback=None):
    start = time.perf_counter()
    ok = validate_game(game)
    if not ok:
        raise ValueError("invalid game: " + "; ".join(ok.reasons))
    xs, lams, caps = _init_profile(game, params, opts)
    sigma = aggregate(xs, game)
    residual = np.inf
    history = []
    failures = 0
    it = 0
    converged = False
    for it in range(1, opts.max_iter + 1):
        new_xs, new_lams = [], []
        residual = 0.0
        for c, x, lam, cap in zip(game.classes, xs, lams, caps):
            xn, ln, info = proximal_step(c, x, lam, sigma, params, opts.rho, cap,
                                         opts.tol_sub, opts.sub_max_iter)
            failures += not info.converged
            residual = max(residual, float(np.max(np.abs(xn - x))), abs(ln - lam))
            new_xs.append(xn)
            new_lams.append(ln)
        xs, lams = new_xs, new_lams
        sigma = aggregate(xs, game)
        history.append(residual)
        if callback is not None:
            callback(it, AugmentedProfile(actions=xs, lambdas=lams, caps=caps, sigma=sigma))
        if residual <= opts.tol_fix:
            converged = True
            break
    profile = AugmentedProfile(actions=xs, lambdas=lams, caps=caps, sigma=sigma)
    report = SolveReport(iterations=it, residual=residual, converged=converged,
                         inner_failures=failures, history=history)
    if converged:
        check = verify_equilibrium(profile, game, params, tol=opts.verify_tol)
        report.gaps = check.gaps
        report.costs = check.costs
        report.certified = check.certified
    else:
        log.warning("no convergence after %d iterations (residual %.3g)", it, residual)
    report.wall_time = time.perf_counter() - start
    return profile, report


def solve_wardrop(game: GameInstance, opts: SolverOptions | None = None, support=None, callback=None):
    """Standard Wardrop equilibrium (no robustness)."""
    opts = opts or SolverOptions()
    params = RobustnessParams(epsilon=0.0, support=support or game.support)
    profile, report = _iterate(game, params, opts, callback)
    return profile.strategy(), report


def solve_srwe(game: GameInstance, params: RobustnessParams, opts: SolverOptions | None = None,
               callback=None):
    """Strategically robust Wardrop equilibrium at robustness ``params.epsilon``.

    Returns ``(AugmentedProfile, SolveReport)``; for epsilon = 0 all
    multipliers are zero and the nominal dynamics are used. ``callback``
    is called as ``callback(iteration, profile)`` after every sweep.
    """
    return _iterate(game, params, opts or SolverOptions(), callback)


# ---------------------------------------------------------------------------
# certification


@dataclass
class Verification:
    gaps: list[float]
    costs: list[float]
    best_costs: list[float]
    best_actions: list[np.ndarray]
    certified: bool

    @property
    def rel_gaps(self) -> list[float]:
        return [g / (1.0 + abs(c)) for g, c in zip(self.gaps, self.costs)]


def greedy_best_response(space: ActionSpace, prices) -> np.ndarray:
    """Exact minimiser of a linear cost over the box-plus-budget polytope.

    Hours with negative price are filled completely; the remaining budget
    goes to the cheapest hours, lowest index first on ties.
    """
    prices = np.asarray(prices, dtype=float)
    x = np.where(prices < 0, space.upper, 0.0)
    need = space.budget - x.sum()
    for k in np.argsort(prices, kind="stable"):
        if need <= 0:
            break
        if prices[k] < 0:
            continue
        take = min(space.upper[k], need)
        x[k] = take
        need -= take
    return x


def robust_best_response(cls: PlayerClass, sigma, params: RobustnessParams, starts=None,
                         tol: float = 1e-8, max_iter: int = 5_000):
    """Minimise the worst-case cost over X for a fixed aggregate.

    The multiplier is eliminated by the exact 1-D dual search, which leaves
    a convex function of x whose gradient is alpha * s* + beta at the worst
    case s*. That function is minimised by accelerated projected gradient
    from each start and the best end point wins. Returns ``(x, value)``.
    """
    sigma = np.clip(np.asarray(sigma, dtype=float), 0.0, params.support.sigma_max)
    if params.epsilon**params.p == 0:
        x = greedy_best_response(cls.space, cls.cost.prices(sigma))
        return x, nominal_cost(x, sigma, cls.cost)
    if starts is None:
        starts = [initial_action(cls.space, "uniform"), initial_action(cls.space, "zero")]
    best_x, best_v = None, np.inf
    for x0 in starts:
        x, v = _fista_worst_case(cls, project_action(cls.space, x0), sigma, params, tol, max_iter)
        if v < best_v:
            best_x, best_v = x, v
    return best_x, best_v


def _fista_worst_case(cls, x0, sigma, params, tol, max_iter):
    cap = big_m(cls, params)

    def oracle(x):
        res = robust_cost(x, sigma, params, cls.cost, lam_max=cap)
        return res.value, cls.cost.alpha * res.sigma_hat_star + cls.cost.beta

    x = x0
    fx, _ = oracle(x)
    best_x, best_f = x, fx
    y, t, L = x, 1.0, 1.0
    stall = 0
    for _ in range(max_iter):
        fy, g = oracle(y)
        while True:
            xn = project_action(cls.space, y - g / L)
            d = xn - y
            step2 = float(d @ d)
            fn, _ = oracle(xn)
            if step2 == 0.0 or fn <= fy + g @ d + 0.5 * L * step2 + 1e-13 * (1 + abs(fy)):
                break
            L *= 2.0
        if fn < best_f - 1e-15 * (1 + abs(best_f)):
            best_x, best_f, stall = xn, fn, 0
        else:
            stall += 1
        # The dual search makes f noisy at the 1e-12 level; stop on stagnation.
        if L * np.sqrt(step2) <= tol or stall >= 100:
            break
        if fn > fx:
            # Function-value restart.
            y, t = x, 1.0
            continue
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        y = project_action(cls.space, xn + (t - 1) / t_next * (xn - x))
        x, fx, t = xn, fn, t_next
        L *= 0.9
    return best_x, best_f


def verify_equilibrium(profile, game: GameInstance, params: RobustnessParams, tol: float = 1e-4) -> Verification:
    """Per-class gap between the class's worst-case cost and its best deviation.

    The aggregate stays fixed while a class deviates. The profile is
    certified when every gap is at most ``tol * (1 + |cost|)``.
    """
    actions = profile.actions
    sigma = aggregate(actions, game)
    gaps, costs, best_costs, best_actions = [], [], [], []
    for c, x in zip(game.classes, actions):
        x = np.asarray(x, dtype=float)
        try:
            own = robust_cost(x, sigma, params, c.cost).value
            starts = [initial_action(c.space, "uniform"), initial_action(c.space, "zero"), x]
            bx, bv = robust_best_response(c, sigma, params, starts=starts)
            bv = min(bv, own)
            gap = own - bv
        except (ArithmeticError, ValueError) as exc:  # pragma: no cover - defensive
            log.error("best-response solver failed: %s", exc)
            own, bx, bv, gap = np.nan, x, np.nan, np.inf
        gaps.append(float(gap))
        costs.append(float(own))
        best_costs.append(float(bv))
        best_actions.append(bx)
    certified = all(g <= tol * (1 + abs(c)) for g, c in zip(gaps, costs))
    return Verification(gaps, costs, best_costs, best_actions, certified)


# ---------------------------------------------------------------------------
# social cost


def _shared_cost(game: GameInstance):
    first = game.classes[0].cost
    for c in game.classes[1:]:
        if not (np.array_equal(c.cost.alpha, first.alpha) and np.array_equal(c.cost.beta, first.beta)
                and np.array_equal(c.cost.base_demand, first.base_demand)):
            raise ValueError("social cost needs a price shared by all classes")
    return first


def social_cost(sigma, game: GameInstance) -> float:
    """sum_k (alpha_k sigma_k + beta_k)(sigma_k + d_k)."""
    cost = _shared_cost(game)
    sigma = np.asarray(sigma, dtype=float)
    return float((cost.alpha * sigma + cost.beta) @ (sigma + cost.base_demand))


def solve_social_optimum(game: GameInstance, tol: float = 1e-8, max_iter: int = 50_000):
    """Minimise social cost over the set of feasible aggregates.

    Accelerated projected gradient over the per-class actions. Returns
    ``(sigma, value)``.
    """
    cost = _shared_cost(game)
    if np.any(cost.alpha < 0):
        raise ValueError("social optimum requires nondecreasing prices")
    w = game.weights

    def value_grad(xs):
        s = sum(wi * x for wi, x in zip(w, xs))
        gs = 2 * cost.alpha * s + cost.beta + cost.alpha * cost.base_demand
        return social_cost(s, game), [wi * gs for wi in w]

    def proj(xs):
        return [project_action(c.space, x) for c, x in zip(game.classes, xs)]

    xs = [initial_action(c.space) for c in game.classes]
    ys = xs
    t = 1.0
    L = max(2 * float(cost.alpha.max()) * float(w @ w), 1e-12)
    f_prev = np.inf
    converged = False
    for _ in range(max_iter):
        fy, g = value_grad(ys)
        while True:
            new = proj([y - gi / L for y, gi in zip(ys, g)])
            d = [a - b for a, b in zip(new, ys)]
            step2 = sum(float(di @ di) for di in d)
            fn, _ = value_grad(new)
            if step2 == 0.0 or fn <= fy + sum(float(gi @ di) for gi, di in zip(g, d)) + 0.5 * L * step2 + 1e-15:
                break
            L *= 2.0
        if L * np.sqrt(step2) <= tol:
            xs = new
            converged = True
            break
        if fn > f_prev:
            t, ys, f_prev = 1.0, xs, np.inf
            continue
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        beta = (t - 1) / t_next
        ys = proj([a + beta * (a - b) for a, b in zip(new, xs)])
        xs, t, f_prev = new, t_next, fn
    if not converged:
        raise RuntimeError("social optimum did not converge")
    sigma = aggregate(xs, game)
    return sigma, social_cost(sigma, game)


@dataclass
class PoaResult:
    price_of_anarchy: float
    equilibrium_cost: float
    optimal_cost: float
    sigma_eq: np.ndarray
    sigma_opt: np.ndarray
    report: SolveReport


def price_of_anarchy(game: GameInstance, params: RobustnessParams, opts: SolverOptions | None = None,
                     optimum=None) -> PoaResult:
    """Social cost at the robust equilibrium over the optimal social cost.

    ``optimum`` may pass a precomputed ``(sigma, value)`` from
    :func:`solve_social_optimum` to avoid re-solving it across a sweep.
    """
    profile, report = solve_srwe(game, params, opts)
    if not report.converged:
        raise RuntimeError(f"equilibrium did not converge at epsilon={params.epsilon}")
    sigma_opt, opt = optimum if optimum is not None else solve_social_optimum(game)
    eq = social_cost(profile.sigma, game)
    return PoaResult(eq / opt, eq, opt, profile.sigma, sigma_opt, report)
