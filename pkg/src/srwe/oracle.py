"""Brute-force checks for the dual worst case, best responses and gradients.

These are deliberately naive and only meant for n <= 2. Nothing in here
calls the dual search in :mod:`srwe.robust` except the best-response
oracle, which grids the *outer* minimisation and uses the dual only for
the inner worst case.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .game import AffinePriceCost, PlayerClass
from .robust import RobustnessParams

log = logging.getLogger(__name__)

DEFAULT_GRID = 201
MAX_DIM = 2


@dataclass(frozen=True)
class DiscreteDistribution:
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if atoms.shape[0] != weights.size:
            raise ValueError("one weight per atom required")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to one")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    def expect(self, f: Callable[[np.ndarray], float]) -> float:
        return float(sum(w * f(a) for a, w in zip(self.atoms, self.weights)))


def wasserstein_to_dirac(mu: DiscreteDistribution, sigma, p: int) -> float:
    # The only coupling with a Dirac marginal is the product coupling.
    d = np.linalg.norm(mu.atoms - np.asarray(sigma, dtype=float), axis=1)
    return float((mu.weights @ d**p) ** (1.0 / p))


def _grid(sigma_max: float, n: int, points: int) -> np.ndarray:
    axis = np.linspace(0.0, sigma_max, points)
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _pareto_front(c: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Indices not dominated by a point with smaller-or-equal c and larger-or-equal v.

    Dropping dominated atoms cannot change the two-atom optimum: swapping
    an atom for one that is cheaper to transport and worth more never
    lowers the best mixture.
    """
    order = np.lexsort((-v, c))
    keep = []
    best = -np.inf
    for i in order:
        if v[i] > best:
            keep.append(i)
            best = v[i]
    return np.array(keep, dtype=int)


def grid_two_point_worst_case(x, sigma, params: RobustnessParams, cost: AffinePriceCost,
                              grid_points_per_dim: int = DEFAULT_GRID, chunk: int = 512):
    """Best grid-supported distribution in the Wasserstein ball, by enumeration.

    One moment constraint plus normalisation means an optimal distribution
    needs at most two atoms, so all (cheap, expensive) atom pairs are
    scanned with the weight that makes the transport budget tight.
    Returns ``(value, DiscreteDistribution)``.
    """
    x = np.asarray(x, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.size
    if n > MAX_DIM:
        raise ValueError(f"grid oracle is limited to n <= {MAX_DIM}")
    pts = _grid(params.support.sigma_max, n, grid_points_per_dim)
    vals = pts @ (cost.alpha * x) + float(cost.beta @ x)
    c = np.linalg.norm(pts - sigma, axis=1) ** params.p
    budget = params.epsilon**params.p

    inside = c <= budget
    if not inside.any():
        warnings.warn("grid too coarse: no atom inside the Wasserstein ball", RuntimeWarning)
        return float(x @ (cost.alpha * sigma + cost.beta)), DiscreteDistribution(sigma[None, :], [1.0])

    front = _pareto_front(c, vals)
    a_idx = front[c[front] <= budget]
    b_idx = front[c[front] > budget]

    i_best = a_idx[np.argmax(vals[a_idx])]
    best = (vals[i_best], i_best, i_best, 1.0)
    for start in range(0, a_idx.size, chunk):
        ai = a_idx[start:start + chunk]
        if b_idx.size == 0:
            break
        ca, cb = c[ai][:, None], c[b_idx][None, :]
        w = np.clip((cb - budget) / (cb - ca), 0.0, 1.0)
        mix = w * vals[ai][:, None] + (1.0 - w) * vals[b_idx][None, :]
        k = np.unravel_index(np.argmax(mix), mix.shape)
        if mix[k] > best[0]:
            best = (mix[k], ai[k[0]], b_idx[k[1]], w[k])

    value, ia, ib, w = best
    if ia == ib:
        mu = DiscreteDistribution(pts[[ia]], [1.0])
    else:
        mu = DiscreteDistribution(pts[[ia, ib]], [w, 1.0 - w])
    return float(value), mu


def _batched_robust_cost(X: np.ndarray, sigma, params: RobustnessParams, cost: AffinePriceCost,
                         iters: int = 90) -> np.ndarray:
    """Dual worst-case cost for many actions at once (golden section on lambda)."""
    X = np.atleast_2d(X)
    if params.epsilon**params.p == 0:
        return X @ (cost.alpha * sigma + cost.beta)
    smax = params.support.sigma_max
    eps_p = params.epsilon**2
    A = X * cost.alpha
    base = X @ cost.beta

    def g(lam):
        lam_ = lam[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(lam_ > 0, np.clip(sigma + A / (2 * lam_), 0, smax),
                         np.where(A > 0, smax, np.where(A < 0, 0.0, sigma)))
        return base + (A * s).sum(1) - lam * ((s - sigma) ** 2).sum(1) + lam * eps_p

    price = np.maximum(np.abs(cost.alpha * smax + cost.beta), np.abs(cost.beta))
    hi = 2.0 * (np.abs(X) @ price) / eps_p
    lo = np.zeros_like(hi)
    inv = (np.sqrt(5) - 1) / 2
    for _ in range(iters):
        c = hi - inv * (hi - lo)
        d = lo + inv * (hi - lo)
        left = g(c) <= g(d)
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
    return np.minimum.reduce([g(0.5 * (lo + hi)), g(np.zeros_like(hi))])


def _project_rows(space, Y: np.ndarray, iters: int = 200) -> np.ndarray:
    """Row-wise projection onto the action polytope by bisection on the shift."""
    upper, theta = space.upper, space.budget
    X = np.clip(Y, 0.0, upper)
    short = X.sum(1) < theta
    if not short.any():
        return X
    Ys = Y[short]
    lo = np.zeros(Ys.shape[0])
    hi = np.full(Ys.shape[0], theta + np.max(upper) + np.max(np.abs(Ys)))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        over = np.clip(Ys + mid[:, None], 0.0, upper).sum(1) >= theta
        hi = np.where(over, mid, hi)
        lo = np.where(over, lo, mid)
    X[short] = np.clip(Ys + hi[:, None], 0.0, upper)
    return X


def brute_force_best_response(cls: PlayerClass, sigma, params: RobustnessParams,
                              grid_points_per_dim: int = DEFAULT_GRID):
    """Grid the action box, project onto the budget polytope, keep the cheapest.

    Returns ``(x, robust_value)``.
    """
    if params.p != 2 and params.epsilon > 0:
        raise NotImplementedError("best-response oracle needs p=2")
    sigma = np.clip(np.asarray(sigma, dtype=float), 0.0, params.support.sigma_max)
    n = sigma.size
    if n > MAX_DIM:
        raise ValueError(f"grid oracle is limited to n <= {MAX_DIM}")
    axes = [np.linspace(0.0, u, grid_points_per_dim) for u in cls.space.upper]
    X = _project_rows(cls.space, np.array(list(itertools.product(*axes))))
    vals = _batched_robust_cost(X, sigma, params, cls.cost)
    i = int(np.argmin(vals))
    return X[i], float(vals[i])


@dataclass(frozen=True)
class GradientCheck:
    error: float
    skipped: bool = False


def finite_difference_check(f: Callable[[np.ndarray], float], grad: Callable[[np.ndarray], np.ndarray],
                            point, h: float | None = None,
                            smooth: Callable[[np.ndarray], bool] | None = None) -> GradientCheck:
    """Compare ``grad(point)`` with central differences of ``f``.

    The error is ||fd - grad||_inf / max(||grad||_inf, 1). If ``smooth``
    says the point sits on a kink, no comparison is made.
    """
    point = np.asarray(point, dtype=float)
    if smooth is not None and not smooth(point):
        return GradientCheck(error=float("nan"), skipped=True)
    if h is None:
        h = 1e-6 * (1.0 + np.linalg.norm(point))
    g = np.asarray(grad(point), dtype=float)
    fd = np.empty_like(point)
    for i in range(point.size):
        e = np.zeros_like(point)
        e[i] = h
        fd[i] = (f(point + e) - f(point - e)) / (2 * h)
    scale = max(float(np.max(np.abs(g))), 1.0)
    return GradientCheck(error=float(np.max(np.abs(fd - g)) / scale))


def augmented_is_smooth(x, lam: float, sigma, cost: AffinePriceCost, sigma_max: float,
                        margin: float = 1e-4) -> bool:
    """False near the clip boundaries where the worst case switches regime."""
    if lam <= margin:
        return False
    s = np.asarray(sigma) + cost.alpha * np.asarray(x) / (2 * lam)
    return bool(np.all(np.abs(s) > margin) and np.all(np.abs(s - sigma_max) > margin))


def dual_oracle_suite(seed: int, instances: int = 100, grid_points_per_dim: int = DEFAULT_GRID):
    """Compare the dual worst case against the grid oracle on random instances.

    Each row holds the instance data, both values and the tolerance
    max(1e-3, Lipschitz * grid spacing), where the Lipschitz constant of
    s -> J(x, s) is ||alpha * x||.
    """
    from .game import AggregateSpace
    from .robust import robust_cost

    rng = np.random.default_rng(seed)
    rows = []
    for i in range(instances):
        n = int(rng.integers(1, 3))
        smax = float(rng.uniform(0.5, 2.0))
        support = AggregateSpace(sigma_max=smax, dim=n)
        cost = AffinePriceCost(alpha=rng.uniform(0.0, 2.0, n), beta=rng.uniform(0.0, 1.0, n))
        x = rng.uniform(0.0, 2.0, n)
        sigma = rng.uniform(0.0, smax, n)
        eps = float(rng.uniform(0.05, 1.5))
        params = RobustnessParams(epsilon=eps, support=support, p=2)
        dual = robust_cost(x, sigma, params, cost).value
        grid, _ = grid_two_point_worst_case(x, sigma, params, cost, grid_points_per_dim)
        lip = float(np.linalg.norm(cost.alpha * x))
        tol = max(1e-3, lip * smax / (grid_points_per_dim - 1))
        rows.append({"instance": i, "n": n, "epsilon": eps, "dual": dual, "oracle": grid,
                     "abs_diff": abs(dual - grid), "tolerance": tol, "pass": abs(dual - grid) <= tol})
    return rows
