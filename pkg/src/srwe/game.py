"""Aggregative games with box-plus-budget action sets and affine prices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BISECTION_TOL = 1e-12


def _vec(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    arr.setflags(write=False)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class ActionSpace:
    """The polytope {0 <= x <= upper, sum(x) >= budget}."""

    upper: np.ndarray
    budget: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "upper", _vec(self.upper, "upper"))
        object.__setattr__(self, "budget", float(self.budget))

    @property
    def dim(self) -> int:
        return self.upper.size

    def is_nonempty(self) -> bool:
        return bool(np.all(self.upper >= 0) and self.budget >= 0
                    and self.upper.sum() >= self.budget)

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(x.shape == self.upper.shape
                    and np.all(x >= -tol) and np.all(x <= self.upper + tol)
                    and x.sum() >= self.budget - tol)


@dataclass(frozen=True)
class AffinePriceCost:
    """Cost J(x, sigma) = sum_k x_k (alpha_k sigma_k + beta_k).

    ``base_demand`` and ``capacity`` only matter for reporting and social
    cost; the player cost is fully determined by ``alpha`` and ``beta``.
    """

    alpha: np.ndarray
    beta: np.ndarray
    base_demand: np.ndarray | None = None
    capacity: np.ndarray | None = None

    def __post_init__(self):
        alpha = _vec(self.alpha, "alpha")
        beta = _vec(self.beta, "beta")
        if alpha.shape != beta.shape:
            raise ValueError("alpha and beta must have the same length")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        d = np.zeros_like(alpha) if self.base_demand is None else _vec(self.base_demand, "base_demand")
        object.__setattr__(self, "base_demand", d)
        if self.capacity is not None:
            object.__setattr__(self, "capacity", _vec(self.capacity, "capacity"))

    @classmethod
    def from_capacity(cls, capacity, base_demand) -> "AffinePriceCost":
        """Prices p_k(sigma_k) = (sigma_k + d_k) / kappa_k."""
        kappa = np.asarray(capacity, dtype=float)
        d = np.asarray(base_demand, dtype=float)
        if np.any(kappa <= 0):
            raise ValueError("capacity must be positive")
        return cls(alpha=1.0 / kappa, beta=d / kappa, base_demand=d, capacity=kappa)

    @property
    def dim(self) -> int:
        return self.alpha.size

    def prices(self, sigma) -> np.ndarray:
        return self.alpha * np.asarray(sigma, dtype=float) + self.beta


@dataclass(frozen=True)
class PlayerClass:
    space: ActionSpace
    cost: AffinePriceCost
    count: int = 1

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 1:
            raise ValueError("count must be a positive integer")
        if self.space.dim != self.cost.dim:
            raise ValueError("action space and cost dimensions differ")


@dataclass(frozen=True)
class AggregateSpace:
    """The box [0, sigma_max]^n in which players believe the aggregate lies."""

    sigma_max: float
    dim: int

    def __post_init__(self):
        if not self.sigma_max > 0:
            raise ValueError("sigma_max must be positive")

    @property
    def diameter(self) -> float:
        return self.sigma_max * np.sqrt(self.dim)

    def contains(self, sigma, tol: float = 1e-12) -> bool:
        sigma = np.asarray(sigma, dtype=float)
        return bool(np.all(sigma >= -tol) and np.all(sigma <= self.sigma_max + tol))


@dataclass(frozen=True)
class GameInstance:
    classes: tuple[PlayerClass, ...]
    support: AggregateSpace

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if not self.classes:
            raise ValueError("a game needs at least one player class")
        dims = {c.space.dim for c in self.classes} | {self.support.dim}
        if len(dims) != 1:
            raise ValueError(f"inconsistent dimensions {sorted(dims)}")

    @property
    def n_players(self) -> int:
        return sum(c.count for c in self.classes)

    @property
    def dim(self) -> int:
        return self.support.dim

    @property
    def weights(self) -> np.ndarray:
        """Population share of each class, i.e. count / N."""
        return np.array([c.count for c in self.classes], dtype=float) / self.n_players


@dataclass
class StrategyProfile:
    """One action per player class; every member of a class plays it."""

    actions: list[np.ndarray]
    sigma: np.ndarray = field(default=None)

    @classmethod
    def build(cls, actions, game: GameInstance) -> "StrategyProfile":
        actions = [np.asarray(x, dtype=float).copy() for x in actions]
        return cls(actions=actions, sigma=aggregate(actions, game))


def aggregate(actions, game: GameInstance) -> np.ndarray:
    """Mean action over all N players, expanding classes by multiplicity."""
    if isinstance(actions, StrategyProfile):
        actions = actions.actions
    if len(actions) != len(game.classes):
        raise ValueError(f"expected {len(game.classes)} class actions, got {len(actions)}")
    sigma = np.zeros(game.dim)
    for cls_, x in zip(game.classes, actions):
        x = np.asarray(x, dtype=float)
        if x.shape != (game.dim,):
            raise ValueError(f"action has shape {x.shape}, expected ({game.dim},)")
        sigma = sigma + (cls_.count / game.n_players) * x
    return sigma


def nominal_cost(x, sigma, cost: AffinePriceCost) -> float:
    x = np.asarray(x, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if x.shape != cost.alpha.shape or sigma.shape != cost.alpha.shape:
        raise ValueError("dimension mismatch")
    return float(x @ (cost.alpha * sigma + cost.beta))


def project_action(space: ActionSpace, y) -> np.ndarray:
    """Euclidean projection onto {0 <= x <= upper, sum(x) >= budget}.

    If clipping ``y`` to the box already meets the budget it is the answer;
    otherwise the budget is active and the projection is clip(y + nu) for
    the unique shift nu making the sum equal to the budget.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != space.upper.shape:
        raise ValueError(f"shape {y.shape} does not match action space ({space.dim},)")
    ub = space.upper
    total = ub.sum()
    if total < space.budget:
        raise ValueError(f"empty action space: sum(upper)={total} < budget={space.budget}")
    x = np.clip(y, 0.0, ub)
    if x.sum() >= space.budget:
        return x
    if total == space.budget:
        return ub.copy()
    # sum(clip(y + nu)) is nondecreasing in nu; bracket then bisect.
    lo = 0.0
    hi = float(np.max(ub - y))
    while hi - lo > BISECTION_TOL * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        if np.clip(y + mid, 0.0, ub).sum() < space.budget:
            lo = mid
        else:
            hi = mid
    x = np.clip(y + hi, 0.0, ub)
    # Remove the bisection residue on the free coordinates.
    free = (x > 0) & (x < ub)
    if free.any():
        x[free] += (space.budget - x.sum()) / free.sum()
        x = np.clip(x, 0.0, ub)
    return x


@dataclass
class Diagnostics:
    ok: bool
    reasons: list[str]

    def __bool__(self) -> bool:
        return self.ok


def validate_game(game: GameInstance) -> Diagnostics:
    """Check the standing convexity/compactness assumptions of the solvers."""
    reasons = []
    for i, c in enumerate(game.classes):
        sp = c.space
        if np.any(sp.upper < 0):
            reasons.append(f"class {i}: negative upper bound")
        if sp.budget < 0:
            reasons.append(f"class {i}: negative budget")
        if sp.upper.sum() < sp.budget:
            reasons.append(f"class {i}: action space empty (sum(upper)={sp.upper.sum():g} < budget={sp.budget:g})")
        if c.cost.capacity is not None and np.any(c.cost.capacity <= 0):
            reasons.append(f"class {i}: capacity must be positive")
        max_cap = float(sp.upper.max(initial=0.0))
        if game.support.sigma_max < max_cap:
            reasons.append(
                f"class {i}: sigma_max={game.support.sigma_max:g} < max upper bound {max_cap:g}; "
                "aggregate may leave the support box")
    return Diagnostics(ok=not reasons, reasons=reasons)
