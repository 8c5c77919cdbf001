"""Worst-case cost over a Wasserstein ball around the aggregate.

Everything here is specialised to affine prices, a box support
[0, sigma_max]^n and the Euclidean ground norm. For p = 2 the inner
maximisation over the worst-case aggregate separates per coordinate and
has a closed form, so the dual only needs a 1-D search over lambda.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .game import AffinePriceCost, AggregateSpace, PlayerClass, nominal_cost

log = logging.getLogger(__name__)

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class RobustnessParams:
    epsilon: float
    support: AggregateSpace
    p: int = 2

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        if self.p not in (1, 2):
            raise ValueError(f"unsupported Wasserstein order p={self.p}; use 1 or 2")

    @property
    def q(self) -> float:
        return math.inf if self.p == 1 else self.p / (self.p - 1)

    def with_epsilon(self, epsilon: float) -> "RobustnessParams":
        return RobustnessParams(epsilon=epsilon, support=self.support, p=self.p)


@dataclass(frozen=True)
class DualVariable:
    lam: float
    cap: float

    def __post_init__(self):
        if not 0.0 <= self.lam <= self.cap:
            raise ValueError(f"lambda={self.lam} outside [0, {self.cap}]")


@dataclass(frozen=True)
class WorstCaseResult:
    value: float
    lambda_star: float
    sigma_hat_star: np.ndarray


def psi_p(w, p: int) -> float:
    """Conjugate penalty of the p-th power of the Euclidean norm.

    For p > 1 this is (q-1)^(q-1) / q^q * ||w||^q, i.e. ||w||^2 / 4 when
    p = 2; for p = 1 it is the indicator of the unit ball.
    """
    norm = float(np.linalg.norm(np.asarray(w, dtype=float)))
    if p == 1:
        return 0.0 if norm <= 1.0 else math.inf
    if p > 1:
        q = p / (p - 1)
        return (q - 1) ** (q - 1) / q**q * norm**q
    raise ValueError(f"unsupported order p={p}")


def _require_p2(params: RobustnessParams) -> None:
    if params.p != 2:
        raise NotImplementedError("closed-form worst case is only available for p=2")


def _clip_to_support(sigma, support: AggregateSpace) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    if not support.contains(sigma):
        log.warning("aggregate outside [0, %g]^n; clipping", support.sigma_max)
        sigma = np.clip(sigma, 0.0, support.sigma_max)
    return sigma


def worst_case_aggregate(x, sigma, lam: float, cost: AffinePriceCost, support: AggregateSpace) -> np.ndarray:
    """Maximiser over the support box of alpha*x . s - lam * ||s - sigma||^2."""
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    a = cost.alpha * np.asarray(x, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if lam > 0:
        return np.clip(sigma + a / (2.0 * lam), 0.0, support.sigma_max)
    # lam = 0: a linear program over the box; ties keep the centre.
    return np.where(a > 0, support.sigma_max, np.where(a < 0, 0.0, sigma))


def inner_max_affine(x, sigma, lam: float, cost: AffinePriceCost, support: AggregateSpace):
    """Return (max_s J(x, s) - lam ||s - sigma||^2, maximiser s)."""
    x = np.asarray(x, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    s = worst_case_aggregate(x, sigma, lam, cost, support)
    diff = s - sigma
    value = float(x @ (cost.alpha * s + cost.beta)) - lam * float(diff @ diff)
    return value, s


def augmented_cost(x, lam: float, sigma, params: RobustnessParams, cost: AffinePriceCost) -> float:
    """Cost of the augmented game at (x, lambda) for a fixed aggregate."""
    _require_p2(params)
    if params.epsilon**params.p <= 0:
        raise ValueError("augmented cost is undefined for epsilon=0; use nominal_cost")
    value, _ = inner_max_affine(x, sigma, lam, cost, params.support)
    return value + lam * params.epsilon**params.p


def augmented_grad(x, lam: float, sigma, params: RobustnessParams, cost: AffinePriceCost):
    """Danskin gradient of :func:`augmented_cost` in (x, lambda).

    Returns ``(value, grad_x, grad_lam)``.
    """
    _require_p2(params)
    x = np.asarray(x, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    s = worst_case_aggregate(x, sigma, lam, cost, params.support)
    diff = s - sigma
    dist2 = float(diff @ diff)
    eps_p = params.epsilon**params.p
    value = float(x @ (cost.alpha * s + cost.beta)) - lam * dist2 + lam * eps_p
    return value, cost.alpha * s + cost.beta, eps_p - dist2


def cost_bound(upper, cost: AffinePriceCost, support: AggregateSpace) -> float:
    """Upper bound on |J(x, s)| over 0 <= x <= upper and s in the support box."""
    upper = np.asarray(upper, dtype=float)
    price_bound = np.maximum(np.abs(cost.alpha * support.sigma_max + cost.beta), np.abs(cost.beta))
    return float(np.abs(upper) @ price_bound)


def big_m(cls: PlayerClass, params: RobustnessParams, support: AggregateSpace | None = None) -> float:
    """Upper end of the multiplier interval: 2 max|J| / eps^p (over-approximated)."""
    if params.epsilon**params.p <= 0:
        raise ValueError("the multiplier bound is infinite for epsilon=0")
    support = params.support if support is None else support
    return 2.0 * cost_bound(cls.space.upper, cls.cost, support) / params.epsilon**params.p


def golden_section(f, lo: float, hi: float, tol: float, max_iter: int = 500):
    """Minimise a unimodal f on [lo, hi]; returns (argmin, min).

    The endpoints are evaluated too, so minimisers on the boundary are
    returned exactly.
    """
    a, b = lo, hi
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while b - a > tol and it < max_iter:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = f(d)
        it += 1
    best = min([(fc, c), (fd, d), (f(lo), lo), (f(hi), hi)])
    return best[1], best[0]


def robust_cost(x, sigma, params: RobustnessParams, cost: AffinePriceCost,
                lam_max: float | None = None) -> WorstCaseResult:
    """Worst-case expected cost sup_{W_p(mu, delta_sigma) <= eps} E_mu[J(x, .)].

    Computed through the dual min_{lambda in [0, M]} of the augmented cost.
    ``lam_max`` defaults to a bound valid for this particular ``x``.
    """
    x = np.asarray(x, dtype=float)
    sigma = _clip_to_support(sigma, params.support)
    if params.epsilon**params.p == 0:  # also catches underflow of tiny radii
        return WorstCaseResult(nominal_cost(x, sigma, cost), 0.0, sigma.copy())
    _require_p2(params)
    if lam_max is None:
        lam_max = 2.0 * cost_bound(x, cost, params.support) / params.epsilon**params.p
    if lam_max <= 0:
        value, s = inner_max_affine(x, sigma, 0.0, cost, params.support)
        return WorstCaseResult(value, 0.0, s)
    tol = 1e-9 * (1.0 + lam_max)
    lam, value = golden_section(lambda t: augmented_cost(x, t, sigma, params, cost), 0.0, lam_max, tol)
    s = worst_case_aggregate(x, sigma, lam, cost, params.support)
    return WorstCaseResult(value, lam, s)


def security_cost(x, cost: AffinePriceCost, support: AggregateSpace) -> float:
    """max over the support box of J(x, s), the infinitely robust cost."""
    value, _ = inner_max_affine(x, np.zeros(support.dim), 0.0, cost, support)
    return value


def example1_objective(x, lam: float, sigma, tau_l, tau_u, epsilon: float,
                       cost: AffinePriceCost, support: AggregateSpace) -> float:
    """Dual objective of the box-constrained inner maximisation (p = 2)."""
    if lam <= 0:
        raise ValueError("the dual objective needs lambda > 0")
    x = np.asarray(x, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    tau_l = np.asarray(tau_l, dtype=float)
    tau_u = np.asarray(tau_u, dtype=float)
    if np.any(tau_l < 0) or np.any(tau_u < 0):
        raise ValueError("box multipliers must be nonnegative")
    w = tau_l - tau_u + cost.alpha * x
    linear = x @ (cost.alpha * sigma + cost.beta) + sigma @ (tau_l - tau_u) + support.sigma_max * tau_u.sum()
    return float(lam * epsilon**2 + linear + (w @ w) / (4.0 * lam))


def example1_solve_duals(x, lam: float, sigma, epsilon: float, cost: AffinePriceCost, support: AggregateSpace):
    """Closed-form optimal box multipliers; returns (tau_l, tau_u, value).

    tau_u is positive exactly where the unconstrained worst case overshoots
    sigma_max, tau_l where it undershoots zero.
    """
    if lam <= 0:
        raise ValueError("the dual objective needs lambda > 0")
    sigma = np.asarray(sigma, dtype=float)
    a = cost.alpha * np.asarray(x, dtype=float)
    s = sigma + a / (2.0 * lam)
    smax = support.sigma_max
    tau_u = np.where(s > smax, a - 2.0 * lam * (smax - sigma), 0.0)
    tau_l = np.where(s < 0, -a - 2.0 * lam * sigma, 0.0)
    tau_u = np.maximum(tau_u, 0.0)
    tau_l = np.maximum(tau_l, 0.0)
    return tau_l, tau_u, example1_objective(x, lam, sigma, tau_l, tau_u, epsilon, cost, support)
