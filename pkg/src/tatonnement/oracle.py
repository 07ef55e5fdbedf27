"""Independent ground truth for the aggregate cost-minimization problem.

Solves ``min sum_k f_k(x_k)`` subject to ``sum x_k >= C, x >= 0`` without
touching either price-adjustment mechanism: a clearing price exists at which
individual profit maximization meets the demand exactly, so a 200-step
bisection on the strictly monotone map ``p -> sum_k x_k(p) - C`` pins it far
below solver tolerances.  A grid minimizer over the tight constraint face
provides a second, even more literal cross-check for up to three firms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dichotomy import slater_bound
from .market import MarketInstance

__all__ = [
    "KKTResiduals",
    "OracleSolution",
    "BruteForceResult",
    "oracle_solve",
    "brute_force_small",
    "kkt_check",
]

_ORACLE_BISECTIONS = 200


@dataclass(frozen=True)
class KKTResiduals:
    """First-order optimality residuals for a price/production pair.

    Attributes:
        stationarity: Per firm: ``|f_k'(x_k) - p|`` where ``x_k > 0``, and
            ``max(0, p - f_k'(0))`` where ``x_k = 0``.
        complementarity: ``|p * (sum x - C)|``.
        feasibility: ``max(0, C - sum x)``.
    """

    stationarity: np.ndarray
    complementarity: float
    feasibility: float

    @property
    def max_residual(self) -> float:
        return max(float(np.max(self.stationarity)), self.complementarity, self.feasibility)


@dataclass(frozen=True)
class OracleSolution:
    """Reference optimum: productions, cost, clearing price, KKT residuals."""

    x_star: np.ndarray
    f_star: float
    p_star: float
    kkt_residuals: KKTResiduals


@dataclass(frozen=True)
class BruteForceResult:
    """Grid minimizer over the tight constraint face.

    ``boundary_hit`` is set when the winning grid point touches a zero
    production; for these cost families the optimum is interior, so a
    boundary winner signals a grid too coarse to trust.
    """

    x: np.ndarray
    value: float
    delta: float
    boundary_hit: bool


def oracle_solve(instance: MarketInstance) -> OracleSolution:
    """Locate the clearing price by high-precision scalar bisection.

    Searches ``[0, 2 * slater_bound]`` with 200 plain bisection steps —
    a different bracket, a different stopping rule, and no coupling to the
    instance tolerance, so agreement with the dichotomy is a real check.

    Raises:
        ValueError: If aggregate supply at the top of the search interval
            still falls short of demand (invalid instance).
    """
    batch = instance.batch
    C = instance.demand_C
    n = instance.n

    def total(p: float) -> float:
        return float(np.sum(batch.best_response(np.full(n, p))))

    hi = 2.0 * slater_bound(instance)
    if total(hi) < C:
        raise ValueError(f"clearing price not bracketed by [0, {hi!r}]; instance invalid")
    lo = 0.0
    for _ in range(_ORACLE_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if total(mid) >= C:
            hi = mid
        else:
            lo = mid
    p_star = 0.5 * (lo + hi)
    x_star = batch.best_response(np.full(n, p_star))
    f_star = float(np.sum(batch.value(x_star)))
    return OracleSolution(
        x_star=x_star,
        f_star=f_star,
        p_star=p_star,
        kkt_residuals=kkt_check(instance, p_star, x_star),
    )


def brute_force_small(instance: MarketInstance, delta: float) -> BruteForceResult:
    """Exhaustive grid minimization for instances with up to three firms.

    Costs are strictly increasing on the relevant range, so the optimum sits
    on the face ``sum x_k = C``; the search sweeps that face with step
    ``~delta`` (rounded so the grid hits 0 and C exactly).

    Args:
        instance: A market with ``n <= 3``.
        delta: Requested grid step.

    Returns:
        The winning grid point, its cost, the realized step, and a
        coarseness flag.

    Raises:
        ValueError: If the instance has more than three firms.
    """
    n = instance.n
    if n > 3:
        raise ValueError(f"brute force supports n <= 3, got n = {n}")
    C = instance.demand_C
    batch = instance.batch
    m = max(1, int(round(C / float(delta))))
    step = C / m
    grid = np.linspace(0.0, C, m + 1)

    def firm_value(k: int, x: np.ndarray) -> np.ndarray:
        return np.sum(batch.coefs[k] * x[:, None] ** batch.expos[k], axis=1)

    if n == 1:
        x = np.array([C])
        return BruteForceResult(x, float(np.sum(batch.value(x))), step, boundary_hit=False)

    if n == 2:
        x1 = grid
        x2 = C - grid
        values = firm_value(0, x1) + firm_value(1, x2)
        i = int(np.argmin(values))
        x = np.array([x1[i], x2[i]])
    else:
        X1, X2 = np.meshgrid(grid, grid, indexing="ij")
        x1 = X1.ravel()
        x2 = X2.ravel()
        x3 = C - x1 - x2
        feasible = x3 >= 0.0
        x1, x2, x3 = x1[feasible], x2[feasible], x3[feasible]
        values = firm_value(0, x1) + firm_value(1, x2) + firm_value(2, x3)
        i = int(np.argmin(values))
        x = np.array([x1[i], x2[i], x3[i]])

    value = float(np.sum(batch.value(x)))
    boundary_hit = bool(np.min(x) < 0.5 * step)
    return BruteForceResult(x, value, step, boundary_hit)


def kkt_check(instance: MarketInstance, p: float, x: np.ndarray) -> KKTResiduals:
    """First-order optimality residuals for a candidate price/productions.

    Args:
        instance: The market.
        p: Candidate clearing price; must be >= 0.
        x: Candidate production vector; componentwise >= 0.

    Returns:
        ``KKTResiduals`` with per-firm stationarity, complementary
        slackness, and primal feasibility residuals.
    """
    p = float(p)
    x = np.asarray(x, dtype=float)
    if p < 0.0:
        raise ValueError(f"price must be >= 0, got {p!r}")
    if x.shape != (instance.n,):
        raise ValueError(f"expected {instance.n} outputs, got shape {x.shape}")
    if np.any(x < 0.0):
        raise ValueError("outputs must be componentwise >= 0")
    batch = instance.batch
    marginal = batch.marginal(x)
    active = x > 0.0
    stationarity = np.where(active, np.abs(marginal - p), np.maximum(0.0, p - marginal))
    total = float(np.sum(x))
    return KKTResiduals(
        stationarity=stationarity,
        complementarity=abs(p * (total - instance.demand_C)),
        feasibility=max(0.0, instance.demand_C - total),
    )
