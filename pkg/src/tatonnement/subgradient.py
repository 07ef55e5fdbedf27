"""Decentralized price adjustment by projected subgradient ascent-descent.

Each firm quotes its own price ``p_k`` and profit-maximizing output
``x_k(p_k)``; demand ``C`` is split equally among the cheapest quotes.  The
vector ``g = x - y`` (production minus allocated purchases) is a subgradient
of the non-smooth multi-price dual, and the update

    p <- [p - h * g]_+

drives the averaged iterates toward market clearing.  The run stops once a
computable duality-gap certificate

    phi(p_bar) + f(x_bar) + 3R * ||(y_bar - x_bar)_+||_2 <= epsilon

fires, where averages are taken over the visited points (prices averaged
over t = 1..N, productions/purchases over t = 0..N-1) and R bounds the
price region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dichotomy import project_feasible, slater_bound
from .market import EquilibriumReport, MarketInstance, primal_value

__all__ = [
    "DemandAllocation",
    "GapDiagnostics",
    "DecentralTraceRecord",
    "SubgradientRun",
    "allocate_demand",
    "multi_dual_value",
    "subgradient",
    "radius_R",
    "bound_M",
    "step_fixed",
    "step_adaptive",
    "duality_gap_stop",
    "run_projected_subgradient",
    "theoretical_iterations_decentralized",
]

# Relative slack when deciding which quotes count as "cheapest": prices that
# agree to better than ~1 ulp share the allocation, so symmetric instances
# split demand evenly instead of flip-flopping on rounding noise.
_TIE_RTOL = 1e-12

_STEP_POLICIES = ("fixed", "adaptive")


@dataclass(frozen=True)
class DemandAllocation:
    """Demand split over the cheapest quotes.

    Attributes:
        weights: Convex weights over firms; zero off the cheapest set.
        purchases: ``C * weights``.
    """

    weights: np.ndarray
    purchases: np.ndarray


@dataclass(frozen=True)
class GapDiagnostics:
    """Addends of the duality-gap certificate at the averaged point.

    ``gap = dual_term + primal_term + penalty_term`` and the certificate
    fires when ``gap <= epsilon``.  ``residual`` is the unmet demand at the
    averaged productions; once the certificate fires it is guaranteed to be
    at most ``residual_bound = epsilon / p_max``.
    """

    dual_term: float
    primal_term: float
    penalty_term: float
    gap: float
    residual: float
    residual_bound: float


@dataclass(frozen=True)
class DecentralTraceRecord:
    """One iteration of the decentralized loop, for replay and audit."""

    iteration: int
    prices: np.ndarray
    productions: np.ndarray
    purchases: np.ndarray
    step: float
    min_price: float
    gradient_norm: float
    diagnostics: GapDiagnostics


@dataclass(frozen=True)
class SubgradientRun:
    """Everything the decentralized mechanism produced.

    Attributes:
        step_policy: ``"fixed"`` or ``"adaptive"``.
        radius: Ball radius R containing the optimal price vector.
        bound_M: Subgradient-norm bound used by the fixed step and the
            iteration estimate.
        step: The fixed step size, or None under the adaptive policy.
        iterations: Number of updates performed.
        p_bar: Averaged prices over t = 1..N.
        x_bar: Averaged productions over t = 0..N-1.
        y_bar: Averaged purchases over t = 0..N-1.
        gap_history: Certificate value after each iteration.
        max_price_norm: Largest ||p_t||_2 seen (confinement witness).
        diagnostics: Gap addends at the final averages.
        stop_reason: ``"gap"``, ``"stationary"``, or ``"budget-exhausted"``.
        trace: Per-iteration records when requested, else None.
    """

    step_policy: str
    radius: float
    bound_M: float
    step: float | None
    iterations: int
    p_bar: np.ndarray
    x_bar: np.ndarray
    y_bar: np.ndarray
    gap_history: np.ndarray
    max_price_norm: float
    diagnostics: GapDiagnostics
    stop_reason: str
    trace: tuple[DecentralTraceRecord, ...] | None


def allocate_demand(prices: np.ndarray, demand: float) -> DemandAllocation:
    """Split demand equally over the cheapest quoted prices.

    Args:
        prices: Quoted prices, componentwise >= 0.
        demand: Total demand C > 0.

    Returns:
        ``DemandAllocation`` whose weights form a uniform distribution on
        the set of prices within ~1 ulp of the minimum.
    """
    prices = np.asarray(prices, dtype=float)
    if prices.ndim != 1 or prices.size == 0:
        raise ValueError(f"prices must be a non-empty vector, got shape {prices.shape}")
    if np.any(prices < 0.0) or not np.all(np.isfinite(prices)):
        raise ValueError("prices must be finite and componentwise >= 0")
    p_min = float(np.min(prices))
    cheapest = prices <= p_min * (1.0 + _TIE_RTOL)
    weights = cheapest / np.sum(cheapest)
    total_weight = float(np.sum(weights))
    if abs(total_weight - 1.0) > 1e-9 or np.any(weights < 0.0):
        raise AssertionError(f"allocation weights violate simplex invariant: sum {total_weight!r}")
    return DemandAllocation(weights=weights, purchases=demand * weights)


def multi_dual_value(instance: MarketInstance, prices: np.ndarray) -> float:
    """Dual function of the per-firm price vector.

    ``phi(p) = sum_k [p_k x_k(p_k) - f_k(x_k(p_k))] - C * min_k p_k``.
    At a uniform price vector this agrees bitwise with the scalar dual.
    """
    prices = np.asarray(prices, dtype=float)
    batch = instance.batch
    x = batch.best_response(prices)
    profit = float(np.sum(prices * x - batch.value(x)))
    return profit - instance.demand_C * float(np.min(prices))


def subgradient(
    instance: MarketInstance, prices: np.ndarray, allocation: DemandAllocation
) -> np.ndarray:
    """Subgradient of the multi-price dual: production minus purchases."""
    return instance.batch.best_response(np.asarray(prices, dtype=float)) - allocation.purchases


def radius_R(instance: MarketInstance) -> float:
    """Radius of a ball around the origin containing the optimal prices.

    The optimal uniform price is at most the demand-averaged cost bound, so
    ``R = slater_bound * sqrt(n)`` works for the full price vector.
    """
    return slater_bound(instance) * math.sqrt(instance.n)


def bound_M(instance: MarketInstance, radius: float) -> float:
    """Bound on the subgradient norm over the confinement ball.

    Best responses are componentwise nondecreasing in price, so inside
    ``||p|| <= 3R`` the production term is dominated by the response to the
    uniform price 3R, and the purchase term by C:
    ``M = ||x(3R * 1)||_2 + C``.
    """
    top = np.full(instance.n, 3.0 * radius)
    x_top = instance.batch.best_response(top)
    return float(np.linalg.norm(x_top)) + instance.demand_C


def step_fixed(radius: float, bound: float, iterations: int) -> float:
    """Fixed step tuned to a known budget: ``h = 3R / (M sqrt(N))``."""
    if iterations < 1:
        raise ValueError(f"iteration budget must be >= 1, got {iterations}")
    return 3.0 * radius / (bound * math.sqrt(iterations))


def step_adaptive(epsilon: float, g: np.ndarray) -> float:
    """Polyak-style adaptive step ``h = epsilon / ||g||_2^2``.

    Raises:
        ValueError: If the subgradient is exactly zero (the current point
            is already stationary; no step is defined).
    """
    norm_sq = float(np.dot(g, g))
    if norm_sq == 0.0:
        raise ValueError("subgradient is zero; adaptive step undefined at a stationary point")
    return epsilon / norm_sq


def duality_gap_stop(
    instance: MarketInstance,
    p_bar: np.ndarray,
    x_bar: np.ndarray,
    y_bar: np.ndarray,
    radius: float,
) -> tuple[bool, GapDiagnostics]:
    """Evaluate the computable stopping certificate at averaged iterates.

    Returns:
        ``(fires, diagnostics)`` where ``fires`` means
        ``phi(p_bar) + f(x_bar) + 3R ||(y_bar - x_bar)_+|| <= epsilon``.
    """
    dual_term = multi_dual_value(instance, p_bar)
    primal_term = float(np.sum(instance.batch.value(np.asarray(x_bar, dtype=float))))
    overshoot = np.maximum(np.asarray(y_bar, dtype=float) - x_bar, 0.0)
    penalty_term = 3.0 * radius * float(np.linalg.norm(overshoot))
    gap = dual_term + primal_term + penalty_term
    residual = instance.demand_C - float(np.sum(x_bar))
    p_max = radius / math.sqrt(instance.n)
    diagnostics = GapDiagnostics(
        dual_term=dual_term,
        primal_term=primal_term,
        penalty_term=penalty_term,
        gap=gap,
        residual=residual,
        residual_bound=instance.epsilon / p_max,
    )
    return gap <= instance.epsilon, diagnostics


def theoretical_iterations_decentralized(
    instance: MarketInstance, epsilon: float | None = None
) -> int:
    """Worst-case iteration estimate ``ceil(9 n (M p_max)^2 / epsilon^2)``."""
    eps = instance.epsilon if epsilon is None else float(epsilon)
    if eps <= 0.0:
        raise ValueError(f"epsilon must be > 0, got {eps!r}")
    p_max = slater_bound(instance)
    bound = bound_M(instance, radius_R(instance))
    return math.ceil(9.0 * instance.n * (bound * p_max) ** 2 / eps**2)


def run_projected_subgradient(
    instance: MarketInstance,
    step_policy: str = "adaptive",
    max_iterations: int = 100_000,
    initial_prices: np.ndarray | None = None,
    record_trace: bool = False,
) -> tuple[SubgradientRun, EquilibriumReport]:
    """Run the decentralized mechanism until the gap certificate fires.

    Args:
        instance: The market to clear.
        step_policy: ``"fixed"`` (pre-tuned to ``max_iterations``) or
            ``"adaptive"`` (Polyak step from the current subgradient).
        max_iterations: Iteration budget; must be >= 1.
        initial_prices: Starting price vector (default: all zeros).
        record_trace: Keep per-iteration records for replay and audit.

    Returns:
        ``(run, report)``.  ``report.converged`` is False when the budget
        ran out before the certificate fired.
    """
    if step_policy not in _STEP_POLICIES:
        raise ValueError(f"step_policy must be one of {_STEP_POLICIES}, got {step_policy!r}")
    if max_iterations < 1:
        raise ValueError(f"max_iterations must be >= 1, got {max_iterations}")
    n = instance.n
    batch = instance.batch
    epsilon = instance.epsilon
    demand = instance.demand_C

    if initial_prices is None:
        p = np.zeros(n)
    else:
        p = np.asarray(initial_prices, dtype=float).copy()
        if p.shape != (n,):
            raise ValueError(f"initial_prices must have shape ({n},), got {p.shape}")
        if np.any(p < 0.0):
            raise ValueError("initial_prices must be componentwise >= 0")

    radius = radius_R(instance)
    bound = bound_M(instance, radius)
    h_fixed = step_fixed(radius, bound, max_iterations) if step_policy == "fixed" else None

    p_sum = np.zeros(n)
    x_sum = np.zeros(n)
    y_sum = np.zeros(n)
    gap_history: list[float] = []
    trace: list[DecentralTraceRecord] = [] if record_trace else None
    max_price_norm = float(np.linalg.norm(p))

    iterations = 0
    stop_reason = "budget-exhausted"
    diagnostics: GapDiagnostics | None = None

    for t in range(max_iterations):
        x = batch.best_response(p)
        allocation = allocate_demand(p, demand)
        y = allocation.purchases
        g = x - y
        norm_sq = float(np.dot(g, g))
        x_sum += x
        y_sum += y

        if norm_sq == 0.0:
            # Stationary point: production already matches the allocation,
            # so no further price motion is possible.  Averages degenerate
            # to the current point when this happens on the first pass.
            iterations = t + 1
            stop_reason = "stationary"
            p_bar = p_sum / t if t > 0 else p.copy()
            x_bar = x_sum / iterations
            y_bar = y_sum / iterations
            _, diagnostics = duality_gap_stop(instance, p_bar, x_bar, y_bar, radius)
            gap_history.append(diagnostics.gap)
            if record_trace:
                trace.append(
                    DecentralTraceRecord(
                        iteration=t,
                        prices=p.copy(),
                        productions=x,
                        purchases=y,
                        step=0.0,
                        min_price=float(np.min(p)),
                        gradient_norm=0.0,
                        diagnostics=diagnostics,
                    )
                )
            break

        h = h_fixed if h_fixed is not None else epsilon / norm_sq
        p_next = np.maximum(p - h * g, 0.0)
        p_sum += p_next
        iterations = t + 1

        p_bar = p_sum / iterations
        x_bar = x_sum / iterations
        y_bar = y_sum / iterations
        fires, diagnostics = duality_gap_stop(instance, p_bar, x_bar, y_bar, radius)
        gap_history.append(diagnostics.gap)
        if record_trace:
            trace.append(
                DecentralTraceRecord(
                    iteration=t,
                    prices=p.copy(),
                    productions=x,
                    purchases=y,
                    step=h,
                    min_price=float(np.min(p)),
                    gradient_norm=math.sqrt(norm_sq),
                    diagnostics=diagnostics,
                )
            )
        p = p_next
        price_norm = float(np.linalg.norm(p))
        if price_norm > max_price_norm:
            max_price_norm = price_norm
        if fires:
            stop_reason = "gap"
            break

    run = SubgradientRun(
        step_policy=step_policy,
        radius=radius,
        bound_M=bound,
        step=h_fixed,
        iterations=iterations,
        p_bar=p_bar,
        x_bar=x_bar,
        y_bar=y_bar,
        gap_history=np.asarray(gap_history),
        max_price_norm=max_price_norm,
        diagnostics=diagnostics,
        stop_reason=stop_reason,
        trace=tuple(trace) if record_trace else None,
    )
    return run, _build_report(instance, run)


def _build_report(instance: MarketInstance, run: SubgradientRun) -> EquilibriumReport:
    """Assemble the shared outcome record from a finished run."""
    diag = run.diagnostics
    projected = project_feasible(instance, run.x_bar)
    try:
        theoretical = theoretical_iterations_decentralized(instance)
    except (OverflowError, ValueError):
        theoretical = None
    return EquilibriumReport(
        price_final=float(np.min(run.p_bar)),
        productions=run.x_bar,
        productions_projected=projected,
        primal_value=diag.primal_term,
        dual_value=diag.dual_term,
        duality_gap=diag.gap,
        gap_penalty=diag.penalty_term,
        constraint_residual=diag.residual,
        iterations=run.iterations,
        theoretical_bound=theoretical,
        stop_reason=run.stop_reason,
    )
