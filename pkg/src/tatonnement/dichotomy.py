"""Centralized price discovery: dichotomy on the scalar dual price.

The Center keeps a bracket ``[p_lo, p_hi]`` that contains the clearing
price, probes the midpoint, asks every firm for its best response, and
halves the bracket on the side indicated by the sign of the excess supply
``phi'(p) = sum_k x_k(p) - C``.  It stops as soon as ``|phi'(p)| <= eps``
at the probed midpoint.  The left endpoint starts at 0; the right endpoint
comes from a Slater-point argument (`slater_bound`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .market import (
    EquilibriumReport,
    MarketInstance,
    dual_point,
    smoothness_constant,
)

__all__ = [
    "PriceBracket",
    "TraceRecord",
    "CentralizedTrace",
    "CertificateCheck",
    "CertificateRecord",
    "SlaterBoundError",
    "slater_bound",
    "run_dichotomy",
    "project_feasible",
    "certify_centralized",
    "theoretical_iterations",
]

# The bracket halves every iteration, so anything beyond ~60 iterations is
# already below double-precision resolution; 512 only guards against an
# epsilon no midpoint can satisfy.
_MAX_ITERATIONS = 512


class SlaterBoundError(RuntimeError):
    """The computed price cap does not actually bracket the clearing price."""


@dataclass(frozen=True)
class PriceBracket:
    """Localization interval for the dual price; maintains ``p_lo < p_hi``."""

    p_lo: float
    p_hi: float

    def __post_init__(self):
        if not (0.0 <= self.p_lo < self.p_hi):
            raise ValueError(f"need 0 <= p_lo < p_hi, got [{self.p_lo!r}, {self.p_hi!r}]")

    @property
    def width(self) -> float:
        return self.p_hi - self.p_lo


@dataclass(frozen=True)
class TraceRecord:
    """One dichotomy iteration: the probed midpoint and the updated bracket."""

    iteration: int
    price: float
    total_production: float
    derivative: float
    bracket_lo: float
    bracket_hi: float


@dataclass
class CentralizedTrace:
    records: list[TraceRecord]

    def prices(self) -> np.ndarray:
        return np.array([r.price for r in self.records])


@dataclass(frozen=True)
class CertificateCheck:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class CertificateRecord:
    checks: tuple[CertificateCheck, ...]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[CertificateCheck]:
        return [c for c in self.checks if not c.passed]


def slater_bound(instance: MarketInstance) -> float:
    """Price cap ``p_max = (1/C) * sum_k (f_k(2C/n) - f_k(0))``.

    Splitting twice the demand evenly across firms gives a strictly feasible
    point, and the cap is the resulting bound on any optimal dual price.
    """
    batch = instance.batch
    z = np.full(instance.n, 2.0 * instance.demand_C / instance.n)
    gain = batch.value(z) - batch.value(np.zeros(instance.n))
    return float(np.sum(gain)) / instance.demand_C


def _checked_price_cap(instance: MarketInstance) -> float:
    """Slater price cap, validated to actually bracket the clearing price."""
    p_max = slater_bound(instance)
    if p_max <= 0.0:
        raise ValueError("degenerate instance: costs are flat on [0, 2C/n], price cap is 0")
    if dual_point(instance, p_max).dual_derivative < 0.0:
        raise SlaterBoundError(
            f"Slater bound violated: excess supply still negative at the price cap {p_max!r}"
        )
    return p_max


def _bracket_step(lo: float, width: float, mid: float, derivative: float) -> tuple[float, float]:
    """Halve the bracket on the side indicated by the excess-supply sign.

    Oversupply (including an exact zero) pulls the right endpoint down to the
    midpoint; shortage pushes the left endpoint up.  The width is maintained
    multiplicatively so that after N steps it equals ``p_max / 2**N`` exactly.
    """
    if derivative >= 0.0:
        return lo, width * 0.5
    return mid, width * 0.5


def run_dichotomy(instance: MarketInstance) -> tuple[CentralizedTrace, EquilibriumReport]:
    """Run the Center's dichotomy until ``|excess supply| <= epsilon``.

    Returns the full iteration trace and the final report.  Deterministic.

    Raises:
        ValueError: Degenerate instance (zero price cap).
        SlaterBoundError: The price cap fails to bracket the clearing price;
            never silently expanded.
        RuntimeError: Epsilon unreachable at double precision (cap hit).
    """
    p_max = _checked_price_cap(instance)
    eps = instance.epsilon
    lo, width = 0.0, p_max
    records: list[TraceRecord] = []
    for iteration in range(1, _MAX_ITERATIONS + 1):
        mid = lo + 0.5 * width
        point = dual_point(instance, mid)
        total = float(np.sum(point.productions))
        lo, width = _bracket_step(lo, width, mid, point.dual_derivative)
        records.append(
            TraceRecord(
                iteration=iteration,
                price=mid,
                total_production=total,
                derivative=point.dual_derivative,
                bracket_lo=lo,
                bracket_hi=lo + width,
            )
        )
        if abs(point.dual_derivative) <= eps:
            trace = CentralizedTrace(records)
            report = _build_report(instance, point, total, iteration)
            return trace, report
    raise RuntimeError(
        f"dichotomy did not reach |excess supply| <= {eps} within {_MAX_ITERATIONS} "
        "iterations; the tolerance is below what double precision resolves"
    )


def _build_report(instance, point, total, iterations) -> EquilibriumReport:
    projected = project_feasible(instance, point.productions)
    primal = float(np.sum(instance.batch.value(projected)))
    try:
        bound = theoretical_iterations(instance)
    except ValueError:  # no strong-convexity modulus available
        bound = None
    return EquilibriumReport(
        price_final=point.price,
        productions=point.productions,
        productions_projected=projected,
        primal_value=primal,
        dual_value=point.dual_value,
        duality_gap=primal + point.dual_value,
        gap_penalty=0.0,
        constraint_residual=instance.demand_C - total,
        iterations=iterations,
        theoretical_bound=bound,
        stop_reason="tolerance",
    )


def project_feasible(instance: MarketInstance, x: np.ndarray) -> np.ndarray:
    """Project a production vector onto the demand constraint.

    A vector already covering demand is returned unchanged; otherwise the
    shortage is spread uniformly, ``x + ((C - sum x) / n) * 1``, which makes
    the constraint tight and is the Euclidean projection onto the feasible
    halfspace.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (instance.n,):
        raise ValueError(f"expected {instance.n} outputs, got shape {x.shape}")
    if np.any(x < 0.0):
        raise ValueError("outputs must be componentwise >= 0")
    shortfall = instance.demand_C - float(np.sum(x))
    if shortfall <= 0.0:
        return x
    return x + shortfall / instance.n


def certify_centralized(instance, trace, report, reference) -> CertificateRecord:
    """Check a dichotomy run against an independently computed optimum.

    Args:
        instance: The market that was solved.
        trace: The run's ``CentralizedTrace``.
        report: The run's ``EquilibriumReport``.
        reference: An ``OracleSolution`` for the same instance.

    Checks, in order:
      (a) the surplus inequality ``f(x(p)) - f* <= p * (sum x(p) - C)`` at
          every trace point priced at or above the clearing price;
      (b) the final excess supply is within epsilon;
      (c) the projected productions cost at least ``f* - 1e-8``.
    """
    batch = instance.batch
    f_star = reference.f_star
    p_star = reference.p_star
    checks = []

    worst = None
    for r in trace.records:
        if r.price < p_star:
            continue
        x = batch.best_response(np.full(instance.n, r.price))
        lhs = float(np.sum(batch.value(x))) - f_star
        rhs = r.price * r.derivative
        slack = lhs - rhs
        if worst is None or slack > worst[0]:
            worst = (slack, r.iteration)
    if worst is None:
        checks.append(CertificateCheck("surplus-inequality", True, "no trace point at or above p*"))
    else:
        tol = 1e-8 * max(1.0, abs(f_star))
        checks.append(
            CertificateCheck(
                "surplus-inequality",
                worst[0] <= tol,
                f"worst slack {worst[0]:.6g} at iteration {worst[1]} (tolerance {tol:.3g})",
            )
        )

    resid = abs(report.constraint_residual)
    checks.append(
        CertificateCheck(
            "final-residual",
            resid <= instance.epsilon,
            f"|sum x - C| = {resid:.6g} vs epsilon = {instance.epsilon:g}",
        )
    )

    projected_cost = float(np.sum(batch.value(report.productions_projected)))
    checks.append(
        CertificateCheck(
            "projected-cost-dominates-optimum",
            projected_cost >= f_star - 1e-8,
            f"f(projected) - f* = {projected_cost - f_star:.6g}",
        )
    )
    return CertificateRecord(tuple(checks))


def theoretical_iterations(instance: MarketInstance) -> int:
    """Dichotomy count sufficient for epsilon-accuracy in the primal value.

    ``N = ceil(log2(2 * L * M * p_max**3 / eps**2))`` with ``L = n / min mu``
    the dual-derivative Lipschitz constant and ``M = C`` the working bound on
    the dual's own Lipschitz constant.  Clamped at 0.
    """
    L = smoothness_constant(instance)
    p_max = slater_bound(instance)
    arg = 2.0 * L * instance.demand_C * p_max**3 / instance.epsilon**2
    return max(0, math.ceil(math.log2(arg)))
