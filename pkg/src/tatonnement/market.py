"""Firm cost models, best responses, and the scalar dual-price machinery.

A market instance consists of ``n`` firms with increasing convex polynomial
cost functions ``f_k`` and a demand target ``C``.  The central object is the
dual function of the aggregate cost-minimization problem

    minimize  sum_k f_k(x_k)  subject to  sum_k x_k >= C,  x >= 0,

whose (sign-flipped) value at a uniform price ``p`` is

    phi(p) = sum_k { p * x_k(p) - f_k(x_k(p)) } - p * C,

with ``x_k(p)`` firm ``k``'s profit-maximizing output.  By the
Demyanov-Danskin rule the derivative is the excess supply
``phi'(p) = sum_k x_k(p) - C``, which both price-adjustment mechanisms drive
to zero.  Everything in this module is a pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "FirmCost",
    "MarketInstance",
    "DualPoint",
    "EquilibriumReport",
    "CostBatch",
    "eval_cost",
    "best_response",
    "dual_point",
    "primal_value",
    "smoothness_constant",
]

# Relative width at which the scalar best-response bisection stops.
_BEST_RESPONSE_RTOL = 1e-12
# Hard caps on the bracketing/bisection loops; generous beyond any double.
_MAX_DOUBLINGS = 1100
_MAX_BISECTIONS = 200


@dataclass(frozen=True)
class FirmCost:
    """Polynomial cost function ``f(x) = sum_i coef_i * x ** exp_i``.

    Args:
        terms: Sequence of ``(coefficient, exponent)`` pairs.  Coefficients
            must be nonnegative and finite; exponents must be integers >= 1.
            At least one term with exponent >= 2 must have a positive
            coefficient, which makes ``f`` strictly increasing for large
            output and strongly convex near any bounded working range.
        modulus: Optional user-supplied strong-convexity modulus, used only
            when the cost has no quadratic term (a pure quartic, say, is not
            globally strongly convex, but is on every compact box; the caller
            vouches for the value on the relevant box).

    The strong-convexity modulus ``mu`` is ``2 * a2`` where ``a2`` is the
    total quadratic coefficient; when ``a2 == 0`` the explicit ``modulus``
    fallback is consulted.
    """

    terms: tuple[tuple[float, int], ...]
    modulus: float | None = None

    def __init__(self, terms, modulus: float | None = None):
        normalized = []
        for i, term in enumerate(terms):
            try:
                coef, expo = term
            except (TypeError, ValueError):
                raise ValueError(f"terms[{i}]: expected a (coefficient, exponent) pair, got {term!r}")
            coef = float(coef)
            if not math.isfinite(coef) or coef < 0.0:
                raise ValueError(f"terms[{i}]: coefficient must be finite and >= 0, got {coef!r}")
            if isinstance(expo, bool) or int(expo) != expo:
                raise ValueError(f"terms[{i}]: exponent must be an integer, got {expo!r}")
            expo = int(expo)
            if expo < 1:
                raise ValueError(f"terms[{i}]: exponent must be >= 1, got {expo}")
            if coef > 0.0:  # zero terms contribute nothing; drop them up front
                normalized.append((coef, expo))
        if not any(c > 0.0 and e >= 2 for c, e in normalized):
            raise ValueError("cost needs at least one term with exponent >= 2 and positive coefficient")
        if modulus is not None:
            modulus = float(modulus)
            if not modulus > 0.0:
                raise ValueError(f"modulus must be positive when given, got {modulus!r}")
        object.__setattr__(self, "terms", tuple(normalized))
        object.__setattr__(self, "modulus", modulus)

    @property
    def quadratic_coefficient(self) -> float:
        """Total coefficient of the ``x**2`` term (0.0 when absent)."""
        return sum(c for c, e in self.terms if e == 2)

    @property
    def mu(self) -> float | None:
        """Strong-convexity modulus, or None when it cannot be derived."""
        a2 = self.quadratic_coefficient
        if a2 > 0.0:
            return 2.0 * a2
        return self.modulus

    @property
    def marginal_at_zero(self) -> float:
        """``f'(0)``: the coefficient of the linear term, if any."""
        return sum(c for c, e in self.terms if e == 1)

    @cached_property
    def _batch(self) -> "CostBatch":
        return CostBatch.from_firms([self])


class CostBatch:
    """Vectorized evaluation kernel for a fixed, ordered list of firms.

    Stores padded coefficient/exponent matrices so that values, marginal
    costs, curvatures, and best responses for all firms evaluate as a few
    elementwise array operations.  Padding terms have zero coefficient and
    exponent one, which contribute exactly ``0.0`` to every sum, so a
    single-firm batch reproduces bit-for-bit the numbers that the same firm
    produces inside a larger batch.  Both solvers and the message-passing
    simulation rely on that reproducibility.
    """

    def __init__(self, coefs: np.ndarray, expos: np.ndarray):
        self.coefs = coefs
        self.expos = expos
        self.n = coefs.shape[0]
        nonzero = coefs > 0.0
        # Rows whose every active term is quadratic admit a closed-form
        # best response; everything else goes through bisection.
        self._quad_only = nonzero.any(axis=1) & ~(nonzero & (expos != 2.0)).any(axis=1)
        self._quad_coef = np.where(expos == 2.0, coefs, 0.0).sum(axis=1)
        self._marginal_at_zero = np.where(expos == 1.0, coefs, 0.0).sum(axis=1)

    @classmethod
    def from_firms(cls, firms) -> "CostBatch":
        width = max(len(f.terms) for f in firms)
        coefs = np.zeros((len(firms), width))
        expos = np.ones((len(firms), width))
        for i, f in enumerate(firms):
            for j, (c, e) in enumerate(f.terms):
                coefs[i, j] = c
                expos[i, j] = e
        return cls(coefs, expos)

    def value(self, x: np.ndarray) -> np.ndarray:
        """``f_k(x_k)`` for all firms; ``x`` has one entry per firm."""
        x = np.asarray(x, dtype=float)
        return np.sum(self.coefs * x[:, None] ** self.expos, axis=1)

    def marginal(self, x: np.ndarray) -> np.ndarray:
        """``f_k'(x_k)`` for all firms."""
        x = np.asarray(x, dtype=float)
        return np.sum(self.coefs * self.expos * x[:, None] ** (self.expos - 1.0), axis=1)

    def curvature(self, x: np.ndarray) -> np.ndarray:
        """``f_k''(x_k)`` for all firms (one-sided at kinks of the model)."""
        x = np.asarray(x, dtype=float)
        weight = self.coefs * self.expos * (self.expos - 1.0)
        power = x[:, None] ** np.maximum(self.expos - 2.0, 0.0)
        return np.sum(np.where(self.expos >= 2.0, weight * power, 0.0), axis=1)

    def best_response(self, prices: np.ndarray) -> np.ndarray:
        """Profit-maximizing outputs ``argmax_{x>=0} p_k x - f_k(x)``.

        Pure-quadratic rows use the closed form ``p / (2 a2)``; the rest
        solve ``f'(x) = p`` by doubling an upper bound and then bisecting
        with per-row freezing, to relative width 1e-12.  Deterministic.
        """
        prices = np.asarray(prices, dtype=float)
        if prices.shape != (self.n,):
            raise ValueError(f"expected {self.n} prices, got shape {prices.shape}")
        x = np.zeros(self.n)
        quad = self._quad_only
        if quad.any():
            x[quad] = prices[quad] / (2.0 * self._quad_coef[quad])
        rest = ~quad
        if rest.any():
            x[rest] = self._bisect_rows(np.where(rest)[0], prices[rest])
        # A price below the marginal cost at zero makes idling optimal.
        return np.where(prices <= self._marginal_at_zero, 0.0, x)

    def _bisect_rows(self, rows: np.ndarray, prices: np.ndarray) -> np.ndarray:
        coefs = self.coefs[rows]
        expos = self.expos[rows]

        def marginal(x):
            return np.sum(coefs * expos * x[:, None] ** (expos - 1.0), axis=1)

        k = rows.size
        lo = np.zeros(k)
        hi = np.ones(k)
        for _ in range(_MAX_DOUBLINGS):
            short = marginal(hi) < prices
            if not short.any():
                break
            hi = np.where(short, 2.0 * hi, hi)
        else:  # pragma: no cover - needs absurd inputs
            raise RuntimeError("failed to bracket the best response")
        for _ in range(_MAX_BISECTIONS):
            width = hi - lo
            active = width > _BEST_RESPONSE_RTOL * np.maximum(1.0, hi)
            if not active.any():
                break
            mid = lo + 0.5 * width
            above = marginal(mid) >= prices
            hi = np.where(active & above, mid, hi)
            lo = np.where(active & ~above, mid, lo)
        return lo + 0.5 * (hi - lo)


@dataclass(frozen=True)
class MarketInstance:
    """A single-commodity market: firms, demand target, and tolerance.

    Args:
        firms: One ``FirmCost`` per firm (at least one).
        demand_C: Total quantity the Center must procure; positive.
        epsilon: Accuracy parameter, in units of whichever stopping quantity
            it governs (excess supply for the centralized mechanism, the
            averaged duality gap for the decentralized one); positive.
    """

    firms: tuple[FirmCost, ...]
    demand_C: float
    epsilon: float

    def __init__(self, firms, demand_C: float, epsilon: float):
        firms = tuple(firms)
        if len(firms) < 1:
            raise ValueError("need at least one firm")
        for i, f in enumerate(firms):
            if not isinstance(f, FirmCost):
                raise ValueError(f"firms[{i}] is not a FirmCost: {f!r}")
        demand_C = float(demand_C)
        epsilon = float(epsilon)
        if not (math.isfinite(demand_C) and demand_C > 0.0):
            raise ValueError(f"demand_C must be positive and finite, got {demand_C!r}")
        if not (math.isfinite(epsilon) and epsilon > 0.0):
            raise ValueError(f"epsilon must be positive and finite, got {epsilon!r}")
        object.__setattr__(self, "firms", firms)
        object.__setattr__(self, "demand_C", demand_C)
        object.__setattr__(self, "epsilon", epsilon)

    @property
    def n(self) -> int:
        return len(self.firms)

    @cached_property
    def batch(self) -> CostBatch:
        return CostBatch.from_firms(self.firms)


@dataclass(frozen=True)
class DualPoint:
    """The dual function evaluated at one uniform price.

    Attributes:
        price: The probed price ``p``.
        productions: Best responses ``x_k(p)``, one per firm.
        dual_value: ``phi(p)``.
        dual_derivative: ``phi'(p) = sum_k x_k(p) - C`` (excess supply).
    """

    price: float
    productions: np.ndarray
    dual_value: float
    dual_derivative: float


@dataclass(frozen=True)
class EquilibriumReport:
    """Outcome of a solver run, shared by both mechanisms.

    Attributes:
        price_final: Clearing price found (the minimum per-firm price, for
            the decentralized mechanism).
        productions: Production vector backing ``primal_value`` (the final
            best responses, or the averaged productions for the
            decentralized mechanism).
        productions_projected: ``productions`` shifted onto the feasible set
            when short of demand; unchanged otherwise.
        primal_value: Aggregate cost at ``productions``.
        dual_value: Dual value at the final/averaged price.
        duality_gap: ``primal_value + dual_value + gap_penalty``; the
            certified optimality gap (the dual enters with flipped sign,
            so zero means a perfect certificate).
        gap_penalty: Extra penalty term of the averaged-iterate gap
            criterion; 0.0 for the centralized mechanism.
        constraint_residual: ``C - sum(productions)`` (positive = shortage).
        iterations: Iterations actually performed.
        theoretical_bound: Worst-case iteration count for the requested
            accuracy, from the mechanism's convergence guarantee.
        stop_reason: "tolerance" | "gap" | "stationary" | "budget-exhausted".
    """

    price_final: float
    productions: np.ndarray
    productions_projected: np.ndarray
    primal_value: float
    dual_value: float
    duality_gap: float
    gap_penalty: float
    constraint_residual: float
    iterations: int
    theoretical_bound: int | None
    stop_reason: str

    @property
    def converged(self) -> bool:
        return self.stop_reason != "budget-exhausted"


def eval_cost(f: FirmCost, x: float) -> float:
    """Evaluate ``f(x)`` for a single firm.

    Args:
        f: The cost function.
        x: Output level; must be >= 0.

    Returns:
        ``sum_i coef_i * x ** exp_i``.

    Raises:
        ValueError: If ``x`` is negative.
    """
    x = float(x)
    if x < 0.0:
        raise ValueError(f"output must be >= 0, got {x!r}")
    return float(f._batch.value(np.array([x]))[0])


def best_response(f: FirmCost, p: float) -> float:
    """Firm's profit-maximizing output at price ``p``.

    The unique root of ``f'(x) = p`` on ``x >= 0``, or 0 when marginal cost
    at zero already exceeds the price.  Monotone nondecreasing in ``p``.

    Args:
        f: The cost function.
        p: Unit price; must be >= 0.

    Returns:
        The optimal output ``x*(p)``.

    Raises:
        ValueError: If ``p`` is negative.
    """
    p = float(p)
    if p < 0.0:
        raise ValueError(f"price must be >= 0, got {p!r}")
    return float(f._batch.best_response(np.array([p]))[0])


def dual_point(instance: MarketInstance, p: float) -> DualPoint:
    """Evaluate the dual function and its derivative at a uniform price.

    Args:
        instance: The market.
        p: Price to probe; must be >= 0.

    Returns:
        A ``DualPoint`` with ``phi(p)``, ``phi'(p)``, and the best responses.

    Raises:
        ValueError: If ``p`` is negative.
    """
    p = float(p)
    if p < 0.0:
        raise ValueError(f"price must be >= 0, got {p!r}")
    batch = instance.batch
    x = batch.best_response(np.full(instance.n, p))
    value = float(np.sum(p * x - batch.value(x))) - p * instance.demand_C
    derivative = float(np.sum(x)) - instance.demand_C
    return DualPoint(price=p, productions=x, dual_value=value, dual_derivative=derivative)


def primal_value(instance: MarketInstance, x: np.ndarray) -> float:
    """Aggregate production cost ``sum_k f_k(x_k)``.

    Args:
        instance: The market.
        x: Production vector, one nonnegative entry per firm.

    Returns:
        The total cost.

    Raises:
        ValueError: On dimension mismatch or negative components.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (instance.n,):
        raise ValueError(f"expected {instance.n} outputs, got shape {x.shape}")
    if np.any(x < 0.0):
        raise ValueError("outputs must be componentwise >= 0")
    return float(np.sum(instance.batch.value(x)))


def smoothness_constant(instance: MarketInstance) -> float:
    """Lipschitz constant of the dual derivative: ``L = n / min_k mu_k``.

    Each best response moves at rate at most ``1 / mu_k`` with the price, so
    excess supply is ``n / min mu``-Lipschitz.

    Raises:
        ValueError: If some firm has no quadratic term and no explicit
            modulus fallback.
    """
    mus = []
    for i, f in enumerate(instance.firms):
        mu = f.mu
        if mu is None:
            raise ValueError(
                f"firms[{i}]: strong-convexity modulus undefined "
                "(no quadratic term and no explicit modulus)"
            )
        mus.append(mu)
    return instance.n / min(mus)
