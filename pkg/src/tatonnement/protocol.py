"""Message-passing articulation of both price-adjustment mechanisms.

The same arithmetic as the direct solvers, re-staged as an explicit exchange
between a coordination center and firm nodes.  The center never sees a cost
function — only prices, quoted productions, and aggregates — and each firm
sees only its own cost and the signals addressed to it.  Every float travels
through a message, so replaying a log must (and does) reproduce the direct
solver's trace bit for bit.

Centralized rounds:  center broadcasts a trial price, firms answer with
profit-maximizing outputs, the center bisects its price bracket on the sign
of the aggregate excess.

Decentralized rounds:  firms quote their own prices and outputs, the center
splits demand over the cheapest quotes and answers each firm with its
purchase and the common step size; firms update their prices locally.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import dichotomy
from .market import CostBatch, EquilibriumReport, FirmCost, MarketInstance, dual_point
from .subgradient import (
    GapDiagnostics,
    SubgradientRun,
    allocate_demand,
    bound_M,
    duality_gap_stop,
    radius_R,
    step_fixed,
)
from .subgradient import _build_report as _decentral_report

__all__ = [
    "PriceAnnouncement",
    "ProductionReport",
    "FirmQuote",
    "AllocationNotice",
    "ProtocolMessage",
    "RoundLog",
    "simulate_centralized",
    "simulate_decentralized",
    "replay_centralized",
    "replay_decentralized",
    "log_to_jsonl",
    "write_jsonl",
    "read_jsonl",
]

BROADCAST = "*"


@dataclass(frozen=True)
class PriceAnnouncement:
    """Center -> all firms: trial price for this round."""

    price: float


@dataclass(frozen=True)
class ProductionReport:
    """Firm -> center: profit-maximizing output at the announced price."""

    firm: int
    production: float


@dataclass(frozen=True)
class FirmQuote:
    """Firm -> center: own price and the output it would sell at it."""

    firm: int
    price: float
    production: float


@dataclass(frozen=True)
class AllocationNotice:
    """Center -> firm: purchased quantity plus the common step size."""

    firm: int
    purchase: float
    step: float


Payload = Union[PriceAnnouncement, ProductionReport, FirmQuote, AllocationNotice]

_PAYLOAD_KIND = {
    PriceAnnouncement: "price-announcement",
    ProductionReport: "production-report",
    FirmQuote: "firm-quote",
    AllocationNotice: "allocation-notice",
}
_KIND_PAYLOAD = {kind: cls for cls, kind in _PAYLOAD_KIND.items()}


@dataclass(frozen=True)
class ProtocolMessage:
    round: int
    sender: str
    receiver: str
    payload: Payload


@dataclass
class RoundLog:
    """Full transcript of a simulated run."""

    mechanism: str
    messages: list[ProtocolMessage] = field(default_factory=list)
    rounds: int = 0
    budget_exhausted: bool = False
    final_report: EquilibriumReport | None = None


class _FirmNode:
    """One firm: holds its own cost kernel and (decentralized) price."""

    def __init__(self, index: int, cost: FirmCost):
        self.index = index
        self._kernel = CostBatch.from_firms([cost])
        self.price = 0.0
        self._last_production = 0.0

    def best_response(self, price: float) -> float:
        """Output maximizing ``price * x - f(x)``; answers an announcement."""
        x = self._kernel.best_response(np.array([float(price)]))
        self._last_production = float(x[0])
        return self._last_production

    def quote(self) -> FirmQuote:
        """Decentralized round opener: own price, own best response."""
        production = self.best_response(self.price)
        return FirmQuote(firm=self.index, price=self.price, production=production)

    def apply_notice(self, notice: AllocationNotice) -> None:
        """Local projected price update from the purchase feedback."""
        gradient = self._last_production - notice.purchase
        self.price = max(self.price - notice.step * gradient, 0.0)


class _CentralNode:
    """Coordination center.  State is scalars only — no cost information."""

    def __init__(self, demand: float, epsilon: float, bracket_lo: float, bracket_width: float):
        self.demand = demand
        self.epsilon = epsilon
        self.bracket_lo = bracket_lo
        self.bracket_width = bracket_width

    def announce(self) -> float:
        return self.bracket_lo + 0.5 * self.bracket_width

    def collect(self, price: float, productions: list[float]) -> tuple[float, float, bool]:
        """Fold the reports into the bracket; returns (total, slope, stop)."""
        total = float(np.sum(np.asarray(productions)))
        derivative = total - self.demand
        self.bracket_lo, self.bracket_width = dichotomy._bracket_step(
            self.bracket_lo, self.bracket_width, price, derivative
        )
        return total, derivative, abs(derivative) <= self.epsilon


class _DecentralCenter:
    """Demand-splitting center.  State is scalars only."""

    def __init__(self, demand: float, epsilon: float, fixed_step: float | None):
        self.demand = demand
        self.epsilon = epsilon
        self.fixed_step = fixed_step

    def settle(self, quotes: list[FirmQuote]) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
        """Split demand over the cheapest quotes and pick the step size.

        Returns (prices, productions, purchases, step); step 0.0 signals a
        stationary point (zero subgradient).
        """
        prices = np.array([q.price for q in quotes])
        productions = np.array([q.production for q in quotes])
        allocation = allocate_demand(prices, self.demand)
        g = productions - allocation.purchases
        norm_sq = float(np.dot(g, g))
        if norm_sq == 0.0:
            step = 0.0
        elif self.fixed_step is not None:
            step = self.fixed_step
        else:
            step = self.epsilon / norm_sq
        return prices, productions, allocation.purchases, step


def simulate_centralized(instance: MarketInstance) -> RoundLog:
    """Run the broadcast-bisection protocol to tolerance.

    Produces the same final report as the direct dichotomy run and a
    message log whose replay matches its trace exactly.
    """
    p_max = dichotomy._checked_price_cap(instance)
    center = _CentralNode(instance.demand_C, instance.epsilon, 0.0, p_max)
    firms = [_FirmNode(k, cost) for k, cost in enumerate(instance.firms)]
    log = RoundLog(mechanism="centralized")

    for round_no in range(1, dichotomy._MAX_ITERATIONS + 1):
        price = center.announce()
        log.messages.append(
            ProtocolMessage(round_no, "center", BROADCAST, PriceAnnouncement(price))
        )
        productions = []
        for firm in firms:
            output = firm.best_response(price)
            productions.append(output)
            log.messages.append(
                ProtocolMessage(
                    round_no, f"firm-{firm.index}", "center", ProductionReport(firm.index, output)
                )
            )
        total, _, stop = center.collect(price, productions)
        log.rounds = round_no
        if stop:
            point = dual_point(instance, price)
            log.final_report = dichotomy._build_report(instance, point, total, round_no)
            return log
    raise RuntimeError(
        f"bisection failed to reach tolerance within {dichotomy._MAX_ITERATIONS} rounds"
    )


def simulate_decentralized(
    instance: MarketInstance,
    step_policy: str = "adaptive",
    budget: int = 100_000,
    initial_prices: np.ndarray | None = None,
) -> RoundLog:
    """Run the quote/allocate protocol until the gap certificate fires.

    A zero budget returns an empty log flagged as exhausted.  Otherwise the
    loop mirrors the direct subgradient solver arithmetic exactly; the
    certificate is evaluated by the simulation driver (it needs the cost
    functions, which no single node holds).
    """
    if budget < 0:
        raise ValueError(f"budget must be >= 0, got {budget}")
    log = RoundLog(mechanism="decentralized")
    if budget == 0:
        log.budget_exhausted = True
        return log

    if step_policy not in ("fixed", "adaptive"):
        raise ValueError(f"step_policy must be 'fixed' or 'adaptive', got {step_policy!r}")
    n = instance.n
    radius = radius_R(instance)
    bound = bound_M(instance, radius)
    fixed_step = step_fixed(radius, bound, budget) if step_policy == "fixed" else None

    center = _DecentralCenter(instance.demand_C, instance.epsilon, fixed_step)
    firms = [_FirmNode(k, cost) for k, cost in enumerate(instance.firms)]
    if initial_prices is not None:
        starts = np.asarray(initial_prices, dtype=float)
        if starts.shape != (n,):
            raise ValueError(f"initial_prices must have shape ({n},), got {starts.shape}")
        for firm, start in zip(firms, starts):
            firm.price = float(start)

    p_sum = np.zeros(n)
    x_sum = np.zeros(n)
    y_sum = np.zeros(n)
    gap_history: list[float] = []
    max_price_norm = float(np.linalg.norm(np.array([f.price for f in firms])))

    iterations = 0
    stop_reason = "budget-exhausted"
    diagnostics: GapDiagnostics | None = None
    p_bar = x_bar = y_bar = None

    for t in range(budget):
        round_no = t + 1
        quotes = []
        for firm in firms:
            quote = firm.quote()
            quotes.append(quote)
            log.messages.append(ProtocolMessage(round_no, f"firm-{firm.index}", "center", quote))
        prices, productions, purchases, step = center.settle(quotes)
        for firm in firms:
            notice = AllocationNotice(firm.index, float(purchases[firm.index]), step)
            log.messages.append(ProtocolMessage(round_no, "center", f"firm-{firm.index}", notice))
            firm.apply_notice(notice)

        x_sum += productions
        y_sum += purchases
        log.rounds = round_no

        if step == 0.0:
            iterations = round_no
            stop_reason = "stationary"
            p_bar = p_sum / t if t > 0 else prices.copy()
            x_bar = x_sum / iterations
            y_bar = y_sum / iterations
            _, diagnostics = duality_gap_stop(instance, p_bar, x_bar, y_bar, radius)
            gap_history.append(diagnostics.gap)
            break

        p_next = np.array([f.price for f in firms])
        p_sum += p_next
        iterations = round_no
        p_bar = p_sum / iterations
        x_bar = x_sum / iterations
        y_bar = y_sum / iterations
        fires, diagnostics = duality_gap_stop(instance, p_bar, x_bar, y_bar, radius)
        gap_history.append(diagnostics.gap)
        price_norm = float(np.linalg.norm(p_next))
        if price_norm > max_price_norm:
            max_price_norm = price_norm
        if fires:
            stop_reason = "gap"
            break

    log.budget_exhausted = stop_reason == "budget-exhausted"
    run = SubgradientRun(
        step_policy=step_policy,
        radius=radius,
        bound_M=bound,
        step=fixed_step,
        iterations=iterations,
        p_bar=p_bar,
        x_bar=x_bar,
        y_bar=y_bar,
        gap_history=np.asarray(gap_history),
        max_price_norm=max_price_norm,
        diagnostics=diagnostics,
        stop_reason=stop_reason,
        trace=None,
    )
    log.final_report = _decentral_report(instance, run)
    return log


def replay_centralized(log: RoundLog) -> list[tuple[int, float, float]]:
    """Recompute (round, price, total production) from the raw messages.

    Raises:
        ValueError: If any round is missing its announcement or has a
            malformed report sequence.
    """
    rows = []
    for round_no, batch in _rounds(log):
        announcements = [m.payload for m in batch if isinstance(m.payload, PriceAnnouncement)]
        reports = [m.payload for m in batch if isinstance(m.payload, ProductionReport)]
        if len(announcements) != 1:
            raise ValueError(f"round {round_no}: expected exactly one announcement")
        if len(reports) + 1 != len(batch):
            raise ValueError(f"round {round_no}: unexpected message kinds")
        reports.sort(key=lambda r: r.firm)
        if [r.firm for r in reports] != list(range(len(reports))):
            raise ValueError(f"round {round_no}: report sequence malformed")
        total = float(np.sum(np.array([r.production for r in reports])))
        rows.append((round_no, announcements[0].price, total))
    return rows


def replay_decentralized(
    log: RoundLog,
) -> list[tuple[int, np.ndarray, np.ndarray, np.ndarray, float]]:
    """Recompute (round, prices, productions, purchases, step) per round."""
    rows = []
    for round_no, batch in _rounds(log):
        quotes = sorted(
            (m.payload for m in batch if isinstance(m.payload, FirmQuote)),
            key=lambda q: q.firm,
        )
        notices = sorted(
            (m.payload for m in batch if isinstance(m.payload, AllocationNotice)),
            key=lambda n: n.firm,
        )
        if not quotes or len(quotes) != len(notices):
            raise ValueError(f"round {round_no}: quote/notice mismatch")
        steps = {n.step for n in notices}
        if len(steps) != 1:
            raise ValueError(f"round {round_no}: step size differs across notices")
        rows.append(
            (
                round_no,
                np.array([q.price for q in quotes]),
                np.array([q.production for q in quotes]),
                np.array([n.purchase for n in notices]),
                steps.pop(),
            )
        )
    return rows


def _rounds(log: RoundLog):
    """Group messages by round number, in order."""
    grouped: dict[int, list[ProtocolMessage]] = {}
    for message in log.messages:
        grouped.setdefault(message.round, []).append(message)
    for round_no in sorted(grouped):
        yield round_no, grouped[round_no]


def log_to_jsonl(log: RoundLog) -> str:
    """Serialize a transcript, one message per line, plus a header line."""
    lines = [
        json.dumps(
            {
                "mechanism": log.mechanism,
                "rounds": log.rounds,
                "budget_exhausted": log.budget_exhausted,
            }
        )
    ]
    for message in log.messages:
        record = {
            "round": message.round,
            "sender": message.sender,
            "receiver": message.receiver,
            "kind": _PAYLOAD_KIND[type(message.payload)],
        }
        record.update(vars(message.payload))
        lines.append(json.dumps(record))
    return "\n".join(lines) + "\n"


def write_jsonl(log: RoundLog, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(log_to_jsonl(log))


def read_jsonl(path) -> RoundLog:
    """Load a transcript written by :func:`write_jsonl` (payloads only)."""
    with open(path, "r", encoding="utf-8") as handle:
        lines = [json.loads(line) for line in handle if line.strip()]
    if not lines:
        raise ValueError(f"{path}: empty transcript")
    header, body = lines[0], lines[1:]
    log = RoundLog(
        mechanism=header["mechanism"],
        rounds=header["rounds"],
        budget_exhausted=header["budget_exhausted"],
    )
    for record in body:
        cls = _KIND_PAYLOAD[record["kind"]]
        payload_fields = {
            k: v for k, v in record.items() if k not in ("round", "sender", "receiver", "kind")
        }
        log.messages.append(
            ProtocolMessage(
                record["round"], record["sender"], record["receiver"], cls(**payload_fields)
            )
        )
    return log
