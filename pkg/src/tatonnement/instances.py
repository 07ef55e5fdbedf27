"""Benchmark presets and the JSON instance file format.

File format::

    {
      "firms": [
        {"terms": [[0.5, 2]]},
        {"count": 4, "terms": [[0.5, 2], [0.5, 4]]}
      ],
      "demand_C": 1000.0,
      "epsilon": 1e-4,
      "solver": {"mechanism": "centralized"}        # optional
    }

Each firm entry is a polynomial cost given as ``[coefficient, exponent]``
pairs; a ``count`` replicates the entry that many times in place.  The
optional ``solver`` section carries run defaults and is passed through to
the CLI untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from .market import FirmCost, MarketInstance

__all__ = [
    "PRESET_NAMES",
    "InstanceFormatError",
    "SolverSettings",
    "InstanceDocument",
    "get_preset",
    "parse_instance",
    "load_document",
    "serialize_instance",
    "write_instance",
]


class InstanceFormatError(ValueError):
    """Malformed instance file; the message pinpoints the offending field."""


@dataclass(frozen=True)
class SolverSettings:
    """Optional run defaults carried inside an instance file."""

    mechanism: str | None = None
    step_policy: str | None = None
    max_iterations: int | None = None


@dataclass(frozen=True)
class InstanceDocument:
    instance: MarketInstance
    solver: SolverSettings


def _bench_10() -> MarketInstance:
    """Ten identical quadratic firms, demand 1000."""
    firms = [FirmCost([(0.5, 2)]) for _ in range(10)]
    return MarketInstance(firms=tuple(firms), demand_C=1000.0, epsilon=1e-4)


def _bench_100() -> MarketInstance:
    """Hundred firms alternating between quartic and steep quadratic costs."""
    firms = []
    for k in range(1, 101):
        if k % 2 == 1:
            firms.append(FirmCost([(0.5, 2), (0.5, 4)]))
        else:
            firms.append(FirmCost([(2.0, 2)]))
    return MarketInstance(firms=tuple(firms), demand_C=1.0e4, epsilon=1e-4)


def _bench_1000() -> MarketInstance:
    """Thousand firms, halves with quadratic and quadratic-plus-quartic costs."""
    firms = []
    for k in range(1, 1001):
        if k % 2 == 1:
            firms.append(FirmCost([(1.0, 2)]))
        else:
            firms.append(FirmCost([(2.0, 2), (4.0, 4)]))
    return MarketInstance(firms=tuple(firms), demand_C=1.0e6, epsilon=1e-4)


_PRESETS = {
    "bench-10": _bench_10,
    "bench-100": _bench_100,
    "bench-1000": _bench_1000,
}

PRESET_NAMES = tuple(_PRESETS)


def get_preset(name: str, epsilon: float | None = None) -> MarketInstance:
    """Build a named benchmark instance, optionally overriding epsilon."""
    try:
        builder = _PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}") from None
    instance = builder()
    if epsilon is not None:
        instance = replace(instance, epsilon=float(epsilon))
    return instance


def parse_instance(path) -> MarketInstance:
    """Load just the market from an instance file."""
    return load_document(path).instance


def load_document(path) -> InstanceDocument:
    """Load an instance file plus its optional solver section.

    Raises:
        InstanceFormatError: On malformed JSON (with line/column) or any
            schema violation (with a JSON-path-style field reference).
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None

    if not isinstance(raw, dict):
        raise InstanceFormatError(f"{path}: top level must be an object")

    known = {"firms", "demand_C", "epsilon", "solver"}
    extra = set(raw) - known
    if extra:
        raise InstanceFormatError(f"{path}: unknown keys {sorted(extra)}")

    entries = raw.get("firms")
    if not isinstance(entries, list) or not entries:
        raise InstanceFormatError(f"{path}: 'firms' must be a non-empty array")

    firms: list[FirmCost] = []
    for i, entry in enumerate(entries):
        where = f"{path}: firms[{i}]"
        if not isinstance(entry, dict):
            raise InstanceFormatError(f"{where}: must be an object")
        unknown = set(entry) - {"count", "terms"}
        if unknown:
            raise InstanceFormatError(f"{where}: unknown keys {sorted(unknown)}")
        count = entry.get("count", 1)
        if not isinstance(count, int) or isinstance(count, bool) or count < 1:
            raise InstanceFormatError(f"{where}: 'count' must be an integer >= 1")
        terms = entry.get("terms")
        if not isinstance(terms, list) or not terms:
            raise InstanceFormatError(f"{where}: 'terms' must be a non-empty array")
        pairs = []
        for j, term in enumerate(terms):
            if (
                not isinstance(term, list)
                or len(term) != 2
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in term)
            ):
                raise InstanceFormatError(
                    f"{where}.terms[{j}]: must be a [coefficient, exponent] pair of numbers"
                )
            pairs.append((float(term[0]), float(term[1])))
        try:
            cost = FirmCost(pairs)
        except ValueError as exc:
            raise InstanceFormatError(f"{where}: {exc}") from None
        firms.extend([cost] * count)

    demand = raw.get("demand_C")
    if not isinstance(demand, (int, float)) or isinstance(demand, bool) or demand <= 0:
        raise InstanceFormatError(f"{path}: 'demand_C' must be a number > 0")
    epsilon = raw.get("epsilon")
    if not isinstance(epsilon, (int, float)) or isinstance(epsilon, bool) or epsilon <= 0:
        raise InstanceFormatError(f"{path}: 'epsilon' must be a number > 0")

    try:
        instance = MarketInstance(
            firms=tuple(firms), demand_C=float(demand), epsilon=float(epsilon)
        )
    except ValueError as exc:
        raise InstanceFormatError(f"{path}: {exc}") from None

    solver_raw = raw.get("solver", {})
    if not isinstance(solver_raw, dict):
        raise InstanceFormatError(f"{path}: 'solver' must be an object")
    unknown = set(solver_raw) - {"mechanism", "step_policy", "max_iterations"}
    if unknown:
        raise InstanceFormatError(f"{path}: solver: unknown keys {sorted(unknown)}")
    mechanism = solver_raw.get("mechanism")
    if mechanism is not None and mechanism not in ("centralized", "decentralized"):
        raise InstanceFormatError(
            f"{path}: solver.mechanism must be 'centralized' or 'decentralized'"
        )
    step_policy = solver_raw.get("step_policy")
    if step_policy is not None and step_policy not in ("fixed", "adaptive"):
        raise InstanceFormatError(f"{path}: solver.step_policy must be 'fixed' or 'adaptive'")
    max_iterations = solver_raw.get("max_iterations")
    if max_iterations is not None and (
        not isinstance(max_iterations, int)
        or isinstance(max_iterations, bool)
        or max_iterations < 1
    ):
        raise InstanceFormatError(f"{path}: solver.max_iterations must be an integer >= 1")

    return InstanceDocument(
        instance=instance,
        solver=SolverSettings(
            mechanism=mechanism, step_policy=step_policy, max_iterations=max_iterations
        ),
    )


def serialize_instance(instance: MarketInstance) -> dict:
    """Normalized (count-free) JSON document for a market."""
    return {
        "firms": [
            {"terms": [[coef, int(expo)] for coef, expo in cost.terms]} for cost in instance.firms
        ],
        "demand_C": instance.demand_C,
        "epsilon": instance.epsilon,
    }


def write_instance(instance: MarketInstance, path) -> None:
    """Serialize to a file that ``parse_instance`` round-trips exactly."""
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(serialize_instance(instance), handle, indent=2)
        handle.write("\n")
