"""Command-line front end: solve, simulate, cross-check, and export runs."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .dichotomy import SlaterBoundError, certify_centralized, run_dichotomy, slater_bound
from .instances import (
    PRESET_NAMES,
    InstanceFormatError,
    SolverSettings,
    get_preset,
    load_document,
)
from .market import dual_point
from .oracle import oracle_solve
from .protocol import (
    replay_centralized,
    replay_decentralized,
    simulate_centralized,
    simulate_decentralized,
    write_jsonl,
)
from .subgradient import allocate_demand, run_projected_subgradient

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2
EXIT_BUDGET = 3

_DEFAULT_BUDGET = 100_000


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tatonnement",
        description="Equilibrium price discovery for a single-commodity market.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_instance_flags(p):
        p.add_argument("--preset", choices=PRESET_NAMES, help="built-in benchmark instance")
        p.add_argument("--instance", type=Path, help="instance JSON file")
        p.add_argument("--epsilon", type=float, help="override the instance tolerance")

    p = sub.add_parser("centralized", help="dichotomy on the scalar dual price")
    add_instance_flags(p)
    p.add_argument("--out", type=Path, help="directory for report.json / trace.csv")
    p.add_argument("--trace", action="store_true", help="also write the iteration trace CSV")
    p.set_defaults(func=cmd_centralized)

    p = sub.add_parser("decentralized", help="projected subgradient on per-firm prices")
    add_instance_flags(p)
    p.add_argument("--step-policy", choices=("fixed", "adaptive"), dest="step_policy")
    p.add_argument("--max-iters", type=int, dest="max_iters", help="iteration budget")
    p.add_argument("--out", type=Path, help="directory for report.json / trace.csv")
    p.add_argument("--trace", action="store_true", help="also write the iteration trace CSV")
    p.set_defaults(func=cmd_decentralized)

    p = sub.add_parser("oracle", help="independent reference optimum")
    add_instance_flags(p)
    p.add_argument("--out", type=Path, help="directory for oracle.json")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("simulate", help="run a mechanism as explicit message passing")
    add_instance_flags(p)
    p.add_argument("--mechanism", choices=("centralized", "decentralized"))
    p.add_argument("--step-policy", choices=("fixed", "adaptive"), dest="step_policy")
    p.add_argument("--max-iters", type=int, dest="max_iters", help="round budget")
    p.add_argument("--out", type=Path, help="directory for transcript.jsonl / report.json")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="cross-check both mechanisms against the oracle")
    add_instance_flags(p)
    p.add_argument("--max-iters", type=int, dest="max_iters", help="decentralized check budget")
    p.add_argument("--out", type=Path, help="directory for certificate.json")
    p.set_defaults(func=cmd_verify)

    return parser


def _load(args) -> tuple:
    if args.preset and args.instance:
        raise InstanceFormatError("give either --preset or --instance, not both")
    if args.preset:
        instance, settings = get_preset(args.preset), SolverSettings()
    elif args.instance:
        document = load_document(args.instance)
        instance, settings = document.instance, document.solver
    else:
        raise InstanceFormatError("one of --preset or --instance is required")
    if args.epsilon is not None:
        if args.epsilon <= 0.0:
            raise InstanceFormatError(f"--epsilon must be > 0, got {args.epsilon}")
        instance = replace(instance, epsilon=args.epsilon)
    return instance, settings


def _outdir(args) -> Path | None:
    if args.out is None:
        return None
    args.out.mkdir(parents=True, exist_ok=True)
    return args.out


def _report_dict(instance, report, mechanism: str, elapsed: float) -> dict:
    return {
        "mechanism": mechanism,
        "n": instance.n,
        "demand_C": instance.demand_C,
        "epsilon": instance.epsilon,
        "price_final": report.price_final,
        "primal_value": report.primal_value,
        "dual_value": report.dual_value,
        "duality_gap": report.duality_gap,
        "gap_penalty": report.gap_penalty,
        "constraint_residual": report.constraint_residual,
        "iterations": report.iterations,
        "theoretical_bound": report.theoretical_bound,
        "stop_reason": report.stop_reason,
        "converged": report.converged,
        "elapsed_seconds": elapsed,
        "productions": [float(v) for v in report.productions],
        "productions_projected": [float(v) for v in report.productions_projected],
    }


def _print_report(report, elapsed: float) -> None:
    print(f"price_final={_fmt(report.price_final)}")
    print(f"iterations={report.iterations} theoretical_bound={report.theoretical_bound}")
    print(f"primal_value={_fmt(report.primal_value)} dual_value={_fmt(report.dual_value)}")
    print(f"duality_gap={_fmt(report.duality_gap)}")
    print(f"constraint_residual={_fmt(report.constraint_residual)}")
    print(f"stop_reason={report.stop_reason} elapsed_seconds={elapsed:.6f}")


def _write_report(out: Path, payload: dict) -> None:
    path = out / "report.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    print(f"report -> {path}")


def cmd_centralized(args) -> int:
    instance, _ = _load(args)
    start = time.perf_counter()
    trace, report = run_dichotomy(instance)
    elapsed = time.perf_counter() - start
    _print_report(report, elapsed)
    out = _outdir(args)
    if out is not None:
        _write_report(out, _report_dict(instance, report, "centralized", elapsed))
        if args.trace:
            path = out / "trace.csv"
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(
                    ["iteration", "price", "total_production", "derivative",
                     "bracket_lo", "bracket_hi"]
                )
                for r in trace.records:
                    writer.writerow(
                        [r.iteration, _fmt(r.price), _fmt(r.total_production),
                         _fmt(r.derivative), _fmt(r.bracket_lo), _fmt(r.bracket_hi)]
                    )
            print(f"trace -> {path}")
    elif args.trace:
        print("note: --trace needs --out; no CSV written", file=sys.stderr)
    return EXIT_OK


def cmd_decentralized(args) -> int:
    instance, settings = _load(args)
    policy = args.step_policy or settings.step_policy or "adaptive"
    budget = args.max_iters or settings.max_iterations or _DEFAULT_BUDGET
    if budget < 1:
        raise InstanceFormatError(f"--max-iters must be >= 1, got {budget}")
    start = time.perf_counter()
    run, report = run_projected_subgradient(
        instance, step_policy=policy, max_iterations=budget, record_trace=args.trace
    )
    elapsed = time.perf_counter() - start
    _print_report(report, elapsed)
    print(f"max_price_norm={_fmt(run.max_price_norm)} confinement_radius={_fmt(2 * run.radius)}")
    out = _outdir(args)
    if out is not None:
        payload = _report_dict(instance, report, "decentralized", elapsed)
        payload["step_policy"] = policy
        payload["radius"] = run.radius
        payload["bound_M"] = run.bound_M
        payload["max_price_norm"] = run.max_price_norm
        _write_report(out, payload)
        if args.trace:
            path = out / "trace.csv"
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(
                    ["iteration", "min_price", "gradient_norm", "step", "dual_term",
                     "primal_term", "penalty_term", "gap", "residual"]
                )
                for r in run.trace:
                    d = r.diagnostics
                    writer.writerow(
                        [r.iteration, _fmt(r.min_price), _fmt(r.gradient_norm), _fmt(r.step),
                         _fmt(d.dual_term), _fmt(d.primal_term), _fmt(d.penalty_term),
                         _fmt(d.gap), _fmt(d.residual)]
                    )
            print(f"trace -> {path}")
    elif args.trace:
        print("note: --trace needs --out; no CSV written", file=sys.stderr)
    return EXIT_OK if report.converged else EXIT_BUDGET


def cmd_oracle(args) -> int:
    instance, _ = _load(args)
    solution = oracle_solve(instance)
    print(f"p_star={_fmt(solution.p_star)}")
    print(f"f_star={_fmt(solution.f_star)}")
    print(f"kkt_max_residual={_fmt(solution.kkt_residuals.max_residual)}")
    out = _outdir(args)
    if out is not None:
        path = out / "oracle.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "p_star": solution.p_star,
                    "f_star": solution.f_star,
                    "x_star": [float(v) for v in solution.x_star],
                    "kkt": {
                        "stationarity_max": float(np.max(solution.kkt_residuals.stationarity)),
                        "complementarity": solution.kkt_residuals.complementarity,
                        "feasibility": solution.kkt_residuals.feasibility,
                    },
                },
                fh,
                indent=2,
            )
            fh.write("\n")
        print(f"oracle -> {path}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    instance, settings = _load(args)
    mechanism = args.mechanism or settings.mechanism or "centralized"
    start = time.perf_counter()
    if mechanism == "centralized":
        log = simulate_centralized(instance)
    else:
        policy = args.step_policy or settings.step_policy or "adaptive"
        budget = args.max_iters if args.max_iters is not None else (
            settings.max_iterations or _DEFAULT_BUDGET
        )
        log = simulate_decentralized(instance, step_policy=policy, budget=budget)
    elapsed = time.perf_counter() - start
    print(f"mechanism={log.mechanism} rounds={log.rounds} messages={len(log.messages)}")
    print(f"budget_exhausted={log.budget_exhausted} elapsed_seconds={elapsed:.6f}")
    if log.final_report is not None:
        _print_report(log.final_report, elapsed)
    out = _outdir(args)
    if out is not None:
        path = out / "transcript.jsonl"
        write_jsonl(log, path)
        print(f"transcript -> {path}")
        if log.final_report is not None:
            _write_report(out, _report_dict(instance, log.final_report, mechanism, elapsed))
    return EXIT_BUDGET if log.budget_exhausted else EXIT_OK


def _check(checks: list, name: str, passed: bool, detail: str) -> None:
    checks.append({"name": name, "passed": bool(passed), "detail": detail})
    print(f"{'ok  ' if passed else 'FAIL'} {name}: {detail}")


def cmd_verify(args) -> int:
    instance, settings = _load(args)
    budget = args.max_iters or settings.max_iterations or 2000
    checks: list[dict] = []

    reference = oracle_solve(instance)
    strong = reference.f_star + dual_point(instance, reference.p_star).dual_value
    _check(
        checks,
        "strong-duality",
        abs(strong) <= 1e-8 * max(1.0, abs(reference.f_star)),
        f"f* + phi(p*) = {strong:.3e}",
    )
    kkt = reference.kkt_residuals.max_residual
    _check(
        checks,
        "kkt-residuals",
        kkt <= 1e-6 * max(1.0, reference.p_star),
        f"max residual {kkt:.3e}",
    )

    trace, report = run_dichotomy(instance)
    certificate = certify_centralized(instance, trace, report, reference)
    for item in certificate.checks:
        _check(checks, f"centralized/{item.name}", item.passed, item.detail)

    p_max = slater_bound(instance)
    last = trace.records[-1]
    exact = p_max / 2.0 ** len(trace.records)
    # The width is carried multiplicatively, so hi is exactly lo + p_max/2^N;
    # recomputing hi - lo would re-round and is not the invariant.
    _check(
        checks,
        "centralized/bracket-width-exact",
        last.bracket_hi == last.bracket_lo + exact,
        f"final hi {last.bracket_hi:.17g} vs lo + p_max/2^N "
        f"{last.bracket_lo + exact:.17g}",
    )
    sign_ok, sign_detail = True, "excess supply < 0 at every lo, >= 0 at every hi"
    for r in trace.records:
        lo_d = dual_point(instance, r.bracket_lo).dual_derivative
        hi_d = dual_point(instance, r.bracket_hi).dual_derivative
        if not (lo_d < 0.0 <= hi_d):
            sign_ok = False
            sign_detail = (
                f"iteration {r.iteration}: phi'({r.bracket_lo:.17g}) = {lo_d:.3e}, "
                f"phi'({r.bracket_hi:.17g}) = {hi_d:.3e}"
            )
            break
    _check(checks, "centralized/bracket-sign", sign_ok, sign_detail)
    half = 0.5 * exact + 1e-9 * max(1.0, reference.p_star)
    _check(
        checks,
        "centralized/price-vs-oracle",
        abs(report.price_final - reference.p_star) <= half,
        f"|p - p*| = {abs(report.price_final - reference.p_star):.3e} <= {half:.3e}",
    )

    run, dreport = run_projected_subgradient(instance, max_iterations=budget)
    _check(
        checks,
        "decentralized/confinement",
        run.max_price_norm <= 2.0 * run.radius + 1e-9,
        f"max ||p|| = {run.max_price_norm:.6g} vs 2R = {2 * run.radius:.6g}",
    )
    allocation = allocate_demand(run.p_bar, instance.demand_C)
    _check(
        checks,
        "decentralized/allocation-simplex",
        abs(float(np.sum(allocation.weights)) - 1.0) <= 1e-9
        and float(np.min(allocation.weights)) >= 0.0,
        f"sum weights = {float(np.sum(allocation.weights)):.12f}",
    )
    weak = dreport.dual_value + reference.f_star
    _check(
        checks,
        "decentralized/weak-duality",
        weak >= -1e-8 * max(1.0, abs(reference.f_star)),
        f"f* + phi(p_bar) = {weak:.6g} (must be >= 0)",
    )
    _check(
        checks,
        "decentralized/gap-nonnegative",
        dreport.duality_gap >= -1e-8 * max(1.0, abs(reference.f_star)),
        f"gap = {dreport.duality_gap:.6g}",
    )

    log = simulate_centralized(instance)
    rows = replay_centralized(log)
    bisim = len(rows) == len(trace.records) and all(
        row[1] == rec.price and row[2] == rec.total_production
        for row, rec in zip(rows, trace.records)
    )
    _check(
        checks,
        "bisimulation/centralized",
        bisim,
        f"{len(rows)} replayed rounds match the solver trace bit for bit"
        if bisim
        else "replayed transcript deviates from the solver trace",
    )

    small_budget = min(200, budget)
    srun, _ = run_projected_subgradient(
        instance, max_iterations=small_budget, record_trace=True
    )
    slog = simulate_decentralized(instance, budget=small_budget)
    drows = replay_decentralized(slog)
    dbisim = len(drows) == len(srun.trace) and all(
        np.array_equal(row[1], rec.prices)
        and np.array_equal(row[2], rec.productions)
        and np.array_equal(row[3], rec.purchases)
        and row[4] == rec.step
        for row, rec in zip(drows, srun.trace)
    )
    _check(
        checks,
        "bisimulation/decentralized",
        dbisim,
        f"{len(drows)} replayed rounds match the solver trace bit for bit"
        if dbisim
        else "replayed transcript deviates from the solver trace",
    )

    passed = all(c["passed"] for c in checks)
    out = _outdir(args)
    if out is not None:
        path = out / "certificate.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"passed": passed, "checks": checks}, fh, indent=2)
            fh.write("\n")
        print(f"certificate -> {path}")
    print(f"verify: {'all checks passed' if passed else 'FAILURES PRESENT'}")
    return EXIT_OK if passed else EXIT_VERIFY


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits: 0 for --help, 2 for usage errors
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except InstanceFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SlaterBoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
