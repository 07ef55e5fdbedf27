"""Equilibrium price discovery for a single-commodity market.

Two mechanisms find the market-clearing price: a centralized dichotomy that
bisects a bracket on the scalar dual price, and a decentralized projected
subgradient scheme in which every firm adjusts its own price from purchase
feedback.  Both come with primal recovery, duality-gap certificates, an
independent oracle, and a message-passing simulation that reproduces the
solvers bit for bit.
"""

from .dichotomy import (
    CentralizedTrace,
    CertificateCheck,
    CertificateRecord,
    PriceBracket,
    SlaterBoundError,
    TraceRecord,
    certify_centralized,
    project_feasible,
    run_dichotomy,
    slater_bound,
    theoretical_iterations,
)
from .instances import (
    PRESET_NAMES,
    InstanceDocument,
    InstanceFormatError,
    SolverSettings,
    get_preset,
    load_document,
    parse_instance,
    serialize_instance,
    write_instance,
)
from .market import (
    CostBatch,
    DualPoint,
    EquilibriumReport,
    FirmCost,
    MarketInstance,
    best_response,
    dual_point,
    eval_cost,
    primal_value,
    smoothness_constant,
)
from .oracle import (
    BruteForceResult,
    KKTResiduals,
    OracleSolution,
    brute_force_small,
    kkt_check,
    oracle_solve,
)
from .protocol import (
    AllocationNotice,
    FirmQuote,
    PriceAnnouncement,
    ProductionReport,
    ProtocolMessage,
    RoundLog,
    log_to_jsonl,
    read_jsonl,
    replay_centralized,
    replay_decentralized,
    simulate_centralized,
    simulate_decentralized,
    write_jsonl,
)
from .subgradient import (
    DecentralTraceRecord,
    DemandAllocation,
    GapDiagnostics,
    SubgradientRun,
    allocate_demand,
    bound_M,
    duality_gap_stop,
    multi_dual_value,
    radius_R,
    run_projected_subgradient,
    step_adaptive,
    step_fixed,
    subgradient,
    theoretical_iterations_decentralized,
)

__version__ = "0.1.0"

__all__ = [
    "FirmCost",
    "MarketInstance",
    "CostBatch",
    "DualPoint",
    "EquilibriumReport",
    "eval_cost",
    "best_response",
    "dual_point",
    "primal_value",
    "smoothness_constant",
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
    "KKTResiduals",
    "OracleSolution",
    "BruteForceResult",
    "oracle_solve",
    "brute_force_small",
    "kkt_check",
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
    "PRESET_NAMES",
    "InstanceFormatError",
    "SolverSettings",
    "InstanceDocument",
    "get_preset",
    "parse_instance",
    "load_document",
    "serialize_instance",
    "write_instance",
    "__version__",
]
