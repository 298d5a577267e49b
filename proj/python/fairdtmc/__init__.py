from ._core import (
    ArgumentError,
    ConfigError,
    Error,
    ModelError,
    Network,
    SolverError,
    compute_hn,
    derive_eps_delta,
    dtmc_to_dot,
    estimate_prob_diff,
    fairness_verdict,
    load_network,
    parse_network,
    reach_all,
    run,
)

__all__ = [
    "ArgumentError",
    "ConfigError",
    "Error",
    "ModelError",
    "Network",
    "SolverError",
    "compute_hn",
    "derive_eps_delta",
    "dtmc_to_dot",
    "estimate_prob_diff",
    "fairness_verdict",
    "load_network",
    "parse_network",
    "reach_all",
    "run",
]
