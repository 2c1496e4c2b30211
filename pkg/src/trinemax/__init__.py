"""Minimax mean estimation for planar-qubit tomography with the trine measurement."""

from .geometry import (
    BlochState,
    CountVector,
    ProbTriple,
    TrineConfig,
    DEFAULT_TRINE,
    enumerate_counts,
    is_physical,
    log_multinomial_weight,
    probs_from_state,
    purity,
    state_from_probs,
)

__all__ = [
    "BlochState",
    "CountVector",
    "ProbTriple",
    "TrineConfig",
    "DEFAULT_TRINE",
    "enumerate_counts",
    "is_physical",
    "log_multinomial_weight",
    "probs_from_state",
    "purity",
    "state_from_probs",
]

__version__ = "0.1.0"
