"""Reliability estimation for software under imperfect debugging."""

from .estimator import Estimate, SolverConfig, chunk_unreliability, estimate_mle
from .model import (
    ModelParams,
    PerLineStats,
    SufficientStats,
    log_likelihood,
    mle_diagnosis,
    per_line_log_likelihood,
    score,
)
from .records import RunRecord, SessionState, extract_statistics, process_run, truncate

__all__ = [
    "Estimate",
    "ModelParams",
    "PerLineStats",
    "RunRecord",
    "SessionState",
    "SolverConfig",
    "SufficientStats",
    "chunk_unreliability",
    "estimate_mle",
    "extract_statistics",
    "log_likelihood",
    "mle_diagnosis",
    "per_line_log_likelihood",
    "process_run",
    "score",
    "truncate",
]
