"""Likelihood of the imperfect-debugging bugginess model.

A chunk debugged ``i`` times is buggy with probability ``p * alpha**i``.
Given ``m`` observed bugs and ``n[i]`` perfect traversals of chunks at debug
count ``i``, the log-likelihood up to an additive constant is::

    l(p) = m log p + sum_i n[i] log(1 - p alpha**i)

The buggy-chunk factor ``alpha**d`` is dropped into the constant since it
does not move the maximiser.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from .errors import DomainError

VARIANTS = ("homogeneous", "per_line", "per_class")

INTERIOR_GUARANTEED = "interior_guaranteed"
BOUNDARY_HIGH = "boundary_high"
UNDEFINED = "undefined"
UNDETERMINED = "undetermined"


def normalize_variant(name: str) -> str:
    variant = name.replace("-", "_")
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {name!r}; expected one of {VARIANTS}")
    return variant


@dataclass(frozen=True)
class ModelParams:
    alpha: float = 0.9
    variant: str = "homogeneous"
    class_alphas: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "variant", normalize_variant(self.variant))
        object.__setattr__(self, "class_alphas", dict(self.class_alphas))
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        for label, a in self.class_alphas.items():
            if not 0.0 < a < 1.0:
                raise ValueError(f"alpha for class {label!r} must lie in (0, 1), got {a}")
        if self.variant == "per_class" and not self.class_alphas:
            raise ValueError("per_class variant needs at least one class alpha")

    def alpha_for(self, label: str | None) -> float:
        """Inefficiency factor for a chunk class; unlisted classes use ``alpha``."""
        if label is None:
            return self.alpha
        return self.class_alphas.get(label, self.alpha)


@dataclass(frozen=True)
class SufficientStats:
    """Bug count ``m`` and sparse perfect-traversal counts ``n[i]``."""

    m: int = 0
    n: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("m must be non-negative")
        clean = {}
        for i, count in self.n.items():
            if i < 0 or count < 0:
                raise ValueError(f"invalid entry n[{i}] = {count}")
            if count:
                clean[int(i)] = int(count)
        object.__setattr__(self, "n", dict(sorted(clean.items())))

    @property
    def k(self) -> int:
        return max(self.n, default=0)

    @property
    def total_successes(self) -> int:
        return sum(self.n.values())

    def is_empty(self) -> bool:
        return self.m == 0 and not self.n

    def n_at(self, i: int) -> int:
        return self.n.get(i, 0)


@dataclass(frozen=True)
class PerLineStats:
    """Bug count plus one ``(debug_count, line_count)`` pair per perfect traversal."""

    m: int = 0
    successes: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("m must be non-negative")
        pairs = tuple((int(i), int(K)) for i, K in self.successes)
        for i, K in pairs:
            if i < 0 or K < 1:
                raise ValueError(f"invalid success pair (i={i}, K={K})")
        object.__setattr__(self, "successes", pairs)

    def is_empty(self) -> bool:
        return self.m == 0 and not self.successes


# class label -> stats for chunks of that class; all classes share one p
PerClassStats = Mapping[str, SufficientStats]


def _check_p(p: float) -> None:
    if not (isinstance(p, (int, float)) and math.isfinite(p) and 0.0 < p < 1.0):
        raise DomainError(f"p must be a finite number in (0, 1), got {p!r}")


def log_likelihood(stats: SufficientStats, params: ModelParams, p: float) -> float:
    _check_p(p)
    value = stats.m * math.log(p) if stats.m else 0.0
    for i, count in stats.n.items():
        value += count * math.log1p(-p * params.alpha**i)
    return value


def score(stats: SufficientStats, params: ModelParams, p: float) -> float:
    """Derivative of :func:`log_likelihood` with respect to ``p``."""
    _check_p(p)
    value = stats.m / p
    for i, count in stats.n.items():
        a = params.alpha**i
        value -= count * a / (1.0 - p * a)
    return value


def _per_line_term(p: float, K: int, i: int, alpha: float) -> tuple[float, float]:
    """Return ``log g`` and ``g'/g`` for ``g = 1 - (1 - (1-p)**K) * alpha**i``.

    ``g`` is evaluated as ``(1 - a) + a (1-p)**K``, a sum of non-negative
    terms, so it stays accurate when ``(1-p)**K`` underflows.
    """
    log_u = math.log1p(-p)
    if i == 0:
        return K * log_u, -K / (1.0 - p)
    a = alpha**i
    one_minus_a = -math.expm1(i * math.log(alpha))
    uk = math.exp(K * log_u)
    g = one_minus_a + a * uk
    slope = -a * K * math.exp((K - 1) * log_u)
    return math.log(g), slope / g


def per_line_log_likelihood(stats: PerLineStats, params: ModelParams, p: float) -> float:
    """Log-likelihood when each of a chunk's ``K`` lines is buggy with probability ``p``."""
    _check_p(p)
    value = stats.m * math.log(p) if stats.m else 0.0
    for i, K in stats.successes:
        value += _per_line_term(p, K, i, params.alpha)[0]
    return value


def per_line_score(stats: PerLineStats, params: ModelParams, p: float) -> float:
    _check_p(p)
    value = stats.m / p
    for i, K in stats.successes:
        value += _per_line_term(p, K, i, params.alpha)[1]
    return value


def per_class_log_likelihood(stats: PerClassStats, params: ModelParams, p: float) -> float:
    _check_p(p)
    return sum(
        log_likelihood(s, ModelParams(params.alpha_for(label)), p) for label, s in stats.items()
    )


def per_class_score(stats: PerClassStats, params: ModelParams, p: float) -> float:
    _check_p(p)
    return sum(score(s, ModelParams(params.alpha_for(label)), p) for label, s in stats.items())


def total_bugs(stats) -> int:
    if isinstance(stats, Mapping):
        return sum(s.m for s in stats.values())
    return stats.m


def likelihood_functions(stats):
    """Return the ``(log_likelihood, score)`` pair matching the type of ``stats``."""
    if isinstance(stats, SufficientStats):
        return log_likelihood, score
    if isinstance(stats, PerLineStats):
        return per_line_log_likelihood, per_line_score
    if isinstance(stats, Mapping):
        return per_class_log_likelihood, per_class_score
    raise TypeError(f"unsupported statistics type {type(stats).__name__}")


def upper_slope_limit(stats: SufficientStats, params: ModelParams) -> float:
    """Limit of the score as ``p -> 1``; ``-inf`` when ``n[0] > 0``."""
    if stats.n_at(0):
        return -math.inf
    value = float(stats.m)
    for i, count in stats.n.items():
        a = params.alpha**i
        value -= count * a / (1.0 - a)
    return value


def mle_diagnosis(stats: SufficientStats, params: ModelParams, epsilon: float = 1e-9) -> str:
    """Classify whether the maximiser of the log-likelihood lies inside (0, 1).

    With ``m > 0`` the score is ``+inf`` at 0 and strictly decreasing, so the
    maximiser is interior exactly when the score limit at 1 is negative:
    either ``n[0] > 0`` or ``sum_i n[i] alpha**i / (1 - alpha**i) > m``.
    """
    if stats.m == 0:
        return UNDEFINED
    if upper_slope_limit(stats, params) < 0:
        return INTERIOR_GUARANTEED
    if score(stats, params, 1.0 - epsilon) >= 0:
        return BOUNDARY_HIGH
    return UNDETERMINED
