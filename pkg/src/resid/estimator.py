"""Maximum likelihood estimation of ``p`` by bisection on the score.

For the homogeneous model the log-likelihood is strictly concave, so its
derivative is strictly decreasing and has at most one root in
``[eps, 1 - eps]``. Boundary cases are reported as such rather than clamped
into an interior estimate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .errors import SolverError
from .model import ModelParams, PerLineStats, likelihood_functions, total_bugs

INTERIOR = "interior"
BOUNDARY_LOW = "boundary_low"
BOUNDARY_HIGH = "boundary_high"
UNDEFINED = "undefined"


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 1e-9
    tolerance: float = 1e-10
    max_iterations: int = 200

    def __post_init__(self):
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError(f"epsilon must lie in (0, 0.5), got {self.epsilon}")
        if not self.tolerance > 0.0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


@dataclass(frozen=True)
class Estimate:
    p_hat: float | None
    status: str
    iterations: int = 0
    bracket_width: float = 0.0

    @property
    def defined(self) -> bool:
        return self.status != UNDEFINED


def _bisect(score_fn, stats, params, lo, hi, config):
    iterations = 0
    while hi - lo > config.tolerance:
        if iterations >= config.max_iterations:
            raise SolverError(
                f"bisection did not reach width {config.tolerance} in {iterations} iterations",
                (lo, hi),
            )
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            # bracket narrower than float spacing
            break
        if score_fn(stats, params, mid) > 0:
            lo = mid
        else:
            hi = mid
        iterations += 1
    return lo, hi, iterations


def _scan_grid(config: SolverConfig, points: int) -> list[float]:
    lo, hi = config.epsilon, 1.0 - config.epsilon
    grid = {lo + (hi - lo) * j / points for j in range(points + 1)}
    # refine towards both ends, where per-line terms change fastest
    for e in range(1, 16):
        d = 10.0**-e
        if d > config.epsilon:
            grid.update((d, 1.0 - d))
    return sorted(grid)


def _estimate_multimodal(stats, params, config, loglik_fn, score_fn, points=2000) -> Estimate:
    # candidate maxima: every +/- crossing of the score, plus descending/ascending ends
    grid = _scan_grid(config, points)
    signs = [score_fn(stats, params, x) for x in grid]
    candidates = []
    if signs[0] < 0:
        candidates.append(Estimate(grid[0], BOUNDARY_LOW, 0, grid[-1] - grid[0]))
    if signs[-1] > 0:
        candidates.append(Estimate(grid[-1], BOUNDARY_HIGH, 0, grid[-1] - grid[0]))
    for a, b, sa, sb in zip(grid, grid[1:], signs, signs[1:]):
        if sa > 0 and sb <= 0:
            lo, hi, its = _bisect(score_fn, stats, params, a, b, config)
            candidates.append(Estimate(0.5 * (lo + hi), INTERIOR, its, hi - lo))
    return max(candidates, key=lambda e: loglik_fn(stats, params, e.p_hat))


def estimate_mle(stats, params: ModelParams, config: SolverConfig = SolverConfig()) -> Estimate:
    """Maximise the log-likelihood of ``stats`` over ``[eps, 1 - eps]``.

    ``stats`` may be :class:`~resid.model.SufficientStats`,
    :class:`~resid.model.PerLineStats` or a per-class mapping of
    ``SufficientStats``; the matching score function is used.

    The homogeneous and per-class log-likelihoods are strictly concave and
    are solved by plain bisection. The per-line log-likelihood can have
    several stationary points, so its score is scanned for every downward
    crossing, each is refined by bisection, and the best candidate wins.
    """
    if total_bugs(stats) == 0:
        return Estimate(None, UNDEFINED)
    loglik_fn, score_fn = likelihood_functions(stats)
    if isinstance(stats, PerLineStats):
        return _estimate_multimodal(stats, params, config, loglik_fn, score_fn)

    lo, hi = config.epsilon, 1.0 - config.epsilon
    s_lo = score_fn(stats, params, lo)
    s_hi = score_fn(stats, params, hi)
    if s_lo > 0 and s_hi > 0:
        return Estimate(hi, BOUNDARY_HIGH, 0, hi - lo)
    if s_lo < 0 and s_hi < 0:
        return Estimate(lo, BOUNDARY_LOW, 0, hi - lo)
    lo, hi, iterations = _bisect(score_fn, stats, params, lo, hi, config)
    return Estimate(0.5 * (lo + hi), INTERIOR, iterations, hi - lo)


def chunk_unreliability(
    p_hat: float,
    debug_counts: Mapping[str, int],
    params: ModelParams,
    chunk_classes: Mapping[str, str | None] | None = None,
) -> dict[str, float]:
    """Per-chunk score ``p_hat * alpha**d`` where ``d`` is the chunk's debug count."""
    if not 0.0 < p_hat < 1.0:
        raise ValueError(f"p_hat must lie in (0, 1), got {p_hat}")
    classes = chunk_classes or {}
    scores = {}
    for chunk, d in debug_counts.items():
        alpha = params.alpha_for(classes.get(chunk)) if params.variant == "per_class" else params.alpha
        scores[chunk] = p_hat * alpha**d
    return scores
