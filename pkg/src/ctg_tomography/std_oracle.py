"""Per-ray oracle for the local-polytope relaxation with an expected-sum constraint.

On a chain the local polytope is tight, so the relaxed ray problem equals

    max_gamma  g(gamma),   g(gamma) = min_x E(x) + gamma * (sum_i x_i - b),

a concave piecewise-linear function of one scalar. ``std_ray_value`` maximizes it
with a bracketing cutting-plane search whose supergradient is ``sum_i x*_i - b``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .chain import INF, TIE_TOLERANCE, ChainSolution, ChainSubproblem


logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-7
MAX_BRACKET_STEPS = 200


def chain_map_dp(sub: ChainSubproblem) -> ChainSolution:
    """Unconstrained chain optimum by dynamic programming; ignores ``sub.target``.

    Ties go to the lexicographically smallest labeling.
    """
    n = sub.n
    cost_to_go = np.empty((n, sub.k))
    cost_to_go[n - 1] = sub.unary[n - 1]
    for i in range(n - 2, -1, -1):
        cost_to_go[i] = sub.unary[i] + np.min(sub.pairwise[i] + cost_to_go[i + 1][None, :], axis=1)
    value = float(cost_to_go[0].min())
    if not np.isfinite(value):
        return ChainSolution(INF)

    tolerance = TIE_TOLERANCE * max(1.0, abs(value))
    labels = np.empty(n, dtype=np.int64)
    labels[0] = int(np.flatnonzero(cost_to_go[0] <= value + tolerance)[0])
    spent = float(sub.unary[0, labels[0]])
    for i in range(1, n):
        options = spent + sub.pairwise[i - 1][labels[i - 1]] + cost_to_go[i]
        labels[i] = int(np.flatnonzero(options <= value + tolerance)[0])
        spent += float(sub.pairwise[i - 1][labels[i - 1], labels[i]] + sub.unary[i, labels[i]])
    return ChainSolution(value, labels)


@dataclass
class StdRayDual:
    gamma: float
    value: float
    witness: np.ndarray | None
    marginals: np.ndarray | None = None
    infeasible: bool = False
    evaluations: int = 0


@dataclass
class _Cut:
    gamma: float
    value: float
    slope: int
    labels: np.ndarray
    energy: float
    label_sum: int


def _allowed_label_range(sub: ChainSubproblem) -> tuple[int, int]:
    finite = np.isfinite(sub.unary)
    labels = np.arange(sub.k)
    lowest = int(sum(labels[row].min() for row in finite))
    highest = int(sum(labels[row].max() for row in finite))
    return lowest, highest


def _gamma_bound(sub: ChainSubproblem) -> float:
    """Multiplier magnitude beyond which the supergradient keeps a constant sign."""
    spread = 0.0
    for row in sub.unary:
        finite = row[np.isfinite(row)]
        spread += float(finite.max() - finite.min())
    if sub.n > 1:
        spread += float(np.sum(sub.pairwise.max(axis=(1, 2)) - sub.pairwise.min(axis=(1, 2))))
    return spread + 1.0


def _one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels] = 1.0
    return out


def _evaluate(sub: ChainSubproblem, gamma: float) -> _Cut:
    shifted = sub.with_unary(sub.unary + gamma * np.arange(sub.k)[None, :])
    solution = chain_map_dp(shifted)
    assert solution.labels is not None
    label_sum = int(solution.labels.sum())
    target = int(sub.target or 0)
    return _Cut(
        gamma=gamma,
        value=solution.value - gamma * target,
        slope=label_sum - target,
        labels=solution.labels,
        energy=sub.energy(solution.labels),
        label_sum=label_sum,
    )


def _mixture(sub: ChainSubproblem, upper: _Cut, lower: _Cut) -> np.ndarray:
    """Unary marginals of the convex combination of both witnesses whose expected sum is the target."""
    if upper.label_sum == lower.label_sum:
        return _one_hot(upper.labels, sub.k)
    weight = (int(sub.target or 0) - lower.label_sum) / (upper.label_sum - lower.label_sum)
    return weight * _one_hot(upper.labels, sub.k) + (1.0 - weight) * _one_hot(lower.labels, sub.k)


def std_ray_value(sub: ChainSubproblem, tol: float = DEFAULT_TOLERANCE) -> StdRayDual:
    if sub.target is None:
        solution = chain_map_dp(sub)
        marginals = None if solution.labels is None else _one_hot(solution.labels, sub.k)
        return StdRayDual(0.0, solution.value, solution.labels, marginals, not solution.feasible, 1)

    lowest, highest = _allowed_label_range(sub)
    if not lowest <= sub.target <= highest:
        return StdRayDual(0.0, INF, None, None, infeasible=True)

    bound = _gamma_bound(sub)
    # left end: labels pushed up, slope >= 0; right end: slope <= 0
    lo, hi = _evaluate(sub, -bound), _evaluate(sub, bound)
    evaluations = 2
    slack = max(1, sub.n * (sub.k - 1))
    for cut in (lo, hi):
        if cut.slope == 0:
            return StdRayDual(cut.gamma, cut.value, cut.labels, _one_hot(cut.labels, sub.k), evaluations=evaluations)

    for _ in range(MAX_BRACKET_STEPS):
        if (hi.gamma - lo.gamma) * slack < tol:
            break
        denominator = lo.slope - hi.slope
        trial = (hi.value - lo.value + lo.slope * lo.gamma - hi.slope * hi.gamma) / denominator
        if not lo.gamma < trial < hi.gamma:
            trial = 0.5 * (lo.gamma + hi.gamma)
        model = lo.value + lo.slope * (trial - lo.gamma)
        cut = _evaluate(sub, trial)
        evaluations += 1
        if cut.slope == 0:
            return StdRayDual(cut.gamma, cut.value, cut.labels, _one_hot(cut.labels, sub.k), evaluations=evaluations)
        if cut.value >= model - TIE_TOLERANCE * max(1.0, abs(model)):
            # both bracket witnesses are optimal at the kink
            return StdRayDual(trial, cut.value, cut.labels, _mixture(sub, lo, hi), evaluations=evaluations)
        if cut.slope > 0:
            lo = cut
        else:
            hi = cut

    best = lo if lo.value >= hi.value else hi
    logger.debug("multiplier bracket closed at width %.3g after %d evaluations", hi.gamma - lo.gamma, evaluations)
    return StdRayDual(best.gamma, best.value, best.labels, _mixture(sub, lo, hi), evaluations=evaluations)
