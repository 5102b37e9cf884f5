import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from brute_force import brute_force_instance, instance_from_image, separation_instance
from ctg_tomography.ascent import dual_ascent
from ctg_tomography.decomposition import decompose
from ctg_tomography.generator import generate_random_instance
from ctg_tomography.instance import PairwiseKind, PairwiseSpec, check_feasibility, evaluate_energy
from ctg_tomography.models import PrimalConfig, SearchConfig, SolverConfig
from ctg_tomography.primal import certify, prune_labels, recover_primal, solve_reduced


def test_prune_with_infinite_epsilon_keeps_everything():
    instance, _ = generate_random_instance(seed=3, width=3, height=3, k=3)

    candidates = prune_labels(decompose(instance), None, np.inf)

    assert candidates.all()


def test_prune_on_separation_instance_keeps_both_labels():
    candidates = prune_labels(decompose(separation_instance()), None, 0.0)

    assert candidates.tolist() == [[True, True], [True, True]]


def test_prune_zero_ray_keeps_only_zero():
    instance = instance_from_image([[0, 0, 0], [1, 2, 0]], k=3, directions="h")

    candidates = prune_labels(decompose(instance), None, 0.0)

    assert candidates[:3].tolist() == [[True, False, False]] * 3


def test_prune_forces_fixed_nodes():
    instance, _ = generate_random_instance(seed=1, width=3, height=3, k=3)

    candidates = prune_labels(decompose(instance), None, np.inf, fixings={0: 2})

    assert candidates[0].tolist() == [False, False, True]
    assert candidates[1:].all()


def test_reduced_search_with_full_domains_is_exact():
    for seed in range(5):
        instance, _ = generate_random_instance(seed=seed, width=3, height=3, k=2, directions="hv")
        optimum, _ = brute_force_instance(instance)

        solution = solve_reduced(instance, np.ones((9, 2), dtype=bool))

        assert solution.status == "optimal"
        assert solution.value == pytest.approx(optimum)


def test_reduced_search_with_singleton_domains_returns_them():
    instance, truth = generate_random_instance(seed=2, width=4, height=3, k=3)
    candidates = np.zeros((12, 3), dtype=bool)
    candidates[np.arange(12), truth] = True

    solution = solve_reduced(instance, candidates)

    assert solution.labeling.tolist() == truth.tolist()


def test_reduced_search_reports_infeasible_domains():
    instance = separation_instance()
    candidates = np.array([[True, False], [True, False]])

    solution = solve_reduced(instance, candidates)

    assert solution.labeling is None
    assert solution.status == "infeasible"


def test_reduced_search_honours_node_limit():
    instance = instance_from_image([[1] * 4] * 4, k=3)

    solution = solve_reduced(instance, np.ones((16, 3), dtype=bool), SearchConfig(node_limit=1))

    assert solution.status == "node_limit"


@pytest.mark.parametrize(
    "primal, dual, integral, optimal, gap",
    [
        (4.0, 3.2, True, True, 0.8),
        (4.0, 3.0, True, False, 1.0),
        (4.0, 3.9, False, False, 0.1),
    ],
)
def test_certify(primal, dual, integral, optimal, gap):
    certificate = certify(primal, dual, integral)

    assert certificate.optimal is optimal
    assert certificate.gap == pytest.approx(gap)


def test_certificate_verdict_text():
    assert certify(4.0, 3.2, True).verdict == "optimal"
    assert certify(4.0, 3.0, True).verdict == "gap(1)"


def test_recover_primal_finds_feasible_labeling():
    instance, _ = generate_random_instance(seed=8, width=3, height=3, k=3)
    config = SolverConfig(primal=PrimalConfig((0.0, 1.0, math.inf))).with_overrides(deterministic=True, max_iters=60)
    ascent = dual_ascent(instance, "ctg", config)

    result = recover_primal(instance, ascent.decomposition, ascent.lagrange, config)

    assert result.labeling is not None
    assert result.epsilon is not None
    assert not np.any(check_feasibility(instance, result.labeling))
    assert result.value == pytest.approx(evaluate_energy(instance, result.labeling))
    assert result.value >= ascent.best_dual - 1e-9


def test_wider_epsilon_never_worsens_reduced_optimum():
    config = SolverConfig().with_overrides(deterministic=True, max_iters=20)
    for seed in range(8):
        instance, _ = generate_random_instance(seed=seed, width=3, height=3, k=3, directions="hv")
        ascent = dual_ascent(instance, "ctg", config)
        previous_mask, previous_value = None, math.inf

        for epsilon in (0.0, 0.5, 1.0, 2.0, math.inf):
            candidates = prune_labels(ascent.decomposition, ascent.lagrange, epsilon)
            value = solve_reduced(instance, candidates).value

            if previous_mask is not None:
                assert np.all(candidates >= previous_mask)
            assert value <= previous_value
            previous_mask, previous_value = candidates, value
        assert previous_value == brute_force_instance(instance)[0]


def staircase_instance(rng: np.random.Generator, size: int = 8, k: int = 3):
    """Columns step once from ``c`` to ``c + 1``; unaries pin every pixel to that image."""
    lows = rng.integers(0, k - 1, size=size)
    switches = rng.integers(1, size, size=size)
    rows = np.arange(size)[:, None]
    truth = (lows[None, :] + (rows >= switches[None, :])).astype(np.int64)
    unary = np.full((size * size, k), 20.0)
    unary[np.arange(size * size), truth.reshape(-1)] = 0.0
    instance = instance_from_image(
        truth.tolist(), k=k, directions="hv", pairwise=PairwiseSpec(PairwiseKind.ABSDIFF, 1.0), unary=unary
    )
    return instance, truth.reshape(-1)


def test_recovered_primal_matches_certified_optimum():
    rng = np.random.default_rng(77)
    config = SolverConfig().with_overrides(deterministic=True, max_iters=5)
    for _ in range(20):
        instance, truth = staircase_instance(rng)
        ascent = dual_ascent(instance, "ctg", config)

        result = recover_primal(instance, ascent.decomposition, ascent.lagrange, config)

        assert not np.any(check_feasibility(instance, result.labeling))
        assert result.value == evaluate_energy(instance, truth)
        assert certify(result.value, ascent.best_dual, instance.costs_integral).optimal
