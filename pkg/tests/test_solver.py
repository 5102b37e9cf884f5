import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from brute_force import brute_force_instance, instance_from_image, separation_instance
from ctg_tomography.errors import InstanceValidationError
from ctg_tomography.generator import generate_random_instance
from ctg_tomography.instance import PairwiseKind, PairwiseSpec
from ctg_tomography.models import SolverConfig
from ctg_tomography.reports import round_sig, write_result
from ctg_tomography.solver import solve_instance


CONFIG = SolverConfig().with_overrides(deterministic=True, max_iters=80)


def test_ctg_certifies_separation_instance():
    result = solve_instance(separation_instance(), "ctg", CONFIG, instance_name="separation")

    assert result.lower_bound == pytest.approx(1.0)
    assert result.primal_value == 1.0
    assert result.certified
    assert result.status == "optimal"
    assert result.gap == pytest.approx(0.0)


def test_std_bound_alone_does_not_certify():
    result = solve_instance(separation_instance(), "std", CONFIG)

    assert result.lower_bound == pytest.approx(0.0, abs=1e-9)
    assert result.primal_value == 1.0
    assert not result.certified
    assert result.status == "gap"


def test_search_methods_reach_exhaustive_optimum():
    instance, _ = generate_random_instance(seed=3, width=3, height=3, k=2, directions="hv")
    optimum, _ = brute_force_instance(instance)

    for method in ("ctg-bb", "std-bb"):
        result = solve_instance(instance, method, CONFIG)
        assert result.status == "optimal"
        assert result.certified
        assert result.primal_value == pytest.approx(optimum)
        assert result.details["branch_nodes"] >= 0


CERTIFICATE_SHAPES = [(3, 3, 3, "hv"), (2, 4, 3, "hvd"), (3, 3, 2, "hvd"), (2, 3, 4, "hv")]


def test_certified_values_equal_exhaustive_optimum():
    rng = np.random.default_rng(41)
    certified = 0
    for index in range(200):
        height, width, k, directions = CERTIFICATE_SHAPES[index % len(CERTIFICATE_SHAPES)]
        if index % 2:
            instance, _ = generate_random_instance(seed=index, width=width, height=height, k=k, directions=directions)
        else:
            instance = instance_from_image(
                rng.integers(0, k, size=(height, width)).tolist(),
                k=k,
                directions=directions,
                pairwise=PairwiseSpec(PairwiseKind.POTTS, float(rng.integers(1, 3))),
                unary=rng.integers(0, 5, size=(width * height, k)).astype(float),
            )
        assert k ** instance.num_nodes <= 200_000

        result = solve_instance(instance, "ctg", CONFIG)

        if result.certified:
            certified += 1
            assert result.primal_value == brute_force_instance(instance)[0]
    assert certified > 0


def test_unknown_method_is_a_validation_error():
    with pytest.raises(InstanceValidationError) as excinfo:
        solve_instance(separation_instance(), "lp", CONFIG)

    assert excinfo.value.field == "method"
    assert excinfo.value.exit_code == 2


def test_infeasible_instance_record(tmp_path):
    result = solve_instance(separation_instance().with_targets([3]), "ctg", CONFIG)

    path = write_result(result, tmp_path / "result.json")
    payload = json.loads(path.read_text(encoding="utf-8"))

    assert payload["status"] == "infeasible"
    assert payload["lower_bound"] is None
    assert payload["primal_value"] is None
    assert payload["errors"][0]["category"] == "infeasible"


def test_result_record_schema():
    result = solve_instance(separation_instance(), "ctg", CONFIG, instance_name="separation")

    payload = result.to_dict()

    assert payload["schema_version"] == "1"
    assert payload["instance"] == "separation"
    assert payload["labeling"] == [0, 1]
    assert payload["trace"][0]["best_dual"] == 1.0
    assert payload["config"]["ascent"]["deterministic"] is True
    assert set(payload) >= {"method", "lower_bound", "primal_value", "gap", "certified", "iterations", "wall_time", "trace"}


def test_round_sig_keeps_twelve_digits():
    assert round_sig(1.0 / 3.0) == 0.333333333333
    assert round_sig(float("inf")) is None
    assert round_sig(7) == 7
    assert round_sig(None) is None
