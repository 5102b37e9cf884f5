import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from brute_force import instance_from_image, separation_instance
from ctg_tomography.errors import InstanceParseError, InstanceValidationError
from ctg_tomography.generator import generate_random_instance
from ctg_tomography.instance import (
    Direction,
    PairwiseKind,
    PairwiseSpec,
    build_lattice_rays,
    check_feasibility,
    evaluate_energy,
    instance_to_dict,
    load_instance,
    parse_directions,
    project,
    save_instance,
)
from ctg_tomography.pgm import read_pgm, write_pgm


FIXTURE = Path(__file__).parent / "fixtures" / "separation_chain.json"


def test_lattice_rays_follow_rows_columns_and_diagonals():
    rows = build_lattice_rays(2, 2, {"horizontal"})
    both = build_lattice_rays(2, 2, "hv")
    diagonals = build_lattice_rays(3, 3, {Direction.DIAG_DOWN})

    assert [ray.nodes for ray in rows] == [(0, 1), (2, 3)]
    assert len(both) == 4
    assert all(len(ray) == 2 for ray in both)
    assert [len(ray) for ray in diagonals] == [1, 2, 3, 2, 1]


def test_parse_directions_expands_diagonal_shorthand():
    assert parse_directions("hd") == {Direction.HORIZONTAL, Direction.DIAG_DOWN, Direction.DIAG_UP}
    with pytest.raises(InstanceValidationError):
        parse_directions("hx")


def test_project_and_energy_on_small_image():
    instance = instance_from_image([[0, 1], [2, 1]], k=3)
    labeling = np.array([0, 1, 2, 1])

    assert project(instance, labeling).tolist() == [1, 3, 2, 2]
    assert evaluate_energy(instance, labeling) == 4.0
    assert project(instance, np.zeros(4, dtype=int)).tolist() == [0, 0, 0, 0]
    assert project(instance, np.full(4, 2)).tolist() == [4, 4, 4, 4]


def test_energy_examples_for_potts_and_absdiff():
    potts = instance_from_image([[1, 1], [1, 1]], k=3, pairwise=PairwiseSpec(PairwiseKind.POTTS, 1.0))
    absdiff = instance_from_image([[0, 2]], k=3, directions="h")

    assert evaluate_energy(potts, np.ones(4, dtype=int)) == 0.0
    assert evaluate_energy(absdiff, np.array([0, 2])) == 2.0


def term_by_term_energy(width, height, unary, kind, weight, tables, labeling):
    energy = sum(unary[node, labeling[node]] for node in range(width * height))
    for y in range(height):
        for x in range(width):
            node = y * width + x
            neighbours = ([node + 1] if x + 1 < width else []) + ([node + width] if y + 1 < height else [])
            for other in neighbours:
                a, b = labeling[node], labeling[other]
                if kind is PairwiseKind.POTTS:
                    energy += weight * (a != b)
                elif kind is PairwiseKind.ABSDIFF:
                    energy += weight * abs(a - b)
                else:
                    energy += tables[(node, other)][a, b]
    return energy


def test_energy_matches_term_by_term_sum():
    rng = np.random.default_rng(19)
    kinds = [PairwiseKind.POTTS, PairwiseKind.ABSDIFF, PairwiseKind.TABLE]
    for trial in range(1000):
        width, height, k = int(rng.integers(1, 6)), int(rng.integers(1, 6)), int(rng.integers(2, 5))
        kind = kinds[trial % 3]
        weight = float(rng.uniform(0.1, 3.0))
        unary = rng.normal(size=(width * height, k))
        edges = [(y * width + x, y * width + x + 1) for y in range(height) for x in range(width - 1)]
        edges += [(y * width + x, (y + 1) * width + x) for y in range(height - 1) for x in range(width)]
        tables = {edge: rng.normal(size=(k, k)) for edge in edges} if kind is PairwiseKind.TABLE else None
        instance = instance_from_image(
            np.zeros((height, width), dtype=int).tolist(),
            k=k,
            pairwise=PairwiseSpec(kind, weight, tables),
            unary=unary,
        )
        labeling = rng.integers(0, k, size=width * height)

        expected = term_by_term_energy(width, height, unary, kind, weight, tables, labeling)

        assert evaluate_energy(instance, labeling) == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_check_feasibility_reports_per_ray_residuals():
    instance = separation_instance()

    assert check_feasibility(instance, np.array([0, 0])).tolist() == [1]
    assert check_feasibility(instance, np.array([1, 0])).tolist() == [0]

    unreachable = instance.with_targets([3])
    for labeling in ([0, 0], [0, 1], [1, 0], [1, 1]):
        assert check_feasibility(unreachable, np.array(labeling))[0] > 0


def test_invalid_labeling_is_rejected():
    instance = separation_instance()

    with pytest.raises(InstanceValidationError):
        evaluate_energy(instance, np.array([0, 2]))
    with pytest.raises(InstanceValidationError):
        project(instance, np.array([0]))


def test_fixture_matches_separation_instance():
    assert load_instance(FIXTURE) == separation_instance()


def test_save_and_load_generated_instance(tmp_path):
    instance, ground_truth = generate_random_instance(seed=4, width=4, height=3, k=3)
    path = save_instance(instance, tmp_path / "instance.json")

    loaded = load_instance(path)

    assert loaded == instance
    assert not np.any(check_feasibility(loaded, ground_truth))
    assert loaded.metadata["seed"] == 4


def test_load_instance_rejects_bad_files(tmp_path):
    data = instance_to_dict(separation_instance())

    small_k = tmp_path / "k1.json"
    small_k.write_text(json.dumps({**data, "k": 1}), encoding="utf-8")
    with pytest.raises(InstanceValidationError) as excinfo:
        load_instance(small_k)
    assert excinfo.value.field == "k"

    outside = tmp_path / "outside.json"
    outside.write_text(
        json.dumps({**data, "rays": [{"nodes": [0, 5], "target": 1, "direction": "horizontal"}]}),
        encoding="utf-8",
    )
    with pytest.raises(InstanceValidationError, match="out of grid"):
        load_instance(outside)

    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(InstanceParseError):
        load_instance(broken)


def test_pgm_stores_labels_as_grey_levels(tmp_path):
    image = np.array([[0, 1, 2], [2, 1, 0]])
    path = write_pgm(tmp_path / "truth.pgm", image, maxval=2)

    pixels, maxval = read_pgm(path)

    assert path.read_text(encoding="ascii").splitlines()[:3] == ["P2", "3 2", "2"]
    assert maxval == 2
    assert np.array_equal(pixels, image)
