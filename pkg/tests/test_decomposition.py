import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from brute_force import instance_from_image, separation_instance
from ctg_tomography.decomposition import LagrangeState, decompose
from ctg_tomography.generator import generate_random_instance
from ctg_tomography.instance import Direction, Ray, TomographyInstance, evaluate_energy


def test_four_by_four_hv_owns_every_edge_once():
    instance, _ = generate_random_instance(seed=3, width=4, height=4, k=3, directions="hv")

    decomposition = decompose(instance)

    assert len(decomposition) == 8
    assert decomposition.targeted == list(range(8))
    assert len(instance.edges) == 24
    assert sorted(decomposition.edge_owner) == sorted(instance.edges)
    assert len(decomposition.shared_nodes) == 16


def test_missing_directions_get_energy_only_chains():
    instance = instance_from_image([[0, 1, 2], [1, 1, 0], [2, 0, 1]], k=3, directions="h")

    decomposition = decompose(instance)
    energy_only = [chain for chain in decomposition.chains if chain.target is None]

    assert len(decomposition.targeted) == 3
    assert len(energy_only) == 3
    assert all(chain.direction is Direction.VERTICAL for chain in energy_only)
    assert len(decomposition.edge_owner) == 12


def test_diagonal_rays_carry_no_pairwise_terms():
    instance = instance_from_image([[0, 1], [2, 1]], k=3, directions="hvd")

    decomposition = decompose(instance)
    diagonal = [chain for chain in decomposition.chains if chain.direction in (Direction.DIAG_DOWN, Direction.DIAG_UP)]

    assert len(decomposition.targeted) == 10
    assert sorted(len(chain.node_ids) for chain in diagonal) == [1, 1, 1, 1, 2, 2]
    assert all(not np.any(chain.pairwise) for chain in diagonal)
    assert all(chain.target is not None for chain in diagonal)


def test_unowned_edges_go_to_lattice_lines():
    instance = separation_instance()
    partial = TomographyInstance(
        width=3,
        height=1,
        k=2,
        unary=np.array([[0.0, 1.0], [0.0, 0.0], [2.0, 0.0]]),
        pairwise=instance.pairwise,
        rays=(Ray((0, 1), 1, Direction.HORIZONTAL),),
    )

    decomposition = decompose(partial)

    assert [chain.node_ids for chain in decomposition.chains] == [(0, 1), (0, 1, 2)]
    assert decomposition.chains[1].target is None
    assert decomposition.base_unary[1].tolist() == [[0.0, 0.0], [0.0, 0.0], [2.0, 0.0]]


def test_isolated_node_gets_singleton_chain():
    single = TomographyInstance(
        width=1,
        height=1,
        k=3,
        unary=np.array([[1.0, 0.0, 2.0]]),
        pairwise=separation_instance().pairwise,
        rays=(),
    )

    decomposition = decompose(single)

    assert [chain.node_ids for chain in decomposition.chains] == [(0,)]
    assert decomposition.shared_nodes == []


def test_chain_energies_sum_to_instance_energy():
    _, truth = generate_random_instance(seed=5, width=4, height=3, k=3, directions="hvd")
    rng = np.random.default_rng(0)
    weighted = instance_from_image(
        truth.reshape(3, 4).tolist(),
        k=3,
        directions="hvd",
        unary=rng.normal(size=(12, 3)),
    )

    decomposition = decompose(weighted)

    for _ in range(10):
        labeling = rng.integers(0, 3, size=12)
        assert decomposition.energy_of(labeling) == pytest.approx(evaluate_energy(weighted, labeling), abs=1e-9)


def test_zero_sum_projection_and_fixings():
    instance, _ = generate_random_instance(seed=2, width=3, height=3, k=3, directions="hv")
    decomposition = decompose(instance)
    rng = np.random.default_rng(1)

    lagrange = LagrangeState(decomposition, rng.normal(size=(decomposition.num_positions, 3))).recenter()

    assert lagrange.zero_sum_residual() < 1e-12

    subproblems = decomposition.subproblems(lagrange, fixings={4: 2})
    for sub in subproblems:
        if 4 in sub.node_ids:
            row = sub.unary[sub.node_ids.index(4)]
            assert np.isinf(row[:2]).all()
            assert np.isfinite(row[2])


def test_assemble_requires_agreement_on_shared_nodes():
    instance = instance_from_image([[0, 1], [1, 0]], k=2)
    decomposition = decompose(instance)

    rows_and_columns = [np.array([0, 1]), np.array([1, 0]), np.array([0, 1]), np.array([1, 0])]
    assert decomposition.assemble(rows_and_columns).tolist() == [0, 1, 1, 0]

    rows_and_columns[2] = np.array([1, 1])
    assert decomposition.assemble(rows_and_columns) is None
