"""Split a tomography instance into chain subproblems that share nodes but not edges.

Each ray becomes one targeted chain. A ray owns the grid edges between its consecutive
nodes unless an earlier ray already claimed them; grid edges no ray owns are covered
by energy-only chains along their lattice line. Multipliers live on the stacked
node positions of all chains (``LagrangeState``) and sum to zero over every node.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .chain import INF, ChainSubproblem
from .instance import Direction, TomographyInstance, as_labeling


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChainSpec:
    node_ids: tuple[int, ...]
    pairwise: np.ndarray
    target: int | None
    direction: Direction
    ray_index: int | None = None


@dataclass
class Decomposition:
    instance: TomographyInstance
    chains: list[ChainSpec]
    edge_owner: dict[tuple[int, int], int]
    base_unary: list[np.ndarray]
    offsets: np.ndarray = field(init=False)
    position_nodes: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        lengths = [len(chain.node_ids) for chain in self.chains]
        self.offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
        self.position_nodes = np.concatenate([np.asarray(chain.node_ids, dtype=np.int64) for chain in self.chains])
        self.membership_counts = np.bincount(self.position_nodes, minlength=self.instance.num_nodes)
        self.node_membership: dict[int, list[tuple[int, int]]] = {}
        for index, chain in enumerate(self.chains):
            for position, node in enumerate(chain.node_ids):
                self.node_membership.setdefault(node, []).append((index, position))

    def __len__(self) -> int:
        return len(self.chains)

    @property
    def k(self) -> int:
        return self.instance.k

    @property
    def num_positions(self) -> int:
        return int(self.offsets[-1])

    @property
    def shared_nodes(self) -> list[int]:
        return [int(node) for node in np.flatnonzero(self.membership_counts > 1)]

    @property
    def targeted(self) -> list[int]:
        return [index for index, chain in enumerate(self.chains) if chain.target is not None]

    def positions(self, index: int) -> slice:
        return slice(int(self.offsets[index]), int(self.offsets[index + 1]))

    def forbidden_mask(self, fixings: Mapping[int, int] | None) -> np.ndarray | None:
        """Stacked ``(positions, k)`` mask of labels excluded by ``fixings``."""
        if not fixings:
            return None
        fixed = np.full(self.instance.num_nodes, -1, dtype=np.int64)
        for node, label in fixings.items():
            fixed[int(node)] = int(label)
        wanted = fixed[self.position_nodes]
        mask = (wanted[:, None] >= 0) & (np.arange(self.k)[None, :] != wanted[:, None])
        return mask

    def subproblem_at(
        self,
        index: int,
        lagrange: "LagrangeState | None" = None,
        fixings: Mapping[int, int] | None = None,
        forbidden: np.ndarray | None = None,
    ) -> ChainSubproblem:
        chain = self.chains[index]
        unary = self.base_unary[index].copy()
        if lagrange is not None:
            unary += lagrange.get(index)
        if forbidden is None:
            forbidden = self.forbidden_mask(fixings)
        if forbidden is not None:
            unary[forbidden[self.positions(index)]] = INF
        return ChainSubproblem(chain.node_ids, unary, chain.pairwise, chain.target)

    def subproblems(
        self, lagrange: "LagrangeState | None" = None, fixings: Mapping[int, int] | None = None
    ) -> list[ChainSubproblem]:
        forbidden = self.forbidden_mask(fixings)
        return [self.subproblem_at(index, lagrange, forbidden=forbidden) for index in range(len(self.chains))]

    def energy_of(self, labeling: np.ndarray) -> float:
        """Sum of the chain energies at zero multipliers; equals the instance energy."""
        values = as_labeling(self.instance, labeling)
        return float(sum(sub.energy(values[list(sub.node_ids)]) for sub in self.subproblems()))

    def node_average(self, stacked: np.ndarray) -> np.ndarray:
        """Per-node mean of a stacked ``(positions, k)`` array over the chains containing the node."""
        totals = np.zeros((self.instance.num_nodes, stacked.shape[1]))
        np.add.at(totals, self.position_nodes, stacked)
        counts = np.maximum(self.membership_counts, 1)[:, None]
        return totals / counts

    def project_zero_sum(self, stacked: np.ndarray) -> np.ndarray:
        return stacked - self.node_average(stacked)[self.position_nodes]

    def assemble(self, chain_labels: list[np.ndarray | None]) -> np.ndarray | None:
        """Join per-chain labelings into one grid labeling if they agree on every shared node."""
        labeling = np.full(self.instance.num_nodes, -1, dtype=np.int64)
        for chain, labels in zip(self.chains, chain_labels):
            if labels is None:
                return None
            nodes = np.asarray(chain.node_ids, dtype=np.int64)
            current = labeling[nodes]
            if np.any((current >= 0) & (current != labels)):
                return None
            labeling[nodes] = labels
        if np.any(labeling < 0):
            return None
        return labeling


def _lattice_lines(instance: TomographyInstance) -> list[tuple[Direction, list[int]]]:
    rows = [
        (Direction.HORIZONTAL, [instance.node_id(x, y) for x in range(instance.width)])
        for y in range(instance.height)
    ]
    columns = [
        (Direction.VERTICAL, [instance.node_id(x, y) for y in range(instance.height)])
        for x in range(instance.width)
    ]
    return rows + columns


def _chain_pairwise(
    instance: TomographyInstance,
    nodes: list[int] | tuple[int, ...],
    owner: dict[tuple[int, int], int],
    index: int,
) -> tuple[np.ndarray, int]:
    k = instance.k
    pairwise = np.zeros((max(len(nodes) - 1, 0), k, k))
    claimed = 0
    for position, (u, v) in enumerate(zip(nodes[:-1], nodes[1:])):
        edge = (min(u, v), max(u, v))
        if edge in instance.edge_set and edge not in owner:
            owner[edge] = index
            pairwise[position] = instance.pairwise_table(u, v)
            claimed += 1
    return pairwise, claimed


def decompose(instance: TomographyInstance) -> Decomposition:
    owner: dict[tuple[int, int], int] = {}
    chains: list[ChainSpec] = []
    for ray_index, ray in enumerate(instance.rays):
        pairwise, _ = _chain_pairwise(instance, ray.nodes, owner, len(chains))
        chains.append(ChainSpec(tuple(ray.nodes), pairwise, int(ray.target), ray.direction, ray_index))

    if len(owner) < len(instance.edges):
        for direction, line in _lattice_lines(instance):
            pairwise, claimed = _chain_pairwise(instance, line, owner, len(chains))
            if claimed:
                chains.append(ChainSpec(tuple(line), pairwise, None, direction))

    covered = np.zeros(instance.num_nodes, dtype=bool)
    for chain in chains:
        covered[list(chain.node_ids)] = True
    for node in np.flatnonzero(~covered):
        chains.append(ChainSpec((int(node),), np.zeros((0, instance.k, instance.k)), None, Direction.NONE))

    unary_owner = np.full(instance.num_nodes, -1, dtype=np.int64)
    base_unary = []
    for index, chain in enumerate(chains):
        nodes = np.asarray(chain.node_ids, dtype=np.int64)
        unary = np.zeros((nodes.size, instance.k))
        mine = unary_owner[nodes] < 0
        unary_owner[nodes[mine]] = index
        unary[mine] = instance.unary[nodes[mine]]
        base_unary.append(unary)

    energy_only = sum(1 for chain in chains if chain.target is None)
    logger.debug(
        "decomposed %dx%d instance into %d chains (%d energy-only), %d edges",
        instance.width,
        instance.height,
        len(chains),
        energy_only,
        len(owner),
    )
    return Decomposition(instance, chains, owner, base_unary)


class LagrangeState:
    """Multipliers ``lambda_{i,u}`` stacked over all chain positions, shape ``(positions, k)``."""

    def __init__(self, decomposition: Decomposition, values: np.ndarray | None = None):
        self.decomposition = decomposition
        shape = (decomposition.num_positions, decomposition.k)
        self.values = np.zeros(shape) if values is None else np.array(values, dtype=float).reshape(shape)

    @classmethod
    def zeros(cls, decomposition: Decomposition) -> "LagrangeState":
        return cls(decomposition)

    def copy(self) -> "LagrangeState":
        return LagrangeState(self.decomposition, self.values.copy())

    def get(self, index: int) -> np.ndarray:
        return self.values[self.decomposition.positions(index)]

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1).copy()

    def with_flat(self, flat: np.ndarray) -> "LagrangeState":
        return LagrangeState(self.decomposition, flat)

    def recenter(self) -> "LagrangeState":
        self.values = self.decomposition.project_zero_sum(self.values)
        return self

    def zero_sum_residual(self) -> float:
        totals = np.zeros((self.decomposition.instance.num_nodes, self.decomposition.k))
        np.add.at(totals, self.decomposition.position_nodes, self.values)
        return float(np.abs(totals).max()) if totals.size else 0.0
