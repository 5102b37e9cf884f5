"""Exhaustive enumerators used as oracles by the solver tests."""

from __future__ import annotations

import math

import numpy as np

from ctg_tomography.chain import ChainSubproblem
from ctg_tomography.instance import (
    PairwiseKind,
    PairwiseSpec,
    TomographyInstance,
    build_lattice_rays,
    project,
)


def all_labelings(n: int, k: int) -> np.ndarray:
    """Every labeling of ``n`` nodes, one per row, in lexicographic order."""
    return np.indices((k,) * n).reshape(n, -1).T


def chain_energies(sub: ChainSubproblem, labelings: np.ndarray) -> np.ndarray:
    """Energy of every row of ``labelings``; rows off the ray target cost infinity."""
    energies = sub.unary[np.arange(sub.n), labelings].sum(axis=1)
    if sub.n > 1:
        energies = energies + sub.pairwise[np.arange(sub.n - 1), labelings[:, :-1], labelings[:, 1:]].sum(axis=1)
    if sub.target is not None:
        energies = np.where(labelings.sum(axis=1) == sub.target, energies, math.inf)
    return energies


def brute_force_chain(sub: ChainSubproblem) -> tuple[float, tuple[int, ...] | None]:
    """Optimum and lexicographically smallest optimal labeling of a chain problem."""
    labelings = all_labelings(sub.n, sub.k)
    energies = chain_energies(sub, labelings)
    best_value = float(energies.min())
    if not np.isfinite(best_value):
        return math.inf, None
    first = int(np.flatnonzero(energies <= best_value + 1e-9)[0])
    return best_value, tuple(int(label) for label in labelings[first])


def instance_energies(instance: TomographyInstance, labelings: np.ndarray) -> np.ndarray:
    """Energy of every row of ``labelings``; rows violating a ray cost infinity."""
    energies = instance.unary[np.arange(instance.num_nodes), labelings].sum(axis=1)
    for (u, v), table in instance.pairwise_tables.items():
        energies = energies + table[labelings[:, u], labelings[:, v]]
    feasible = np.ones(len(labelings), dtype=bool)
    for ray in instance.rays:
        feasible &= labelings[:, list(ray.nodes)].sum(axis=1) == ray.target
    return np.where(feasible, energies, math.inf)


def brute_force_instance(instance: TomographyInstance) -> tuple[float, np.ndarray | None]:
    labelings = all_labelings(instance.num_nodes, instance.k)
    energies = instance_energies(instance, labelings)
    best = int(np.argmin(energies))
    if not np.isfinite(energies[best]):
        return math.inf, None
    return float(energies[best]), labelings[best].astype(np.int64)


def random_chain(rng: np.random.Generator, n: int, k: int, integral: bool = False) -> ChainSubproblem:
    unary = rng.integers(-3, 4, size=(n, k)).astype(float) if integral else rng.normal(size=(n, k))
    pairwise = rng.integers(0, 4, size=(n - 1, k, k)).astype(float) if integral else rng.random((n - 1, k, k))
    target = int(rng.integers(0, n * (k - 1) + 1))
    return ChainSubproblem(tuple(range(n)), unary, pairwise, target)


def instance_from_image(
    image: list[list[int]],
    k: int,
    directions: str = "hv",
    pairwise: PairwiseSpec | None = None,
    unary: np.ndarray | None = None,
) -> TomographyInstance:
    """Instance whose ray targets are the projections of ``image``."""
    pixels = np.asarray(image, dtype=np.int64)
    height, width = pixels.shape
    blank = TomographyInstance(
        width=width,
        height=height,
        k=k,
        unary=np.zeros((width * height, k)) if unary is None else unary,
        pairwise=pairwise or PairwiseSpec(PairwiseKind.ABSDIFF, 1.0),
        rays=tuple(build_lattice_rays(width, height, directions)),
    )
    return blank.with_targets(project(blank, pixels.reshape(-1)).tolist())


def separation_instance() -> TomographyInstance:
    """1x2 binary Potts chain with one horizontal ray summing to 1."""
    return instance_from_image([[0, 1]], k=2, directions="h", pairwise=PairwiseSpec(PairwiseKind.POTTS, 1.0))
