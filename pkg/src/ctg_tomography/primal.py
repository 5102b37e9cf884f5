"""Primal recovery: prune labels by chain min-marginals, then search the reduced problem exactly."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .chain import INF, min_marginals, solve_chain_dp_naive
from .decomposition import Decomposition, LagrangeState
from .instance import TomographyInstance, evaluate_energy
from .models import SearchConfig, SolverConfig


logger = logging.getLogger(__name__)

GAP_TOLERANCE = 1e-9


def prune_labels(
    decomposition: Decomposition,
    lagrange: LagrangeState | None,
    epsilon: float,
    fixings: Mapping[int, int] | None = None,
) -> np.ndarray:
    """Boolean ``(nodes, k)`` candidate mask.

    A label survives at a node if its min-marginal gap is within ``epsilon`` in every
    chain containing the node. Each chain's own optimal label is always kept.
    """
    instance = decomposition.instance
    keep = np.ones((instance.num_nodes, instance.k), dtype=bool)
    rescue = np.zeros_like(keep)
    forbidden = decomposition.forbidden_mask(fixings)
    for index in range(len(decomposition)):
        sub = decomposition.subproblem_at(index, lagrange, forbidden=forbidden)
        solution = solve_chain_dp_naive(sub)
        if not solution.feasible:
            continue
        gaps = min_marginals(sub, solution.tables) - solution.value
        nodes = np.asarray(sub.node_ids, dtype=np.int64)
        keep[nodes] &= gaps <= epsilon + GAP_TOLERANCE * max(1.0, abs(solution.value))
        assert solution.labels is not None
        rescue[nodes, solution.labels] = True
    candidates = keep | rescue
    for node, label in (fixings or {}).items():
        candidates[node] = False
        candidates[node, label] = True
    return candidates


@dataclass
class ReducedSolution:
    labeling: np.ndarray | None
    value: float
    nodes: int
    status: str

    @property
    def feasible(self) -> bool:
        return self.labeling is not None


class _ReducedSearch:
    """Depth-first search over candidate labels with ray-sum propagation and an energy bound."""

    def __init__(self, instance: TomographyInstance, config: SearchConfig):
        self.instance = instance
        self.config = config
        self.labels = np.arange(instance.k)
        self.edges = np.array(instance.edges, dtype=np.int64).reshape(-1, 2)
        tables = [instance.pairwise_tables[edge] for edge in instance.edges]
        self.tables = np.array(tables).reshape(-1, instance.k, instance.k)
        self.rays = [(np.asarray(ray.nodes, dtype=np.int64), ray.target) for ray in instance.rays]
        self.node_rays: list[list[int]] = [[] for _ in range(instance.num_nodes)]
        for index, (nodes, _) in enumerate(self.rays):
            for node in nodes:
                self.node_rays[int(node)].append(index)
        self.best_value = INF
        self.best: np.ndarray | None = None
        self.expanded = 0
        self.started = time.perf_counter()
        self.stopped: str | None = None

    def bound(self, domains: np.ndarray) -> float:
        unary = np.where(domains, self.instance.unary, INF).min(axis=1).sum()
        if not len(self.edges):
            return float(unary)
        allowed = domains[self.edges[:, 0]][:, :, None] & domains[self.edges[:, 1]][:, None, :]
        pairwise = np.where(allowed, self.tables, INF).min(axis=(1, 2)).sum()
        return float(unary + pairwise)

    def propagate(self, domains: np.ndarray, dirty: set[int]) -> bool:
        """Tighten domains until every ray's target is within reach; ``False`` on a wipe-out."""
        queue = list(dirty)
        queued = set(queue)
        while queue:
            ray_index = queue.pop()
            queued.discard(ray_index)
            nodes, target = self.rays[ray_index]
            block = domains[nodes]
            if not block.any(axis=1).all():
                return False
            low = np.where(block, self.labels, self.instance.k).min(axis=1)
            high = np.where(block, self.labels, -1).max(axis=1)
            total_low, total_high = int(low.sum()), int(high.sum())
            if not total_low <= target <= total_high:
                return False
            # each node must leave room for the rest of the ray
            floor = target - (total_high - high)
            ceiling = target - (total_low - low)
            tightened = block & (self.labels[None, :] >= floor[:, None]) & (self.labels[None, :] <= ceiling[:, None])
            changed = np.flatnonzero((tightened != block).any(axis=1))
            if changed.size:
                domains[nodes] = tightened
                for node in nodes[changed]:
                    for other in self.node_rays[int(node)]:
                        if other != ray_index and other not in queued:
                            queue.append(other)
                            queued.add(other)
                if not tightened.any(axis=1).all():
                    return False
        return True

    def _elapsed(self) -> float:
        return time.perf_counter() - self.started

    def _out_of_budget(self) -> bool:
        if self.expanded >= self.config.node_limit:
            self.stopped = "node_limit"
        elif self.config.time_limit_seconds is not None and self._elapsed() >= self.config.time_limit_seconds:
            self.stopped = "time_limit"
        return self.stopped is not None

    def search(self, domains: np.ndarray) -> None:
        if self.stopped is not None or self._out_of_budget():
            return
        self.expanded += 1
        if self.bound(domains) >= self.best_value - GAP_TOLERANCE:
            return
        sizes = domains.sum(axis=1)
        open_nodes = np.flatnonzero(sizes > 1)
        if open_nodes.size == 0:
            labeling = domains.argmax(axis=1)
            value = evaluate_energy(self.instance, labeling)
            if value < self.best_value:
                self.best_value, self.best = value, labeling
            return
        node = int(open_nodes[np.argmin(sizes[open_nodes])])
        order = sorted(np.flatnonzero(domains[node]), key=lambda label: (self.instance.unary[node, label], label))
        for label in order:
            child = domains.copy()
            child[node] = False
            child[node, label] = True
            if self.propagate(child, set(self.node_rays[node])):
                self.search(child)
            if self.stopped is not None:
                return


def solve_reduced(
    instance: TomographyInstance, candidates: np.ndarray, config: SearchConfig | None = None
) -> ReducedSolution:
    config = config or SearchConfig()
    domains = np.array(candidates, dtype=bool).reshape(instance.num_nodes, instance.k)
    search = _ReducedSearch(instance, config)
    if domains.any(axis=1).all() and search.propagate(domains, set(range(len(instance.rays)))):
        search.search(domains)
    if search.stopped is not None:
        status = search.stopped
    else:
        status = "optimal" if search.best is not None else "infeasible"
    logger.debug("reduced search: status=%s nodes=%d value=%s", status, search.expanded, search.best_value)
    return ReducedSolution(search.best, search.best_value, search.expanded, status)


@dataclass
class Certificate:
    optimal: bool
    gap: float

    @property
    def verdict(self) -> str:
        return "optimal" if self.optimal else f"gap({self.gap:g})"


def certify(best_primal: float, best_dual: float, costs_integral: bool) -> Certificate:
    gap = best_primal - best_dual
    return Certificate(optimal=bool(costs_integral and gap < 1.0), gap=gap)


@dataclass
class PrimalResult:
    labeling: np.ndarray | None
    value: float
    epsilon: float | None
    status: str
    nodes: int = 0


def recover_primal(
    instance: TomographyInstance,
    decomposition: Decomposition,
    lagrange: LagrangeState | None,
    config: SolverConfig | None = None,
    fixings: Mapping[int, int] | None = None,
) -> PrimalResult:
    """Try the epsilon schedule and keep the first feasible reduced optimum."""
    config = config or SolverConfig()
    scale = instance.median_pairwise_weight or 1.0
    nodes = 0
    last_status = "infeasible"
    for factor in config.primal.epsilon_factors:
        epsilon = factor * scale if math.isfinite(factor) else INF
        candidates = prune_labels(decomposition, lagrange, epsilon, fixings)
        reduced = solve_reduced(instance, candidates, config.search)
        nodes += reduced.nodes
        last_status = reduced.status
        logger.debug(
            "epsilon %.3g keeps %d of %d labels: %s",
            epsilon,
            int(candidates.sum()),
            candidates.size,
            reduced.status,
        )
        if reduced.feasible:
            return PrimalResult(reduced.labeling, reduced.value, epsilon, reduced.status, nodes)
    return PrimalResult(None, INF, None, last_status, nodes)
