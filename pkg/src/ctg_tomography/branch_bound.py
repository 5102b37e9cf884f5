"""Depth-first branch and bound over node/label fixings, bounded by the dual ascent."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .ascent import AscentResult, ChainOracle, dual_ascent, get_oracle
from .chain import INF, min_marginals, solve_chain_dp_naive, solve_chain_tomo_tree
from .decomposition import Decomposition, LagrangeState, decompose
from .events import ProgressCallback, ProgressEvent
from .instance import TomographyInstance, evaluate_energy
from .models import SolverConfig
from .primal import recover_primal
from .std_oracle import chain_map_dp


logger = logging.getLogger(__name__)

BOUND_TOLERANCE = 1e-9


@dataclass
class SearchNode:
    fixings: dict[int, int]
    lagrange: LagrangeState
    estimate: float


@dataclass
class BranchAndBoundResult:
    labeling: np.ndarray | None
    value: float
    nodes: int
    lower_bound: float
    status: str
    root: AscentResult
    elapsed: float = 0.0
    iterations: int = 0
    trace: list[dict[str, object]] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return self.status in {"optimal", "infeasible"}


class _Incumbent:
    def __init__(self, integral: bool):
        self.integral = integral
        self.value = INF
        self.labeling: np.ndarray | None = None

    def offer(self, labeling: np.ndarray | None, value: float | None) -> bool:
        if labeling is None or value is None or value >= self.value:
            return False
        self.value, self.labeling = float(value), np.asarray(labeling, dtype=np.int64)
        return True

    @property
    def threshold(self) -> float:
        """A node whose bound reaches this value cannot hold a strictly better labeling."""
        if not np.isfinite(self.value):
            return INF
        if self.integral:
            return self.value - 1.0 + BOUND_TOLERANCE
        return self.value - BOUND_TOLERANCE

    def prunes(self, bound: float) -> bool:
        if self.integral:
            return bound > self.threshold
        return bound >= self.threshold


def _aggregated_gaps(
    decomposition: Decomposition, lagrange: LagrangeState, fixings: dict[int, int]
) -> tuple[np.ndarray, float]:
    """Per node and label, summed min-marginal gaps over containing chains, plus the summed optimum."""
    instance = decomposition.instance
    gaps = np.zeros((instance.num_nodes, instance.k))
    total = 0.0
    forbidden = decomposition.forbidden_mask(fixings)
    for index in range(len(decomposition)):
        sub = decomposition.subproblem_at(index, lagrange, forbidden=forbidden)
        solution = solve_chain_dp_naive(sub)
        if not solution.feasible:
            return np.full_like(gaps, INF), INF
        total += solution.value
        marginals = min_marginals(sub, solution.tables)
        np.add.at(gaps, np.asarray(sub.node_ids, dtype=np.int64), marginals - solution.value)
    return gaps, total


def _child_bounds(
    decomposition: Decomposition,
    oracle: ChainOracle,
    lagrange: LagrangeState,
    fixings: dict[int, int],
    branch: int,
) -> np.ndarray:
    """Dual value at ``lagrange`` with ``branch`` fixed to each label, evaluated by ``oracle``.

    Only chains containing ``branch`` change with the label; the rest are solved once.
    """
    forbidden = decomposition.forbidden_mask(fixings)
    containing = {index for index, _ in decomposition.node_membership[branch]}
    others = 0.0
    for index in range(len(decomposition)):
        if index not in containing:
            others += oracle.solve(decomposition.subproblem_at(index, lagrange, forbidden=forbidden)).value
    bounds = np.full(decomposition.k, INF)
    if not np.isfinite(others):
        return bounds
    for label in range(decomposition.k):
        forced = decomposition.forbidden_mask({**fixings, branch: label})
        value = others
        for index in sorted(containing):
            value += oracle.solve(decomposition.subproblem_at(index, lagrange, forbidden=forced)).value
            if not np.isfinite(value):
                break
        bounds[label] = value
    return bounds


def _branch_node(decomposition: Decomposition, gaps: np.ndarray, fixings: dict[int, int]) -> int | None:
    best, best_key = None, None
    for node in decomposition.shared_nodes:
        if node in fixings:
            continue
        finite = gaps[node][np.isfinite(gaps[node])]
        if finite.size == 0:
            return node
        spread = float(finite.max() - finite.min())
        key = (spread, finite.size, -node)
        if best_key is None or key > best_key:
            best, best_key = node, key
    return best


def _solve_leaf(decomposition: Decomposition, fixings: dict[int, int]) -> tuple[np.ndarray | None, float]:
    """With every shared node fixed the chains decouple and are solved exactly."""
    forbidden = decomposition.forbidden_mask(fixings)
    labels = []
    for index in range(len(decomposition)):
        sub = decomposition.subproblem_at(index, None, forbidden=forbidden)
        solution = chain_map_dp(sub) if sub.target is None else solve_chain_tomo_tree(sub)
        if solution.labels is None:
            return None, INF
        labels.append(solution.labels)
    labeling = decomposition.assemble(labels)
    if labeling is None:
        return None, INF
    return labeling, evaluate_energy(decomposition.instance, labeling)


def branch_and_bound(
    instance: TomographyInstance,
    oracle: str | ChainOracle = "ctg",
    config: SolverConfig | None = None,
    progress_callback: ProgressCallback | None = None,
    task_id: str = "branch-and-bound",
) -> BranchAndBoundResult:
    config = config or SolverConfig()
    chain_oracle = get_oracle(oracle, config) if isinstance(oracle, str) else oracle
    decomposition = decompose(instance)
    started = time.perf_counter()
    search = config.search

    root = dual_ascent(decomposition, chain_oracle, config, progress_callback=progress_callback, task_id=task_id)
    if root.infeasible:
        return BranchAndBoundResult(None, INF, 1, INF, "infeasible", root, time.perf_counter() - started, root.iterations)

    incumbent = _Incumbent(instance.costs_integral)
    incumbent.offer(root.best_labeling, root.best_primal)
    heuristic = recover_primal(instance, decomposition, root.lagrange, config)
    incumbent.offer(heuristic.labeling, heuristic.value)

    stack = [SearchNode({}, root.lagrange, root.best_dual)]
    nodes = 0
    iterations = root.iterations
    status = "optimal"
    while stack:
        elapsed = time.perf_counter() - started
        if nodes >= search.bb_node_limit:
            status = "node_limit"
            break
        if search.time_limit_seconds is not None and elapsed >= search.time_limit_seconds:
            status = "time_limit"
            break
        node = stack.pop()
        if incumbent.prunes(node.estimate):
            continue
        nodes += 1

        lagrange, bound = node.lagrange, node.estimate
        if node.fixings:
            result = dual_ascent(
                decomposition,
                chain_oracle,
                config,
                lagrange=node.lagrange,
                fixings=node.fixings,
                cutoff=incumbent.threshold,
                primal_value=incumbent.value if np.isfinite(incumbent.value) else None,
                max_iters=search.bb_node_iters,
            )
            iterations += result.iterations
            if result.infeasible:
                continue
            incumbent.offer(result.best_labeling, result.best_primal if result.best_labeling is not None else None)
            lagrange, bound = result.lagrange, max(bound, result.best_dual)
            if incumbent.prunes(bound):
                continue

        gaps, total = _aggregated_gaps(decomposition, lagrange, node.fixings)
        if not np.isfinite(total):
            continue
        branch = _branch_node(decomposition, gaps, node.fixings)
        if branch is None:
            labeling, value = _solve_leaf(decomposition, node.fixings)
            incumbent.offer(labeling, value)
            continue

        # branching follows exact min-marginals, child bounds come from the search's oracle
        child_bounds = _child_bounds(decomposition, chain_oracle, lagrange, node.fixings, branch)
        children = [
            (float(gaps[branch, label]), int(label))
            for label in range(instance.k)
            if np.isfinite(gaps[branch, label]) and np.isfinite(child_bounds[label])
        ]
        for _, label in sorted(children, reverse=True):
            estimate = max(bound, float(child_bounds[label]))
            if incumbent.prunes(estimate):
                continue
            stack.append(SearchNode({**node.fixings, branch: label}, lagrange, estimate))

        if progress_callback is not None and nodes % 50 == 0:
            progress = min(99, nodes * 100 // max(1, search.bb_node_limit))
            progress_callback(ProgressEvent(task_id, "branch", progress, f"{nodes} nodes, incumbent {incumbent.value:g}"))

    elapsed = time.perf_counter() - started
    if status == "optimal":
        if incumbent.labeling is None:
            status, lower_bound = "infeasible", INF
        else:
            lower_bound = incumbent.value
    else:
        # pruned subtrees cannot beat the incumbent
        open_bounds = [entry.estimate for entry in stack]
        lower_bound = max(root.best_dual, min(open_bounds + [incumbent.value]))
    logger.info(
        "branch and bound finished: status=%s nodes=%d value=%s bound=%.6g elapsed=%.2fs",
        status,
        nodes,
        incumbent.value,
        lower_bound,
        elapsed,
    )
    return BranchAndBoundResult(
        labeling=incumbent.labeling,
        value=incumbent.value,
        nodes=nodes,
        lower_bound=lower_bound,
        status=status,
        root=root,
        elapsed=elapsed,
        iterations=iterations,
        trace=root.trace.to_list(),
    )
