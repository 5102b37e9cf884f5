"""Exact solvers for the one-dimensional tomography problem

    min  sum_i theta_i(x_i) + sum_i theta_{i,i+1}(x_i, x_{i+1})   s.t.  sum_i x_i = b

on a chain ``u_1 .. u_n``. ``solve_chain_tomo_tree`` runs message passing over a
recursive equipartition of the chain into counting factors; ``solve_chain_dp_naive``
is the label-times-partial-sum dynamic program used as oracle and for min-marginals.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from .minsum import MinSumKernel, get_kernel, minsum_batched


INF = np.inf
TIE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ChainSubproblem:
    node_ids: tuple[int, ...]
    unary: np.ndarray
    pairwise: np.ndarray
    target: int | None = None

    def __post_init__(self) -> None:
        unary = np.asarray(self.unary, dtype=float)
        n = len(self.node_ids)
        if n < 1 or unary.ndim != 2 or unary.shape[0] != n:
            raise ValueError("unary must have one cost vector per chain node")
        pairwise = np.asarray(self.pairwise, dtype=float).reshape(max(n - 1, 0), unary.shape[1], unary.shape[1])
        object.__setattr__(self, "node_ids", tuple(int(node) for node in self.node_ids))
        object.__setattr__(self, "unary", unary)
        object.__setattr__(self, "pairwise", pairwise)

    @property
    def n(self) -> int:
        return len(self.node_ids)

    @property
    def k(self) -> int:
        return int(self.unary.shape[1])

    @property
    def max_sum(self) -> int:
        return self.n * (self.k - 1)

    def with_unary(self, unary: np.ndarray) -> "ChainSubproblem":
        return replace(self, unary=np.asarray(unary, dtype=float))

    def with_target(self, target: int | None) -> "ChainSubproblem":
        return replace(self, target=target)

    def energy(self, labels: np.ndarray) -> float:
        labels = np.asarray(labels, dtype=np.int64)
        total = float(self.unary[np.arange(self.n), labels].sum())
        if self.n > 1:
            total += float(self.pairwise[np.arange(self.n - 1), labels[:-1], labels[1:]].sum())
        return total


@dataclass
class ChainSolution:
    value: float
    labels: np.ndarray | None = None
    tables: "DpTables | None" = None

    @property
    def feasible(self) -> bool:
        return bool(np.isfinite(self.value))


# -- counting factors -------------------------------------------------------


@dataclass(frozen=True)
class CountingLabel:
    left: int
    mid_sum: int
    right: int


def num_mid_sums(length: int, k: int) -> int:
    return 1 + max(0, length - 2) * (k - 1)


def counting_space_size(interval: tuple[int, int], k: int) -> int:
    """Number of counting labels of the inclusive interval ``(i, j)``."""
    start, stop = interval
    length = stop - start + 1
    if length < 1:
        raise ValueError(f"invalid interval {interval}")
    if length == 1:
        return k
    return k * k * num_mid_sums(length, k)


@dataclass(frozen=True)
class TreeNode:
    start: int
    stop: int
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def length(self) -> int:
        return self.stop - self.start + 1

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def split(self) -> int | None:
        return None if self.left is None else self.left.stop

    def interval(self) -> tuple[int, int]:
        return self.start, self.stop


def _build_node(start: int, stop: int) -> TreeNode:
    length = stop - start + 1
    if length <= 2:
        return TreeNode(start, stop)
    split = start + length // 2 - 1
    return TreeNode(start, stop, _build_node(start, split), _build_node(split + 1, stop))


@dataclass(frozen=True)
class PartitionTree:
    n: int
    k: int
    root: TreeNode

    @classmethod
    def build(cls, n: int, k: int) -> "PartitionTree":
        if n < 1:
            raise ValueError("a chain needs at least one node")
        return cls(n, k, _build_node(0, n - 1))

    def postorder(self) -> Iterator[TreeNode]:
        stack: list[tuple[TreeNode, bool]] = [(self.root, False)]
        while stack:
            node, expanded = stack.pop()
            if node.is_leaf or expanded:
                yield node
                continue
            stack.append((node, True))
            stack.append((node.right, False))  # type: ignore[arg-type]
            stack.append((node.left, False))  # type: ignore[arg-type]

    def leaves(self) -> list[TreeNode]:
        return [node for node in self.postorder() if node.is_leaf]

    @property
    def total_entries(self) -> int:
        return sum(counting_space_size(node.interval(), self.k) for node in self.postorder())


def reference_counting_entries(n: int, k: int) -> int:
    """Entry count of all counting factors, enumerated from the partition definition."""
    total = 0
    intervals = [(0, n - 1)]
    while intervals:
        start, stop = intervals.pop()
        length = stop - start + 1
        interior = max(0, length - 2)
        total += k if length == 1 else k * k * (1 + interior * (k - 1))
        if length > 2:
            half = length // 2
            intervals.append((start, start + half - 1))
            intervals.append((start + half, stop))
    return total


@dataclass
class NodeMessages:
    left: np.ndarray
    right: np.ndarray
    up: np.ndarray


@dataclass
class MessageSet:
    """Up-pass tables: per internal node the child tables and the resulting up message.

    Tables are indexed ``[left_label, mid_sum, right_label]``.
    """

    tree: PartitionTree
    leaf_costs: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    messages: dict[tuple[int, int], NodeMessages] = field(default_factory=dict)

    def table(self, node: TreeNode) -> np.ndarray:
        if node.is_leaf:
            return self.leaf_costs[node.interval()]
        return self.messages[node.interval()].up


def _leaf_table(sub: ChainSubproblem, node: TreeNode) -> np.ndarray:
    k = sub.k
    if node.length == 1:
        table = np.full((k, 1, k), INF)
        table[np.arange(k), 0, np.arange(k)] = sub.unary[node.start]
        return table
    costs = sub.unary[node.start][:, None] + sub.pairwise[node.start] + sub.unary[node.stop][None, :]
    return costs[:, None, :]


def _merge_batched(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    # conv[a, c, d, e, u] = min_{s + t = u} left[a, s, c] + right[d, t, e]
    lhs = left.transpose(0, 2, 1)[:, :, None, None, :]
    rhs = right.transpose(0, 2, 1)[None, None, :, :, :]
    return minsum_batched(lhs, rhs)


def _merge_scalar(left: np.ndarray, right: np.ndarray, kernel: MinSumKernel) -> np.ndarray:
    k = left.shape[0]
    width = left.shape[1] + right.shape[1] - 1
    conv = np.full((k, k, k, k, width), INF)
    for a in range(k):
        for c in range(k):
            for d in range(k):
                for e in range(k):
                    conv[a, c, d, e] = kernel(left[a, :, c], right[d, :, e])
    return conv


def up_message(
    left: np.ndarray,
    right: np.ndarray,
    pairwise: np.ndarray,
    left_interior: bool,
    right_interior: bool,
    parent_sums: int,
    kernel: MinSumKernel | None = None,
) -> np.ndarray:
    """Minimize the joining factor over child labels consistent with each parent label.

    ``left_interior``/``right_interior`` say whether the split endpoints ``u_j`` and
    ``u_{j+1}`` lie strictly inside the parent interval and so count towards its sum.
    One min-sum convolution is done per choice of the four endpoint labels.
    """
    k = left.shape[0]
    conv = _merge_batched(left, right) if kernel is None else _merge_scalar(left, right, kernel)
    width = conv.shape[-1]
    up = np.full((k, parent_sums, k), INF)
    for c in range(k):
        for d in range(k):
            shift = c * left_interior + d * right_interior
            span = min(width, parent_sums - shift)
            if span <= 0:
                continue
            candidate = pairwise[c, d] + conv[:, c, d, :, :span].transpose(0, 2, 1)
            window = up[:, shift : shift + span, :]
            np.minimum(window, candidate, out=window)
    return up


def pass_messages_up(
    sub: ChainSubproblem,
    tree: PartitionTree | None = None,
    kernel: str = "batched",
    frontier_budget: int | None = None,
) -> MessageSet:
    tree = tree or PartitionTree.build(sub.n, sub.k)
    scalar_kernel = None if kernel == "batched" else get_kernel(kernel, frontier_budget)
    messages = MessageSet(tree)
    for node in tree.postorder():
        if node.is_leaf:
            messages.leaf_costs[node.interval()] = _leaf_table(sub, node)
            continue
        left_node, right_node = node.left, node.right
        assert left_node is not None and right_node is not None
        left = messages.table(left_node)
        right = messages.table(right_node)
        up = up_message(
            left,
            right,
            sub.pairwise[left_node.stop],
            left_interior=left_node.length > 1,
            right_interior=right_node.length > 1,
            parent_sums=num_mid_sums(node.length, sub.k),
            kernel=scalar_kernel,
        )
        messages.messages[node.interval()] = NodeMessages(left=left, right=right, up=up)
    return messages


def _root_totals(node: TreeNode, k: int) -> np.ndarray:
    """Total label sum ``x_left + s + x_right`` for every counting label of ``node``."""
    sums = np.arange(num_mid_sums(node.length, k))
    labels = np.arange(k)
    if node.length == 1:
        return np.broadcast_to(labels[:, None, None], (k, 1, k))
    return labels[:, None, None] + sums[None, :, None] + labels[None, None, :]


def _best_children(
    node_messages: NodeMessages,
    pairwise: np.ndarray,
    label: CountingLabel,
    left_interior: bool,
    right_interior: bool,
) -> tuple[CountingLabel, CountingLabel]:
    left, right = node_messages.left, node_messages.right
    k = left.shape[0]
    left_sums, right_sums = left.shape[1], right.shape[1]
    best_cost = INF
    best: tuple[CountingLabel, CountingLabel] | None = None
    for c in range(k):
        for d in range(k):
            remainder = label.mid_sum - c * left_interior - d * right_interior
            low = max(0, remainder - (right_sums - 1))
            high = min(left_sums - 1, remainder)
            if remainder < 0 or low > high:
                continue
            split_sums = np.arange(low, high + 1)
            costs = left[label.left, split_sums, c] + pairwise[c, d] + right[d, remainder - split_sums, label.right]
            index = int(np.argmin(costs))
            if costs[index] < best_cost:
                best_cost = float(costs[index])
                s = int(split_sums[index])
                best = (CountingLabel(label.left, s, c), CountingLabel(d, remainder - s, label.right))
    if best is None:
        raise RuntimeError(f"no finite child labels below counting label {label}")
    return best


def _descend(sub: ChainSubproblem, messages: MessageSet, root_label: CountingLabel) -> np.ndarray:
    """Propagate the optimal root label down the tree by consistent argmin selection."""
    labels = np.full(sub.n, -1, dtype=np.int64)
    stack = [(messages.tree.root, root_label)]
    while stack:
        node, label = stack.pop()
        if node.is_leaf:
            labels[node.start] = label.left
            labels[node.stop] = label.right
            continue
        left_node, right_node = node.left, node.right
        assert left_node is not None and right_node is not None
        left_label, right_label = _best_children(
            messages.messages[node.interval()],
            sub.pairwise[left_node.stop],
            label,
            left_interior=left_node.length > 1,
            right_interior=right_node.length > 1,
        )
        stack.append((right_node, right_label))
        stack.append((left_node, left_label))
    return labels


def solve_chain_tomo_tree(
    sub: ChainSubproblem, kernel: str = "batched", frontier_budget: int | None = None
) -> ChainSolution:
    tree = PartitionTree.build(sub.n, sub.k)
    messages = pass_messages_up(sub, tree, kernel, frontier_budget)
    top = messages.table(tree.root)
    if sub.target is None:
        constrained = top
    else:
        constrained = np.where(_root_totals(tree.root, sub.k) == sub.target, top, INF)
    flat_index = int(np.argmin(constrained))
    value = float(constrained.flat[flat_index])
    if not np.isfinite(value):
        return ChainSolution(INF)
    left, mid_sum, right = (int(index) for index in np.unravel_index(flat_index, top.shape))
    labels = _descend(sub, messages, CountingLabel(left, mid_sum, right))
    return ChainSolution(value, labels)


# -- naive dynamic program ----------------------------------------------------


@dataclass
class DpTables:
    """``forward[i, x, s]``: best cost of ``u_1..u_i`` with ``x_i = x`` and ``x_1 + .. + x_i = s``.

    ``backward[i, x, r]``: best cost of ``u_{i+1}..u_n`` (pairwise term to ``u_i``
    included) given ``x_i = x`` and ``x_{i+1} + .. + x_n = r``.
    """

    forward: np.ndarray
    backward: np.ndarray
    target: int | None


def dp_tables(sub: ChainSubproblem) -> DpTables:
    n, k = sub.n, sub.k
    width = sub.max_sum + 1
    forward = np.full((n, k, width), INF)
    forward[0, np.arange(k), np.arange(k)] = sub.unary[0]
    for i in range(1, n):
        best = np.min(forward[i - 1][:, None, :] + sub.pairwise[i - 1][:, :, None], axis=0)
        for x in range(k):
            forward[i, x, x:] = best[x, : width - x] + sub.unary[i, x]

    backward = np.full((n, k, width), INF)
    backward[n - 1, :, 0] = 0.0
    for i in range(n - 2, -1, -1):
        shifted = np.full((k, width), INF)
        for x in range(k):
            shifted[x, x:] = sub.unary[i + 1, x] + backward[i + 1, x, : width - x]
        backward[i] = np.min(sub.pairwise[i][:, :, None] + shifted[None, :, :], axis=1)
    return DpTables(forward, backward, sub.target)


def _target_in_range(sub: ChainSubproblem) -> bool:
    return sub.target is None or 0 <= sub.target <= sub.max_sum


def _lexicographic_labels(sub: ChainSubproblem, tables: DpTables, value: float) -> np.ndarray:
    tolerance = TIE_TOLERANCE * max(1.0, abs(value))
    width = sub.max_sum + 1
    labels: list[int] = []
    spent = 0.0
    partial = 0
    for i in range(sub.n):
        for x in range(sub.k):
            step = sub.unary[i, x] + (sub.pairwise[i - 1][labels[-1], x] if i else 0.0)
            if sub.target is None:
                rest = tables.backward[i, x].min()
            else:
                remaining = sub.target - partial - x
                if remaining < 0 or remaining >= width:
                    continue
                rest = tables.backward[i, x, remaining]
            if spent + step + rest <= value + tolerance:
                labels.append(x)
                spent += step
                partial += x
                break
        else:
            raise RuntimeError(f"lost the optimal path at chain position {i}")
    return np.array(labels, dtype=np.int64)


def solve_chain_dp_naive(sub: ChainSubproblem) -> ChainSolution:
    tables = dp_tables(sub)
    if not _target_in_range(sub):
        return ChainSolution(INF, None, tables)
    last = tables.forward[sub.n - 1]
    value = float(last.min() if sub.target is None else last[:, sub.target].min())
    if not np.isfinite(value):
        return ChainSolution(INF, None, tables)
    return ChainSolution(value, _lexicographic_labels(sub, tables, value), tables)


def min_marginals(sub: ChainSubproblem, tables: DpTables | None = None) -> np.ndarray:
    """``out[i, x]``: optimum of the chain problem with ``x_i = x`` fixed (``inf`` if infeasible)."""
    tables = tables or dp_tables(sub)
    if sub.target is None:
        return tables.forward.min(axis=2) + tables.backward.min(axis=2)
    if not _target_in_range(sub):
        return np.full((sub.n, sub.k), INF)
    b = sub.target
    return np.min(tables.forward[:, :, : b + 1] + tables.backward[:, :, b::-1], axis=2)
