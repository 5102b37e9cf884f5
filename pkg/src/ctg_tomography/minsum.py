"""Min-sum (tropical) convolution ``c[i] = min_j a[j] + b[i - j]``.

Entries may be ``+inf``; ``-inf`` is rejected. Only output values are contractual,
witnesses of ties are not.
"""

from __future__ import annotations

import heapq
import math
from typing import Callable

import numpy as np


MinSumKernel = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _as_cost_vector(values: np.ndarray, name: str) -> np.ndarray:
    vector = np.asarray(values, dtype=float)
    if vector.ndim != 1 or vector.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D cost vector")
    if np.any(np.isneginf(vector)) or np.any(np.isnan(vector)):
        raise ValueError(f"{name} must not contain -inf or nan")
    return vector


def minsum_naive(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = _as_cost_vector(a, "a")
    b = _as_cost_vector(b, "b")
    if a.size < b.size:
        a, b = b, a
    out = np.full(a.size + b.size - 1, np.inf)
    for offset, value in enumerate(b):
        np.minimum(out[offset : offset + a.size], a + value, out=out[offset : offset + a.size])
    return out


def default_frontier_budget(n: int, m: int) -> int:
    size = n + m
    return max(64, 4 * size * (int(math.log2(size)) + 1))


def minsum_fast(a: np.ndarray, b: np.ndarray, frontier_budget: int | None = None) -> np.ndarray:
    """Sorted-candidate expansion; each output index is settled by its first (cheapest) pair.

    Candidate pairs ``(rank_a, rank_b)`` are popped in nondecreasing sum order. When
    more than ``frontier_budget`` pairs are expanded the naive kernel takes over.
    """
    a = _as_cost_vector(a, "a")
    b = _as_cost_vector(b, "b")
    n, m = a.size, b.size
    budget = default_frontier_budget(n, m) if frontier_budget is None else frontier_budget
    order_a = np.argsort(a, kind="stable")
    order_b = np.argsort(b, kind="stable")
    sorted_a = a[order_a]
    sorted_b = b[order_b]

    out = np.full(n + m - 1, np.inf)
    settled = np.zeros(n + m - 1, dtype=bool)
    remaining = n + m - 1
    frontier = [(sorted_a[0] + sorted_b[0], 0, 0)]
    expanded = 0
    while frontier and remaining:
        total, i, j = heapq.heappop(frontier)
        if math.isinf(total):
            break
        expanded += 1
        if expanded > budget:
            return minsum_naive(a, b)
        index = order_a[i] + order_b[j]
        if not settled[index]:
            settled[index] = True
            out[index] = total
            remaining -= 1
        if j == 0 and i + 1 < n:
            heapq.heappush(frontier, (sorted_a[i + 1] + sorted_b[0], i + 1, 0))
        if j + 1 < m:
            heapq.heappush(frontier, (sorted_a[i] + sorted_b[j + 1], i, j + 1))
    return out


def minsum_batched(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Min-sum convolution along the last axis, broadcasting all leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n, m = a.shape[-1], b.shape[-1]
    if n == 0 or m == 0:
        raise ValueError("cost vectors must be non-empty")
    if n < m:
        a, b, n, m = b, a, m, n
    lead = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
    out = np.full(lead + (n + m - 1,), np.inf)
    for offset in range(m):
        window = out[..., offset : offset + n]
        np.minimum(window, a + b[..., offset : offset + 1], out=window)
    return out


def get_kernel(name: str, frontier_budget: int | None = None) -> MinSumKernel:
    if name == "naive":
        return minsum_naive
    if name == "fast":
        return lambda a, b: minsum_fast(a, b, frontier_budget)
    if name == "batched":
        return minsum_batched
    raise ValueError(f"Unknown min-sum kernel: {name}")
