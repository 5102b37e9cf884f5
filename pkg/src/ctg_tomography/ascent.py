"""Lagrangian dual ascent over a chain decomposition.

The dual function is ``sum_i min_x E_i(x | lambda_i)``; each evaluation solves every
chain with the selected oracle (``ctg``: exact one-dimensional tomography, ``std``:
per-ray local polytope), and the averaged-projection of the chain marginals is a
supergradient. Steps follow ``AscentConfig.step_rule``.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Protocol

import numpy as np

from .chain import INF, ChainSubproblem, solve_chain_tomo_tree
from .decomposition import Decomposition, LagrangeState, decompose
from .events import ProgressCallback, ProgressEvent
from .instance import TomographyInstance, check_feasibility, evaluate_energy
from .models import AscentConfig, SolverConfig
from .std_oracle import chain_map_dp, std_ray_value


logger = logging.getLogger(__name__)

ORACLES = ("ctg", "std")


@dataclass
class OracleAnswer:
    value: float
    labels: np.ndarray | None
    marginals: np.ndarray | None

    @property
    def feasible(self) -> bool:
        return bool(np.isfinite(self.value))


class ChainOracle(Protocol):
    name: str

    def solve(self, sub: ChainSubproblem) -> OracleAnswer: ...


def _one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels] = 1.0
    return out


class CountingTreeOracle:
    name = "ctg"

    def __init__(self, kernel: str = "batched", frontier_budget: int | None = None):
        self.kernel = kernel
        self.frontier_budget = frontier_budget

    def solve(self, sub: ChainSubproblem) -> OracleAnswer:
        if sub.target is None:
            solution = chain_map_dp(sub)
        else:
            solution = solve_chain_tomo_tree(sub, self.kernel, self.frontier_budget)
        if solution.labels is None:
            return OracleAnswer(INF, None, None)
        return OracleAnswer(solution.value, solution.labels, _one_hot(solution.labels, sub.k))


class LocalPolytopeOracle:
    name = "std"

    def __init__(self, tolerance: float = 1e-7):
        self.tolerance = tolerance

    def solve(self, sub: ChainSubproblem) -> OracleAnswer:
        dual = std_ray_value(sub, self.tolerance)
        if dual.infeasible:
            return OracleAnswer(INF, None, None)
        return OracleAnswer(dual.value, dual.witness, dual.marginals)


def get_oracle(name: str, config: SolverConfig | None = None) -> ChainOracle:
    config = config or SolverConfig()
    if name == "ctg":
        return CountingTreeOracle(config.ascent.kernel, config.fast_frontier_budget)
    if name == "std":
        return LocalPolytopeOracle(config.ascent.std_tolerance)
    raise ValueError(f"Unknown oracle: {name}")


@dataclass
class BoundRecord:
    iteration: int
    dual: float
    best_dual: float
    best_primal: float | None
    step: float
    elapsed: float

    def to_dict(self) -> dict[str, object]:
        return {
            "iteration": self.iteration,
            "dual": self.dual,
            "best_dual": self.best_dual,
            "best_primal": self.best_primal,
            "step": self.step,
            "elapsed": self.elapsed,
        }


@dataclass
class BoundTrace:
    oracle: str
    step_rule: str
    parameters: dict[str, object] = field(default_factory=dict)
    records: list[BoundRecord] = field(default_factory=list)

    def append(self, record: BoundRecord) -> None:
        self.records.append(record)

    @property
    def best_dual(self) -> float:
        return self.records[-1].best_dual if self.records else -INF

    def to_list(self) -> list[dict[str, object]]:
        return [record.to_dict() for record in self.records]


@dataclass
class AscentResult:
    best_dual: float
    lagrange: LagrangeState
    trace: BoundTrace
    iterations: int
    status: str
    decomposition: Decomposition
    best_primal: float | None = None
    best_labeling: np.ndarray | None = None
    answers: list[OracleAnswer] = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def infeasible(self) -> bool:
        return self.status == "infeasible"


# -- step rules -----------------------------------------------------------------


class DiminishingStep:
    def __init__(self, config: AscentConfig):
        self.initial = config.step_size
        self.decay = config.step_decay

    def size(self, iteration: int, dual: float, primal: float | None, norm_sq: float) -> float:
        return self.initial / (1.0 + iteration / self.decay)

    def next_point(
        self, iteration: int, point: np.ndarray, dual: float, direction: np.ndarray, primal: float | None
    ) -> tuple[np.ndarray, float]:
        step = self.size(iteration, dual, primal, float(np.dot(direction, direction)))
        return point + step * direction, step


class PolyakStep(DiminishingStep):
    """``(primal - dual) / |g|^2``; without a primal estimate it falls back to the diminishing rule."""

    def size(self, iteration: int, dual: float, primal: float | None, norm_sq: float) -> float:
        if primal is None or not np.isfinite(primal) or primal <= dual or norm_sq <= 0.0:
            return super().size(iteration, dual, primal, norm_sq)
        return (primal - dual) / norm_sq


def unit_simplex_projection(c: np.ndarray) -> np.ndarray:
    """Euclidean projection of ``c`` onto ``{x >= 0, sum(x) = 1}``."""
    n = len(c)
    a = -np.sort(-c)
    thresholds = (np.cumsum(a) - 1) / np.arange(1, n + 1)
    for index in range(n - 1, -1, -1):
        if a[index] > thresholds[index]:
            return np.maximum(c - thresholds[index], 0)
    return np.full(n, 1.0 / n)


class ProximalBundle:
    """Cutting-plane model over the last ``bundle_size`` supergradients with a quadratic prox term.

    Trial point: ``argmax_x min_j (f_j + g_j.(x - x_j)) - |x - center|^2 / (2 t)``, solved
    through its simplex-constrained dual by projected gradient. The center moves
    (serious step) when the realized increase reaches ``bundle_descent_fraction``
    of the predicted one.
    """

    QP_ITERATIONS = 300

    def __init__(self, config: AscentConfig):
        self.capacity = config.bundle_size
        self.prox = config.bundle_prox
        self.fraction = config.bundle_descent_fraction
        self.points: list[np.ndarray] = []
        self.values: list[float] = []
        self.slopes: list[np.ndarray] = []
        self.center: np.ndarray | None = None
        self.center_value = -INF
        self.predicted = 0.0

    def _model(self, point: np.ndarray) -> float:
        cuts = zip(self.points, self.values, self.slopes)
        return min(value + float(np.dot(slope, point - anchor)) for anchor, value, slope in cuts)

    def _solve_qp(self) -> np.ndarray:
        assert self.center is not None
        slopes = np.array(self.slopes)
        cuts = zip(self.points, self.values, self.slopes)
        offsets = np.array([value + float(np.dot(slope, self.center - anchor)) for anchor, value, slope in cuts])
        gram = slopes @ slopes.T
        lipschitz = self.prox * float(np.linalg.eigvalsh(gram)[-1]) if gram.size else 0.0
        weights = np.full(len(offsets), 1.0 / len(offsets))
        if lipschitz <= 0.0:
            weights = np.zeros(len(offsets))
            weights[int(np.argmin(offsets))] = 1.0
            return weights
        for _ in range(self.QP_ITERATIONS):
            gradient = offsets + self.prox * gram @ weights
            updated = unit_simplex_projection(weights - gradient / lipschitz)
            if np.max(np.abs(updated - weights)) < 1e-12:
                weights = updated
                break
            weights = updated
        return weights

    def next_point(
        self, iteration: int, point: np.ndarray, dual: float, direction: np.ndarray, primal: float | None
    ) -> tuple[np.ndarray, float]:
        self.points.append(point.copy())
        self.values.append(dual)
        self.slopes.append(direction.copy())
        if len(self.points) > self.capacity:
            del self.points[0], self.values[0], self.slopes[0]

        if self.center is None or dual - self.center_value >= self.fraction * self.predicted:
            self.center = point.copy()
            self.center_value = dual

        weights = self._solve_qp()
        trial = self.center + self.prox * (weights @ np.array(self.slopes))
        self.predicted = max(self._model(trial) - self.center_value, 0.0)
        return trial, float(np.linalg.norm(trial - point))


def make_step_rule(config: AscentConfig) -> DiminishingStep | ProximalBundle:
    if config.step_rule == "polyak":
        return PolyakStep(config)
    if config.step_rule == "bundle":
        return ProximalBundle(config)
    return DiminishingStep(config)


# -- ascent loop ----------------------------------------------------------------


def _solve_all(
    oracle: ChainOracle, subproblems: list[ChainSubproblem], executor: ThreadPoolExecutor | None
) -> list[OracleAnswer]:
    if executor is None:
        return [oracle.solve(sub) for sub in subproblems]
    return list(executor.map(oracle.solve, subproblems))


def _consensus_primal(decomposition: Decomposition, answers: list[OracleAnswer]) -> tuple[np.ndarray, float] | None:
    labeling = decomposition.assemble([answer.labels for answer in answers])
    if labeling is None:
        return None
    instance = decomposition.instance
    if np.any(check_feasibility(instance, labeling)):
        return None
    return labeling, evaluate_energy(instance, labeling)


def dual_ascent(
    source: TomographyInstance | Decomposition,
    oracle: str | ChainOracle = "ctg",
    config: SolverConfig | None = None,
    *,
    lagrange: LagrangeState | None = None,
    fixings: Mapping[int, int] | None = None,
    cutoff: float | None = None,
    primal_value: float | None = None,
    max_iters: int | None = None,
    progress_callback: ProgressCallback | None = None,
    task_id: str = "ascent",
) -> AscentResult:
    config = config or SolverConfig()
    settings = config.ascent
    decomposition = source if isinstance(source, Decomposition) else decompose(source)
    instance = decomposition.instance
    chain_oracle = get_oracle(oracle, config) if isinstance(oracle, str) else oracle
    iterations_allowed = max_iters or settings.max_iters

    if lagrange is not None:
        current = LagrangeState(decomposition, lagrange.values).recenter()
    else:
        current = LagrangeState.zeros(decomposition)
    best_lagrange = current.copy()
    step_rule = make_step_rule(settings)
    trace = BoundTrace(
        oracle=chain_oracle.name,
        step_rule=settings.step_rule,
        parameters={
            "step_size": settings.step_size,
            "step_decay": settings.step_decay,
            "bundle_size": settings.bundle_size,
            "bundle_prox": settings.bundle_prox,
            "max_iters": iterations_allowed,
        },
    )
    forbidden = decomposition.forbidden_mask(fixings)
    best_dual = -INF
    best_answers: list[OracleAnswer] = []
    best_primal = primal_value
    best_labeling: np.ndarray | None = None
    history: list[float] = []
    report_every = max(1, iterations_allowed // 20)
    status = "max_iters"
    started = time.perf_counter()
    workers = settings.effective_workers if len(decomposition) > 1 else 1

    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        iteration = 0
        for iteration in range(iterations_allowed):
            subproblems = [
                decomposition.subproblem_at(index, current, forbidden=forbidden) for index in range(len(decomposition))
            ]
            answers = _solve_all(chain_oracle, subproblems, executor)
            elapsed = time.perf_counter() - started
            if not all(answer.feasible for answer in answers):
                best_dual = INF
                best_answers = answers
                status = "infeasible"
                trace.append(BoundRecord(iteration, INF, INF, best_primal, 0.0, elapsed))
                break

            dual = float(sum(answer.value for answer in answers))
            if dual > best_dual:
                best_dual = dual
                best_lagrange = current.copy()
                best_answers = answers
            consensus = _consensus_primal(decomposition, answers)
            if consensus is not None and (best_primal is None or consensus[1] < best_primal):
                best_labeling, best_primal = consensus

            marginals = np.concatenate([answer.marginals for answer in answers])
            direction = decomposition.project_zero_sum(marginals).reshape(-1)
            norm_sq = float(np.dot(direction, direction))
            history.append(best_dual)

            stop = None
            if best_primal is not None and best_dual >= best_primal - 1e-9:
                stop = "optimal"
            elif settings.stop_on_certificate and best_primal is not None and instance.costs_integral and best_primal - best_dual < 1.0:
                stop = "certified"
            elif cutoff is not None and best_dual >= cutoff:
                stop = "cutoff"
            elif norm_sq <= 1e-24:
                stop = "converged"
            elif settings.time_limit_seconds is not None and elapsed >= settings.time_limit_seconds:
                stop = "time_limit"
            elif len(history) > settings.stall_window and best_dual - history[-1 - settings.stall_window] < settings.stall_tolerance:
                stop = "stalled"

            step = 0.0
            if stop is None and iteration + 1 < iterations_allowed:
                point, step = step_rule.next_point(iteration, current.flat(), dual, direction, best_primal)
                current = current.with_flat(point).recenter()
            trace.append(BoundRecord(iteration, dual, best_dual, best_primal, step, elapsed))

            if progress_callback is not None and (iteration % report_every == 0 or stop is not None):
                progress_callback(
                    ProgressEvent(
                        task_id=task_id,
                        phase="ascent",
                        progress=int(100 * (iteration + 1) / iterations_allowed),
                        message=f"{chain_oracle.name} iteration {iteration}: dual {best_dual:.6g}",
                    )
                )
            if stop is not None:
                status = stop
                break
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    elapsed = time.perf_counter() - started
    logger.info(
        "%s ascent finished: status=%s iterations=%d best_dual=%.6g best_primal=%s elapsed=%.2fs",
        chain_oracle.name,
        status,
        len(trace.records),
        best_dual,
        best_primal,
        elapsed,
    )
    return AscentResult(
        best_dual=best_dual,
        lagrange=best_lagrange,
        trace=trace,
        iterations=len(trace.records),
        status=status,
        decomposition=decomposition,
        best_primal=best_primal,
        best_labeling=best_labeling,
        answers=best_answers,
        elapsed=elapsed,
    )
