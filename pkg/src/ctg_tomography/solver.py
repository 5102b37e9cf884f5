from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .ascent import dual_ascent
from .branch_bound import branch_and_bound
from .decomposition import LagrangeState
from .errors import ErrorCategory, ErrorRecord, InstanceValidationError
from .events import ProgressCallback
from .instance import TomographyInstance
from .models import SolverConfig
from .primal import certify, recover_primal
from .reports import round_sig


logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
METHODS = ("ctg", "std", "ctg-bb", "std-bb")
STATUSES = ("optimal", "gap", "infeasible", "timeout", "no_primal")


@dataclass
class SolveResult:
    method: str
    instance: str
    lower_bound: float
    primal_value: float | None
    certified: bool
    status: str
    iterations: int
    wall_time: float
    trace: list[dict[str, Any]] = field(default_factory=list)
    labeling: np.ndarray | None = None
    config: dict[str, Any] = field(default_factory=dict)
    errors: list[dict[str, Any]] = field(default_factory=list)
    details: dict[str, Any] = field(default_factory=dict)
    lagrange: LagrangeState | None = field(default=None, repr=False, compare=False)

    @property
    def gap(self) -> float | None:
        if self.primal_value is None or not np.isfinite(self.lower_bound):
            return None
        return self.primal_value - self.lower_bound

    @property
    def timed_out(self) -> bool:
        return self.status == "timeout"

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "method": self.method,
            "instance": self.instance,
            "lower_bound": round_sig(self.lower_bound),
            "primal_value": round_sig(self.primal_value),
            "gap": round_sig(self.gap),
            "certified": self.certified,
            "status": self.status,
            "iterations": self.iterations,
            "wall_time": round_sig(self.wall_time),
            "trace": [{key: round_sig(value) for key, value in record.items()} for record in self.trace],
            "labeling": None if self.labeling is None else [int(value) for value in self.labeling],
            "config": self.config,
            "details": {key: round_sig(value) for key, value in self.details.items()},
            "errors": self.errors,
        }


def _split_method(method: str) -> tuple[str, bool]:
    if method not in METHODS:
        raise InstanceValidationError(f"must be one of {', '.join(METHODS)}", field="method")
    oracle, _, suffix = method.partition("-")
    return oracle, suffix == "bb"


def solve_instance(
    instance: TomographyInstance,
    method: str = "ctg",
    config: SolverConfig | None = None,
    *,
    warm_start: LagrangeState | None = None,
    progress_callback: ProgressCallback | None = None,
    instance_name: str = "",
) -> SolveResult:
    """Run one pipeline: dual ascent plus primal heuristic, or branch and bound."""
    config = config or SolverConfig()
    oracle, with_search = _split_method(method)
    started = time.perf_counter()
    if with_search:
        return _solve_with_search(instance, method, oracle, config, progress_callback, instance_name, started)

    ascent = dual_ascent(
        instance,
        oracle,
        config,
        lagrange=warm_start,
        progress_callback=progress_callback,
        task_id=instance_name or method,
    )
    base = dict(
        method=method,
        instance=instance_name,
        iterations=ascent.iterations,
        trace=ascent.trace.to_list(),
        config=config.to_dict(),
        lagrange=ascent.lagrange,
    )
    if ascent.infeasible:
        return SolveResult(
            lower_bound=np.inf,
            primal_value=None,
            certified=False,
            status="infeasible",
            wall_time=time.perf_counter() - started,
            errors=[ErrorRecord(ErrorCategory.INFEASIBLE, "a ray target is unreachable", recoverable=False).to_dict()],
            **base,
        )

    labeling, value = ascent.best_labeling, ascent.best_primal if ascent.best_labeling is not None else None
    heuristic = recover_primal(instance, ascent.decomposition, ascent.lagrange, config)
    if heuristic.labeling is not None and (value is None or heuristic.value < value):
        labeling, value = heuristic.labeling, heuristic.value

    certified = False
    if value is None:
        status = "no_primal"
    else:
        certified = certify(value, ascent.best_dual, instance.costs_integral).optimal
        status = "optimal" if certified else "gap"
    if not certified and ascent.status == "time_limit":
        status = "timeout"
    return SolveResult(
        lower_bound=ascent.best_dual,
        primal_value=value,
        certified=certified,
        status=status,
        wall_time=time.perf_counter() - started,
        labeling=labeling,
        details={
            "ascent_status": ascent.status,
            "epsilon": heuristic.epsilon,
            "search_nodes": heuristic.nodes,
        },
        **base,
    )


def _solve_with_search(
    instance: TomographyInstance,
    method: str,
    oracle: str,
    config: SolverConfig,
    progress_callback: ProgressCallback | None,
    instance_name: str,
    started: float,
) -> SolveResult:
    outcome = branch_and_bound(instance, oracle, config, progress_callback, task_id=instance_name or method)
    if outcome.status == "infeasible":
        status = "infeasible"
    elif outcome.complete:
        status = "optimal"
    else:
        status = "timeout"
    return SolveResult(
        method=method,
        instance=instance_name,
        lower_bound=outcome.lower_bound,
        primal_value=outcome.value if outcome.labeling is not None else None,
        certified=status == "optimal",
        status=status,
        iterations=outcome.iterations,
        wall_time=time.perf_counter() - started,
        trace=outcome.trace,
        labeling=outcome.labeling,
        config=config.to_dict(),
        details={
            "root_bound": outcome.root.best_dual,
            "branch_nodes": outcome.nodes,
            "search_status": outcome.status,
        },
        lagrange=outcome.root.lagrange,
    )
