from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

from .errors import ErrorRecord, TomographyError
from .events import ProgressCallback, ProgressEvent
from .instance import load_instance
from .models import SolverConfig
from .paths import app_data_dir as default_app_data_dir
from .reports import BOUND_TOLERANCE, METHOD_FIELDS, round_sig, write_compare_reports, write_result
from .solver import METHODS, SolveResult, solve_instance
from .state import RunState, RunStateStore


logger = logging.getLogger(__name__)

RUN_ORDER = ("std", "ctg", "std-bb", "ctg-bb")


def expand_instance_paths(paths: list[str | Path]) -> list[Path]:
    """Instance files in argument order; directories contribute their ``*.json`` files sorted by name."""
    files: list[Path] = []
    for raw in paths:
        path = Path(raw).expanduser().resolve()
        if path.is_dir():
            files.extend(sorted(candidate for candidate in path.glob("*.json") if candidate.is_file()))
        else:
            files.append(path)
    return files


def _ordered_methods(methods: list[str]) -> list[str]:
    unknown = [method for method in methods if method not in METHODS]
    if unknown:
        raise ValueError(f"Unknown method: {unknown[0]}")
    # std runs first so ctg can start from its multipliers
    return sorted(dict.fromkeys(methods), key=RUN_ORDER.index)


def relative_improvement(ctg: float | None, std: float | None, optimum: float | None) -> float | None:
    """``(CTG - STD) / (E* - STD)`` where STD is not tight, else ``None``."""
    if ctg is None or std is None or optimum is None or std >= optimum - 1e-9:
        return None
    return (ctg - std) / (optimum - std)


class BenchmarkRunner:
    def __init__(self, app_data_dir: str | Path | None = None, config: SolverConfig | None = None):
        self.app_data_dir = Path(app_data_dir).expanduser().resolve() if app_data_dir else default_app_data_dir()
        self.store = RunStateStore(self.app_data_dir)
        self.config = config or SolverConfig()

    def compare(
        self,
        instance_files: list[str | Path],
        methods: list[str],
        run_id: str | None = None,
        out_csv: str | Path | None = None,
        progress_callback: ProgressCallback | None = None,
    ) -> RunState:
        ordered = _ordered_methods(methods)
        state = self.store.create(ordered, run_id=run_id)
        state.instance_files = [str(path) for path in expand_instance_paths(list(instance_files))]
        state.config = self.config.to_dict()
        state.out_csv = str(Path(out_csv).expanduser().resolve()) if out_csv else None
        self._transition(state, "loaded", f"Found {len(state.instance_files)} instance files", 5, progress_callback)
        return self._run_state(state, progress_callback)

    def resume(self, run_id: str, progress_callback: ProgressCallback | None = None) -> RunState:
        state = self.store.load(run_id)
        if state.phase == "completed":
            return state
        if not state.instance_files:
            raise ValueError(f"Run {run_id} has no instance inventory to resume")
        self.config = SolverConfig.from_mapping(state.config) if state.config else self.config
        return self._run_state(state, progress_callback)

    def report(self, run_id: str) -> dict[str, Any]:
        state = self.store.load(run_id)
        report_path = state.run_dir / "reports" / "report.json"
        if not report_path.exists():
            write_compare_reports(state, state.out_csv)
        return json.loads(report_path.read_text(encoding="utf-8"))

    def _run_state(self, state: RunState, progress_callback: ProgressCallback | None) -> RunState:
        if state.phase != "solving":
            self._transition(state, "solving", "Solving instances", 10, progress_callback)
        total = max(1, len(state.instance_files))
        for position, instance_file in enumerate(state.instance_files):
            if instance_file in state.processed_instances:
                continue
            row = self._solve_row(state, Path(instance_file), progress_callback)
            state.rows = [existing for existing in state.rows if existing.get("path") != instance_file]
            state.rows.append(row)
            state.processed_instances.append(instance_file)
            self.store.save(state)
            if progress_callback:
                progress_callback(
                    ProgressEvent(
                        task_id=state.run_id,
                        phase="solving",
                        progress=10 + int(80 * (position + 1) / total),
                        message=f"Solved {Path(instance_file).name}",
                    )
                )

        write_compare_reports(state, state.out_csv)
        self._transition(state, "reported", "Wrote comparison reports", 95, progress_callback)
        self._transition(state, "completed", "Benchmark completed", 100, progress_callback)
        write_compare_reports(state, state.out_csv)
        return state

    def _solve_row(self, state: RunState, path: Path, progress_callback: ProgressCallback | None) -> dict[str, Any]:
        row: dict[str, Any] = {"instance": path.stem, "path": str(path), "error": None}
        results: dict[str, SolveResult] = {}
        try:
            instance = load_instance(path)
            for method in state.methods:
                warm_start = results["std"].lagrange if method == "ctg" and "std" in results else None
                result = solve_instance(
                    instance,
                    method,
                    self.config,
                    warm_start=warm_start,
                    progress_callback=progress_callback,
                    instance_name=path.stem,
                )
                results[method] = result
                write_result(result, state.results_dir / f"{path.stem}.{method}.json")
                payload = result.to_dict()
                for name in METHOD_FIELDS:
                    row[f"{method}_{name}"] = payload[name]
        except (TomographyError, ValueError, OSError) as exc:
            logger.warning("instance %s failed: %s", path, exc)
            row["error"] = str(exc)
            state.errors.append(ErrorRecord.from_exception(exc, detail=str(path)).to_dict())

        optimum = None
        certified_values = [result.primal_value for result in results.values() if result.certified]
        if certified_values:
            optimum = min(value for value in certified_values if value is not None)
        row["certified_optimum"] = round_sig(optimum)
        ctg = row.get("ctg_lower_bound")
        std = row.get("std_lower_bound")
        row["ctg_strictly_better"] = None if ctg is None or std is None else bool(ctg > std + BOUND_TOLERANCE)
        row["relative_improvement"] = round_sig(relative_improvement(ctg, std, optimum))
        return row

    def _transition(
        self,
        state: RunState,
        phase: str,
        message: str,
        progress: int,
        progress_callback: ProgressCallback | None,
    ) -> None:
        self.store.transition(state, phase, message)
        if progress_callback:
            progress_callback(
                ProgressEvent(
                    task_id=state.run_id,
                    phase=phase,
                    progress=progress,
                    message=message,
                )
            )
