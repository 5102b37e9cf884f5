from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .solver import SolveResult
    from .state import RunState


SIGNIFICANT_DIGITS = 12
BOUND_TOLERANCE = 1e-6
METHOD_FIELDS = ("lower_bound", "primal_value", "certified", "status", "iterations", "wall_time")


def round_sig(value: Any) -> Any:
    """Floats to 12 significant digits; non-finite floats become ``None``."""
    if value is None or isinstance(value, (bool, np.bool_, str)):
        return bool(value) if isinstance(value, np.bool_) else value
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return float(f"{value:.{SIGNIFICANT_DIGITS}g}") if math.isfinite(value) else None
    return value


def write_result(result: "SolveResult", path: str | Path) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = target.with_suffix(target.suffix + ".tmp")
    tmp_path.write_text(json.dumps(result.to_dict(), indent=2), encoding="utf-8")
    tmp_path.replace(target)
    return target


def csv_columns(methods: list[str]) -> list[str]:
    columns = ["instance", "path"]
    for method in methods:
        columns.extend(f"{method}_{name}" for name in METHOD_FIELDS)
    columns.extend(["certified_optimum", "ctg_strictly_better", "relative_improvement", "error"])
    return columns


def _value(row: dict[str, Any], key: str) -> float | None:
    value = row.get(key)
    return None if value is None else float(value)


def summary_data(state: "RunState") -> dict[str, Any]:
    rows = state.rows
    methods = state.methods
    certified = {method: sum(1 for row in rows if row.get(f"{method}_certified")) for method in methods}
    if "ctg" in methods and "ctg-bb" in methods:
        certified["ctg|ctg-bb"] = sum(1 for row in rows if row.get("ctg_certified") or row.get("ctg-bb_certified"))

    compared = [row for row in rows if row.get("ctg_lower_bound") is not None and row.get("std_lower_bound") is not None]
    strictly_better = sum(1 for row in rows if row.get("ctg_strictly_better"))
    optimum_found: dict[str, int] = {}
    for method in ("ctg", "std"):
        if method in methods:
            optimum_found[method] = sum(1 for row in rows if _found_optimum(row, method))
    only_ctg = sum(1 for row in rows if _found_optimum(row, "ctg") and not _found_optimum(row, "std"))
    improvements = [row["relative_improvement"] for row in rows if row.get("relative_improvement") is not None]
    return {
        "run_id": state.run_id,
        "methods": methods,
        "instances": len(rows),
        "failed_instances": sum(1 for row in rows if row.get("error")),
        "certified": certified,
        "ctg_strictly_better": strictly_better,
        "strict_improvement_fraction": round_sig(strictly_better / len(compared)) if compared else None,
        "heuristic_found_optimum": optimum_found,
        "only_ctg_found_optimum": only_ctg,
        "relative_improvements": improvements,
    }


def _found_optimum(row: dict[str, Any], method: str) -> bool:
    optimum = _value(row, "certified_optimum")
    primal = _value(row, f"{method}_primal_value")
    return optimum is not None and primal is not None and abs(primal - optimum) < 1e-9


def markdown_report(state: "RunState", summary: dict[str, Any]) -> str:
    lines = [
        f"# Benchmark Report: {state.run_id}",
        "",
        f"- Status: {state.status}",
        f"- Phase: {state.phase}",
        f"- Methods: {', '.join(state.methods)}",
        f"- Instances: {summary['instances']} ({summary['failed_instances']} failed)",
        "",
        "## Duality gap below one",
        "",
        "| method | certified |",
        "|---|---|",
    ]
    lines.extend(f"| {method} | {count} |" for method, count in summary["certified"].items())
    lines.extend(
        [
            "",
            "## Lower bounds",
            "",
            f"- CTG strictly better than STD: {summary['ctg_strictly_better']}",
            f"- Observed strict-improvement fraction: {summary['strict_improvement_fraction']}",
            f"- Only the CTG pipeline found the optimum: {summary['only_ctg_found_optimum']}",
            f"- Relative-improvement values: {len(summary['relative_improvements'])}",
            "",
            "## Errors",
            "",
        ]
    )
    lines.extend(f"- {error.get('category', 'runtime')}: {error.get('message', '')}" for error in state.errors)
    if not state.errors:
        lines.append("- None")
    lines.append("")
    return "\n".join(lines)


def run_report_data(state: "RunState") -> dict[str, Any]:
    return {
        "run_id": state.run_id,
        "status": state.status,
        "phase": state.phase,
        "run_dir": str(state.run_dir),
        "methods": state.methods,
        "instance_files": state.instance_files,
        "processed_instances": state.processed_instances,
        "summary": summary_data(state),
        "rows": state.rows,
        "errors": state.errors,
        "phase_history": state.phase_history,
        "created_at": state.created_at,
        "updated_at": state.updated_at,
        "versions": state.versions,
    }


def write_compare_reports(state: "RunState", out_csv: str | Path | None = None) -> tuple[Path, Path, Path]:
    report_dir = state.run_dir / "reports"
    report_dir.mkdir(parents=True, exist_ok=True)
    csv_path = Path(out_csv) if out_csv else report_dir / "compare.csv"
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    columns = csv_columns(state.methods)
    with csv_path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for row in state.rows:
            writer.writerow({key: "" if row.get(key) is None else row.get(key) for key in columns})

    summary = summary_data(state)
    summary_path = report_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2), encoding="utf-8")
    (report_dir / "report.json").write_text(json.dumps(run_report_data(state), indent=2), encoding="utf-8")
    markdown_path = report_dir / "report.md"
    markdown_path.write_text(markdown_report(state, summary), encoding="utf-8")
    return csv_path, summary_path, markdown_path
