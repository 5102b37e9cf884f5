from __future__ import annotations

import json
import shutil
import uuid
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from . import __version__
from .models import utc_now_iso
from .paths import runs_dir


PHASES = (
    "created",
    "loaded",
    "solving",
    "reported",
    "completed",
    "failed",
)


@dataclass
class RunState:
    run_id: str
    app_data_dir: Path
    methods: list[str] = field(default_factory=list)
    phase: str = "created"
    status: str = "running"
    instance_files: list[str] = field(default_factory=list)
    processed_instances: list[str] = field(default_factory=list)
    rows: list[dict[str, Any]] = field(default_factory=list)
    errors: list[dict[str, Any]] = field(default_factory=list)
    config: dict[str, Any] = field(default_factory=dict)
    out_csv: str | None = None
    phase_history: list[dict[str, str]] = field(default_factory=list)
    created_at: str = field(default_factory=utc_now_iso)
    updated_at: str = field(default_factory=utc_now_iso)
    versions: dict[str, str] = field(default_factory=lambda: {"tool": __version__})

    @property
    def run_dir(self) -> Path:
        return self.app_data_dir / "runs" / self.run_id

    @property
    def state_path(self) -> Path:
        return self.run_dir / "state.json"

    @property
    def results_dir(self) -> Path:
        return self.run_dir / "results"

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["app_data_dir"] = str(self.app_data_dir)
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunState":
        return cls(
            run_id=data["run_id"],
            app_data_dir=Path(data["app_data_dir"]),
            methods=list(data.get("methods", [])),
            phase=data.get("phase", "created"),
            status=data.get("status", "running"),
            instance_files=list(data.get("instance_files", [])),
            processed_instances=list(data.get("processed_instances", [])),
            rows=list(data.get("rows", [])),
            errors=list(data.get("errors", [])),
            config=dict(data.get("config", {})),
            out_csv=data.get("out_csv"),
            phase_history=list(data.get("phase_history", [])),
            created_at=data.get("created_at", utc_now_iso()),
            updated_at=data.get("updated_at", utc_now_iso()),
            versions=dict(data.get("versions", {"tool": __version__})),
        )


class RunStateStore:
    def __init__(self, app_data_root: str | Path):
        self.app_data_dir = Path(app_data_root).expanduser().resolve()
        self.runs_dir = runs_dir(self.app_data_dir)
        self.runs_dir.mkdir(parents=True, exist_ok=True)

    def create(self, methods: list[str], run_id: str | None = None) -> RunState:
        run_id = run_id or uuid.uuid4().hex
        state = RunState(run_id=run_id, app_data_dir=self.app_data_dir, methods=list(methods))
        state.run_dir.mkdir(parents=True, exist_ok=True)
        self.save(state)
        return state

    def load(self, run_id: str) -> RunState:
        path = self.runs_dir / run_id / "state.json"
        with path.open("r", encoding="utf-8") as handle:
            return RunState.from_dict(json.load(handle))

    def exists(self, run_id: str) -> bool:
        return (self.runs_dir / run_id / "state.json").is_file()

    def list(self) -> list[RunState]:
        states: list[RunState] = []
        for path in self.runs_dir.glob("*/state.json"):
            try:
                states.append(RunState.from_dict(json.loads(path.read_text(encoding="utf-8"))))
            except (OSError, ValueError, KeyError):
                continue
        return sorted(states, key=lambda state: state.updated_at, reverse=True)

    def delete(self, run_id: str) -> bool:
        run_dir = self.runs_dir / run_id
        if not run_dir.exists():
            return False
        shutil.rmtree(run_dir)
        return True

    def save(self, state: RunState) -> None:
        state.updated_at = utc_now_iso()
        state.run_dir.mkdir(parents=True, exist_ok=True)
        tmp_path = state.state_path.with_suffix(".json.tmp")
        tmp_path.write_text(json.dumps(state.to_dict(), indent=2), encoding="utf-8")
        tmp_path.replace(state.state_path)

    def transition(self, state: RunState, phase: str, message: str = "") -> RunState:
        if phase not in PHASES:
            raise ValueError(f"Unknown run phase: {phase}")
        state.phase = phase
        state.status = "failed" if phase == "failed" else ("completed" if phase == "completed" else "running")
        state.phase_history.append(
            {
                "phase": phase,
                "message": message,
                "created_at": utc_now_iso(),
            }
        )
        self.save(state)
        return state
