from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError


STEP_RULES = ("diminishing", "polyak", "bundle")
KERNELS = ("batched", "fast", "naive")


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0, tzinfo=None).isoformat() + "Z"


def _default_workers() -> int:
    return max(1, min(4, os.cpu_count() or 1))


@dataclass
class AscentConfig:
    max_iters: int = 1000
    step_rule: str = "diminishing"
    step_size: float = 1.0
    step_decay: float = 20.0
    bundle_size: int = 20
    bundle_prox: float = 1.0
    bundle_descent_fraction: float = 0.1
    stall_window: int = 50
    stall_tolerance: float = 1e-6
    time_limit_seconds: float | None = None
    workers: int = field(default_factory=_default_workers)
    deterministic: bool = False
    stop_on_certificate: bool = True
    kernel: str = "batched"
    std_tolerance: float = 1e-7

    def __post_init__(self) -> None:
        if self.step_rule not in STEP_RULES:
            raise ConfigError(f"ascent.step_rule must be one of {', '.join(STEP_RULES)}, got {self.step_rule!r}")
        if self.kernel not in KERNELS:
            raise ConfigError(f"ascent.kernel must be one of {', '.join(KERNELS)}, got {self.kernel!r}")
        if self.max_iters < 1:
            raise ConfigError("ascent.max_iters must be >= 1")

    @property
    def effective_workers(self) -> int:
        return 1 if self.deterministic else max(1, int(self.workers))


@dataclass
class SearchConfig:
    node_limit: int = 2_000_000
    time_limit_seconds: float | None = None
    bb_node_iters: int = 40
    bb_node_limit: int = 100_000


@dataclass
class PrimalConfig:
    epsilon_factors: tuple[float, ...] = (0.0, 0.5, 1.0, 2.0, 5.0)

    def __post_init__(self) -> None:
        self.epsilon_factors = tuple(float(value) for value in self.epsilon_factors)
        if not self.epsilon_factors:
            raise ConfigError("primal.epsilon_factors must not be empty")


@dataclass
class SolverConfig:
    ascent: AscentConfig = field(default_factory=AscentConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    primal: PrimalConfig = field(default_factory=PrimalConfig)
    fast_frontier_budget: int | None = None

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["primal"]["epsilon_factors"] = list(self.primal.epsilon_factors)
        return data

    @classmethod
    def from_mapping(cls, data: dict[str, Any] | None) -> "SolverConfig":
        data = dict(data or {})
        sections = {"ascent": AscentConfig, "search": SearchConfig, "primal": PrimalConfig}
        unknown = sorted(set(data) - set(sections) - {"fast_frontier_budget"})
        if unknown:
            raise ConfigError(f"Unknown config key: {unknown[0]}")
        kwargs: dict[str, Any] = {}
        for name, section_cls in sections.items():
            section = data.get(name) or {}
            if not isinstance(section, dict):
                raise ConfigError(f"Config section {name} must be a mapping")
            kwargs[name] = _build_section(section_cls, section, name)
        if data.get("fast_frontier_budget") is not None:
            kwargs["fast_frontier_budget"] = int(data["fast_frontier_budget"])
        return cls(**kwargs)

    def with_overrides(self, **ascent_overrides: Any) -> "SolverConfig":
        values = {key: value for key, value in ascent_overrides.items() if value is not None}
        merged = {**asdict(self.ascent), **values}
        return SolverConfig(
            ascent=AscentConfig(**merged),
            search=self.search,
            primal=self.primal,
            fast_frontier_budget=self.fast_frontier_budget,
        )


def _build_section(section_cls: type, values: dict[str, Any], name: str) -> Any:
    allowed = {item.name for item in fields(section_cls)}
    unknown = sorted(set(values) - allowed)
    if unknown:
        raise ConfigError(f"Unknown config key: {name}.{unknown[0]}")
    try:
        return section_cls(**values)
    except TypeError as exc:
        raise ConfigError(f"Invalid config section {name}: {exc}") from exc


def load_config(config_path: str | Path | None) -> SolverConfig:
    if config_path is None:
        return SolverConfig()
    path = Path(config_path).expanduser().resolve()
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    with path.open("r", encoding="utf-8") as handle:
        try:
            data = yaml.safe_load(handle) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"Invalid YAML config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"Config file must be a YAML mapping: {path}")
    return SolverConfig.from_mapping(data)
