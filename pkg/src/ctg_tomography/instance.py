"""Tomography instances on 4-neighbour grids: rays, potentials, energies and file I/O.

Nodes are indexed row-major, ``node = y * width + x``. A labeling is a flat integer
array of length ``width * height`` indexed by node id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import InstanceParseError, InstanceValidationError


FORMAT_NAME = "ctg-tomography-instance"
FORMAT_VERSION = 1


class Direction(str, Enum):
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"
    DIAG_DOWN = "diag_down"
    DIAG_UP = "diag_up"
    NONE = "none"


DIRECTION_ORDER = (Direction.HORIZONTAL, Direction.VERTICAL, Direction.DIAG_DOWN, Direction.DIAG_UP)
DIRECTION_LETTERS = {"h": Direction.HORIZONTAL, "v": Direction.VERTICAL}


def parse_directions(value: str | Iterable[str | Direction]) -> frozenset[Direction]:
    """Accept ``"hv"``/``"hvd"`` shorthands (``d`` means both diagonals) or direction names."""
    if isinstance(value, str) and not any(name.value == value for name in Direction):
        directions: set[Direction] = set()
        for letter in value.lower():
            if letter == "d":
                directions.update({Direction.DIAG_DOWN, Direction.DIAG_UP})
            elif letter in DIRECTION_LETTERS:
                directions.add(DIRECTION_LETTERS[letter])
            else:
                raise InstanceValidationError(f"unknown direction letter {letter!r}", field="directions")
        return frozenset(directions)
    if isinstance(value, str):
        return frozenset({Direction(value)})
    return frozenset(Direction(item) for item in value)


class PairwiseKind(str, Enum):
    POTTS = "potts"
    ABSDIFF = "absdiff"
    TABLE = "table"


@dataclass(frozen=True)
class PairwiseSpec:
    kind: PairwiseKind
    weight: float = 1.0
    tables: dict[tuple[int, int], np.ndarray] | None = None

    def table(self, k: int, edge: tuple[int, int] | None = None) -> np.ndarray:
        labels = np.arange(k)
        if self.kind is PairwiseKind.POTTS:
            return self.weight * (labels[:, None] != labels[None, :]).astype(float)
        if self.kind is PairwiseKind.ABSDIFF:
            return self.weight * np.abs(labels[:, None] - labels[None, :]).astype(float)
        if self.tables is None or edge not in self.tables:
            raise InstanceValidationError(f"missing table for edge {edge}", field="pairwise.tables")
        return np.asarray(self.tables[edge], dtype=float)


@dataclass(frozen=True)
class Ray:
    nodes: tuple[int, ...]
    target: int = 0
    direction: Direction = Direction.NONE

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True, eq=False)
class TomographyInstance:
    width: int
    height: int
    k: int
    unary: np.ndarray
    pairwise: PairwiseSpec
    rays: tuple[Ray, ...]
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise InstanceValidationError("must be >= 1", field="width" if self.width < 1 else "height")
        if self.k < 2:
            raise InstanceValidationError("must be >= 2", field="k")
        unary = np.array(self.unary, dtype=float)
        if unary.shape != (self.num_nodes, self.k):
            raise InstanceValidationError(
                f"shape must be ({self.num_nodes}, {self.k}), got {unary.shape}", field="unary"
            )
        if not np.all(np.isfinite(unary)):
            raise InstanceValidationError("entries must be finite", field="unary")
        unary.setflags(write=False)
        object.__setattr__(self, "unary", unary)
        object.__setattr__(self, "rays", tuple(self.rays))
        for index, ray in enumerate(self.rays):
            self._validate_ray(index, ray)
        for edge in self.edges:
            table = self.pairwise.table(self.k, edge)
            if table.shape != (self.k, self.k) or not np.all(np.isfinite(table)):
                raise InstanceValidationError(f"table for edge {edge} must be finite {self.k}x{self.k}", field="pairwise")

    def _validate_ray(self, index: int, ray: Ray) -> None:
        name = f"rays[{index}]"
        if not ray.nodes:
            raise InstanceValidationError("ray has no nodes", field=f"{name}.nodes")
        if len(set(ray.nodes)) != len(ray.nodes):
            raise InstanceValidationError("duplicate node in ray", field=f"{name}.nodes")
        for node in ray.nodes:
            if not 0 <= node < self.num_nodes:
                raise InstanceValidationError(f"node {node} is out of grid", field=f"{name}.nodes")
        if ray.target < 0:
            raise InstanceValidationError("target must be >= 0", field=f"{name}.target")

    @property
    def num_nodes(self) -> int:
        return self.width * self.height

    def node_id(self, x: int, y: int) -> int:
        return y * self.width + x

    @cached_property
    def edges(self) -> tuple[tuple[int, int], ...]:
        """Canonical grid edges ``(u, v)`` with ``u < v``: horizontal ones first, then vertical."""
        horizontal = [
            (self.node_id(x, y), self.node_id(x + 1, y))
            for y in range(self.height)
            for x in range(self.width - 1)
        ]
        vertical = [
            (self.node_id(x, y), self.node_id(x, y + 1))
            for y in range(self.height - 1)
            for x in range(self.width)
        ]
        return tuple(horizontal + vertical)

    @cached_property
    def edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset(self.edges)

    @cached_property
    def pairwise_tables(self) -> dict[tuple[int, int], np.ndarray]:
        tables = {}
        for edge in self.edges:
            table = np.array(self.pairwise.table(self.k, edge), dtype=float)
            table.setflags(write=False)
            tables[edge] = table
        return tables

    def pairwise_table(self, u: int, v: int) -> np.ndarray:
        """Cost table indexed ``[x_u, x_v]`` for the grid edge between ``u`` and ``v``."""
        table = self.pairwise_tables[(min(u, v), max(u, v))]
        return table if u < v else table.T

    @property
    def targets(self) -> np.ndarray:
        return np.array([ray.target for ray in self.rays], dtype=np.int64)

    @cached_property
    def costs_integral(self) -> bool:
        arrays = [self.unary] + list(self.pairwise_tables.values())
        return all(np.array_equal(array, np.round(array)) for array in arrays)

    @property
    def median_pairwise_weight(self) -> float:
        if self.pairwise.kind is not PairwiseKind.TABLE:
            return float(self.pairwise.weight)
        if not self.edges:
            return 1.0
        weights = [float(np.max(table) - np.min(table)) for table in self.pairwise_tables.values()]
        return float(np.median(weights))

    def with_targets(self, targets: Sequence[int]) -> "TomographyInstance":
        if len(targets) != len(self.rays):
            raise InstanceValidationError("one target per ray is required", field="rays")
        rays = tuple(Ray(ray.nodes, int(target), ray.direction) for ray, target in zip(self.rays, targets))
        return TomographyInstance(self.width, self.height, self.k, self.unary, self.pairwise, rays, dict(self.metadata))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TomographyInstance):
            return NotImplemented
        return instance_to_dict(self) == instance_to_dict(other)

    __hash__ = None  # type: ignore[assignment]


def build_lattice_rays(width: int, height: int, directions: Iterable[str | Direction] | str) -> list[Ray]:
    """One ray per lattice line and direction; targets stay 0 until filled from an image."""
    wanted = parse_directions(directions)
    if not wanted:
        raise InstanceValidationError("at least one direction is required", field="directions")

    def node(x: int, y: int) -> int:
        return y * width + x

    rays: list[Ray] = []
    for direction in DIRECTION_ORDER:
        if direction not in wanted:
            continue
        if direction is Direction.HORIZONTAL:
            lines = [[node(x, y) for x in range(width)] for y in range(height)]
        elif direction is Direction.VERTICAL:
            lines = [[node(x, y) for y in range(height)] for x in range(width)]
        elif direction is Direction.DIAG_DOWN:
            # constant x - y, walking down-right
            lines = [
                [node(x, x - d) for x in range(width) if 0 <= x - d < height]
                for d in range(-(height - 1), width)
            ]
        else:
            # constant x + y, walking up-right
            lines = [
                [node(x, d - x) for x in range(width) if 0 <= d - x < height]
                for d in range(width + height - 1)
            ]
        rays.extend(Ray(tuple(line), 0, direction) for line in lines if line)
    return rays


def as_labeling(instance: TomographyInstance, labeling: Any) -> np.ndarray:
    values = np.asarray(labeling, dtype=np.int64).reshape(-1)
    if values.shape != (instance.num_nodes,):
        raise InstanceValidationError(
            f"labeling must assign all {instance.num_nodes} nodes", field="labeling"
        )
    if values.size and (values.min() < 0 or values.max() >= instance.k):
        raise InstanceValidationError(f"labels must lie in [0, {instance.k - 1}]", field="labeling")
    return values


def labeling_to_image(instance: TomographyInstance, labeling: Any) -> np.ndarray:
    return as_labeling(instance, labeling).reshape(instance.height, instance.width)


def project(instance: TomographyInstance, labeling: Any) -> np.ndarray:
    values = as_labeling(instance, labeling)
    return np.array([int(values[list(ray.nodes)].sum()) for ray in instance.rays], dtype=np.int64)


def evaluate_energy(instance: TomographyInstance, labeling: Any) -> float:
    values = as_labeling(instance, labeling)
    energy = float(instance.unary[np.arange(instance.num_nodes), values].sum())
    if not instance.edges:
        return energy
    edges = np.array(instance.edges, dtype=np.int64)
    left, right = values[edges[:, 0]], values[edges[:, 1]]
    kind = instance.pairwise.kind
    if kind is PairwiseKind.POTTS:
        energy += float(instance.pairwise.weight * np.count_nonzero(left != right))
    elif kind is PairwiseKind.ABSDIFF:
        energy += float(instance.pairwise.weight * np.abs(left - right).sum())
    else:
        for (u, v), a, b in zip(instance.edges, left, right):
            energy += float(instance.pairwise_tables[(u, v)][a, b])
    return energy


def check_feasibility(instance: TomographyInstance, labeling: Any) -> np.ndarray:
    """Per-ray residual ``|sum(x) - b|``; all zero iff every ray constraint holds."""
    return np.abs(project(instance, labeling) - instance.targets)


def instance_to_dict(instance: TomographyInstance) -> dict[str, Any]:
    pairwise: dict[str, Any] = {"kind": instance.pairwise.kind.value, "weight": instance.pairwise.weight}
    if instance.pairwise.kind is PairwiseKind.TABLE:
        pairwise["tables"] = {
            f"{u}-{v}": np.asarray(table, dtype=float).tolist()
            for (u, v), table in sorted((instance.pairwise.tables or {}).items())
        }
    unary = None if not np.any(instance.unary) else instance.unary.tolist()
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "width": instance.width,
        "height": instance.height,
        "k": instance.k,
        "unary": unary,
        "pairwise": pairwise,
        "rays": [
            {"nodes": list(ray.nodes), "target": ray.target, "direction": ray.direction.value}
            for ray in instance.rays
        ],
        "metadata": instance.metadata,
    }


def instance_from_dict(data: Any) -> TomographyInstance:
    if not isinstance(data, dict):
        raise InstanceParseError("instance file must contain a mapping", field="<root>")
    width = _int_field(data, "width")
    height = _int_field(data, "height")
    k = _int_field(data, "k")
    if width < 1 or height < 1 or k < 2:
        field_name = "k" if k < 2 else ("width" if width < 1 else "height")
        raise InstanceValidationError("must be >= 2" if field_name == "k" else "must be >= 1", field=field_name)

    unary_data = data.get("unary")
    try:
        unary = np.zeros((width * height, k)) if unary_data is None else np.array(unary_data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InstanceParseError(f"not a numeric table: {exc}", field="unary") from exc

    pairwise = _pairwise_from_dict(data.get("pairwise"))

    raw_rays = data.get("rays")
    if not isinstance(raw_rays, list):
        raise InstanceParseError("must be a list", field="rays")
    rays = []
    for index, raw in enumerate(raw_rays):
        name = f"rays[{index}]"
        if not isinstance(raw, dict) or not isinstance(raw.get("nodes"), list):
            raise InstanceParseError("must be a mapping with a nodes list", field=name)
        try:
            nodes = tuple(int(node) for node in raw["nodes"])
            target = int(raw.get("target", 0))
            direction = Direction(raw.get("direction", Direction.NONE.value))
        except (TypeError, ValueError) as exc:
            raise InstanceParseError(str(exc), field=name) from exc
        rays.append(Ray(nodes, target, direction))

    metadata = data.get("metadata") or {}
    if not isinstance(metadata, dict):
        raise InstanceParseError("must be a mapping", field="metadata")
    return TomographyInstance(width, height, k, unary, pairwise, tuple(rays), dict(metadata))


def _int_field(data: dict[str, Any], name: str) -> int:
    value = data.get(name)
    if isinstance(value, bool) or not isinstance(value, int):
        raise InstanceParseError("must be an integer", field=name)
    return value


def _pairwise_from_dict(raw: Any) -> PairwiseSpec:
    if not isinstance(raw, dict):
        raise InstanceParseError("must be a mapping with kind and weight", field="pairwise")
    try:
        kind = PairwiseKind(raw.get("kind"))
        weight = float(raw.get("weight", 1.0))
    except (TypeError, ValueError) as exc:
        raise InstanceParseError(str(exc), field="pairwise.kind") from exc
    if kind is not PairwiseKind.TABLE:
        return PairwiseSpec(kind, weight)
    raw_tables = raw.get("tables")
    if not isinstance(raw_tables, dict):
        raise InstanceParseError("must be a mapping of 'u-v' to tables", field="pairwise.tables")
    tables = {}
    for key, table in raw_tables.items():
        try:
            u, v = (int(part) for part in str(key).split("-"))
            tables[(min(u, v), max(u, v))] = np.array(table, dtype=float) if u < v else np.array(table, dtype=float).T
        except (TypeError, ValueError) as exc:
            raise InstanceParseError(f"bad edge table {key!r}: {exc}", field="pairwise.tables") from exc
    return PairwiseSpec(kind, weight, tables)


def save_instance(instance: TomographyInstance, path: str | Path) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = target.with_suffix(target.suffix + ".tmp")
    tmp_path.write_text(json.dumps(instance_to_dict(instance), indent=1) + "\n", encoding="utf-8")
    tmp_path.replace(target)
    return target


def load_instance(path: str | Path) -> TomographyInstance:
    source = Path(path)
    if not source.is_file():
        raise InstanceParseError(f"instance file not found: {source}", field="<file>")
    try:
        data = json.loads(source.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InstanceParseError(f"malformed JSON at line {exc.lineno}: {exc.msg}", field="<file>") from exc
    return instance_from_dict(data)
