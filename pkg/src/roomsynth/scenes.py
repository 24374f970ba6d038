"""Domain model for rooms, furniture and owner preference conditions.

Scenes are 2-D top views: a room shell (boundary polygon plus door/window
openings on the walls) and a list of furniture items, each an axis-aligned
rectangle with a category code, a centroid, width/depth in meters and one of
four cardinal directions. All values are immutable after construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    Vec2,
    bbox_diagonal,
    point_in_polygon,
    point_on_segment,
    polygon_is_simple,
    polygon_signed_area,
    rect_overlap_area,
    seg_length,
)

ROOM_TYPES = ("tatami", "balcony", "kitchen")

# Globally reserved structural category codes; furniture starts at 4.
CAT_WALL = 1
CAT_DOOR = 2
CAT_WINDOW = 3

DIRECTIONS = (0, 90, 180, 270)

OVERLAP_TOLERANCE = 1e-6  # m^2


class DatasetFormatError(ValueError):
    """Raised when a dataset/graph/checkpoint file cannot be parsed."""


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def as_tuple(self) -> Vec2:
        return (self.x, self.y)


@dataclass(frozen=True)
class Opening:
    """A door or window lying on boundary segment ``wall_index`` starting
    ``offset`` meters along it. Whether it actually fits on the segment is a
    cross-object property checked by ``validate_scene``."""

    kind: str  # "door" | "window"
    wall_index: int
    offset: float
    width: float

    def __post_init__(self) -> None:
        if self.kind not in ("door", "window"):
            raise ValueError(f"opening kind must be door/window, got {self.kind!r}")
        if self.wall_index < 0:
            raise ValueError("wall_index must be >= 0")
        if self.offset < 0:
            raise ValueError("opening offset must be >= 0")
        if self.width <= 0:
            raise ValueError("opening width must be > 0")


@dataclass(frozen=True)
class RoomShell:
    """Simple counterclockwise boundary polygon plus wall openings."""

    boundary: tuple[Point2, ...]
    openings: tuple[Opening, ...] = ()

    def __post_init__(self) -> None:
        if len(self.boundary) < 3:
            raise ValueError("room boundary needs at least 3 vertices")
        verts = [p.as_tuple() for p in self.boundary]
        if not polygon_is_simple(verts):
            raise ValueError("room boundary must be a simple polygon")
        if polygon_signed_area(verts) <= 0:
            raise ValueError("room boundary must be counterclockwise")
        for op in self.openings:
            if op.wall_index >= len(self.boundary):
                raise ValueError(
                    f"opening wall_index {op.wall_index} out of range "
                    f"for {len(self.boundary)} walls"
                )

    @property
    def vertices(self) -> list[Vec2]:
        return [p.as_tuple() for p in self.boundary]

    def wall_segment(self, i: int) -> tuple[Vec2, Vec2]:
        verts = self.vertices
        return verts[i], verts[(i + 1) % len(verts)]

    def wall_count(self) -> int:
        return len(self.boundary)

    def opening_centroid(self, op: Opening) -> Vec2:
        a, b = self.wall_segment(op.wall_index)
        return point_on_segment(a, b, op.offset + op.width / 2)

    def diagonal(self) -> float:
        return bbox_diagonal(self.vertices)


@dataclass(frozen=True)
class FurnitureItem:
    category: int
    position: Point2
    size: tuple[float, float]  # (width, depth) meters at direction 0
    direction: int = 0  # degrees, one of 0/90/180/270

    def __post_init__(self) -> None:
        w, d = self.size
        if w <= 0 or d <= 0:
            raise ValueError(f"item size must be positive, got {self.size}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        if self.category < 4:
            raise ValueError("furniture categories start at code 4")

    def footprint(self) -> tuple[float, float]:
        """Axis-aligned (extent_x, extent_y) after rotation."""
        w, d = self.size
        if self.direction in (90, 270):
            return d, w
        return w, d


@dataclass(frozen=True)
class ConditionSchema:
    """Ordered functional-category labels for one room type."""

    room_type: str
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.labels:
            raise ValueError("condition schema needs at least one label")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("condition labels must be unique")

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise SchemaMismatchError(
                f"unknown label {label!r} for room type {self.room_type!r}; "
                f"expected one of {list(self.labels)}"
            ) from None


@dataclass(frozen=True)
class ConditionCode:
    room_type: str
    label_index: int

    def __post_init__(self) -> None:
        if self.label_index < 0:
            raise ValueError("label_index must be >= 0")


@dataclass(frozen=True)
class Scene:
    room_type: str
    shell: RoomShell
    items: tuple[FurnitureItem, ...]
    condition: ConditionCode


class SchemaMismatchError(ValueError):
    """Condition code does not fit the given condition schema."""


def encode_condition(cond: ConditionCode, schema: ConditionSchema) -> np.ndarray:
    """One-hot vector over the schema's labels, e.g. label 0 of a 2-label
    schema -> (1, 0)."""
    if cond.room_type != schema.room_type:
        raise SchemaMismatchError(
            f"condition room type {cond.room_type!r} != schema {schema.room_type!r}"
        )
    if not 0 <= cond.label_index < len(schema.labels):
        raise SchemaMismatchError(
            f"label index {cond.label_index} out of range for "
            f"{len(schema.labels)} labels"
        )
    vec = np.zeros(len(schema.labels), dtype=np.float64)
    vec[cond.label_index] = 1.0
    return vec


@dataclass(frozen=True)
class Violation:
    kind: str  # "outside" | "overlap" | "opening" | "empty"
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_scene(scene: Scene) -> ValidationReport:
    """Report-only validity check: item centroids inside the boundary,
    no pairwise footprint overlap beyond tolerance, openings on their wall
    segment, non-empty item list."""
    out: list[Violation] = []
    verts = scene.shell.vertices
    for i, op in enumerate(scene.shell.openings):
        a, b = scene.shell.wall_segment(op.wall_index)
        if op.offset + op.width > seg_length(a, b) + 1e-9:
            out.append(
                Violation("opening", f"opening {i} does not fit on wall {op.wall_index}")
            )
    if not scene.items:
        out.append(Violation("empty", "scene has no furniture items"))
    for i, item in enumerate(scene.items):
        if not point_in_polygon(item.position.as_tuple(), verts):
            out.append(Violation("outside", f"item {i} centroid outside boundary"))
    for i in range(len(scene.items)):
        wi, di = scene.items[i].footprint()
        ci = scene.items[i].position.as_tuple()
        for j in range(i + 1, len(scene.items)):
            wj, dj = scene.items[j].footprint()
            cj = scene.items[j].position.as_tuple()
            area = rect_overlap_area(ci, wi, di, cj, wj, dj)
            if area > OVERLAP_TOLERANCE:
                out.append(
                    Violation("overlap", f"items {i} and {j} overlap by {area:.4g} m^2")
                )
    return ValidationReport(tuple(out))


# ---------------------------------------------------------------------------
# Dataset persistence: versioned JSON with a header carrying the room type,
# condition schema and category registry, then the scene array.

DATASET_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SceneDataset:
    room_type: str
    schema: ConditionSchema
    registry: dict[int, str]  # category code -> name, includes 1/2/3
    scenes: tuple[Scene, ...] = field(default_factory=tuple)


def shell_to_dict(shell: RoomShell) -> dict:
    return {
        "boundary": [[p.x, p.y] for p in shell.boundary],
        "openings": [
            {
                "kind": o.kind,
                "wall_index": o.wall_index,
                "offset": o.offset,
                "width": o.width,
            }
            for o in shell.openings
        ],
    }


def shell_from_dict(data: dict) -> RoomShell:
    try:
        return RoomShell(
            boundary=tuple(Point2(float(x), float(y)) for x, y in data["boundary"]),
            openings=tuple(
                Opening(
                    kind=o["kind"],
                    wall_index=int(o["wall_index"]),
                    offset=float(o["offset"]),
                    width=float(o["width"]),
                )
                for o in data["openings"]
            ),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise DatasetFormatError(f"malformed shell record: {exc!r}") from exc


def scene_to_dict(scene: Scene) -> dict:
    return {
        "room_type": scene.room_type,
        "shell": shell_to_dict(scene.shell),
        "items": [
            {
                "category": it.category,
                "position": [it.position.x, it.position.y],
                "size": [it.size[0], it.size[1]],
                "direction": it.direction,
            }
            for it in scene.items
        ],
        "condition": {
            "room_type": scene.condition.room_type,
            "label_index": scene.condition.label_index,
        },
    }


def scene_from_dict(data: dict) -> Scene:
    try:
        shell = shell_from_dict(data["shell"])
        items = tuple(
            FurnitureItem(
                category=int(it["category"]),
                position=Point2(float(it["position"][0]), float(it["position"][1])),
                size=(float(it["size"][0]), float(it["size"][1])),
                direction=int(it["direction"]),
            )
            for it in data["items"]
        )
        cond = ConditionCode(
            room_type=data["condition"]["room_type"],
            label_index=int(data["condition"]["label_index"]),
        )
        return Scene(
            room_type=data["room_type"], shell=shell, items=items, condition=cond
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise DatasetFormatError(f"malformed scene record: {exc!r}") from exc


def save_dataset(dataset: SceneDataset, path: str) -> None:
    payload = {
        "format_version": DATASET_FORMAT_VERSION,
        "room_type": dataset.room_type,
        "condition_schema": list(dataset.schema.labels),
        "category_registry": {str(k): v for k, v in sorted(dataset.registry.items())},
        "scenes": [scene_to_dict(s) for s in dataset.scenes],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))


def load_dataset(path: str) -> SceneDataset:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(
                f"cannot parse dataset {path}: line {exc.lineno} col {exc.colno}: {exc.msg}"
            ) from exc
    version = payload.get("format_version")
    if version != DATASET_FORMAT_VERSION:
        raise DatasetFormatError(
            f"unsupported dataset format_version {version!r} in {path}, "
            f"expected {DATASET_FORMAT_VERSION}"
        )
    try:
        room_type = payload["room_type"]
        schema = ConditionSchema(room_type, tuple(payload["condition_schema"]))
        registry = {int(k): v for k, v in payload["category_registry"].items()}
        scenes = tuple(scene_from_dict(s) for s in payload["scenes"])
    except (KeyError, TypeError) as exc:
        raise DatasetFormatError(f"malformed dataset header in {path}: {exc!r}") from exc
    return SceneDataset(room_type=room_type, schema=schema, registry=registry, scenes=scenes)
