"""Seeded synthetic scene generator.

Three room types with fixed rectangular shells and per-label furniture
templates. Every label's template has a distinct category multiset (a
signature item that never drops out), so condition labels are separable
from layouts alone. Positions get uniform jitter of +/-0.2 m per axis and
optional items drop out 10% of the time; nominal gaps between footprints
are at least 0.45 m, so jittered scenes never overlap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenes import (
    ROOM_TYPES,
    ConditionCode,
    ConditionSchema,
    FurnitureItem,
    Opening,
    Point2,
    RoomShell,
    Scene,
    SceneDataset,
    SchemaMismatchError,
)

JITTER = 0.2  # m, per axis
OPTIONAL_KEEP_P = 0.9

ROOM_SCHEMAS: dict[str, ConditionSchema] = {
    "tatami": ConditionSchema("tatami", ("sleep", "tea", "storage", "work")),
    "balcony": ConditionSchema("balcony", ("leisure", "washing", "storage")),
    "kitchen": ConditionSchema("kitchen", ("classical", "multi")),
}

ROOM_REGISTRIES: dict[str, dict[int, str]] = {
    "tatami": {
        1: "wall", 2: "door", 3: "window",
        4: "tatami", 5: "work-desk", 6: "cabinet", 7: "tea-table",
        8: "futon", 9: "wardrobe", 10: "storage-rack",
    },
    "balcony": {
        1: "wall", 2: "door", 3: "window",
        4: "washing-machine", 5: "lounge-chair", 6: "storage-cabinet",
        7: "plant-stand", 8: "drying-rack", 9: "shelf",
    },
    "kitchen": {
        1: "wall", 2: "door", 3: "window",
        4: "stove", 5: "sink", 6: "fridge", 7: "island", 8: "dining-nook",
    },
}

# (width, depth) in meters for south, east, north, west rectangular walls.
ROOM_DIMENSIONS: dict[str, tuple[float, float]] = {
    "tatami": (4.0, 3.2),
    "balcony": (3.6, 1.6),
    "kitchen": (3.2, 2.6),
}

# Door on the south wall (segment 0), window on the north wall (segment 2,
# which runs east to west, so its offset is measured from the east corner).
ROOM_OPENINGS: dict[str, tuple[Opening, Opening]] = {
    "tatami": (Opening("door", 0, 1.7, 0.8), Opening("window", 2, 1.4, 1.2)),
    "balcony": (Opening("door", 0, 0.3, 0.7), Opening("window", 2, 1.2, 1.0)),
    "kitchen": (Opening("door", 0, 0.3, 0.8), Opening("window", 2, 1.0, 1.0)),
}


@dataclass(frozen=True)
class TemplateItem:
    category: int
    x: float
    y: float
    width: float
    depth: float
    direction: int = 0
    optional: bool = False


# Tatami room zones: mat west-south, signature item east-south, cabinet
# west-north, optional wardrobe east-north.
_TATAMI_MAT = TemplateItem(4, 0.95, 0.8, 1.4, 1.0)
_TATAMI_CABINET = TemplateItem(6, 0.85, 2.5, 1.2, 0.5)
_TATAMI_WARDROBE = TemplateItem(9, 3.05, 2.5, 1.1, 0.6, optional=True)

# Balcony zones: three columns at x = 0.5 / 1.8 / 3.1, optional in the middle.
# Kitchen zones: two rows (y = 0.6 / 1.8) by three columns (x = 0.55/1.6/2.65).
ROOM_TEMPLATES: dict[str, dict[str, tuple[TemplateItem, ...]]] = {
    "tatami": {
        "sleep": (_TATAMI_MAT, TemplateItem(8, 3.05, 0.95, 1.4, 1.0, direction=90),
                  _TATAMI_CABINET, _TATAMI_WARDROBE),
        "tea": (_TATAMI_MAT, TemplateItem(7, 3.05, 0.8, 0.9, 0.9),
                _TATAMI_CABINET, _TATAMI_WARDROBE),
        "storage": (_TATAMI_MAT, TemplateItem(10, 3.05, 0.8, 1.2, 0.6),
                    _TATAMI_CABINET, _TATAMI_WARDROBE),
        "work": (_TATAMI_MAT, TemplateItem(5, 3.05, 0.8, 1.2, 0.7, direction=180),
                 _TATAMI_CABINET, _TATAMI_WARDROBE),
    },
    "balcony": {
        "leisure": (TemplateItem(5, 0.5, 0.8, 0.55, 0.5, direction=270),
                    TemplateItem(7, 3.1, 0.8, 0.35, 0.35),
                    TemplateItem(8, 1.8, 0.8, 0.55, 0.5, direction=90, optional=True)),
        "washing": (TemplateItem(4, 0.5, 0.8, 0.55, 0.55),
                    TemplateItem(8, 3.1, 0.8, 0.55, 0.5, direction=90),
                    TemplateItem(7, 1.8, 0.8, 0.35, 0.35, optional=True)),
        "storage": (TemplateItem(6, 0.5, 0.8, 0.55, 0.4),
                    TemplateItem(9, 3.1, 0.8, 0.55, 0.3),
                    TemplateItem(7, 1.8, 0.8, 0.35, 0.35, optional=True)),
    },
    "kitchen": {
        "classical": (TemplateItem(4, 0.55, 0.6, 0.6, 0.6),
                      TemplateItem(5, 1.6, 0.6, 0.6, 0.5),
                      TemplateItem(6, 2.65, 0.6, 0.6, 0.7)),
        "multi": (TemplateItem(4, 0.55, 0.6, 0.6, 0.6),
                  TemplateItem(5, 1.6, 0.6, 0.6, 0.5),
                  TemplateItem(6, 2.65, 0.6, 0.6, 0.7),
                  TemplateItem(7, 1.6, 1.8, 0.6, 0.7),
                  TemplateItem(8, 0.55, 1.8, 0.6, 0.6, optional=True)),
    },
}


def _require_room(room_type: str) -> None:
    if room_type not in ROOM_SCHEMAS:
        raise ValueError(
            f"unknown room type {room_type!r}; expected one of {sorted(ROOM_SCHEMAS)}"
        )


def default_schema(room_type: str) -> ConditionSchema:
    _require_room(room_type)
    return ROOM_SCHEMAS[room_type]


def default_registry(room_type: str) -> dict[int, str]:
    _require_room(room_type)
    return dict(ROOM_REGISTRIES[room_type])


def default_shell(room_type: str) -> RoomShell:
    _require_room(room_type)
    w, d = ROOM_DIMENSIONS[room_type]
    boundary = (Point2(0.0, 0.0), Point2(w, 0.0), Point2(w, d), Point2(0.0, d))
    return RoomShell(boundary=boundary, openings=ROOM_OPENINGS[room_type])


def synth_scene(room_type: str, cond: ConditionCode, seed: int) -> Scene:
    """Deterministic jittered instance of the template for cond's label."""
    _require_room(room_type)
    schema = ROOM_SCHEMAS[room_type]
    if cond.room_type != room_type:
        raise SchemaMismatchError(
            f"condition room type {cond.room_type!r} != {room_type!r}"
        )
    if not 0 <= cond.label_index < len(schema.labels):
        raise SchemaMismatchError(
            f"label index {cond.label_index} out of range for {room_type!r}"
        )
    label = schema.labels[cond.label_index]
    template = ROOM_TEMPLATES[room_type][label]
    rng = np.random.default_rng(seed)
    items = []
    for entry in template:
        # Draw both decisions unconditionally to keep jitter streams aligned
        # whether or not the optional item drops out.
        keep = rng.random() < OPTIONAL_KEEP_P
        dx, dy = rng.uniform(-JITTER, JITTER, size=2)
        if entry.optional and not keep:
            continue
        items.append(
            FurnitureItem(
                category=entry.category,
                position=Point2(entry.x + float(dx), entry.y + float(dy)),
                size=(entry.width, entry.depth),
                direction=entry.direction,
            )
        )
    return Scene(
        room_type=room_type,
        shell=default_shell(room_type),
        items=tuple(items),
        condition=cond,
    )


def child_seed(seed: int, *key: int) -> int:
    """Deterministic derived seed for a sub-stream identified by key."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_dataset(room_type: str, per_label: int, seed: int) -> SceneDataset:
    """per_label scenes for every label of the room type, seeded per scene."""
    _require_room(room_type)
    if per_label < 1:
        raise ValueError("per_label must be >= 1")
    schema = ROOM_SCHEMAS[room_type]
    scenes = []
    for label_index in range(len(schema.labels)):
        cond = ConditionCode(room_type, label_index)
        for i in range(per_label):
            scenes.append(synth_scene(room_type, cond, child_seed(seed, label_index, i)))
    return SceneDataset(
        room_type=room_type,
        schema=schema,
        registry=default_registry(room_type),
        scenes=tuple(scenes),
    )
