"""Scene-to-graph conversion: typed relation graphs over walls, openings
and furniture, with pruning and reconnection.

Nodes carry category codes (wall=1, door=2, window=3, furniture >= 4).
Edge types combine a semantic class (wall-opening=1, wall-object=2,
object-object=3) with a distance bucket (near=1, middle=2, further=3)
as 3*(class-1)+bucket, giving types 1..9.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .geometry import Vec2, point_segment_distance
from .scenes import (
    CAT_DOOR,
    CAT_WALL,
    CAT_WINDOW,
    ConditionCode,
    DatasetFormatError,
    Scene,
)

NEAR_FRACTION = 0.15
MIDDLE_FRACTION = 0.40

SEM_WALL_OPENING = 1
SEM_WALL_OBJECT = 2
SEM_OBJECT_OBJECT = 3

BUCKET_NEAR = 1
BUCKET_MIDDLE = 2
BUCKET_FURTHER = 3

GRAPH_FORMAT_VERSION = 1


class ExtractionError(ValueError):
    """Scene cannot be converted to a graph."""


class GraphConnectivityError(ValueError):
    """Components cannot be bridged with any typeable node pair."""


@dataclass(frozen=True)
class SceneGraph:
    """Undirected typed graph. Edges are (u, v, edge_type) with u < v,
    node ids dense 0..n-1. ``edge_distances`` carries the centroid
    distances that produced each edge; it is extraction metadata, aligned
    with ``edges``, never serialized, and None for generated graphs."""

    nodes: tuple[tuple[int, int], ...]
    edges: tuple[tuple[int, int, int], ...]
    condition: ConditionCode
    edge_distances: tuple[float, ...] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        n = len(self.nodes)
        ids = [nid for nid, _ in self.nodes]
        if ids != list(range(n)):
            raise ValueError("node ids must be dense 0..n-1 in order")
        for _, cat in self.nodes:
            if cat < 1:
                raise ValueError(f"bad category code {cat}")
        seen = set()
        for u, v, t in self.edges:
            if not 0 <= u < v < n:
                raise ValueError(f"bad edge endpoints ({u}, {v}) for {n} nodes")
            if (u, v) in seen:
                raise ValueError(f"duplicate edge ({u}, {v})")
            seen.add((u, v))
            if not 1 <= t <= 9:
                raise ValueError(f"edge type {t} outside 1..9")
        if self.edge_distances is not None and len(self.edge_distances) != len(self.edges):
            raise ValueError("edge_distances must align with edges")

    def category(self, nid: int) -> int:
        return self.nodes[nid][1]

    def categories(self) -> list[int]:
        return [cat for _, cat in self.nodes]


def distance_bucket(d: float, room_diagonal: float) -> int:
    if room_diagonal <= 0:
        raise ValueError("room diagonal must be positive")
    if d < 0:
        raise ValueError("distance must be >= 0")
    if d < NEAR_FRACTION * room_diagonal:
        return BUCKET_NEAR
    if d < MIDDLE_FRACTION * room_diagonal:
        return BUCKET_MIDDLE
    return BUCKET_FURTHER


def semantic_class(cat_a: int, cat_b: int) -> int | None:
    """Semantic class for a node pair, or None when the pair carries no
    edge (wall-wall and opening-opening). Opening-furniture pairs count
    as object-object: openings act as objects toward furniture."""
    a_wall = cat_a == CAT_WALL
    b_wall = cat_b == CAT_WALL
    a_open = cat_a in (CAT_DOOR, CAT_WINDOW)
    b_open = cat_b in (CAT_DOOR, CAT_WINDOW)
    if a_wall and b_wall:
        return None
    if a_open and b_open:
        return None
    if a_wall or b_wall:
        return SEM_WALL_OPENING if (a_open or b_open) else SEM_WALL_OBJECT
    return SEM_OBJECT_OBJECT


def edge_type(sem: int, dist: int) -> int:
    if sem not in (1, 2, 3) or dist not in (1, 2, 3):
        raise ValueError(f"invalid (sem, dist) = ({sem}, {dist})")
    return 3 * (sem - 1) + dist


def edge_type_parts(t: int) -> tuple[int, int]:
    """Inverse of edge_type: (semantic class, distance bucket)."""
    if not 1 <= t <= 9:
        raise ValueError(f"edge type {t} outside 1..9")
    return (t - 1) // 3 + 1, (t - 1) % 3 + 1


# --- node geometry -----------------------------------------------------

# A node is located either by a point (openings, furniture centroids) or
# by a segment (walls). Distances involving a wall are measured from the
# other node's point to the wall segment; point pairs use euclidean
# distance. Placement predicates reuse the same convention.

NodeGeom = tuple[str, tuple]  # ("point", (x, y)) | ("segment", (a, b))


def scene_node_geometry(scene: Scene) -> tuple[list[int], list[NodeGeom]]:
    """Canonical node list: wall segments in boundary order, then doors in
    shell order, then windows in shell order, then furniture items.
    Returns (categories, geometry descriptors), node id = list index."""
    cats: list[int] = []
    geoms: list[NodeGeom] = []
    shell = scene.shell
    for i in range(shell.wall_count()):
        cats.append(CAT_WALL)
        geoms.append(("segment", shell.wall_segment(i)))
    for kind, code in (("door", CAT_DOOR), ("window", CAT_WINDOW)):
        for op in shell.openings:
            if op.kind == kind:
                cats.append(code)
                geoms.append(("point", shell.opening_centroid(op)))
    for item in scene.items:
        cats.append(item.category)
        geoms.append(("point", item.position.as_tuple()))
    return cats, geoms


def node_distance(ga: NodeGeom, gb: NodeGeom) -> float:
    kind_a, data_a = ga
    kind_b, data_b = gb
    if kind_a == "segment" and kind_b == "segment":
        raise ValueError("wall-wall distance is undefined here")
    if kind_a == "segment":
        a, b = data_a
        return point_segment_distance(data_b, a, b)
    if kind_b == "segment":
        a, b = data_b
        return point_segment_distance(data_a, a, b)
    ax, ay = data_a
    bx, by = data_b
    return math.hypot(ax - bx, ay - by)


def extract_graph(scene: Scene) -> SceneGraph:
    """Dense typed graph over the scene: an edge for every node pair that
    has a semantic class (everything except wall-wall and opening-opening)."""
    if len(scene.shell.boundary) < 3:
        raise ExtractionError("scene shell is degenerate")
    cats, geoms = scene_node_geometry(scene)
    diag = scene.shell.diagonal()
    if diag <= 0:
        raise ExtractionError("scene bounding box has zero diagonal")
    edges: list[tuple[int, int, int]] = []
    dists: list[float] = []
    n = len(cats)
    for u in range(n):
        for v in range(u + 1, n):
            sem = semantic_class(cats[u], cats[v])
            if sem is None:
                continue
            d = node_distance(geoms[u], geoms[v])
            edges.append((u, v, edge_type(sem, distance_bucket(d, diag))))
            dists.append(d)
    return SceneGraph(
        nodes=tuple(enumerate(cats)),
        edges=tuple(edges),
        condition=scene.condition,
        edge_distances=tuple(dists),
    )


def prune_graph(g: SceneGraph) -> SceneGraph:
    """Sparsify an extracted graph. Drops wall-wall edges (none exist in
    extraction output) and every further-bucket edge, then keeps only,
    per door/window node, the edge to its closest wall and closest
    furniture node, and per furniture node, the edge to its closest
    furniture node and closest opening. Closeness uses the stored
    extraction distances; ties go to the lowest neighbor id."""
    if g.edge_distances is None:
        raise ValueError("prune_graph needs a graph with extraction distances")
    cats = g.categories()

    filtered: list[tuple[tuple[int, int, int], float]] = []
    for (u, v, t), d in zip(g.edges, g.edge_distances):
        if cats[u] == CAT_WALL and cats[v] == CAT_WALL:
            continue
        _, bucket = edge_type_parts(t)
        if bucket == BUCKET_FURTHER:
            continue
        filtered.append(((u, v, t), d))

    # closest[(node, group)] = (distance, neighbor, edge index in filtered)
    best: dict[tuple[int, str], tuple[float, int, int]] = {}

    def consider(node: int, group: str, dist: float, other: int, ei: int) -> None:
        key = (node, group)
        cur = best.get(key)
        if cur is None or (dist, other) < (cur[0], cur[1]):
            best[key] = (dist, other, ei)

    for ei, ((u, v, _), d) in enumerate(filtered):
        for node, other in ((u, v), (v, u)):
            cat_n, cat_o = cats[node], cats[other]
            if cat_n in (CAT_DOOR, CAT_WINDOW):
                if cat_o == CAT_WALL:
                    consider(node, "wall", d, other, ei)
                elif cat_o >= 4:
                    consider(node, "object", d, other, ei)
            elif cat_n >= 4:
                if cat_o >= 4:
                    consider(node, "object", d, other, ei)
                elif cat_o in (CAT_DOOR, CAT_WINDOW):
                    consider(node, "opening", d, other, ei)

    keep = sorted({ei for _, _, ei in best.values()})
    return SceneGraph(
        nodes=g.nodes,
        edges=tuple(filtered[ei][0] for ei in keep),
        condition=g.condition,
        edge_distances=tuple(filtered[ei][1] for ei in keep),
    )


def _components(n: int, edges: tuple[tuple[int, int, int], ...]) -> list[int]:
    """Component label per node via union-find."""
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v, _ in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
    return [find(i) for i in range(n)]


def ensure_connectivity(g: SceneGraph, scene: Scene) -> SceneGraph:
    """Bridge disconnected components by repeatedly adding the
    minimum-distance typeable node pair spanning two different components,
    typed like extraction would type it. Never removes edges."""
    cats, geoms = scene_node_geometry(scene)
    if len(cats) != len(g.nodes):
        raise ValueError("scene and graph disagree on node count")
    diag = scene.shell.diagonal()
    edges = list(g.edges)
    dists = list(g.edge_distances) if g.edge_distances is not None else None
    n = len(cats)
    while True:
        comp = _components(n, tuple(edges))
        if len(set(comp)) <= 1:
            break
        best: tuple[float, int, int] | None = None
        for u in range(n):
            for v in range(u + 1, n):
                if comp[u] == comp[v]:
                    continue
                if semantic_class(cats[u], cats[v]) is None:
                    continue
                d = node_distance(geoms[u], geoms[v])
                if best is None or (d, u, v) < best:
                    best = (d, u, v)
        if best is None:
            raise GraphConnectivityError(
                "disconnected components share no typeable node pair"
            )
        d, u, v = best
        sem = semantic_class(cats[u], cats[v])
        assert sem is not None
        edges.append((u, v, edge_type(sem, distance_bucket(d, diag))))
        if dists is not None:
            dists.append(d)
    order = sorted(range(len(edges)), key=lambda i: edges[i])
    return SceneGraph(
        nodes=g.nodes,
        edges=tuple(edges[i] for i in order),
        condition=g.condition,
        edge_distances=tuple(dists[i] for i in order) if dists is not None else None,
    )


def adjacency_matrix(g: SceneGraph) -> np.ndarray:
    n = len(g.nodes)
    a = np.zeros((n, n), dtype=np.float64)
    for u, v, _ in g.edges:
        a[u, v] = 1.0
        a[v, u] = 1.0
    return a


def permute_graph(g: SceneGraph, perm: list[int]) -> SceneGraph:
    """Relabel node i as perm[i]; edges re-canonicalized and sorted."""
    n = len(g.nodes)
    if sorted(perm) != list(range(n)):
        raise ValueError("perm must be a permutation of 0..n-1")
    nodes = [0] * n
    for nid, cat in g.nodes:
        nodes[perm[nid]] = cat
    tagged = []
    for i, (u, v, t) in enumerate(g.edges):
        pu, pv = perm[u], perm[v]
        if pu > pv:
            pu, pv = pv, pu
        d = g.edge_distances[i] if g.edge_distances is not None else None
        tagged.append(((pu, pv, t), d))
    tagged.sort(key=lambda pair: pair[0])
    return SceneGraph(
        nodes=tuple(enumerate(nodes)),
        edges=tuple(e for e, _ in tagged),
        condition=g.condition,
        edge_distances=(
            tuple(d for _, d in tagged) if g.edge_distances is not None else None
        ),
    )


# --- persistence -------------------------------------------------------

def graph_to_dict(g: SceneGraph) -> dict:
    return {
        "format_version": GRAPH_FORMAT_VERSION,
        "condition": {
            "room_type": g.condition.room_type,
            "label_index": g.condition.label_index,
        },
        "nodes": [[nid, cat] for nid, cat in g.nodes],
        "edges": [[u, v, t] for u, v, t in g.edges],
    }


def graph_from_dict(data: dict) -> SceneGraph:
    try:
        version = data.get("format_version", GRAPH_FORMAT_VERSION)
        if version != GRAPH_FORMAT_VERSION:
            raise DatasetFormatError(f"unsupported graph format_version {version!r}")
        cond = ConditionCode(
            room_type=data["condition"]["room_type"],
            label_index=int(data["condition"]["label_index"]),
        )
        return SceneGraph(
            nodes=tuple((int(i), int(c)) for i, c in data["nodes"]),
            edges=tuple((int(u), int(v), int(t)) for u, v, t in data["edges"]),
            condition=cond,
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise DatasetFormatError(f"malformed graph record: {exc!r}") from exc


def save_graphs(
    graphs: list[SceneGraph],
    path: str,
    room_type: str,
    condition_labels: list[str],
    registry: dict[int, str],
) -> None:
    payload = {
        "format_version": GRAPH_FORMAT_VERSION,
        "room_type": room_type,
        "condition_schema": list(condition_labels),
        "category_registry": {str(k): v for k, v in sorted(registry.items())},
        "graphs": [graph_to_dict(g) for g in graphs],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))


def load_graphs(path: str) -> tuple[list[SceneGraph], dict]:
    """Returns (graphs, header) where header has room_type,
    condition_schema and category_registry."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(
                f"cannot parse graphs file {path}: line {exc.lineno}: {exc.msg}"
            ) from exc
    if payload.get("format_version") != GRAPH_FORMAT_VERSION:
        raise DatasetFormatError(
            f"unsupported graphs format_version {payload.get('format_version')!r}"
        )
    try:
        graphs = [graph_from_dict(d) for d in payload["graphs"]]
        header = {
            "room_type": payload["room_type"],
            "condition_schema": list(payload["condition_schema"]),
            "category_registry": {
                int(k): v for k, v in payload["category_registry"].items()
            },
        }
    except (KeyError, TypeError) as exc:
        raise DatasetFormatError(f"malformed graphs file {path}: {exc!r}") from exc
    return graphs, header


class SceneGraphExtractor(BaseEstimator, TransformerMixin):
    """Stateless scene-to-graph transformer: extract, prune, reconnect.

    Set prune=False to keep the dense extraction output.
    """

    def __init__(self, prune: bool = True):
        self.prune = prune

    def fit(self, X=None, y=None):
        return self

    def transform(self, X) -> list[SceneGraph]:
        out = []
        for scene in X:
            g = extract_graph(scene)
            if self.prune:
                g = ensure_connectivity(prune_graph(g), scene)
            out.append(g)
        return out
