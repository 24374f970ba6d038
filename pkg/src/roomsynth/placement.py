"""Neural furniture placement: turn a typed scene graph plus condition
into concrete item positions, orientations and sizes inside a room shell.

Objects are placed largest-first (by mean category footprint). Each step
builds a mixture embedding: a pooled GCN over the whole graph, a pooled
GCN over the subgraph induced by already-placed nodes plus the next node,
a learned 9-entry edge-type embedding summed over the next node's edges
into placed nodes, and the condition one-hot, fused by a two-layer FC.
Three heads conditioned on the embedding and the node's category one-hot
predict a distribution over a 16x16 location grid on the room bounding
box, a distribution over the four directions, and log size ratios
relative to category means.

Sampling masks grid cells that overlap placed items or fall outside the
boundary, then rejection-samples each object against the edge predicates
and overlap/containment checks with a bounded retry budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .checkpoints import load_checkpoint, save_checkpoint
from .geometry import point_in_polygon, polygon_bbox, rect_inside_polygon, rect_overlap_area
from .graphs import (
    NodeGeom,
    SceneGraph,
    adjacency_matrix,
    distance_bucket,
    edge_type_parts,
    node_distance,
    semantic_class,
)
from .numeric import (
    LayerParams,
    fnn_backward,
    fnn_forward,
    gcn_backward,
    gcn_forward,
    normalize_adjacency,
    softmax_rows,
    spectral_embedding,
)
from .scenes import (
    CAT_DOOR,
    CAT_WALL,
    CAT_WINDOW,
    ConditionCode,
    FurnitureItem,
    Point2,
    RoomShell,
    Scene,
)

OVERLAP_TOLERANCE = 1e-6  # m^2
_MIN_SIZE = 1e-3


class StatsError(ValueError):
    """A graph category has no size statistics."""


class NoSpaceError(RuntimeError):
    """Every grid cell is masked for the object being placed."""


class InstantiationError(RuntimeError):
    """An object could not be placed at all."""


class TrainingError(RuntimeError):
    """Placement training diverged."""


@dataclass(frozen=True)
class CatStat:
    mean_w: float
    mean_d: float
    std_w: float
    std_d: float
    count: int


@dataclass(frozen=True)
class CategoryStats:
    """Size statistics per object category, from training scenes."""

    stats: dict[int, CatStat]

    def require(self, category: int) -> CatStat:
        got = self.stats.get(category)
        if got is None:
            raise StatsError(f"no size statistics for category {category}")
        return got

    def mean_area(self, category: int) -> float:
        st = self.require(category)
        return st.mean_w * st.mean_d


def compute_category_stats(scenes: list[Scene]) -> CategoryStats:
    sizes: dict[int, list[tuple[float, float]]] = {}
    for scene in scenes:
        for item in scene.items:
            sizes.setdefault(item.category, []).append(item.size)
    out = {}
    for cat, entries in sizes.items():
        arr = np.asarray(entries, dtype=np.float64)
        out[cat] = CatStat(
            mean_w=float(arr[:, 0].mean()),
            mean_d=float(arr[:, 1].mean()),
            std_w=float(arr[:, 0].std()),
            std_d=float(arr[:, 1].std()),
            count=len(entries),
        )
    return CategoryStats(out)


def instantiation_order(g: SceneGraph, stats: CategoryStats) -> list[int]:
    """Object node ids sorted largest mean footprint first; ties go to the
    lower category code, then the lower node id. Shell nodes are fixed by
    the room and excluded."""
    objects = [(nid, cat) for nid, cat in g.nodes if cat >= 4]
    return [
        nid
        for nid, _ in sorted(
            objects, key=lambda nc: (-stats.mean_area(nc[1]), nc[1], nc[0])
        )
    ]


@dataclass(frozen=True)
class PlacementPrediction:
    position: Point2
    direction: int
    size: tuple[float, float]


# --- grid ----------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    minx: float
    miny: float
    cell_w: float
    cell_h: float
    g: int

    def cell_of(self, x: float, y: float) -> int:
        ix = min(max(int((x - self.minx) / self.cell_w), 0), self.g - 1)
        iy = min(max(int((y - self.miny) / self.cell_h), 0), self.g - 1)
        return iy * self.g + ix

    def cell_center(self, idx: int) -> tuple[float, float]:
        iy, ix = divmod(idx, self.g)
        return (
            self.minx + (ix + 0.5) * self.cell_w,
            self.miny + (iy + 0.5) * self.cell_h,
        )

    def cell_origin(self, idx: int) -> tuple[float, float]:
        iy, ix = divmod(idx, self.g)
        return (self.minx + ix * self.cell_w, self.miny + iy * self.cell_h)


def room_grid(shell: RoomShell, g: int) -> Grid:
    minx, miny, maxx, maxy = polygon_bbox(shell.vertices)
    return Grid(minx, miny, (maxx - minx) / g, (maxy - miny) / g, g)


# --- predicates ----------------------------------------------------------

def predicate_check(
    geom_u: NodeGeom,
    geom_v: NodeGeom,
    cat_u: int,
    cat_v: int,
    etype: int,
    room_diagonal: float,
) -> bool:
    """True iff the realized node distance falls in the edge type's bucket
    and the type's semantic class matches the endpoint categories. Uses
    the same distance conventions as graph extraction, so extracted edges
    check true against their own scene."""
    sem, bucket = edge_type_parts(etype)
    if semantic_class(cat_u, cat_v) != sem:
        return False
    d = node_distance(geom_u, geom_v)
    return distance_bucket(d, room_diagonal) == bucket


def _map_shell_nodes(g: SceneGraph, shell: RoomShell) -> dict[int, NodeGeom]:
    """Geometry for the graph's shell nodes. Wall nodes cycle over wall
    segments, doors over door openings, windows over window openings;
    kinds the shell lacks fall back to wall midpoints."""
    walls = [shell.wall_segment(i) for i in range(shell.wall_count())]
    doors = [shell.opening_centroid(o) for o in shell.openings if o.kind == "door"]
    windows = [shell.opening_centroid(o) for o in shell.openings if o.kind == "window"]
    midpoints = [((a[0] + b[0]) / 2, (a[1] + b[1]) / 2) for a, b in walls]
    counters = {CAT_WALL: 0, CAT_DOOR: 0, CAT_WINDOW: 0}
    out: dict[int, NodeGeom] = {}
    for nid, cat in g.nodes:
        if cat == CAT_WALL:
            seg = walls[counters[cat] % len(walls)]
            out[nid] = ("segment", seg)
        elif cat == CAT_DOOR:
            pts = doors or midpoints
            out[nid] = ("point", pts[counters[cat] % len(pts)])
        elif cat == CAT_WINDOW:
            pts = windows or midpoints
            out[nid] = ("point", pts[counters[cat] % len(pts)])
        else:
            continue
        counters[cat] += 1
    return out


def _footprint(size: tuple[float, float], direction: int) -> tuple[float, float]:
    w, d = size
    return (d, w) if direction in (90, 270) else (w, d)


# --- the model -----------------------------------------------------------

@dataclass
class _SceneSteps:
    """Per-scene tensors for teacher-forced training, computed once."""

    x_global: np.ndarray
    an_global: np.ndarray
    n: int
    cond_vec: np.ndarray
    steps: list[dict] = field(default_factory=list)


class SceneInstantiator(BaseEstimator):
    """Trainable placement model over (scene, extracted graph) pairs."""

    def __init__(
        self,
        k: int = 4,
        gcn_hidden: int = 16,
        gcn_dim: int = 8,
        edge_dim: int = 6,
        fusion_hidden: int = 24,
        embed_dim: int = 16,
        grid: int = 16,
        retries: int = 50,
        epochs: int = 200,
        lr: float = 0.05,
        init_scale: float = 1.0,
        seed: int = 0,
    ):
        self.k = k
        self.gcn_hidden = gcn_hidden
        self.gcn_dim = gcn_dim
        self.edge_dim = edge_dim
        self.fusion_hidden = fusion_hidden
        self.embed_dim = embed_dim
        self.grid = grid
        self.retries = retries
        self.epochs = epochs
        self.lr = lr
        self.init_scale = init_scale
        self.seed = seed

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise NotFittedError("model is not fitted; call fit or load first")

    def _param_shapes(self, cond_dim: int, n_cats: int) -> dict[str, tuple]:
        fusion_in = 2 * self.gcn_dim + self.edge_dim + cond_dim
        head_in = self.embed_dim + n_cats
        cells = self.grid * self.grid
        return {
            "glob_W0": (self.k, self.gcn_hidden),
            "glob_W1": (self.gcn_hidden, self.gcn_dim),
            "local_W0": (self.k, self.gcn_hidden),
            "local_W1": (self.gcn_hidden, self.gcn_dim),
            "edge_table": (9, self.edge_dim),
            "fus0_W": (fusion_in, self.fusion_hidden),
            "fus0_b": (self.fusion_hidden,),
            "fus1_W": (self.fusion_hidden, self.embed_dim),
            "fus1_b": (self.embed_dim,),
            "head_loc_W": (head_in, cells),
            "head_loc_b": (cells,),
            "head_or_W": (head_in, 4),
            "head_or_b": (4,),
            "head_sz_W": (head_in, 2),
            "head_sz_b": (2,),
        }

    def _init_params(self, rng: np.random.Generator, cond_dim: int, n_cats: int) -> dict:
        params = {}
        for name, shape in self._param_shapes(cond_dim, n_cats).items():
            if name.endswith("_b"):
                params[name] = np.zeros(shape, dtype=np.float64)
            elif name == "edge_table":
                params[name] = rng.normal(0.0, self.init_scale * 0.1, size=shape)
            else:
                params[name] = rng.normal(
                    0.0, self.init_scale / np.sqrt(shape[0]), size=shape
                )
        return params

    def _fusion_layers(self, p: dict) -> list[LayerParams]:
        return [
            LayerParams(p["fus0_W"], p["fus0_b"]),
            LayerParams(p["fus1_W"], p["fus1_b"]),
        ]

    def condition_vector(self, label_index: int) -> np.ndarray:
        self._check_fitted()
        vec = np.zeros(len(self.condition_labels_), dtype=np.float64)
        vec[label_index] = 1.0
        return vec

    def _cat_onehot(self, category: int) -> np.ndarray:
        vec = np.zeros(self.n_categories_, dtype=np.float64)
        vec[category - 1] = 1.0
        return vec

    # -- embedding ------------------------------------------------------

    def _local_inputs(self, g: SceneGraph, placed_ids: list[int], next_id: int,
                      a_full: np.ndarray) -> tuple[np.ndarray, np.ndarray, list[int]]:
        sub_ids = sorted(set(placed_ids) | {next_id})
        idx = np.asarray(sub_ids, dtype=np.intp)
        a_sub = a_full[np.ix_(idx, idx)]
        x_sub = spectral_embedding(a_sub, self.k)
        an_sub = normalize_adjacency(a_sub)
        types = [
            t for (u, v, t) in g.edges
            if (u == next_id and v in placed_ids) or (v == next_id and u in placed_ids)
        ]
        return x_sub, an_sub, types

    def _embed_forward(self, p: dict, x_glob: np.ndarray, an_glob: np.ndarray,
                       x_loc: np.ndarray, an_loc: np.ndarray,
                       edge_types: list[int], cond_vec: np.ndarray) -> tuple[np.ndarray, dict]:
        g_rows = gcn_forward(x_glob, an_glob, LayerParams(p["glob_W0"]),
                             LayerParams(p["glob_W1"]))
        g_vec = g_rows.mean(axis=0)
        l_rows = gcn_forward(x_loc, an_loc, LayerParams(p["local_W0"]),
                             LayerParams(p["local_W1"]))
        l_vec = l_rows.mean(axis=0)
        e_vec = np.zeros(self.edge_dim)
        for t in edge_types:
            e_vec += p["edge_table"][t - 1]
        fin = np.concatenate([g_vec, l_vec, e_vec, cond_vec]).reshape(1, -1)
        combined = fnn_forward(fin, self._fusion_layers(p))[0]
        cache = {
            "x_glob": x_glob, "an_glob": an_glob, "x_loc": x_loc, "an_loc": an_loc,
            "edge_types": edge_types, "fin": fin, "n_glob": x_glob.shape[0],
            "n_loc": x_loc.shape[0],
        }
        return combined, cache

    def mixture_embed(self, g: SceneGraph, placed_ids: list[int], next_id: int,
                      cond_vec: np.ndarray) -> np.ndarray:
        """Mixture embedding for placing next_id given placed_ids."""
        self._check_fitted()
        ids = [nid for nid, _ in g.nodes]
        if next_id not in ids:
            raise ValueError(f"node {next_id} not in graph")
        if next_id in placed_ids:
            raise ValueError(f"node {next_id} is already placed")
        a = adjacency_matrix(g)
        x_glob = spectral_embedding(a, self.k)
        an_glob = normalize_adjacency(a)
        x_loc, an_loc, types = self._local_inputs(g, list(placed_ids), next_id, a)
        combined, _ = self._embed_forward(
            self.params_, x_glob, an_glob, x_loc, an_loc, types,
            np.asarray(cond_vec, dtype=np.float64),
        )
        return combined

    def _heads_forward(self, p: dict, combined: np.ndarray,
                       category: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        hin = np.concatenate([combined, self._cat_onehot(category)])
        loc_logits = hin @ p["head_loc_W"] + p["head_loc_b"]
        or_logits = hin @ p["head_or_W"] + p["head_or_b"]
        sz_out = hin @ p["head_sz_W"] + p["head_sz_b"]
        return hin, loc_logits, or_logits, sz_out

    # -- inference ------------------------------------------------------

    def _location_mask(self, shell: RoomShell, grid: Grid,
                       placed: list[FurnitureItem],
                       inside: np.ndarray) -> np.ndarray:
        """Boolean mask over cells: True = available."""
        mask = inside.copy()
        for item in placed:
            fw, fd = _footprint(item.size, item.direction)
            cx, cy = item.position.x, item.position.y
            for idx in range(grid.g * grid.g):
                if not mask[idx]:
                    continue
                ccx, ccy = grid.cell_center(idx)
                if rect_overlap_area(
                    (ccx, ccy), grid.cell_w, grid.cell_h, (cx, cy), fw, fd
                ) > 1e-9:
                    mask[idx] = False
        return mask

    def _inside_cells(self, shell: RoomShell, grid: Grid) -> np.ndarray:
        verts = shell.vertices
        return np.array(
            [
                point_in_polygon(grid.cell_center(i), verts)
                for i in range(grid.g * grid.g)
            ]
        )

    def predict_placement(
        self,
        embed: np.ndarray,
        category: int,
        shell: RoomShell,
        placed: list[FurnitureItem],
    ) -> tuple[np.ndarray, np.ndarray, tuple[float, float]]:
        """Masked location distribution over grid cells, orientation
        distribution, and the deterministic size for the category."""
        self._check_fitted()
        _, loc_logits, or_logits, sz_out = self._heads_forward(
            self.params_, embed, category
        )
        grid = room_grid(shell, self.grid)
        mask = self._location_mask(shell, grid, placed, self._inside_cells(shell, grid))
        if not mask.any():
            raise NoSpaceError(f"all grid cells masked for category {category}")
        probs = softmax_rows(loc_logits.reshape(1, -1))[0]
        probs = probs * mask
        probs = probs / probs.sum()
        or_probs = softmax_rows(or_logits.reshape(1, -1))[0]
        size = self._clipped_size(category, sz_out)
        return probs, or_probs, size

    def _clipped_size(self, category: int, sz_out: np.ndarray) -> tuple[float, float]:
        st = self.stats_.require(category)
        w = st.mean_w * math.exp(float(sz_out[0]))
        d = st.mean_d * math.exp(float(sz_out[1]))
        w = min(max(w, max(st.mean_w - 2 * st.std_w, _MIN_SIZE)), st.mean_w + 2 * st.std_w)
        d = min(max(d, max(st.mean_d - 2 * st.std_d, _MIN_SIZE)), st.mean_d + 2 * st.std_d)
        return (w, d)

    def sample_scene(
        self,
        g: SceneGraph,
        cond: ConditionCode,
        shell: RoomShell,
        seed: int,
        return_report: bool = False,
    ):
        """Instantiate the graph's object nodes into a Scene. Each object
        gets up to ``retries`` attempts to satisfy its edge predicates,
        stay inside the boundary and avoid overlap; on exhaustion the
        best-scoring attempt is used and reported as a violation."""
        self._check_fitted()
        rng = np.random.default_rng(seed)
        a_full = adjacency_matrix(g)
        x_glob = spectral_embedding(a_full, self.k)
        an_glob = normalize_adjacency(a_full)
        cond_vec = self.condition_vector(cond.label_index)
        grid = room_grid(shell, self.grid)
        inside = self._inside_cells(shell, grid)
        diag = shell.diagonal()
        verts = shell.vertices
        cats = dict(g.nodes)

        geoms = _map_shell_nodes(g, shell)
        placed_ids = sorted(geoms)
        items: list[FurnitureItem] = []
        item_of_node: dict[int, int] = {}
        violations: list[dict] = []

        order = instantiation_order(g, self.stats_)
        for nid in order:
            category = cats[nid]
            x_loc, an_loc, types = self._local_inputs(g, placed_ids, nid, a_full)
            combined, _ = self._embed_forward(
                self.params_, x_glob, an_glob, x_loc, an_loc, types, cond_vec
            )
            try:
                loc_probs, or_probs, size = self.predict_placement(
                    combined, category, shell, items
                )
            except NoSpaceError as exc:
                raise InstantiationError(
                    f"no space left for node {nid} (category {category})"
                ) from exc

            incident = [
                (u, v, t) for (u, v, t) in g.edges
                if (u == nid and v in placed_ids) or (v == nid and u in placed_ids)
            ]
            best = None
            chosen = None
            for _attempt in range(self.retries):
                cell = int(rng.choice(len(loc_probs), p=loc_probs))
                ox, oy = grid.cell_origin(cell)
                px = ox + float(rng.uniform(0.0, grid.cell_w))
                py = oy + float(rng.uniform(0.0, grid.cell_h))
                direction = int(rng.choice(4, p=or_probs)) * 90
                fw, fd = _footprint(size, direction)
                minx, miny, maxx, maxy = polygon_bbox(verts)
                px = min(max(px, minx + fw / 2), maxx - fw / 2)
                py = min(max(py, miny + fd / 2), maxy - fd / 2)
                cand = FurnitureItem(
                    category=category,
                    position=Point2(px, py),
                    size=size,
                    direction=direction,
                )
                cand_geom: NodeGeom = ("point", (px, py))
                n_pred = 0
                for u, v, t in incident:
                    other = v if u == nid else u
                    other_geom = geoms[other]
                    ok = predicate_check(
                        cand_geom, other_geom, category, cats[other], t, diag
                    )
                    n_pred += int(ok)
                fw2, fd2 = _footprint(cand.size, cand.direction)
                is_inside = rect_inside_polygon((px, py), fw2, fd2, verts)
                overlap = 0.0
                for it in items:
                    ow, od = _footprint(it.size, it.direction)
                    overlap += rect_overlap_area(
                        (px, py), fw2, fd2,
                        (it.position.x, it.position.y), ow, od,
                    )
                no_overlap = overlap <= OVERLAP_TOLERANCE
                score = (is_inside, no_overlap, n_pred)
                if best is None or score > best[0]:
                    best = (score, cand)
                if is_inside and no_overlap and n_pred == len(incident):
                    chosen = cand
                    break
            if chosen is None:
                assert best is not None
                chosen = best[1]
                violations.append({
                    "node": nid,
                    "category": category,
                    "satisfied_predicates": int(best[0][2]),
                    "total_predicates": len(incident),
                    "inside": bool(best[0][0]),
                    "no_overlap": bool(best[0][1]),
                })
            item_of_node[nid] = len(items)
            items.append(chosen)
            geoms[nid] = ("point", (chosen.position.x, chosen.position.y))
            placed_ids.append(nid)
            placed_ids.sort()

        scene = Scene(
            room_type=cond.room_type, shell=shell, items=tuple(items), condition=cond
        )
        if return_report:
            return scene, {"violations": violations, "node_items": item_of_node}
        return scene

    # -- training -------------------------------------------------------

    def _prepare_pairs(self, pairs: list[tuple[Scene, SceneGraph]],
                       cond_dim: int) -> list[_SceneSteps]:
        prepared = []
        for scene, g in pairs:
            n_shell = scene.shell.wall_count() + len(scene.shell.openings)
            if len(g.nodes) != n_shell + len(scene.items):
                raise ValueError(
                    "graph/scene mismatch: expected graphs extracted from "
                    "the paired scenes"
                )
            a = adjacency_matrix(g)
            cond_vec = np.zeros(cond_dim)
            cond_vec[scene.condition.label_index] = 1.0
            entry = _SceneSteps(
                x_global=spectral_embedding(a, self.k),
                an_global=normalize_adjacency(a),
                n=a.shape[0],
                cond_vec=cond_vec,
            )
            grid = room_grid(scene.shell, self.grid)
            placed = list(range(n_shell))
            for nid in instantiation_order(g, self.stats_):
                item = scene.items[nid - n_shell]
                st = self.stats_.require(item.category)
                x_loc, an_loc, types = self._local_inputs(g, placed, nid, a)
                entry.steps.append({
                    "x_loc": x_loc, "an_loc": an_loc, "types": types,
                    "category": item.category,
                    "cell": grid.cell_of(item.position.x, item.position.y),
                    "orient": item.direction // 90,
                    "sz_target": np.array([
                        math.log(item.size[0] / st.mean_w),
                        math.log(item.size[1] / st.mean_d),
                    ]),
                })
                placed.append(nid)
                placed.sort()
            prepared.append(entry)
        return prepared

    def fit(self, pairs: list[tuple[Scene, SceneGraph]], y=None):
        if not pairs:
            raise ValueError("need at least one (scene, graph) pair")
        scenes = [s for s, _ in pairs]
        self.stats_ = compute_category_stats(scenes)
        room_type = scenes[0].room_type
        n_labels = max(s.condition.label_index for s in scenes) + 1
        max_cat = max(
            max(cat for _, cat in g.nodes) for _, g in pairs
        )
        self.room_type_ = room_type
        self.n_categories_ = max_cat
        if len(getattr(self, "condition_labels_", [])) != n_labels:
            self.condition_labels_ = [str(i) for i in range(n_labels)]

        rng = np.random.default_rng(self.seed)
        params = self._init_params(rng, n_labels, max_cat)
        self.params_ = params  # _cat_onehot and layers need it during training
        prepared = self._prepare_pairs(pairs, n_labels)

        curve = []
        for epoch in range(self.epochs):
            order = rng.permutation(len(prepared))
            ep_loc = ep_or = ep_sz = 0.0
            n_steps = 0
            for si in order:
                entry = prepared[si]
                loc_l, or_l, sz_l = self._scene_step(params, entry, epoch)
                ep_loc += loc_l
                ep_or += or_l
                ep_sz += sz_l
                n_steps += max(1, len(entry.steps))
            curve.append({
                "location": ep_loc / n_steps,
                "orientation": ep_or / n_steps,
                "size": ep_sz / n_steps,
            })
        self.loss_curve_ = curve
        return self

    def _scene_step(self, params: dict, entry: _SceneSteps,
                    epoch: int) -> tuple[float, float, float]:
        grads = {name: np.zeros_like(arr) for name, arr in params.items()}
        g_rows = gcn_forward(entry.x_global, entry.an_global,
                             LayerParams(params["glob_W0"]),
                             LayerParams(params["glob_W1"]))
        g_vec = g_rows.mean(axis=0)
        d_gvec_total = np.zeros_like(g_vec)
        loc_total = or_total = sz_total = 0.0

        for step in entry.steps:
            l_rows = gcn_forward(step["x_loc"], step["an_loc"],
                                 LayerParams(params["local_W0"]),
                                 LayerParams(params["local_W1"]))
            l_vec = l_rows.mean(axis=0)
            e_vec = np.zeros(self.edge_dim)
            for t in step["types"]:
                e_vec += params["edge_table"][t - 1]
            fin = np.concatenate([g_vec, l_vec, e_vec, entry.cond_vec]).reshape(1, -1)
            combined = fnn_forward(fin, self._fusion_layers(params))[0]
            hin, loc_logits, or_logits, sz_out = self._heads_forward(
                params, combined, step["category"]
            )

            loc_p = softmax_rows(loc_logits.reshape(1, -1))[0]
            or_p = softmax_rows(or_logits.reshape(1, -1))[0]
            loc_loss = -float(np.log(max(loc_p[step["cell"]], 1e-300)))
            or_loss = -float(np.log(max(or_p[step["orient"]], 1e-300)))
            sz_err = sz_out - step["sz_target"]
            sz_loss = 0.5 * float(sz_err @ sz_err)
            loc_total += loc_loss
            or_total += or_loss
            sz_total += sz_loss

            d_loc = loc_p.copy()
            d_loc[step["cell"]] -= 1.0
            d_or = or_p.copy()
            d_or[step["orient"]] -= 1.0
            d_sz = sz_err

            d_hin = (
                params["head_loc_W"] @ d_loc
                + params["head_or_W"] @ d_or
                + params["head_sz_W"] @ d_sz
            )
            grads["head_loc_W"] += np.outer(hin, d_loc)
            grads["head_loc_b"] += d_loc
            grads["head_or_W"] += np.outer(hin, d_or)
            grads["head_or_b"] += d_or
            grads["head_sz_W"] += np.outer(hin, d_sz)
            grads["head_sz_b"] += d_sz

            d_combined = d_hin[: self.embed_dim]
            d_fin, fus_grads = fnn_backward(
                fin, self._fusion_layers(params), d_combined.reshape(1, -1)
            )
            for name, (dw, db) in zip(("fus0", "fus1"), fus_grads):
                grads[name + "_W"] += dw
                grads[name + "_b"] += db
            d_fin = d_fin[0]
            d_gvec_total += d_fin[: self.gcn_dim]
            d_lvec = d_fin[self.gcn_dim: 2 * self.gcn_dim]
            d_evec = d_fin[2 * self.gcn_dim: 2 * self.gcn_dim + self.edge_dim]
            for t in step["types"]:
                grads["edge_table"][t - 1] += d_evec

            n_loc = step["x_loc"].shape[0]
            d_lrows = np.tile(d_lvec / n_loc, (n_loc, 1))
            lg = gcn_backward(step["x_loc"], step["an_loc"],
                              LayerParams(params["local_W0"]),
                              LayerParams(params["local_W1"]), d_lrows)
            grads["local_W0"] += lg["dW0"]
            grads["local_W1"] += lg["dW1"]

        d_grows = np.tile(d_gvec_total / entry.n, (entry.n, 1))
        gg = gcn_backward(entry.x_global, entry.an_global,
                          LayerParams(params["glob_W0"]),
                          LayerParams(params["glob_W1"]), d_grows)
        grads["glob_W0"] += gg["dW0"]
        grads["glob_W1"] += gg["dW1"]

        total = loc_total + or_total + sz_total
        if not np.isfinite(total):
            raise TrainingError(f"placement training diverged at epoch {epoch}")
        for name in params:
            params[name] -= self.lr * grads[name]
        return loc_total, or_total, sz_total

    # -- persistence ----------------------------------------------------

    def save(self, path: str) -> None:
        self._check_fitted()
        meta = {
            "k": self.k, "gcn_hidden": self.gcn_hidden, "gcn_dim": self.gcn_dim,
            "edge_dim": self.edge_dim, "fusion_hidden": self.fusion_hidden,
            "embed_dim": self.embed_dim, "grid": self.grid,
            "retries": self.retries, "epochs": self.epochs, "lr": self.lr,
            "init_scale": self.init_scale, "seed": self.seed,
            "room_type": self.room_type_,
            "condition_labels": list(self.condition_labels_),
            "n_categories": self.n_categories_,
            "registry": {str(k): v for k, v in getattr(self, "registry_", {}).items()},
            "stats": {
                str(cat): {
                    "mean_w": st.mean_w, "mean_d": st.mean_d,
                    "std_w": st.std_w, "std_d": st.std_d, "count": st.count,
                }
                for cat, st in self.stats_.stats.items()
            },
        }
        save_checkpoint(path, "placement", meta, self.params_)

    @classmethod
    def load(cls, path: str) -> "SceneInstantiator":
        meta, matrices = load_checkpoint(path, "placement")
        model = cls(
            k=meta["k"], gcn_hidden=meta["gcn_hidden"], gcn_dim=meta["gcn_dim"],
            edge_dim=meta["edge_dim"], fusion_hidden=meta["fusion_hidden"],
            embed_dim=meta["embed_dim"], grid=meta["grid"],
            retries=meta["retries"], epochs=meta["epochs"], lr=meta["lr"],
            init_scale=meta["init_scale"], seed=meta["seed"],
        )
        model.room_type_ = meta["room_type"]
        model.condition_labels_ = list(meta["condition_labels"])
        model.n_categories_ = meta["n_categories"]
        model.registry_ = {int(k): v for k, v in meta.get("registry", {}).items()}
        model.stats_ = CategoryStats({
            int(cat): CatStat(
                mean_w=entry["mean_w"], mean_d=entry["mean_d"],
                std_w=entry["std_w"], std_d=entry["std_d"],
                count=int(entry["count"]),
            )
            for cat, entry in meta["stats"].items()
        })
        model.params_ = matrices
        return model
