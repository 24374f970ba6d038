"""Evaluation utilities: a graph condition labeler, the averaged
per-label generation accuracy metric, scene validity reporting, and
side-by-side comparison-pair export for perceptual studies.

The labeler is a small GCN classifier trained on extracted graphs with
known condition labels; generation accuracy is the unweighted mean over
labels of the fraction of generated graphs classified as their intended
label.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .checkpoints import load_checkpoint, save_checkpoint
from .geometry import polygon_bbox, rect_overlap_area, rect_inside_polygon
from .graphs import SceneGraph, adjacency_matrix, scene_node_geometry
from .numeric import (
    LayerParams,
    gcn_backward,
    gcn_forward,
    normalize_adjacency,
    softmax_rows,
    spectral_embedding,
)
from .placement import _footprint, predicate_check
from .scenes import Scene


class TrainingError(RuntimeError):
    """Labeler training diverged."""


class GraphConditionLabeler(BaseEstimator):
    """Two-layer GCN with mean pooling and a softmax readout that
    predicts the condition label of a scene graph.

    Node features are the spectral embedding of the adjacency joined
    with a one-hot of the node category, so predictions are invariant
    to node relabeling.
    """

    def __init__(
        self,
        k: int = 4,
        hidden: int = 16,
        gcn_dim: int = 8,
        epochs: int = 100,
        lr: float = 0.05,
        holdout: float = 0.2,
        init_scale: float = 1.0,
        seed: int = 0,
    ):
        self.k = k
        self.hidden = hidden
        self.gcn_dim = gcn_dim
        self.epochs = epochs
        self.lr = lr
        self.holdout = holdout
        self.init_scale = init_scale
        self.seed = seed

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise NotFittedError("labeler is not fitted; call fit or load first")

    def _features(self, g: SceneGraph) -> tuple[np.ndarray, np.ndarray]:
        a = adjacency_matrix(g)
        spec = spectral_embedding(a, self.k)
        onehot = np.zeros((len(g.nodes), self.n_categories_))
        for i, (_, cat) in enumerate(g.nodes):
            onehot[i, cat - 1] = 1.0
        return np.hstack([spec, onehot]), normalize_adjacency(a)

    def _forward(self, x: np.ndarray, an: np.ndarray, p: dict) -> tuple[np.ndarray, np.ndarray]:
        rows = gcn_forward(x, an, LayerParams(p["W0"]), LayerParams(p["W1"]))
        pooled = rows.mean(axis=0)
        logits = pooled @ p["fc_W"] + p["fc_b"]
        return softmax_rows(logits.reshape(1, -1))[0], pooled

    def fit(self, graphs: list[SceneGraph], y: list[int] | None = None):
        if y is None:
            y = [g.condition.label_index for g in graphs]
        if len(set(y)) < 2:
            raise ValueError("need at least two distinct condition labels")
        if len(graphs) != len(y):
            raise ValueError("graphs and labels differ in length")
        self.n_labels_ = max(y) + 1
        self.n_categories_ = max(max(cat for _, cat in g.nodes) for g in graphs)
        self.room_type_ = graphs[0].condition.room_type
        self.condition_labels_ = list(
            getattr(graphs[0].condition, "labels", [])
        ) or [str(i) for i in range(self.n_labels_)]

        rng = np.random.default_rng(self.seed)
        in_dim = self.k + self.n_categories_
        p = {
            "W0": rng.normal(0.0, self.init_scale / np.sqrt(in_dim), (in_dim, self.hidden)),
            "W1": rng.normal(0.0, self.init_scale / np.sqrt(self.hidden), (self.hidden, self.gcn_dim)),
            "fc_W": rng.normal(0.0, self.init_scale / np.sqrt(self.gcn_dim), (self.gcn_dim, self.n_labels_)),
            "fc_b": np.zeros(self.n_labels_),
        }

        feats = [self._features(g) for g in graphs]
        perm = rng.permutation(len(graphs))
        n_hold = int(self.holdout * len(graphs))
        hold_idx = perm[:n_hold]
        train_idx = perm[n_hold:]

        curve = []
        for epoch in range(self.epochs):
            order = rng.permutation(len(train_idx))
            total = 0.0
            for oi in order:
                gi = train_idx[oi]
                x, an = feats[gi]
                probs, pooled = self._forward(x, an, p)
                loss = -math.log(max(probs[y[gi]], 1e-300))
                total += loss
                if not np.isfinite(loss):
                    raise TrainingError(f"labeler diverged at epoch {epoch}")
                d_logits = probs.copy()
                d_logits[y[gi]] -= 1.0
                d_pooled = p["fc_W"] @ d_logits
                n = x.shape[0]
                d_rows = np.tile(d_pooled / n, (n, 1))
                g_grads = gcn_backward(x, an, LayerParams(p["W0"]),
                                       LayerParams(p["W1"]), d_rows)
                p["fc_W"] -= self.lr * np.outer(pooled, d_logits)
                p["fc_b"] -= self.lr * d_logits
                p["W0"] -= self.lr * g_grads["dW0"]
                p["W1"] -= self.lr * g_grads["dW1"]
            curve.append(total / max(1, len(train_idx)))
        self.params_ = p
        self.loss_curve_ = curve

        if len(hold_idx):
            correct = sum(
                1 for gi in hold_idx
                if int(np.argmax(self._forward(*feats[gi], p)[0])) == y[gi]
            )
            self.heldout_accuracy_ = correct / len(hold_idx)
        else:
            self.heldout_accuracy_ = float("nan")
        return self

    def predict_proba(self, g: SceneGraph) -> np.ndarray:
        self._check_fitted()
        x, an = self._features(g)
        return self._forward(x, an, self.params_)[0]

    def predict(self, g: SceneGraph) -> int:
        return int(np.argmax(self.predict_proba(g)))

    def save(self, path: str) -> None:
        self._check_fitted()
        meta = {
            "k": self.k, "hidden": self.hidden, "gcn_dim": self.gcn_dim,
            "epochs": self.epochs, "lr": self.lr, "holdout": self.holdout,
            "init_scale": self.init_scale, "seed": self.seed,
            "n_labels": self.n_labels_, "n_categories": self.n_categories_,
            "room_type": self.room_type_,
            "condition_labels": list(self.condition_labels_),
            "heldout_accuracy": self.heldout_accuracy_,
        }
        save_checkpoint(path, "labeler", meta, self.params_)

    @classmethod
    def load(cls, path: str) -> "GraphConditionLabeler":
        meta, matrices = load_checkpoint(path, "labeler")
        model = cls(
            k=meta["k"], hidden=meta["hidden"], gcn_dim=meta["gcn_dim"],
            epochs=meta["epochs"], lr=meta["lr"], holdout=meta["holdout"],
            init_scale=meta["init_scale"], seed=meta["seed"],
        )
        model.n_labels_ = meta["n_labels"]
        model.n_categories_ = meta["n_categories"]
        model.room_type_ = meta["room_type"]
        model.condition_labels_ = list(meta["condition_labels"])
        model.heldout_accuracy_ = meta["heldout_accuracy"]
        model.params_ = matrices
        return model


@dataclass(frozen=True)
class AccuracyReport:
    """Per-label generation accuracy and its unweighted mean."""

    label_indices: tuple[int, ...]
    per_label: tuple[float, ...]
    counts: tuple[int, ...]
    averaged: float

    @property
    def n_labels(self) -> int:
        return len(self.label_indices)

    def to_dict(self) -> dict:
        return {
            "label_indices": list(self.label_indices),
            "per_label": list(self.per_label),
            "counts": list(self.counts),
            "n_labels": self.n_labels,
            "averaged": self.averaged,
        }


def acc_g(labeler: GraphConditionLabeler,
          generated: list[tuple[SceneGraph, int]]) -> AccuracyReport:
    """Average, over intended labels, of the fraction of generated graphs
    the labeler assigns to that label. Labels with no generated graphs
    are excluded from the mean with a warning."""
    counts: Counter = Counter()
    hits: Counter = Counter()
    max_label = labeler.n_labels_ - 1
    for g, intended in generated:
        if not 0 <= intended <= max_label:
            raise ValueError(f"intended label {intended} outside labeler schema")
        counts[intended] += 1
        if labeler.predict(g) == intended:
            hits[intended] += 1
    missing = [i for i in range(max_label + 1) if counts[i] == 0]
    if missing:
        warnings.warn(
            f"labels {missing} have no generated graphs; excluded from the mean",
            stacklevel=2,
        )
    labels = tuple(i for i in range(max_label + 1) if counts[i] > 0)
    per_label = tuple(hits[i] / counts[i] for i in labels)
    return AccuracyReport(
        label_indices=labels,
        per_label=per_label,
        counts=tuple(counts[i] for i in labels),
        averaged=float(np.mean(per_label)) if per_label else float("nan"),
    )


@dataclass(frozen=True)
class ValidityReport:
    """Aggregate geometric and relational validity over scenes."""

    n_scenes: int
    outside_scenes: int
    overlap_scenes: int
    predicate_scenes: int
    edges_checked: int
    edges_satisfied: int

    @property
    def outside_rate(self) -> float:
        return self.outside_scenes / self.n_scenes if self.n_scenes else 0.0

    @property
    def overlap_rate(self) -> float:
        return self.overlap_scenes / self.n_scenes if self.n_scenes else 0.0

    @property
    def predicate_rate(self) -> float:
        return self.predicate_scenes / self.n_scenes if self.n_scenes else 0.0

    @property
    def predicate_satisfaction(self) -> float:
        return self.edges_satisfied / self.edges_checked if self.edges_checked else 1.0

    def to_dict(self) -> dict:
        return {
            "n_scenes": self.n_scenes,
            "outside_scenes": self.outside_scenes,
            "overlap_scenes": self.overlap_scenes,
            "predicate_scenes": self.predicate_scenes,
            "edges_checked": self.edges_checked,
            "edges_satisfied": self.edges_satisfied,
            "outside_rate": self.outside_rate,
            "overlap_rate": self.overlap_rate,
            "predicate_rate": self.predicate_rate,
            "predicate_satisfaction": self.predicate_satisfaction,
        }


OVERLAP_TOLERANCE = 1e-6


def scene_validity_report(
    scenes: list[Scene],
    graphs: list[SceneGraph] | None = None,
    node_maps: list[dict[int, int]] | None = None,
) -> ValidityReport:
    """Count scenes with out-of-boundary items, overlapping item pairs,
    and (when graphs are given) violated edge predicates. node_maps[i]
    maps object node ids of graphs[i] to item indices of scenes[i]; by
    default items are assumed to follow the extraction node order."""
    if graphs is not None and len(graphs) != len(scenes):
        raise ValueError("graphs and scenes differ in length")
    outside = overlap = pred_scenes = 0
    edges_checked = edges_satisfied = 0
    for si, scene in enumerate(scenes):
        verts = scene.shell.vertices
        foots = [
            ((it.position.x, it.position.y), *_footprint(it.size, it.direction))
            for it in scene.items
        ]
        if any(not rect_inside_polygon(c, w, d, verts) for c, w, d in foots):
            outside += 1
        has_overlap = False
        for i in range(len(foots)):
            for j in range(i + 1, len(foots)):
                ci, wi, di = foots[i]
                cj, wj, dj = foots[j]
                if rect_overlap_area(ci, wi, di, cj, wj, dj) > OVERLAP_TOLERANCE:
                    has_overlap = True
                    break
            if has_overlap:
                break
        overlap += int(has_overlap)

        if graphs is None:
            continue
        g = graphs[si]
        cats = dict(g.nodes)
        n_shell = scene.shell.wall_count() + len(scene.shell.openings)
        _, geoms = scene_node_geometry(scene)
        geom_of: dict[int, object] = {}
        for nid, _cat in g.nodes:
            if nid < n_shell:
                geom_of[nid] = geoms[nid]
            else:
                item_idx = (
                    node_maps[si][nid] if node_maps is not None else nid - n_shell
                )
                it = scene.items[item_idx]
                geom_of[nid] = ("point", (it.position.x, it.position.y))
        diag = scene.shell.diagonal()
        bad = False
        for u, v, t in g.edges:
            edges_checked += 1
            ok = predicate_check(geom_of[u], geom_of[v], cats[u], cats[v], t, diag)
            edges_satisfied += int(ok)
            bad = bad or not ok
        pred_scenes += int(bad)
    return ValidityReport(
        n_scenes=len(scenes),
        outside_scenes=outside,
        overlap_scenes=overlap,
        predicate_scenes=pred_scenes,
        edges_checked=edges_checked,
        edges_satisfied=edges_satisfied,
    )


# --- comparison-pair export ----------------------------------------------

_PALETTE = (
    "#8dd3c7", "#ffffb3", "#bebada", "#fb8072", "#80b1d3", "#fdb462",
    "#b3de69", "#fccde5", "#d9d9d9", "#bc80bd", "#ccebc5", "#ffed6f",
)


def render_scene_svg(scene: Scene, registry: dict[int, str] | None = None,
                     scale: float = 120.0) -> str:
    """Top-view vector drawing: room polygon plus labeled item rectangles."""
    minx, miny, maxx, maxy = polygon_bbox(scene.shell.vertices)
    pad = 0.15 * max(maxx - minx, maxy - miny)
    w = (maxx - minx + 2 * pad) * scale
    h = (maxy - miny + 2 * pad) * scale

    def sx(x: float) -> float:
        return (x - minx + pad) * scale

    def sy(y: float) -> float:
        # image y axis points down
        return (maxy - y + pad) * scale

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" '
        f'height="{h:.0f}" viewBox="0 0 {w:.2f} {h:.2f}">',
        f'<rect width="{w:.2f}" height="{h:.2f}" fill="#fafafa"/>',
    ]
    pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in scene.shell.vertices)
    parts.append(
        f'<polygon points="{pts}" fill="#ffffff" stroke="#333" stroke-width="3"/>'
    )
    for op in scene.shell.openings:
        cx, cy = scene.shell.opening_centroid(op)
        color = "#c0392b" if op.kind == "door" else "#2980b9"
        parts.append(
            f'<circle cx="{sx(cx):.2f}" cy="{sy(cy):.2f}" r="6" fill="{color}"/>'
        )
    for item in scene.items:
        fw, fd = _footprint(item.size, item.direction)
        x0 = sx(item.position.x - fw / 2)
        y0 = sy(item.position.y + fd / 2)
        color = _PALETTE[(item.category - 4) % len(_PALETTE)]
        name = (registry or {}).get(item.category, str(item.category))
        parts.append(
            f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{fw * scale:.2f}" '
            f'height="{fd * scale:.2f}" fill="{color}" stroke="#555" '
            f'stroke-width="1.5" fill-opacity="0.85"/>'
        )
        parts.append(
            f'<text x="{sx(item.position.x):.2f}" y="{sy(item.position.y):.2f}" '
            f'font-size="12" font-family="sans-serif" text-anchor="middle" '
            f'dominant-baseline="middle" fill="#222">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def export_comparison_pairs(
    real: list[Scene],
    generated: list[Scene],
    out_dir: str,
    seed: int = 0,
    registry: dict[int, str] | None = None,
) -> dict:
    """Write side-by-side pair images with the real/generated sides
    shuffled per pair, a manifest, and an answer key naming each side's
    true source. Returns the manifest (including the key)."""
    if len(real) != len(generated):
        raise ValueError("real and generated lists differ in length")
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    key = {}
    for i, (r, g) in enumerate(zip(real, generated)):
        flip = bool(rng.integers(0, 2))
        left, right = (g, r) if flip else (r, g)
        left_src, right_src = ("generated", "real") if flip else ("real", "generated")
        left_name = f"pair_{i:03d}_left.svg"
        right_name = f"pair_{i:03d}_right.svg"
        for name, scene in ((left_name, left), (right_name, right)):
            with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
                fh.write(render_scene_svg(scene, registry))
        entries.append({"id": i, "left": left_name, "right": right_name})
        key[str(i)] = {"left": left_src, "right": right_src}
    manifest = {"format_version": 1, "pairs": entries, "key": key}
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump({"format_version": 1, "pairs": entries}, fh, indent=2, sort_keys=True)
    with open(os.path.join(out_dir, "key.json"), "w", encoding="utf-8") as fh:
        json.dump(key, fh, indent=2, sort_keys=True)
    return manifest
