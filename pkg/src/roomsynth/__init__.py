"""Preference-conditioned indoor layout synthesis.

Scene graphs are extracted from furnished rooms, a conditional graph
generator learns their distribution per functional preference, and a
placement model instantiates generated graphs back into concrete
layouts. Everything trains on small CPUs with hand-rolled gradients.
"""

__version__ = "0.1.0"

from .evaluation import (
    AccuracyReport,
    GraphConditionLabeler,
    ValidityReport,
    acc_g,
    export_comparison_pairs,
    render_scene_svg,
    scene_validity_report,
)
from .generator import ConditionalGraphGenerator, TrainingError
from .graphs import (
    SceneGraph,
    SceneGraphExtractor,
    adjacency_matrix,
    edge_type,
    edge_type_parts,
    extract_graph,
    permute_graph,
    prune_graph,
)
from .placement import (
    CategoryStats,
    InstantiationError,
    NoSpaceError,
    SceneInstantiator,
    compute_category_stats,
    instantiation_order,
)
from .scenes import (
    ConditionCode,
    ConditionSchema,
    FurnitureItem,
    Opening,
    Point2,
    RoomShell,
    Scene,
    SceneDataset,
    SchemaMismatchError,
    encode_condition,
    load_dataset,
    save_dataset,
    validate_scene,
)
from .synthetic import default_schema, default_shell, make_dataset

__all__ = [
    "AccuracyReport",
    "CategoryStats",
    "ConditionCode",
    "ConditionSchema",
    "ConditionalGraphGenerator",
    "FurnitureItem",
    "GraphConditionLabeler",
    "InstantiationError",
    "NoSpaceError",
    "Opening",
    "Point2",
    "RoomShell",
    "Scene",
    "SceneDataset",
    "SceneGraph",
    "SceneGraphExtractor",
    "SceneInstantiator",
    "SchemaMismatchError",
    "TrainingError",
    "ValidityReport",
    "acc_g",
    "adjacency_matrix",
    "compute_category_stats",
    "default_schema",
    "default_shell",
    "edge_type",
    "edge_type_parts",
    "encode_condition",
    "export_comparison_pairs",
    "extract_graph",
    "instantiation_order",
    "load_dataset",
    "make_dataset",
    "permute_graph",
    "prune_graph",
    "render_scene_svg",
    "save_dataset",
    "scene_validity_report",
    "validate_scene",
    "__version__",
]
