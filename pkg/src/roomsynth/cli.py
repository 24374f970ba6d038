"""Command-line pipeline driver.

Subcommands cover the full flow: synthesize datasets, extract graphs,
train the graph generator / placement model / labeler, sample graphs,
score generation accuracy, and serve the HTTP API.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import synthetic
from .evaluation import GraphConditionLabeler, acc_g
from .evaluation import TrainingError as LabelerTrainingError
from .generator import ConditionalGraphGenerator, TrainingError
from .graphs import SceneGraphExtractor, graph_to_dict, load_graphs, save_graphs
from .placement import InstantiationError, SceneInstantiator, StatsError
from .placement import TrainingError as PlacementTrainingError
from .scenes import (
    ConditionCode,
    DatasetFormatError,
    SchemaMismatchError,
    load_dataset,
    save_dataset,
)

_RUNTIME_ERRORS = (
    DatasetFormatError,
    SchemaMismatchError,
    TrainingError,
    PlacementTrainingError,
    LabelerTrainingError,
    InstantiationError,
    StatsError,
    FileNotFoundError,
    NotADirectoryError,
    PermissionError,
    ValueError,
)


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage problems; this CLI reserves 2 for
    runtime failures, so usage errors exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_seed(p: argparse.ArgumentParser, help_text: str = "random seed") -> None:
    p.add_argument("--seed", type=int, default=0, help=help_text)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="roomsynth", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="generate a synthetic scene dataset")
    p.add_argument("--room", required=True, choices=synthetic.ROOM_TYPES)
    p.add_argument("--per-label", type=int, default=200,
                   help="scenes per condition label")
    p.add_argument("--out", required=True, help="dataset JSON path")
    _add_seed(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="extract scene graphs from a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="graph collection JSON path")
    p.add_argument("--no-prune", action="store_true",
                   help="keep the dense pre-pruning graphs")
    _add_seed(p, "accepted for uniformity; extraction is deterministic")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train-graph", help="train the conditional graph generator")
    p.add_argument("--graphs", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--init-scale", type=float,
                   default=ConditionalGraphGenerator().init_scale)
    p.add_argument("--d-z", type=int,
                   default=ConditionalGraphGenerator().d_z,
                   help="latent dimension")
    p.add_argument("--f-hidden", type=int,
                   default=ConditionalGraphGenerator().f_hidden,
                   help="decoder trunk hidden width")
    _add_seed(p)
    p.set_defaults(func=cmd_train_graph)

    p = sub.add_parser("train-inst", help="train the furniture placement model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--init-scale", type=float,
                   default=SceneInstantiator().init_scale)
    _add_seed(p)
    p.set_defaults(func=cmd_train_inst)

    p = sub.add_parser("train-labeler", help="train the graph condition labeler")
    p.add_argument("--graphs", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--holdout", type=float, default=0.2)
    _add_seed(p)
    p.set_defaults(func=cmd_train_labeler)

    p = sub.add_parser("generate", help="sample graphs from a trained generator")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--room", help="must match the checkpoint's room type")
    p.add_argument("--label", required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out", help="graph collection JSON path (default: stdout)")
    _add_seed(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="score generated graphs with a labeler")
    p.add_argument("--labeler", required=True)
    p.add_argument("--generated", required=True,
                   help="graph collection; each graph's condition is the "
                        "intended label")
    _add_seed(p, "accepted for uniformity; evaluation is deterministic")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--checkpoints", required=True,
                   help="directory with condgen_<room>.json and "
                        "placement_<room>.json files")
    p.add_argument("--rooms", help="comma-separated room types (default: all "
                                   "generator checkpoints found)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000,
                   help="overridden by the PORT environment variable")
    _add_seed(p, "accepted for uniformity; requests carry their own seeds")
    p.set_defaults(func=cmd_serve)

    return parser


def cmd_synth(args) -> int:
    dataset = synthetic.make_dataset(args.room, args.per_label, args.seed)
    save_dataset(dataset, args.out)
    print(f"wrote {len(dataset.scenes)} scenes to {args.out}")
    return 0


def cmd_extract(args) -> int:
    dataset = load_dataset(args.dataset)
    extractor = SceneGraphExtractor(prune=not args.no_prune)
    graphs = extractor.transform(dataset.scenes)
    save_graphs(graphs, args.out, dataset.room_type,
                list(dataset.schema.labels), dataset.registry)
    print(f"wrote {len(graphs)} graphs to {args.out}")
    return 0


def cmd_train_graph(args) -> int:
    graphs, header = load_graphs(args.graphs)
    model = ConditionalGraphGenerator(
        epochs=args.epochs, lr=args.lr, init_scale=args.init_scale,
        d_z=args.d_z, f_hidden=args.f_hidden, seed=args.seed,
    )
    model.condition_labels_ = list(header["condition_schema"])
    model.fit(graphs)
    model.registry_ = {int(k): v for k, v in header["category_registry"].items()}
    model.save(args.out)
    last = model.loss_curve_[-1]
    print(
        f"trained on {len(graphs)} graphs for {args.epochs} epochs; "
        f"final vae loss {last['vae']:.4f}; saved {args.out}"
    )
    return 0


def cmd_train_inst(args) -> int:
    dataset = load_dataset(args.dataset)
    graphs = SceneGraphExtractor().transform(dataset.scenes)
    pairs = list(zip(dataset.scenes, graphs))
    model = SceneInstantiator(
        epochs=args.epochs, lr=args.lr, init_scale=args.init_scale,
        seed=args.seed,
    )
    model.condition_labels_ = list(dataset.schema.labels)
    model.fit(pairs)
    model.registry_ = dict(dataset.registry)
    model.save(args.out)
    last = model.loss_curve_[-1]
    print(
        f"trained on {len(pairs)} scenes for {args.epochs} epochs; "
        f"final location loss {last['location']:.4f}; saved {args.out}"
    )
    return 0


def cmd_train_labeler(args) -> int:
    graphs, header = load_graphs(args.graphs)
    model = GraphConditionLabeler(
        epochs=args.epochs, lr=args.lr, holdout=args.holdout, seed=args.seed
    )
    model.fit(graphs)
    labels = list(header["condition_schema"])
    if len(labels) == model.n_labels_:
        model.condition_labels_ = labels
    model.save(args.out)
    print(
        f"trained on {len(graphs)} graphs; "
        f"held-out accuracy {model.heldout_accuracy_:.3f}; saved {args.out}"
    )
    return 0


def cmd_generate(args) -> int:
    model = ConditionalGraphGenerator.load(args.checkpoint)
    if args.room is not None and args.room != model.room_type_:
        raise SchemaMismatchError(
            f"checkpoint is for room type {model.room_type_!r}, not {args.room!r}"
        )
    if args.label not in model.condition_labels_:
        raise SchemaMismatchError(
            f"unknown label {args.label!r}; expected one of "
            f"{list(model.condition_labels_)}"
        )
    cond = ConditionCode(
        room_type=model.room_type_,
        label_index=model.condition_labels_.index(args.label),
    )
    graphs = [
        model.generate(cond, synthetic.child_seed(args.seed, i))
        for i in range(args.count)
    ]
    if args.out:
        save_graphs(graphs, args.out, model.room_type_,
                    list(model.condition_labels_),
                    getattr(model, "registry_", {}))
        print(f"wrote {len(graphs)} graphs to {args.out}")
    else:
        payload = [graph_to_dict(g) for g in graphs]
        json.dump(payload[0] if args.count == 1 else payload,
                  sys.stdout, sort_keys=True, separators=(",", ":"))
        print()
    return 0


def cmd_eval(args) -> int:
    labeler = GraphConditionLabeler.load(args.labeler)
    graphs, _header = load_graphs(args.generated)
    report = acc_g(labeler, [(g, g.condition.label_index) for g in graphs])
    json.dump(report.to_dict(), sys.stdout, indent=2, sort_keys=True)
    print()
    return 0


def cmd_serve(args) -> int:
    from . import service

    rooms = args.rooms.split(",") if args.rooms else None
    service.run(args.checkpoints, host=args.host, port=args.port,
                room_types=rooms)
    return 0


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else 0
    try:
        return args.func(args)
    except _RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
