"""Command-line entry points for the full pipeline.

Subcommands: build, disambiguate, reduce, refine serve, weights, encode,
train, infer, eval, stats. Exit codes: 0 success, 1 usage error, 2 data error.
Every run prints the content-hash of the ontology it operated on, and every
derived artifact carries that hash so mixed-ontology evaluation fails loudly.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import build as build_mod
from . import evaluation, kernels, learning, server
from . import encoding as enc
from .kb import IngestError, load_event_seeds, load_labels, load_triples
from .ontology import EventLink, Ontology, OntologyError, links_from_lines, links_to_lines
from .refinement import RefinementError

log = logging.getLogger("ontoevent")

DATA_ERRORS = (
    IngestError,
    OntologyError,
    build_mod.BuildError,
    enc.EncodingError,
    learning.LearningError,
    evaluation.EvaluationError,
    RefinementError,
    OSError,
    ValueError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=0, help="rng seed for anything stochastic")
    sub.add_argument("--quiet", action="store_true", help="suppress info logging")


def _load_ontology(path: str) -> Ontology:
    ont = Ontology.from_bytes(Path(path).read_bytes())
    print(f"ontology {ont.content_hash()[:12]} ({len(ont)} nodes)")
    return ont


def _load_links(path: str, ont: Ontology | None = None) -> list[EventLink]:
    links, link_hash = links_from_lines(Path(path).read_text(encoding="utf-8"))
    if ont is not None and link_hash and link_hash != ont.content_hash():
        log.warning("links file was written for a different ontology revision")
    return links


def _write_pair(out_dir: str, ont: Ontology, links) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ontology.json").write_bytes(ont.to_bytes())
    if links is not None:
        (out / "links.tsv").write_text(
            links_to_lines(links, ont.content_hash()), encoding="utf-8"
        )
    print(f"wrote {out / 'ontology.json'}")


def _samples_to_dataset(
    ont: Ontology, samples, features: np.ndarray, variant: str
) -> learning.Dataset:
    need_leaf = variant in ("c", "c+cel", "c+cos")
    need_sub = variant != "c"
    leaf = np.stack([enc.encode_leaf(ont, s) for _, s in samples]) if need_leaf else None
    sub = np.stack([enc.encode_subgraph(ont, s) for _, s in samples]) if need_sub else None
    return learning.Dataset(features, leaf, sub, ont.content_hash())


# -- subcommand implementations ---------------------------------------------------


def cmd_build(args) -> int:
    cfg = build_mod.BuildConfig(root_id=args.root)
    triples = load_triples(args.triples, cfg.all_properties)
    if args.labels:
        triples = triples.with_labels(load_labels(args.labels))
    seeds = load_event_seeds(args.seeds)
    ont, links = build_mod.build_initial(seeds, triples, cfg)
    print(f"ontology {ont.content_hash()[:12]} ({len(ont)} nodes)")
    print(build_mod.stats(ont, links).line())
    _write_pair(args.out, ont, links)
    return 0


def cmd_disambiguate(args) -> int:
    cfg = build_mod.BuildConfig(min_events=args.min_events)
    ont = _load_ontology(args.ont)
    links = _load_links(args.links, ont)
    if not args.no_sport:
        triples = load_triples(args.triples, cfg.all_properties)
        if args.labels:
            triples = triples.with_labels(load_labels(args.labels))
        ont, links = build_mod.disambiguate_sport(ont, links, triples, cfg)
    if not args.no_filter:
        ont, links = build_mod.filter_min_events(ont, links, cfg)
    if args.merges:
        merge_list = build_mod.load_merge_list(args.merges)
        ont, links = build_mod.apply_merges(ont, links, merge_list)
    print(f"ontology {ont.content_hash()[:12]} ({len(ont)} nodes)")
    print(build_mod.stats(ont, links).line())
    _write_pair(args.out, ont, links)
    return 0


def cmd_reduce(args) -> int:
    ont = _load_ontology(args.ont)
    links = _load_links(args.links, ont) if args.links else None
    before = len(ont)
    reduced, new_links = build_mod.remove_redundant(ont, links)
    print(f"{before} -> {len(reduced)} nodes")
    print(f"ontology {reduced.content_hash()[:12]} (reduced)")
    _write_pair(args.out, reduced, new_links)
    return 0


def cmd_refine(args) -> int:
    if args.refine_command != "serve":
        raise RefinementError(f"unknown refine subcommand {args.refine_command!r}")
    ont = _load_ontology(args.ont)
    links = _load_links(args.links, ont) if args.links else []
    service = server.SessionService(ont, links, args.log, args.annotator)
    httpd = server.make_server(service, args.host, args.port, args.ui)
    server.serve_forever(httpd)
    return 0


def cmd_weights(args) -> int:
    ont = _load_ontology(args.ont)
    if args.scheme == "distance":
        weights = enc.distance_weights(ont)
    else:
        weights = enc.centrality_weights(ont, args.leaf_weight)
    enc.write_weights(args.out, weights)
    print(f"wrote {args.out} ({args.scheme})")
    return 0


def cmd_encode(args) -> int:
    ont = _load_ontology(args.ont)
    samples = enc.read_sample_labels(args.samples)
    if args.kind == "leaf":
        rows = np.stack([enc.encode_leaf(ont, leaves) for _, leaves in samples])
    else:
        rows = np.stack([enc.encode_subgraph(ont, leaves) for _, leaves in samples])
    enc.write_vectors(args.out, rows, ont.content_hash(), kind=args.kind)
    print(f"wrote {args.out} ({rows.shape[0]} x {rows.shape[1]})")
    return 0


def cmd_train(args) -> int:
    ont = _load_ontology(args.ont)
    features = learning.read_features(args.features)
    samples = enc.read_sample_labels(args.samples)
    if len(samples) != features.shape[0]:
        raise learning.LearningError(
            f"{len(samples)} samples but {features.shape[0]} feature rows"
        )
    weights = None
    if args.weights:
        weights = enc.read_weights(args.weights)
        enc.check_alignment(ont, weights)
    elif args.loss != "c":
        weights = enc.unit_weights(ont)
    spec = learning.LossSpec.for_ontology(args.loss, ont, weights)

    rng = np.random.default_rng(args.seed)
    order = rng.permutation(len(samples))
    n_val = int(len(samples) * args.val_fraction)
    val_idx, train_idx = order[:n_val], order[n_val:]
    full = _samples_to_dataset(ont, samples, features, args.loss)

    def subset(idx):
        return learning.Dataset(
            full.features[idx],
            None if full.leaf_targets is None else full.leaf_targets[idx],
            None if full.subgraph_targets is None else full.subgraph_targets[idx],
            full.ontology_hash,
        )

    output_dim = len(ont.leaf_order) if args.loss == "c" else len(ont.node_order)
    head = learning.ClassifierHead(features.shape[1], output_dim, seed=args.seed)
    optim = learning.OptimConfig(args.momentum, args.weight_decay, args.batch_size)
    schedule = learning.LRSchedule(
        warmup_iters=args.warmup_iters if args.warmup_iters is not None else min(args.iters // 10, 10_000),
        total_iters=args.total_iters or max(args.iters, 2),
    )
    trainer = learning.Trainer(
        head, subset(train_idx), subset(val_idx) if n_val else None, spec,
        optim, schedule, seed=args.seed, eval_every=args.eval_every,
    )
    if args.resume:
        trainer.load_checkpoint(args.resume)
    trainer.run(args.iters - trainer.iteration)
    trainer.save_checkpoint(args.out)
    if args.trace:
        learning.write_trace(args.trace, trainer.trace)
    best = "n/a" if not np.isfinite(trainer.best_val) else f"{trainer.best_val:.6f}"
    print(f"trained {trainer.iteration} iteration(s), best val loss {best}")
    print(f"wrote {args.out}")
    return 0


def cmd_infer(args) -> int:
    ont = _load_ontology(args.ont)
    features = learning.read_features(args.features)
    with np.load(args.ckpt, allow_pickle=False) as data:
        import json as _json

        meta = _json.loads(str(data["meta"]))
        weight = data["best_weight"]
        bias = data["best_bias"]
    if meta.get("ontology_hash") and meta["ontology_hash"] != ont.content_hash():
        raise enc.EncodingError("checkpoint belongs to a different ontology")
    head = learning.ClassifierHead(weight.shape[0], weight.shape[1], seed=0)
    head.weight, head.bias = weight, bias
    probs = np.atleast_2d(head.forward(features))

    if meta["variant"] == "c":
        leaf_scores = probs
    else:
        if args.weights:
            weights = enc.read_weights(args.weights)
        else:
            weights = enc.unit_weights(ont)
        result = learning.infer(probs, ont, weights)
        leaf_scores = np.atleast_2d(result.combined)

    if args.samples:
        ids = [sid for sid, _ in enc.read_sample_labels(args.samples)]
    else:
        ids = [f"s{i:05d}" for i in range(leaf_scores.shape[0])]
    evaluation.write_predictions(args.out, ids, leaf_scores, ont.content_hash())
    print(f"wrote {args.out} ({leaf_scores.shape[0]} predictions)")
    return 0


def cmd_eval(args) -> int:
    ont_full = _load_ontology(args.ont)
    ont_model = Ontology.from_bytes(Path(args.model_ont).read_bytes()) if args.model_ont else ont_full
    ids, rows, pred_hash = evaluation.read_predictions(args.pred)
    if pred_hash and pred_hash != ont_model.content_hash():
        raise evaluation.EvaluationError("predictions belong to a different ontology")
    truth = dict(enc.read_sample_labels(args.truth))
    samples = []
    for sid, row in zip(ids, rows):
        if sid not in truth:
            raise evaluation.EvaluationError(f"no ground truth for sample {sid!r}")
        samples.append(evaluation.EvalSample(row, truth[sid], sid))
    report = evaluation.evaluate(samples, ont_full, ont_model)
    wanted = args.metrics.split(",")
    values = {
        "top1": report.top1, "top3": report.top3, "top5": report.top5,
        "jsc": report.jsc, "cs": report.cs,
    }
    for name in wanted:
        if name not in values:
            raise evaluation.EvaluationError(f"unknown metric {name!r}")
        print(f"{name} {values[name]:.4f}")
    if args.out:
        Path(args.out).write_text(report.to_text(), encoding="utf-8")
        print(f"wrote {args.out}")
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
    return 0


def cmd_stats(args) -> int:
    ont = _load_ontology(args.ont)
    links = _load_links(args.links, ont) if args.links else []
    print(build_mod.stats(ont, links).line())
    return 0


# -- parser wiring ------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="ontoevent", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = subs.add_parser("build", help="initial ontology from triples and seed events")
    p.add_argument("--triples", required=True)
    p.add_argument("--seeds", required=True)
    p.add_argument("--labels")
    p.add_argument("--root", default="Q1190554")
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_build)

    p = subs.add_parser("disambiguate", help="sport rewiring, min-event filter, merges")
    p.add_argument("--ont", required=True)
    p.add_argument("--links", required=True)
    p.add_argument("--triples", required=True)
    p.add_argument("--labels")
    p.add_argument("--min-events", type=int, default=10)
    p.add_argument("--merges")
    p.add_argument("--no-sport", action="store_true")
    p.add_argument("--no-filter", action="store_true")
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_disambiguate)

    p = subs.add_parser("reduce", help="remove redundant branch nodes")
    p.add_argument("--ont", required=True)
    p.add_argument("--links")
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_reduce)

    p = subs.add_parser("refine", help="refinement session service")
    p.add_argument("refine_command", choices=["serve"])
    p.add_argument("--ont", required=True)
    p.add_argument("--links")
    p.add_argument("--port", type=int, default=8137)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--log")
    p.add_argument("--annotator", default="")
    p.add_argument("--ui", help="directory of static UI files to serve")
    _common(p)
    p.set_defaults(func=cmd_refine)

    p = subs.add_parser("weights", help="per-node weight vector")
    p.add_argument("--ont", required=True)
    p.add_argument("--scheme", choices=["distance", "centrality"], required=True)
    p.add_argument("--leaf-weight", type=float, default=6.0)
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_weights)

    p = subs.add_parser("encode", help="sample labels to multi-hot vectors")
    p.add_argument("--ont", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--kind", choices=["leaf", "subgraph"], required=True)
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_encode)

    p = subs.add_parser("train", help="train the classifier head")
    p.add_argument("--ont", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--loss", choices=list(learning.VARIANTS), default="c")
    p.add_argument("--weights")
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=1e-5)
    p.add_argument("--warmup-iters", type=int)
    p.add_argument("--total-iters", type=int)
    p.add_argument("--eval-every", type=int, default=100)
    p.add_argument("--resume")
    p.add_argument("--trace")
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("infer", help="leaf predictions from a checkpoint")
    p.add_argument("--ont", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--weights")
    p.add_argument("--samples", help="sample-label file supplying output ids")
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_infer)

    p = subs.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--ont", required=True, help="full (non-reduced) ontology")
    p.add_argument("--model-ont", help="ontology the predictions are aligned to")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--metrics", default="top1,top3,top5,jsc,cs")
    p.add_argument("--out")
    p.add_argument("--csv")
    _common(p)
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("stats", help="node/leaf/relation/event counts")
    p.add_argument("--ont", required=True)
    p.add_argument("--links")
    _common(p)
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    logging.basicConfig(
        level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
