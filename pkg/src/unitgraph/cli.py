"""Command-line front end: extract | train | evaluate | bench | inspect.

Exit codes: 0 success, 1 bad invocation or config, 2 data error.  Every
run writes its seed and a hash of the resolved configuration into its
output artifacts so identical runs reproduce identical (non-timing)
outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import random
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from . import evaluation, relnet
from .corpus import Document, RelationEdge, load_corpus, serialize_brat
from .deptree import span_path
from .errors import DataError
from .relations import (
    NN_STRATEGIES,
    Strategy,
    build_contexts,
    extract_document,
    gold_pairs,
)
from .tagger import (
    Gazetteers,
    load_tagger,
    predict_entities,
    rank_lexicon,
    save_tagger,
    train_tagger,
)
from .tokens import format_iob_block, sentences, spans_to_iob, tokenize


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    corpus_dir: str = ""
    output_dir: str = "out"
    strategy: str = "nearest-person"
    ner_mode: str = "gold"  # gold | model
    tagger_model: str | None = None
    relnet_model: str | None = None
    seed: int = 13
    split: float = 0.8
    hidden_size: int = 8
    min_count: int = 2
    learning_rate: float = 0.05
    epochs: int = 300
    tagger_epochs: int = 5
    fallback: str = "nearest"  # nearest | skip
    path_direction: bool = True
    workers: int = 1
    org_gazetteer: str | None = None
    rank_gazetteer: str | None = None

    @classmethod
    def load(cls, config_path: str | None, overrides: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        values: dict = {}
        if config_path:
            try:
                raw = json.loads(Path(config_path).read_text(encoding="utf-8"))
            except OSError as exc:
                raise UsageError(f"cannot read config file: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise UsageError(f"config file is not valid JSON: {exc}") from exc
            unknown = sorted(set(raw) - known)
            if unknown:
                raise UsageError(f"unknown config keys: {', '.join(unknown)}")
            values.update(raw)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**{k: v for k, v in values.items() if k in known})

    # execution knobs that never change what gets computed
    _UNHASHED = ("output_dir", "workers")

    def hash(self) -> str:
        payload = {
            k: v for k, v in asdict(self).items() if k not in self._UNHASHED
        }
        canon = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def _strategies(name: str) -> list[Strategy]:
    if name == "all":
        return list(Strategy)
    try:
        return [Strategy(name)]
    except ValueError:
        raise UsageError(
            f"unknown strategy {name!r}; choose from "
            f"{', '.join(s.value for s in Strategy)} or 'all'"
        ) from None


def _split_corpus(entries, fraction: float, seed: int):
    """Seeded document-level split; returns (train, held_out)."""
    order = list(range(len(entries)))
    random.Random(seed).shuffle(order)
    cut = max(1, int(round(len(entries) * fraction))) if entries else 0
    train_idx = sorted(order[:cut])
    test_idx = sorted(order[cut:])
    return [entries[i] for i in train_idx], [entries[i] for i in test_idx]


def _gazetteers(cfg: RunConfig, train_docs: list[Document]) -> Gazetteers:
    gaz = Gazetteers.from_files(cfg.org_gazetteer, cfg.rank_gazetteer)
    if not gaz.ranks and train_docs:
        gaz = Gazetteers(gaz.organizations, rank_lexicon(train_docs))
    return gaz


def _load_relnet_for(cfg: RunConfig, strategy: Strategy):
    if strategy not in NN_STRATEGIES:
        return None, None
    if not cfg.relnet_model:
        raise DataError(
            f"strategy {strategy.value} needs a trained model file; pass "
            "--relnet-model (train one with the 'train' command)"
        )
    path = Path(cfg.relnet_model)
    if path.is_dir():
        name = "relnet_select.model" if strategy is Strategy.NN_FREE \
            else "relnet_constrained.model"
        path = path / name
    if not path.exists():
        raise DataError(f"model file not found: {path}")
    model, vocab = relnet.load_relnet(path)
    wanted = "select_k" if strategy is Strategy.NN_FREE else "constrained3"
    if model.mode != wanted:
        raise DataError(
            f"{path} is a {model.mode} model but strategy {strategy.value} "
            f"needs {wanted}"
        )
    return model, vocab


def _entities_for(cfg: RunConfig, doc: Document, tagger) -> Document:
    """The document whose entities the extractor will see."""
    if cfg.ner_mode == "gold":
        return doc
    predicted = predict_entities(tagger, doc)
    return Document(doc.doc_id, doc.text, predicted, [])


def cmd_extract(cfg: RunConfig) -> int:
    entries = load_corpus(cfg.corpus_dir)
    strategy = _strategies(cfg.strategy)[0]
    model, vocab = _load_relnet_for(cfg, strategy)
    tagger = None
    if cfg.ner_mode == "model":
        if cfg.tagger_model is None:
            raise DataError("--ner-mode model needs --tagger-model")
        tagger = load_tagger(cfg.tagger_model)

    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def run_one(entry):
        doc, trees = entry
        view = _entities_for(cfg, doc, tagger)
        atts = extract_document(
            view, trees, strategy, model, vocab,
            fallback=cfg.fallback == "nearest",
        )
        return doc, view, atts

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run_one, entries))
    else:
        results = [run_one(e) for e in entries]

    nodes, edges = [], []
    n_attached = n_abstained = 0
    for doc, view, atts in results:
        rels = []
        for i, att in enumerate(atts, start=1):
            if att.person is None:
                n_abstained += 1
                continue
            n_attached += 1
            rels.append(
                RelationEdge(f"R{i}", att.rtype, att.person.id, att.target.id)
            )
            edges.append(
                {
                    "rtype": att.rtype.value,
                    "from": f"{doc.doc_id}:{att.person.id}",
                    "to": f"{doc.doc_id}:{att.target.id}",
                    "strategy": att.strategy.value,
                    "doc_id": doc.doc_id,
                    "person_span": [att.person.start, att.person.end],
                    "target_span": [att.target.start, att.target.end],
                }
            )
        for ent in view.entities:
            nodes.append(
                {
                    "id": f"{doc.doc_id}:{ent.id}",
                    "type": ent.etype.value,
                    "surface": ent.surface,
                    "doc_id": doc.doc_id,
                    "offsets": [ent.start, ent.end],
                }
            )
        pred_doc = Document(doc.doc_id, doc.text, list(view.entities), rels)
        (out_dir / f"{doc.doc_id}.ann").write_text(
            serialize_brat(pred_doc), encoding="utf-8"
        )

    graph = {
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "strategy": strategy.value,
        "ner_mode": cfg.ner_mode,
        "nodes": nodes,
        "edges": edges,
    }
    (out_dir / "graph.json").write_text(
        json.dumps(graph, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    manifest = {
        "command": "extract",
        "config": asdict(cfg),
        "config_hash": cfg.hash(),
        "documents": len(entries),
    }
    (out_dir / "run.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(
        f"extracted {len(entries)} documents: {len(nodes)} entities, "
        f"{n_attached} attachments, {n_abstained} abstentions -> {out_dir}"
    )
    return 0


def cmd_train(cfg: RunConfig, targets: list[str]) -> int:
    entries = load_corpus(cfg.corpus_dir)
    train_entries, test_entries = _split_corpus(entries, cfg.split, cfg.seed)
    if not train_entries:
        raise DataError("training split is empty")
    train_docs = [doc for doc, _ in train_entries]
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    print(
        f"split: {len(train_entries)} train / {len(test_entries)} held out "
        f"(fraction {cfg.split}, seed {cfg.seed})"
    )

    if "tagger" in targets:
        gaz = _gazetteers(cfg, train_docs)
        corpus = []
        for doc in train_docs:
            for sent in sentences(tokenize(doc.text)):
                ents = [
                    e for e in doc.entities
                    if e.start < sent[-1].end and e.end > sent[0].start
                ]
                corpus.append((sent, spans_to_iob(sent, ents)))
        if not corpus:
            raise DataError("no training sentences with gold annotations")
        model = train_tagger(corpus, epochs=cfg.tagger_epochs, seed=cfg.seed,
                             gazetteers=gaz)
        model.meta["config_hash"] = cfg.hash()
        path = out_dir / "tagger.model"
        save_tagger(model, path)
        n_params = len(model.feature_weights) + len(model.transition_weights)
        print(f"tagger: {n_params} weights -> {path}")

    relnet_modes = [t for t in targets if t.startswith("relnet")]
    if relnet_modes:
        contexts_by_doc = [build_contexts(doc, trees) for doc, trees in train_entries]
        patterns = relnet.collect_patterns(contexts_by_doc)
        vocab = relnet.build_vocab(
            patterns, min_count=cfg.min_count, directed=cfg.path_direction
        )
        pairs = []
        for (doc, _), contexts in zip(train_entries, contexts_by_doc):
            doc_pairs, _ = gold_pairs(doc, contexts)
            pairs.extend(doc_pairs)
        for target in relnet_modes:
            mode = "select_k" if target == "relnet-select" else "constrained3"
            dataset = relnet.build_dataset(
                pairs, vocab, mode, directed=cfg.path_direction
            )
            if len(dataset[0]) == 0:
                raise DataError("no same-sentence gold relations to train on")
            model = relnet.init_model(
                mode, vocab.size, hidden=cfg.hidden_size, seed=cfg.seed
            )
            relnet.train(
                model, dataset, epochs=cfg.epochs,
                learning_rate=cfg.learning_rate, seed=cfg.seed,
            )
            model.hyper.update({
                "min_count": cfg.min_count,
                "directed": int(cfg.path_direction),
                "config_hash": cfg.hash(),
            })
            name = ("relnet_select.model" if mode == "select_k"
                    else "relnet_constrained.model")
            path = out_dir / name
            relnet.save_relnet(path, model, vocab)
            print(
                f"relnet {mode}: {model.param_count()} parameters "
                f"(vocab {vocab.size}, {len(dataset[0])} examples, "
                f"final loss {model.loss_curve[-1]:.4f}) -> {path}"
            )
    return 0


def _evaluate_strategy(cfg, entries, strategy):
    model, vocab = _load_relnet_for(cfg, strategy)
    tp = fp = fn = 0
    for doc, trees in entries:
        atts = extract_document(
            doc, trees, strategy, model, vocab,
            fallback=cfg.fallback == "nearest",
        )
        dtp, dfp, dfn = evaluation.relation_counts(
            doc.relations, atts, doc.entities
        )
        tp, fp, fn = tp + dtp, fp + dfp, fn + dfn
    return evaluation.PrfRow.from_counts(
        evaluation.STRATEGY_ROW_NAMES[strategy], tp, fp, fn
    )


def cmd_evaluate(cfg: RunConfig, metric_check: bool, ner_eval: bool) -> int:
    if metric_check:
        problems = evaluation.verify_reference_metrics()
        for name, tp, fp, fn, *_ in (
            evaluation.REFERENCE_NER_ROWS + evaluation.REFERENCE_RE_ROWS
        ):
            status = "FAIL" if any(p.startswith(name) for p in problems) else "ok"
            row = evaluation.PrfRow.from_counts(name, tp, fp, fn)
            print(f"{status}  {name}: {row.precision:.3f}/{row.recall:.3f}/"
                  f"{row.f1:.3f} from {tp}/{fp}/{fn}")
        if problems:
            for p in problems:
                print("FAIL", p, file=sys.stderr)
            return 2
        print("all reference metric cells reproduce within tolerance")
        return 0

    entries = load_corpus(cfg.corpus_dir)
    gold_docs = [doc for doc, _ in entries if doc.entities or doc.relations]
    if not gold_docs:
        raise DataError("corpus has no gold annotations to evaluate against")
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if ner_eval:
        train_entries, test_entries = _split_corpus(entries, cfg.split, cfg.seed)
        if not test_entries:
            raise DataError("held-out split is empty; lower --split")
        train_docs = [doc for doc, _ in train_entries]
        gaz = _gazetteers(cfg, train_docs)
        corpus = []
        for doc in train_docs:
            for sent in sentences(tokenize(doc.text)):
                ents = [
                    e for e in doc.entities
                    if e.start < sent[-1].end and e.end > sent[0].start
                ]
                corpus.append((sent, spans_to_iob(sent, ents)))
        model = train_tagger(corpus, epochs=cfg.tagger_epochs, seed=cfg.seed,
                             gazetteers=gaz)
        totals: dict = {}
        for doc, _ in test_entries:
            pred = predict_entities(model, doc)
            for etype, counts in evaluation.entity_counts(doc.entities, pred).items():
                prev = totals.get(etype, (0, 0, 0))
                totals[etype] = tuple(a + b for a, b in zip(prev, counts))
        rows = evaluation.rows_from_entity_counts(totals)
        print(f"NER on held-out split ({len(test_entries)} docs, "
              f"{cfg.split:.0%} train, seed {cfg.seed}):")
        print(evaluation.format_prf_table(rows, decimals=2))
        payload = {
            "config_hash": cfg.hash(), "seed": cfg.seed,
            "rows": [asdict(r) for r in rows],
        }
        (out_dir / "ner_metrics.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return 0

    rows = [_evaluate_strategy(cfg, entries, s) for s in _strategies(cfg.strategy)]
    cross = 0
    for doc, trees in entries:
        _, doc_cross = gold_pairs(doc, build_contexts(doc, trees))
        cross += doc_cross
    print(evaluation.format_prf_table(rows, decimals=3, label="Method"))
    print(f"gold relations joining different sentences: {cross} "
          "(unreachable for all strategies; scored as misses)")
    payload = {
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "cross_sentence_gold": cross,
        "rows": [asdict(r) for r in rows],
    }
    (out_dir / "metrics.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return 0


def cmd_bench(cfg: RunConfig, repetitions: int) -> int:
    entries = load_corpus(cfg.corpus_dir)
    if not entries:
        raise DataError("empty corpus")
    # untimed setup: reuse given models or fit small ones on the corpus
    if cfg.tagger_model:
        tagger = load_tagger(cfg.tagger_model)
    else:
        docs = [doc for doc, _ in entries]
        corpus = []
        for doc in docs:
            for sent in sentences(tokenize(doc.text)):
                ents = [
                    e for e in doc.entities
                    if e.start < sent[-1].end and e.end > sent[0].start
                ]
                corpus.append((sent, spans_to_iob(sent, ents)))
        tagger = train_tagger(corpus, epochs=1, seed=cfg.seed,
                              gazetteers=_gazetteers(cfg, docs))
    if cfg.relnet_model:
        model, vocab = _load_relnet_for(cfg, Strategy.NN_CONSTRAINED)
    else:
        contexts_by_doc = [build_contexts(doc, trees) for doc, trees in entries]
        vocab = relnet.build_vocab(
            relnet.collect_patterns(contexts_by_doc), min_count=1
        )
        pairs = []
        for (doc, _), contexts in zip(entries, contexts_by_doc):
            doc_pairs, _ = gold_pairs(doc, contexts)
            pairs.extend(doc_pairs)
        dataset = relnet.build_dataset(pairs, vocab, "constrained3")
        model = relnet.init_model("constrained3", vocab.size,
                                  hidden=cfg.hidden_size, seed=cfg.seed)
        if len(dataset[0]):
            relnet.train(model, dataset, epochs=30,
                         learning_rate=cfg.learning_rate, seed=cfg.seed)

    rows = evaluation.bench_pipeline(
        entries, repetitions=repetitions, tagger_model=tagger,
        relnet_model=model, relnet_vocab=vocab,
    )
    print(evaluation.format_timing_table(rows))
    reference_nn = dict(
        (name, params) for name, _, params in evaluation.REFERENCE_TIMINGS
    )
    print(f"relation-network parameters: {model.param_count()} "
          f"(reference {reference_nn['Neural Network']})")
    return 0


def cmd_inspect(cfg: RunConfig, doc_id: str | None, show_paths: bool) -> int:
    entries = load_corpus(cfg.corpus_dir)
    if not entries:
        raise DataError("empty corpus")
    chosen = None
    for doc, trees in entries:
        if doc_id is None or doc.doc_id == doc_id:
            chosen = (doc, trees)
            break
    if chosen is None:
        raise DataError(f"document {doc_id!r} not found in corpus")
    doc, trees = chosen
    print(f"# {doc.doc_id}: {len(doc.entities)} entities, "
          f"{len(doc.relations)} relations")
    toks = tokenize(doc.text)
    for sent in sentences(toks):
        ents = [
            e for e in doc.entities
            if e.start < sent[-1].end and e.end > sent[0].start
        ]
        tags = spans_to_iob(sent, ents)
        print(format_iob_block(sent, tags))
    if show_paths:
        for ctx in build_contexts(doc, trees):
            if ctx.tree is None:
                continue
            for target in ctx.targets:
                t_toks = ctx.tree_tokens(target)
                for person in ctx.persons:
                    p_toks = ctx.tree_tokens(person)
                    if not t_toks or not p_toks:
                        continue
                    path = span_path(ctx.tree, t_toks, p_toks)
                    print(f"{target.surface!r} -> {person.surface!r}: "
                          f"{path.render()} (length {path.length})")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="unitgraph", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override it")
    common.add_argument("--corpus", dest="corpus_dir", help="corpus directory")
    common.add_argument("--out", dest="output_dir", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--strategy", help="|".join(s.value for s in Strategy) + "|all")
    common.add_argument("--ner-mode", dest="ner_mode", choices=["gold", "model"])
    common.add_argument("--tagger-model", dest="tagger_model")
    common.add_argument("--relnet-model", dest="relnet_model",
                        help="model file, or a directory holding relnet_*.model")
    common.add_argument("--split", type=float, help="training fraction (default 0.8)")
    common.add_argument("--hidden-size", dest="hidden_size", type=int)
    common.add_argument("--min-count", dest="min_count", type=int)
    common.add_argument("--learning-rate", dest="learning_rate", type=float)
    common.add_argument("--epochs", type=int)
    common.add_argument("--tagger-epochs", dest="tagger_epochs", type=int)
    common.add_argument("--fallback", choices=["nearest", "skip"],
                        help="what to do when a sentence has no usable parse")
    common.add_argument("--no-path-direction", dest="path_direction",
                        action="store_false", default=None,
                        help="drop up/down direction from path patterns")
    common.add_argument("--workers", type=int)
    common.add_argument("--org-gazetteer", dest="org_gazetteer")
    common.add_argument("--rank-gazetteer", dest="rank_gazetteer")

    sub.add_parser("extract", parents=[common],
                   help="write predicted .ann files and graph.json")
    p_train = sub.add_parser("train", parents=[common],
                             help="train tagger and/or relation-network models")
    p_train.add_argument(
        "--targets", default="tagger,relnet-select,relnet-constrained",
        help="comma list of tagger|relnet-select|relnet-constrained",
    )
    p_eval = sub.add_parser("evaluate", parents=[common],
                            help="score strategies or the tagger against gold")
    p_eval.add_argument("--metric-check", action="store_true",
                        help="recompute reference P/R/F1 cells from their counts")
    p_eval.add_argument("--ner-eval", action="store_true",
                        help="train on a split and score entity predictions")
    p_bench = sub.add_parser("bench", parents=[common],
                             help="measure per-line component timings")
    p_bench.add_argument("--repetitions", type=int, default=3)
    p_inspect = sub.add_parser("inspect", parents=[common],
                               help="print token/tag rows for a document")
    p_inspect.add_argument("--doc", dest="doc_id")
    p_inspect.add_argument("--paths", action="store_true",
                           help="also print dependency paths to each Person")
    return parser


_CONFIG_KEYS = [f.name for f in fields(RunConfig)]


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        overrides = {k: getattr(args, k, None) for k in _CONFIG_KEYS}
        cfg = RunConfig.load(args.config, overrides)
        if args.command in ("extract", "train", "evaluate", "bench", "inspect"):
            needs_corpus = not (
                args.command == "evaluate" and args.metric_check
            )
            if needs_corpus and not cfg.corpus_dir:
                raise UsageError("--corpus is required")
        if args.command == "extract":
            return cmd_extract(cfg)
        if args.command == "train":
            targets = [t.strip() for t in args.targets.split(",") if t.strip()]
            bad = [t for t in targets
                   if t not in ("tagger", "relnet-select", "relnet-constrained")]
            if bad:
                raise UsageError(f"unknown train targets: {', '.join(bad)}")
            return cmd_train(cfg, targets)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.metric_check, args.ner_eval)
        if args.command == "bench":
            if args.repetitions < 3:
                raise UsageError("--repetitions must be at least 3")
            return cmd_bench(cfg, args.repetitions)
        if args.command == "inspect":
            return cmd_inspect(cfg, args.doc_id, args.paths)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())
