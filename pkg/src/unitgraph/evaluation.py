"""Scoring, report tables and per-line timing for the pipeline.

Entity matching is exact on (start, end, class); relation matching is
exact on (person span, target span, relation type), so predicted IDs
never matter.  Reference rows from the original pilot system are kept
here so reports can print measured numbers next to them.
"""

from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus import Document, EntitySpan, EntityType, RelationEdge
from .deptree import DepTree, align_to_text
from .relations import Attachment, Strategy, build_contexts, extract_document

ENTITY_ROW_ORDER = (
    (EntityType.PERSON, "Person"),
    (EntityType.RANK, "Rank"),
    (EntityType.ORGANIZATION, "Organization"),
    (EntityType.TITLE_ROLE, "Title/Role"),
)

# Reference evaluation rows (TP, FP, FN, P, R, F1) and per-line timings
# from the pilot system this package reimplements; printed alongside
# measured values for comparison.
REFERENCE_NER_ROWS = (
    ("Person", 87, 13, 6, 0.87, 0.94, 0.90),
    ("Rank", 80, 14, 11, 0.85, 0.88, 0.86),
    ("Organization", 103, 33, 31, 0.76, 0.77, 0.76),
    ("Title/Role", 85, 20, 23, 0.81, 0.79, 0.80),
    ("All Classes", 355, 80, 71, 0.82, 0.83, 0.82),
)
REFERENCE_RE_ROWS = (
    ("Nearest Person (Baseline)", 993, 759, 423, 0.567, 0.701, 0.627),
    ("Shortest Dep. Path (No constraint)", 1083, 651, 333, 0.625, 0.765, 0.687),
    ("Shortest Dep. Path (With constraint)", 1180, 559, 236, 0.679, 0.833, 0.748),
    ("Neural Network (No constraint)", 1086, 667, 330, 0.620, 0.767, 0.685),
    ("Neural Network (With constraint)", 1103, 450, 313, 0.710, 0.779, 0.743),
)
REFERENCE_TIMINGS = (
    ("NER", 1.54, 6153100),
    ("Dep. Parsing", 0.70, 8791858),
    ("Shortest Dep. Path", 0.0039, None),
    ("Neural Network", 0.051, 294),
)

STRATEGY_ROW_NAMES = {
    Strategy.NEAREST_PERSON: "Nearest Person (Baseline)",
    Strategy.SDP_FREE: "Shortest Dep. Path (No constraint)",
    Strategy.SDP_CONSTRAINED: "Shortest Dep. Path (With constraint)",
    Strategy.NN_FREE: "Neural Network (No constraint)",
    Strategy.NN_CONSTRAINED: "Neural Network (With constraint)",
}


@dataclass(frozen=True)
class PrfRow:
    name: str
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, name: str, tp: int, fp: int, fn: int) -> "PrfRow":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall
            else 0.0
        )
        return cls(name, tp, fp, fn, precision, recall, f1)


@dataclass(frozen=True)
class TimingRow:
    component: str
    seconds_per_line: float
    model_parameters: int | None


def entity_counts(
    gold: list[EntitySpan], pred: list[EntitySpan]
) -> dict[EntityType, tuple[int, int, int]]:
    """Per-class (tp, fp, fn) with exact-span matching.

    Counter intersection guarantees each gold span matches at most one
    prediction even when duplicates occur.
    """
    out: dict[EntityType, tuple[int, int, int]] = {}
    for etype, _ in ENTITY_ROW_ORDER:
        g = Counter((e.start, e.end) for e in gold if e.etype is etype)
        p = Counter((e.start, e.end) for e in pred if e.etype is etype)
        tp = sum((g & p).values())
        out[etype] = (tp, sum(p.values()) - tp, sum(g.values()) - tp)
    return out


def score_entities(gold: list[EntitySpan], pred: list[EntitySpan]) -> list[PrfRow]:
    """Per-class rows plus a micro-averaged "All Classes" row."""
    return rows_from_entity_counts(entity_counts(gold, pred))


def rows_from_entity_counts(
    counts: dict[EntityType, tuple[int, int, int]]
) -> list[PrfRow]:
    rows = [
        PrfRow.from_counts(name, *counts.get(etype, (0, 0, 0)))
        for etype, name in ENTITY_ROW_ORDER
    ]
    total = tuple(sum(c) for c in zip(*counts.values()))
    rows.append(PrfRow.from_counts("All Classes", *total))
    return rows


def _gold_relation_triples(
    gold: list[RelationEdge], entities: list[EntitySpan]
) -> Counter:
    """Gold edges as (person span, target span, type) triples.

    Edges that do not pair exactly one Person with one non-Person can
    never be matched by a prediction; they stay in the gold multiset (as
    unmatchable sentinels) and so count as false negatives.
    """
    by_id = {e.id: e for e in entities}
    triples: Counter = Counter()
    for rel in gold:
        a, b = by_id.get(rel.arg1), by_id.get(rel.arg2)
        if a is None or b is None:
            triples[("dangling", rel.id)] += 1
            continue
        people = [e for e in (a, b) if e.etype is EntityType.PERSON]
        if len(people) != 1:
            triples[("untypable", rel.id)] += 1
            continue
        person = people[0]
        target = b if person is a else a
        triples[
            (person.start, person.end, target.start, target.end, rel.rtype)
        ] += 1
    return triples


def relation_counts(
    gold: list[RelationEdge], pred: list[Attachment], entities: list[EntitySpan]
) -> tuple[int, int, int]:
    """(tp, fp, fn); abstentions contribute only to fn."""
    gold_triples = _gold_relation_triples(gold, entities)
    pred_triples: Counter = Counter()
    for att in pred:
        if att.person is None:
            continue
        pred_triples[
            (
                att.person.start,
                att.person.end,
                att.target.start,
                att.target.end,
                att.rtype,
            )
        ] += 1
    tp = sum((gold_triples & pred_triples).values())
    return (
        tp,
        sum(pred_triples.values()) - tp,
        sum(gold_triples.values()) - tp,
    )


def score_relations(
    gold: list[RelationEdge], pred: list[Attachment], entities: list[EntitySpan]
) -> PrfRow:
    tp, fp, fn = relation_counts(gold, pred, entities)
    return PrfRow.from_counts("Relations", tp, fp, fn)


def verify_reference_metrics(tolerance: float = 0.005) -> list[str]:
    """Recompute P/R/F1 from the reference counts; list any mismatch."""
    problems = []
    for name, tp, fp, fn, p, r, f1 in REFERENCE_NER_ROWS + REFERENCE_RE_ROWS:
        row = PrfRow.from_counts(name, tp, fp, fn)
        for metric, computed, expected in (
            ("precision", row.precision, p),
            ("recall", row.recall, r),
            ("F1", row.f1, f1),
        ):
            if abs(computed - expected) > tolerance:
                problems.append(
                    f"{name}: {metric} {computed:.4f} differs from "
                    f"{expected} by more than {tolerance}"
                )
    return problems


def format_prf_table(rows: list[PrfRow], decimals: int = 2, label: str = "Class") -> str:
    headers = [label, "TP", "FP", "FN", "Precision", "Recall", "F1"]
    body = [
        [
            row.name,
            str(row.tp),
            str(row.fp),
            str(row.fn),
            f"{row.precision:.{decimals}f}",
            f"{row.recall:.{decimals}f}",
            f"{row.f1:.{decimals}f}",
        ]
        for row in rows
    ]
    widths = [
        max(len(h), *(len(r[i]) for r in body)) if body else len(h)
        for i, h in enumerate(headers)
    ]
    lines = [
        "  ".join(h.ljust(w) if i == 0 else h.rjust(w)
                  for i, (h, w) in enumerate(zip(headers, widths)))
    ]
    for r in body:
        lines.append(
            "  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                      for i, (c, w) in enumerate(zip(r, widths)))
        )
    return "\n".join(lines) + "\n"


def format_timing_table(rows: list[TimingRow]) -> str:
    reference = {name: (sec, params) for name, sec, params in REFERENCE_TIMINGS}
    headers = ["Component", "s/line", "ref s/line", "params", "ref params"]
    body = []
    for row in rows:
        ref_sec, ref_params = reference.get(row.component, (None, None))
        body.append(
            [
                row.component,
                f"{row.seconds_per_line:.6f}",
                f"{ref_sec:.4f}" if ref_sec is not None else "-",
                str(row.model_parameters) if row.model_parameters else "N/A",
                str(ref_params) if ref_params else "N/A",
            ]
        )
    widths = [max(len(h), *(len(r[i]) for r in body)) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) if i == 0 else h.rjust(w)
                       for i, (h, w) in enumerate(zip(headers, widths)))]
    for r in body:
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                               for i, (c, w) in enumerate(zip(r, widths))))
    return "\n".join(lines) + "\n"


def discard_outliers(values: list[float], spread: float = 3.0) -> list[float]:
    """Drop values beyond ``spread`` interquartile ranges from the quartiles."""
    if len(values) < 3:
        return list(values)
    q1, q3 = np.percentile(values, [25, 75])
    iqr = q3 - q1
    lo, hi = q1 - spread * iqr, q3 + spread * iqr
    kept = [v for v in values if lo <= v <= hi]
    return kept or list(values)


def bench_pipeline(
    entries: list[tuple[Document, list[DepTree]]],
    repetitions: int = 3,
    tagger_model=None,
    relnet_model=None,
    relnet_vocab=None,
    conllu_texts: dict[str, str] | None = None,
) -> list[TimingRow]:
    """Per-line wall times for the four pipeline components.

    Each repetition times every component over the whole corpus; means are
    taken after the outlier rule.  Setup (model training elsewhere) is
    never timed.  Line counts are sentences as segmented for extraction.
    """
    if repetitions < 3:
        raise ValueError("need at least 3 repetitions")
    from .corpus import parse_conllu
    from .tagger import predict_entities

    n_lines = max(
        1, sum(len(build_contexts(doc, trees)) for doc, trees in entries)
    )
    samples: dict[str, list[float]] = {
        "NER": [], "Dep. Parsing": [], "Shortest Dep. Path": [], "Neural Network": [],
    }
    for _ in range(repetitions):
        t0 = time.perf_counter()
        for doc, _ in entries:
            predict_entities(tagger_model, doc)
        samples["NER"].append((time.perf_counter() - t0) / n_lines)

        t0 = time.perf_counter()
        if conllu_texts:
            for doc, _ in entries:
                raw = conllu_texts.get(doc.doc_id)
                if raw:
                    for tree in parse_conllu(raw):
                        align_to_text(tree, doc.text)
        else:
            for doc, trees in entries:
                for tree in trees:
                    align_to_text(tree, doc.text)
        samples["Dep. Parsing"].append((time.perf_counter() - t0) / n_lines)

        t0 = time.perf_counter()
        for doc, trees in entries:
            extract_document(doc, trees, Strategy.SDP_CONSTRAINED)
        samples["Shortest Dep. Path"].append((time.perf_counter() - t0) / n_lines)

        t0 = time.perf_counter()
        if relnet_model is not None and relnet_vocab is not None:
            for doc, trees in entries:
                extract_document(
                    doc, trees, Strategy.NN_CONSTRAINED, relnet_model, relnet_vocab
                )
        samples["Neural Network"].append((time.perf_counter() - t0) / n_lines)

    tagger_params = (
        len(tagger_model.feature_weights) + len(tagger_model.transition_weights)
        if tagger_model is not None
        else None
    )
    relnet_params = relnet_model.param_count() if relnet_model is not None else None
    rows = []
    for component, params in (
        ("NER", tagger_params),
        ("Dep. Parsing", None),
        ("Shortest Dep. Path", None),
        ("Neural Network", relnet_params),
    ):
        kept = discard_outliers(samples[component])
        rows.append(TimingRow(component, sum(kept) / len(kept), params))
    return rows
