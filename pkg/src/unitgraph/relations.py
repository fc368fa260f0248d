"""Attach non-Person entities to Persons within a sentence.

Three strategy families: nearest person by surface order, shortest
dependency path (free or constrained to the two flanking Persons), and
the trainable relation network (which alone may abstain).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

from .corpus import Document, EntitySpan, EntityType, RelationType, SCHEMA_RELATION
from .deptree import DepTree, align_to_text, span_path
from .errors import MissingParseError
from .tokens import Token, sentences, tokenize

log = logging.getLogger(__name__)


class Strategy(Enum):
    NEAREST_PERSON = "nearest-person"
    SDP_FREE = "sdp-free"
    SDP_CONSTRAINED = "sdp-constrained"
    NN_FREE = "nn-free"
    NN_CONSTRAINED = "nn-constrained"


SDP_STRATEGIES = (Strategy.SDP_FREE, Strategy.SDP_CONSTRAINED)
NN_STRATEGIES = (Strategy.NN_FREE, Strategy.NN_CONSTRAINED)


@dataclass
class SentenceContext:
    """One sentence's entities, tokens and (optional) dependency tree."""

    tokens: list[Token]
    tree: DepTree | None
    persons: list[EntitySpan]  # sorted by start offset
    targets: list[EntitySpan]  # non-Person entities, sorted by start
    extent: tuple[int, int]
    tree_spans: list[tuple[int, int] | None] = field(default_factory=list)

    def tree_tokens(self, span: EntitySpan) -> set[int]:
        """Tree token indices whose aligned text overlaps the span."""
        return {
            i
            for i, s in enumerate(self.tree_spans)
            if s is not None and s[0] < span.end and s[1] > span.start
        }


@dataclass(frozen=True)
class Attachment:
    """A predicted edge from a non-Person entity to a Person.

    ``person`` is None when the strategy abstained (relation-network
    strategies only); the edge type is always determined by the target's
    entity class.
    """

    target: EntitySpan
    person: EntitySpan | None
    rtype: RelationType
    strategy: Strategy


def type_map(etype: EntityType) -> RelationType:
    """Organization -> is_posted, Rank -> has_rank, TitleRole -> has_title_role."""
    if etype is EntityType.PERSON:
        raise ValueError("Person entities are relation subjects, not targets")
    return SCHEMA_RELATION[etype]


def _char_distance(a: EntitySpan, b: EntitySpan) -> int:
    return max(0, max(a.start, b.start) - min(a.end, b.end))


def nearest_person(ctx: SentenceContext, target: EntitySpan) -> Attachment:
    """Attach to the first Person to the right, else the nearest Person.

    "Right" means starting at or after the target's end; the fallback
    minimizes character distance with ties going to the leftmost Person.
    """
    if not ctx.persons:
        raise ValueError("sentence has no Person entities")
    right = [p for p in ctx.persons if p.start >= target.end]
    if right:
        person = right[0]
    else:
        person = min(ctx.persons, key=lambda p: (_char_distance(p, target), p.start))
    return Attachment(target, person, type_map(target.etype), Strategy.NEAREST_PERSON)


def flanking_persons(
    ctx: SentenceContext, target: EntitySpan
) -> tuple[EntitySpan | None, EntitySpan | None]:
    """The nearest Persons starting before and after the target."""
    left = [p for p in ctx.persons if p.start < target.start]
    right = [p for p in ctx.persons if p.start > target.start]
    return (left[-1] if left else None, right[0] if right else None)


def _sdp_best(
    ctx: SentenceContext, target: EntitySpan, candidates: list[EntitySpan]
) -> EntitySpan | None:
    """Person with the shortest span path; ties by char distance, then left."""
    target_toks = ctx.tree_tokens(target)
    if not target_toks:
        return None
    scored = []
    for p in candidates:
        p_toks = ctx.tree_tokens(p)
        if not p_toks:
            continue
        path = span_path(ctx.tree, target_toks, p_toks)
        scored.append((path.length, _char_distance(p, target), p.start, p))
    if not scored:
        return None
    return min(scored)[3]


def sdp_attach(ctx: SentenceContext, target: EntitySpan, constrained: bool) -> Attachment:
    """Shortest-dependency-path attachment; never abstains.

    Unconstrained mode searches all Persons in the sentence; constrained
    mode only the two flanking Persons (whichever exist).
    """
    if ctx.tree is None:
        raise MissingParseError("sentence has no dependency tree")
    if not ctx.persons:
        raise ValueError("sentence has no Person entities")
    if constrained:
        left, right = flanking_persons(ctx, target)
        candidates = [p for p in (left, right) if p is not None]
    else:
        candidates = list(ctx.persons)
    best = _sdp_best(ctx, target, candidates)
    if best is None:
        raise MissingParseError(
            f"no aligned tree tokens for {target.id} or its candidate Persons"
        )
    strategy = Strategy.SDP_CONSTRAINED if constrained else Strategy.SDP_FREE
    return Attachment(target, best, type_map(target.etype), strategy)


def _context_from_tree(doc: Document, tree: DepTree, cursor: int) -> tuple[SentenceContext, int]:
    spans = align_to_text(tree, doc.text, cursor)
    aligned = [s for s in spans if s is not None]
    if aligned:
        extent = (min(s for s, _ in aligned), max(e for _, e in aligned))
        cursor = extent[1]
    else:
        extent = (cursor, cursor)
    tokens = [
        Token(form, s[0], s[1], tree.sent_index, i)
        for i, (form, s) in enumerate(zip(tree.forms, spans))
        if s is not None
    ]
    ctx = SentenceContext(
        tokens=tokens,
        tree=tree,
        persons=[],
        targets=[],
        extent=extent,
        tree_spans=spans,
    )
    return ctx, cursor


def build_contexts(doc: Document, trees: list[DepTree]) -> list[SentenceContext]:
    """Sentence contexts with entities assigned by character overlap.

    Sentence extents come from the aligned dependency trees when parses
    exist, otherwise from the rule-based tokenizer.
    """
    contexts: list[SentenceContext] = []
    if trees:
        cursor = 0
        for tree in trees:
            ctx, cursor = _context_from_tree(doc, tree, cursor)
            contexts.append(ctx)
    else:
        for sent in sentences(tokenize(doc.text)):
            contexts.append(
                SentenceContext(
                    tokens=sent,
                    tree=None,
                    persons=[],
                    targets=[],
                    extent=(sent[0].start, sent[-1].end),
                )
            )

    dropped = 0
    for ent in sorted(doc.entities, key=lambda e: (e.start, e.end)):
        home = None
        for ctx in contexts:
            lo, hi = ctx.extent
            if ent.start < hi and ent.end > lo:
                home = ctx
                break
        if home is None:
            dropped += 1
            continue
        if ent.etype is EntityType.PERSON:
            home.persons.append(ent)
        else:
            home.targets.append(ent)
    if dropped:
        log.warning("%s: %d entities fall outside every sentence extent",
                    doc.doc_id or "<doc>", dropped)
    return contexts


def extract_document(
    doc: Document,
    trees: list[DepTree],
    strategy: Strategy,
    model=None,
    vocab=None,
    fallback: bool = True,
) -> list[Attachment]:
    """One attachment attempt per non-Person entity of the document.

    Entities in sentences with no Person yield nothing.  When a sentence
    lacks a usable parse, dependency strategies either fall back to
    nearest-person (default) or skip the sentence (``fallback=False``).
    """
    if strategy in NN_STRATEGIES and (model is None or vocab is None):
        raise ValueError(f"strategy {strategy.value} requires a relation-network "
                         "model and pattern vocabulary")
    if strategy in NN_STRATEGIES:
        from . import relnet  # local import keeps module dependencies one-way

    out: list[Attachment] = []
    for ctx in build_contexts(doc, trees):
        for target in ctx.targets:
            if not ctx.persons:
                continue
            try:
                if strategy is Strategy.NEAREST_PERSON:
                    att = nearest_person(ctx, target)
                elif strategy in SDP_STRATEGIES:
                    att = sdp_attach(ctx, target, strategy is Strategy.SDP_CONSTRAINED)
                else:
                    att = relnet.predict_person(model, ctx, target, vocab)
            except MissingParseError:
                if not fallback:
                    continue
                att = nearest_person(ctx, target)
            out.append(att)
    return out


def gold_pairs(
    doc: Document, contexts: list[SentenceContext]
) -> tuple[list[tuple[SentenceContext, EntitySpan, EntitySpan]], int]:
    """(context, target, gold Person) triples for same-sentence gold edges.

    Returns the triples plus the count of gold edges whose Person and
    target live in different sentences (unlearnable and unreachable for
    every strategy here; they score as misses).
    """
    by_id = {e.id: e for e in doc.entities}
    home: dict[str, int] = {}
    for i, ctx in enumerate(contexts):
        for ent in ctx.persons + ctx.targets:
            home[ent.id] = i
    pairs = []
    cross = 0
    for rel in doc.relations:
        a, b = by_id.get(rel.arg1), by_id.get(rel.arg2)
        if a is None or b is None:
            continue
        people = [e for e in (a, b) if e.etype is EntityType.PERSON]
        if len(people) != 1:
            continue  # schema-flagged edge; not a person/target pair
        person = people[0]
        target = b if person is a else a
        if person.id not in home or target.id not in home:
            cross += 1
            continue
        if home[person.id] != home[target.id]:
            cross += 1
            continue
        pairs.append((contexts[home[target.id]], target, person))
    return pairs, cross
