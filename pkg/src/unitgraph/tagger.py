"""Discrete-feature sequence tagger with constrained Viterbi decoding.

An averaged perceptron over hand-built token features stands in for a
neural encoder; joint decoding enforces the IOB transition rules (an
``I-X`` can only follow ``B-X``/``I-X``), so the output is always a valid
tag sequence.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Document, EntitySpan
from .tokens import (
    IobTag,
    O_TAG,
    TAGSET,
    Token,
    iob_to_spans,
    sentences,
    tokenize,
    valid_transition,
)

log = logging.getLogger(__name__)

NEG_INF = float("-inf")
START = "<start>"  # sentinel previous-tag key; validity-wise it acts like O

MODEL_MAGIC = "unitgraph-tagger 1"


@dataclass(frozen=True)
class Gazetteers:
    """Case-insensitive phrase lists that fire lexicon features."""

    organizations: frozenset[str] = frozenset()
    ranks: frozenset[str] = frozenset()

    @classmethod
    def from_files(cls, org_path=None, rank_path=None) -> "Gazetteers":
        def read(path):
            if path is None:
                return frozenset()
            lines = Path(path).read_text(encoding="utf-8").splitlines()
            return frozenset(line.strip().lower() for line in lines if line.strip())

        return cls(read(org_path), read(rank_path))

    def max_words(self) -> int:
        longest = 1
        for phrase in self.organizations | self.ranks:
            longest = max(longest, phrase.count(" ") + 1)
        return longest


def rank_lexicon(docs: list[Document]) -> frozenset[str]:
    """Compile a rank lexicon from the gold Rank spans of training docs."""
    from .corpus import EntityType

    ranks = set()
    for doc in docs:
        for ent in doc.entities:
            if ent.etype is EntityType.RANK:
                ranks.add(ent.surface.lower())
    return frozenset(ranks)


def _shape(word: str) -> str:
    out = []
    for ch in word:
        if ch.isupper():
            out.append("X")
        elif ch.islower():
            out.append("x")
        elif ch.isdigit():
            out.append("d")
        else:
            out.append(ch)
    return "".join(out)


def _phrase_hits(tokens: list[Token], i: int, phrases: frozenset[str], span: int) -> bool:
    for width in range(1, span + 1):
        for offset in range(width):
            lo = i - offset
            if lo < 0 or lo + width > len(tokens):
                continue
            phrase = " ".join(t.text.lower() for t in tokens[lo:lo + width])
            if phrase in phrases:
                return True
    return False


def featurize_token(tokens: list[Token], i: int, gazetteers: Gazetteers | None = None) -> list[str]:
    """Deterministic discrete features for one token in context."""
    tok = tokens[i]
    word = tok.text
    lower = word.lower()
    feats = [
        f"w={lower}",
        f"shape={_shape(word)}",
        f"pre3={lower[:3]}",
        f"suf3={lower[-3:]}",
    ]
    if word[:1].isupper():
        feats.append("cap")
    feats.append(f"prev={tokens[i - 1].text.lower()}" if i > 0 else "prev=<s>")
    feats.append(
        f"next={tokens[i + 1].text.lower()}" if i + 1 < len(tokens) else "next=</s>"
    )
    if gazetteers is not None:
        span = gazetteers.max_words()
        if gazetteers.organizations and _phrase_hits(tokens, i, gazetteers.organizations, span):
            feats.append("org-lex")
        if gazetteers.ranks and _phrase_hits(tokens, i, gazetteers.ranks, span):
            feats.append("rank-lex")
    return feats


@dataclass
class TaggerModel:
    """Feature and transition weights over the 9-tag IOB set.

    Invalid transitions are never stored; they score minus infinity at
    decode time and so are never selected.
    """

    feature_weights: dict[tuple[str, str], float] = field(default_factory=dict)
    transition_weights: dict[tuple[str, str], float] = field(default_factory=dict)
    gazetteers: Gazetteers = field(default_factory=Gazetteers)
    meta: dict = field(default_factory=dict)

    tagset: tuple[IobTag, ...] = TAGSET

    def transition(self, prev: str, nxt_tag: IobTag) -> float:
        prev_tag = O_TAG if prev == START else IobTag.parse(prev)
        if not valid_transition(prev_tag, nxt_tag):
            return NEG_INF
        return self.transition_weights.get((prev, str(nxt_tag)), 0.0)


def viterbi_decode(model: TaggerModel, tokens: list[Token]) -> list[IobTag]:
    """Argmax tag sequence under emission + transition scores.

    Ties resolve to the lowest tagset index, so a zero model decodes to
    all O.
    """
    if not tokens:
        return []
    tags = model.tagset
    n, m = len(tokens), len(tags)
    feats = [featurize_token(tokens, i, model.gazetteers) for i in range(n)]
    emit = [
        [
            sum(model.feature_weights.get((f, str(tag)), 0.0) for f in feats[i])
            for tag in tags
        ]
        for i in range(n)
    ]
    score = [[NEG_INF] * m for _ in range(n)]
    back = [[0] * m for _ in range(n)]
    for t in range(m):
        score[0][t] = emit[0][t] + model.transition(START, tags[t])
    for i in range(1, n):
        for t in range(m):
            best_prev, best_score = 0, NEG_INF
            for p in range(m):
                if score[i - 1][p] == NEG_INF:
                    continue
                s = score[i - 1][p] + model.transition(str(tags[p]), tags[t])
                if s > best_score:
                    best_prev, best_score = p, s
            score[i][t] = best_score + emit[i][t] if best_score != NEG_INF else NEG_INF
            back[i][t] = best_prev
    last = max(range(m), key=lambda t: (score[n - 1][t], -t))
    path = [last]
    for i in range(n - 1, 0, -1):
        path.append(back[i][path[-1]])
    path.reverse()
    return [tags[t] for t in path]


def train_tagger(
    corpus: list[tuple[list[Token], list[IobTag]]],
    epochs: int = 5,
    seed: int = 13,
    gazetteers: Gazetteers | None = None,
) -> TaggerModel:
    """Averaged-perceptron training against Viterbi predictions.

    Deterministic for a fixed seed: the sentence order is reshuffled per
    epoch from a seeded RNG and weight averaging uses exact counters.
    """
    if not corpus:
        raise ValueError("empty training corpus")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    model = TaggerModel(gazetteers=gazetteers or Gazetteers())
    # model.*_weights are mutated in place so Viterbi always sees the
    # current weights; totals/stamps implement lazy averaging.
    tables = {"F": model.feature_weights, "T": model.transition_weights}
    totals: dict[tuple, float] = {}
    stamps: dict[tuple, int] = {}
    now = 0

    def bump(kind: str, key: tuple[str, str], delta: float) -> None:
        table = tables[kind]
        full = (kind,) + key
        totals[full] = totals.get(full, 0.0) + table.get(key, 0.0) * (
            now - stamps.get(full, 0)
        )
        stamps[full] = now
        table[key] = table.get(key, 0.0) + delta

    def apply(tokens: list[Token], tags: list[IobTag], delta: float) -> None:
        prev = START
        for i, tag in enumerate(tags):
            for f in featurize_token(tokens, i, model.gazetteers):
                bump("F", (f, str(tag)), delta)
            bump("T", (prev, str(tag)), delta)
            prev = str(tag)

    rng = random.Random(seed)
    order = list(range(len(corpus)))
    for epoch in range(epochs):
        rng.shuffle(order)
        exact = 0
        for si in order:
            tokens, gold = corpus[si]
            pred = viterbi_decode(model, tokens)
            now += 1
            if pred == gold:
                exact += 1
                continue
            apply(tokens, gold, +1.0)
            apply(tokens, pred, -1.0)
        log.info("tagger epoch %d: %d/%d sentences decoded exactly",
                 epoch + 1, exact, len(corpus))

    denom = max(now, 1)
    for kind, table in tables.items():
        averaged = {}
        for key, w in table.items():
            full = (kind,) + key
            total = totals.get(full, 0.0) + w * (now - stamps.get(full, 0))
            if total != 0.0:
                averaged[key] = total / denom
        table.clear()
        table.update(averaged)
    model.meta = {"seed": seed, "epochs": epochs, "sentences": len(corpus)}
    return model


def predict_entities(model: TaggerModel | None, doc: Document) -> list[EntitySpan]:
    """Entity spans for a document: gold pass-through or decoded spans.

    ``model=None`` is gold mode and returns ``doc.entities`` unchanged.
    """
    if model is None:
        return list(doc.entities)
    out: list[EntitySpan] = []
    for sent in sentences(tokenize(doc.text)):
        tags = viterbi_decode(model, sent)
        out.extend(iob_to_spans(sent, tags, text=doc.text, first_id=len(out) + 1))
    return out


def save_tagger(model: TaggerModel, path) -> None:
    """Sorted key->weight text format; reruns with one seed diff clean."""
    lines = [MODEL_MAGIC]
    for key in sorted(model.meta):
        lines.append(f"meta\t{key}\t{model.meta[key]}")
    for phrase in sorted(model.gazetteers.organizations):
        lines.append(f"gaz-org\t{phrase}")
    for phrase in sorted(model.gazetteers.ranks):
        lines.append(f"gaz-rank\t{phrase}")
    for (feat, tag), w in sorted(model.feature_weights.items()):
        lines.append(f"F\t{feat}\t{tag}\t{w!r}")
    for (prev, nxt), w in sorted(model.transition_weights.items()):
        lines.append(f"T\t{prev}\t{nxt}\t{w!r}")
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_tagger(path) -> TaggerModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a tagger model file")
    feature_weights: dict[tuple[str, str], float] = {}
    transition_weights: dict[tuple[str, str], float] = {}
    orgs, ranks = set(), set()
    meta: dict = {}
    for line in lines[1:]:
        kind, _, rest = line.partition("\t")
        if kind == "meta":
            key, _, value = rest.partition("\t")
            meta[key] = int(value) if value.lstrip("-").isdigit() else value
        elif kind == "gaz-org":
            orgs.add(rest)
        elif kind == "gaz-rank":
            ranks.add(rest)
        elif kind == "F":
            feat, tag, w = rest.rsplit("\t", 2)
            feature_weights[(feat, tag)] = float(w)
        elif kind == "T":
            prev, nxt, w = rest.split("\t")
            transition_weights[(prev, nxt)] = float(w)
        else:
            raise ValueError(f"{path}: unknown record {kind!r}")
    return TaggerModel(
        feature_weights,
        transition_weights,
        Gazetteers(frozenset(orgs), frozenset(ranks)),
        meta,
    )
