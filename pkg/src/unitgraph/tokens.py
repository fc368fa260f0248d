"""Sentence/token segmentation and the IOB tag codec.

The tokenizer is deliberately rule-based and deterministic: reproducible
offsets matter more here than linguistic perfection.  Sentences end at
``.``/``!``/``?`` followed by whitespace and a capital letter (guarded by
an abbreviation list), and at blank lines.  Punctuation is split from
words; hyphenated words stay whole; abbreviations and single-letter
initials keep their period.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .corpus import EntitySpan, EntityType
from .errors import DataError

log = logging.getLogger(__name__)

ABBREVIATIONS = (
    "Mrs.", "Mr.", "Dr.", "Gen.", "Maj.", "Lt.", "Col.", "Brig.",
    "Capt.", "Sgt.", "St.", "vs.",
)

_TOKEN_RE = re.compile(
    "|".join(re.escape(a) for a in ABBREVIATIONS)
    + r"|[A-Z]\."
    + r"|[A-Za-z0-9]+(?:[-'’][A-Za-z0-9]+)*"
    + r"|\S"
)

_GUARD_RE = re.compile(r"([A-Za-z]+\.)$")


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int
    sent_index: int
    tok_index: int


_LABELS = ("PER", "ORG", "RNK", "TTL")


@dataclass(frozen=True)
class IobTag:
    prefix: str  # "B", "I" or "O"
    label: str | None = None  # one of PER/ORG/RNK/TTL, None for O

    def __str__(self) -> str:
        return self.prefix if self.prefix == "O" else f"{self.prefix}-{self.label}"

    @classmethod
    def parse(cls, s: str) -> "IobTag":
        if s == "O":
            return O_TAG
        prefix, _, label = s.partition("-")
        if prefix not in ("B", "I") or label not in _LABELS:
            raise ValueError(f"bad IOB tag {s!r}")
        return cls(prefix, label)


O_TAG = IobTag("O")
TAGSET: tuple[IobTag, ...] = (O_TAG,) + tuple(
    IobTag(p, lab) for lab in _LABELS for p in ("B", "I")
)

ETYPE_TO_LABEL = {
    EntityType.PERSON: "PER",
    EntityType.ORGANIZATION: "ORG",
    EntityType.RANK: "RNK",
    EntityType.TITLE_ROLE: "TTL",
}
LABEL_TO_ETYPE = {v: k for k, v in ETYPE_TO_LABEL.items()}


def _guarded(text: str, dot: int) -> bool:
    """True when the period at ``dot`` ends an abbreviation or initial."""
    m = _GUARD_RE.search(text, max(0, dot - 12), dot + 1)
    if not m or m.end() != dot + 1:
        return False
    word = m.group(1)
    return word in ABBREVIATIONS or re.fullmatch(r"[A-Z]\.", word) is not None


def _sentence_spans(text: str) -> list[tuple[int, int]]:
    paragraphs = []
    pos = 0
    for m in re.finditer(r"\n[ \t]*\n", text):
        paragraphs.append((pos, m.start()))
        pos = m.end()
    paragraphs.append((pos, len(text)))

    spans = []
    for pstart, pend in paragraphs:
        sent_start = pstart
        i = pstart
        while i < pend:
            ch = text[i]
            if ch in ".!?":
                j = i + 1
                while j < pend and text[j] in ".!?":
                    j += 1
                k = j
                while k < pend and text[k].isspace():
                    k += 1
                boundary = k > j and k < pend and text[k].isupper()
                if boundary and ch == "." and j == i + 1 and _guarded(text, i):
                    boundary = False
                if boundary:
                    spans.append((sent_start, j))
                    sent_start = k
                i = j
            else:
                i += 1
        if sent_start < pend:
            spans.append((sent_start, pend))
    return [(s, e) for s, e in spans if text[s:e].strip()]


def tokenize(text: str) -> list[Token]:
    """Segment text into sentences and offset-bearing tokens."""
    tokens: list[Token] = []
    for sent_index, (start, end) in enumerate(_sentence_spans(text)):
        tok_index = 0
        for m in _TOKEN_RE.finditer(text, start, end):
            tokens.append(Token(m.group(), m.start(), m.end(), sent_index, tok_index))
            tok_index += 1
    return tokens


def sentences(tokens: list[Token]) -> list[list[Token]]:
    """Group a token stream by sentence index, preserving order."""
    out: list[list[Token]] = []
    for tok in tokens:
        if not out or out[-1][0].sent_index != tok.sent_index:
            out.append([])
        out[-1].append(tok)
    return out


def spans_to_iob(tokens: list[Token], entities: list[EntitySpan]) -> list[IobTag]:
    """Tag each token with B-X/I-X/O against a set of entity spans.

    Entity boundaries that cut a token are expanded outward to token
    boundaries with a warning; overlapping entities (after alignment) and
    entities covering no token are errors.
    """
    tags: list[IobTag] = [O_TAG] * len(tokens)
    claimed: dict[int, str] = {}
    for ent in sorted(entities, key=lambda e: (e.start, e.end)):
        idxs = [
            i for i, t in enumerate(tokens) if t.start < ent.end and t.end > ent.start
        ]
        if not idxs:
            raise DataError(
                f"entity {ent.id} {ent.surface!r} [{ent.start},{ent.end}) "
                "does not intersect any token"
            )
        for i in idxs:
            if i in claimed:
                raise DataError(
                    f"entities {claimed[i]} and {ent.id} overlap on token "
                    f"{tokens[i].text!r}"
                )
            claimed[i] = ent.id
        first, last = tokens[idxs[0]], tokens[idxs[-1]]
        if first.start < ent.start or last.end > ent.end:
            log.warning(
                "entity %s [%d,%d) expanded to token boundaries [%d,%d)",
                ent.id, ent.start, ent.end, first.start, last.end,
            )
        label = ETYPE_TO_LABEL[ent.etype]
        tags[idxs[0]] = IobTag("B", label)
        for i in idxs[1:]:
            tags[i] = IobTag("I", label)
    return tags


def iob_to_spans(
    tokens: list[Token],
    tags: list[IobTag],
    text: str | None = None,
    first_id: int = 1,
) -> list[EntitySpan]:
    """Decode a tag sequence back into entity spans.

    Stray ``I-X`` (sentence-initial, after O, or after a different label)
    opens a new span, the usual CoNLL repair.  Surfaces are sliced from
    ``text`` when given, otherwise rebuilt from token texts and gaps.
    """
    if len(tokens) != len(tags):
        raise DataError(f"{len(tokens)} tokens vs {len(tags)} tags")
    spans: list[EntitySpan] = []
    run: list[int] = []
    run_label: str | None = None

    def close() -> None:
        nonlocal run, run_label
        if not run:
            return
        start = tokens[run[0]].start
        end = tokens[run[-1]].end
        if text is not None:
            surface = text[start:end]
        else:
            parts = [tokens[run[0]].text]
            for prev, cur in zip(run, run[1:]):
                gap = tokens[cur].start - tokens[prev].end
                parts.append(" " * gap + tokens[cur].text)
            surface = "".join(parts)
        spans.append(
            EntitySpan(
                f"T{first_id + len(spans)}",
                LABEL_TO_ETYPE[run_label],
                start,
                end,
                surface,
            )
        )
        run, run_label = [], None

    for i, (tok, tag) in enumerate(zip(tokens, tags)):
        new_sentence = i > 0 and tokens[i - 1].sent_index != tok.sent_index
        if tag.prefix == "O":
            close()
            continue
        continues = (
            tag.prefix == "I"
            and run
            and run_label == tag.label
            and not new_sentence
        )
        if not continues:
            close()
            run_label = tag.label
        run.append(i)
    close()
    return spans


def valid_transition(prev: IobTag, nxt: IobTag) -> bool:
    """May ``nxt`` follow ``prev``?  Sentence-initial positions pass O.

    An I-X tag is only reachable from B-X or I-X of the same label.
    """
    if nxt.prefix != "I":
        return True
    return prev.prefix in ("B", "I") and prev.label == nxt.label


def format_iob_block(tokens: list[Token], tags: list[IobTag], width: int = 58) -> str:
    """Two-row token/tag rendering, wrapped into blocks."""
    lines = []
    i = 0
    while i < len(tokens):
        row_toks: list[str] = []
        row_tags: list[str] = []
        used = 0
        while i < len(tokens):
            cell = max(len(tokens[i].text), len(str(tags[i])))
            if row_toks and used + cell + 1 > width:
                break
            row_toks.append(tokens[i].text.ljust(cell))
            row_tags.append(str(tags[i]).ljust(cell))
            used += cell + 1
            i += 1
        lines.append(" ".join(row_toks).rstrip())
        lines.append(" ".join(row_tags).rstrip())
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"
