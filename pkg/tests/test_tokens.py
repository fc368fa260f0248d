import logging
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unitgraph.corpus import EntitySpan, EntityType
from unitgraph.errors import DataError
from unitgraph.tokens import (
    IobTag,
    O_TAG,
    TAGSET,
    iob_to_spans,
    sentences,
    spans_to_iob,
    tokenize,
    valid_transition,
)

from conftest import EXAMPLE_SENTENCE


def tag_strings(tags):
    return [str(t) for t in tags]


def spans_of(text, *surface_type_pairs):
    """Entity spans located by first occurrence of each surface string."""
    out = []
    cursor = {}
    for i, (surface, etype) in enumerate(surface_type_pairs, start=1):
        start = text.index(surface, cursor.get(surface, 0))
        cursor[surface] = start + 1
        out.append(EntitySpan(f"T{i}", etype, start, start + len(surface), surface))
    return out


class TestTokenize:
    def test_abbreviations_do_not_split_sentence(self):
        toks = tokenize("Maj. Gen. Jack Nwaogbo said.")
        assert [t.text for t in toks] == ["Maj.", "Gen.", "Jack", "Nwaogbo", "said", "."]
        assert {t.sent_index for t in toks} == {0}

    def test_empty_text(self):
        assert tokenize("") == []

    def test_hyphenated_word_stays_whole(self):
        assert [t.text for t in tokenize("re-assured")] == ["re-assured"]

    def test_sentence_split_on_period_whitespace_capital(self):
        toks = tokenize("The unit moved. Then it stopped.")
        assert len(sentences(toks)) == 2

    def test_no_split_before_lowercase(self):
        toks = tokenize("The unit moved. and waited.")
        assert len(sentences(toks)) == 1

    def test_blank_line_is_a_boundary(self):
        toks = tokenize("A headline without punctuation\n\nThe story starts here.")
        assert len(sentences(toks)) == 2

    def test_initials_guarded(self):
        toks = tokenize("Col. M. T. Ibrahim spoke. Nobody answered.")
        sents = sentences(toks)
        assert len(sents) == 2
        assert [t.text for t in sents[0]][:4] == ["Col.", "M.", "T.", "Ibrahim"]

    def test_offsets_slice_text(self):
        text = "Maj. Gen. Jack Nwaogbo re-assured everyone."
        for tok in tokenize(text):
            assert text[tok.start:tok.end] == tok.text

    def test_gaps_between_tokens_are_whitespace(self, corpus_entries):
        for doc, _ in corpus_entries:
            for sent in sentences(tokenize(doc.text)):
                for prev, cur in zip(sent, sent[1:]):
                    assert doc.text[prev.end:cur.start].strip() == ""


class TestSpansToIob:
    def gold_entities(self):
        return spans_of(
            EXAMPLE_SENTENCE,
            ("General Officer Commanding", EntityType.TITLE_ROLE),
            ("3 Armoured Division of the Nigerian Army", EntityType.ORGANIZATION),
            ("Major General", EntityType.RANK),
            ("Jack Nwaogbo", EntityType.PERSON),
        )

    def test_example_sentence_tags(self):
        toks = tokenize(EXAMPLE_SENTENCE)
        tags = tag_strings(spans_to_iob(toks, self.gold_entities()))
        assert tags == [
            "B-TTL", "I-TTL", "I-TTL",
            "B-ORG", "I-ORG", "I-ORG", "I-ORG", "I-ORG", "I-ORG", "I-ORG",
            "O",
            "B-RNK", "I-RNK",
            "B-PER", "I-PER",
            "O", "O", "O", "O", "O", "O", "O", "O", "O", "O", "O", "O", "O",
            "O", "O",
        ]

    def test_no_entities_all_o(self):
        toks = tokenize(EXAMPLE_SENTENCE)
        assert spans_to_iob(toks, []) == [O_TAG] * len(toks)

    def test_mid_token_boundary_expands_with_warning(self, caplog):
        caplog.set_level(logging.WARNING)
        text = "General Nwaogbo spoke."
        toks = tokenize(text)
        whole = EntitySpan("T1", EntityType.PERSON, 8, 15, "Nwaogbo")
        clipped = EntitySpan("T1", EntityType.PERSON, 10, 13, "aog")
        assert spans_to_iob(toks, [clipped]) == spans_to_iob(toks, [whole])
        assert any("expanded" in rec.message for rec in caplog.records)

    def test_entity_outside_tokens_is_error(self):
        toks = tokenize("General Nwaogbo spoke.")
        ghost = EntitySpan("T9", EntityType.PERSON, 100, 110, "nobody")
        with pytest.raises(DataError, match="T9"):
            spans_to_iob(toks, [ghost])

    def test_overlapping_entities_rejected(self):
        text = "Major General Nwaogbo"
        toks = tokenize(text)
        a = EntitySpan("T1", EntityType.RANK, 0, 13, "Major General")
        b = EntitySpan("T2", EntityType.PERSON, 6, 21, "General Nwaogbo")
        with pytest.raises(DataError, match="overlap"):
            spans_to_iob(toks, [a, b])


class TestIobToSpans:
    def test_example_sentence_round_trip(self):
        toks = tokenize(EXAMPLE_SENTENCE)
        gold = TestSpansToIob().gold_entities()
        tags = spans_to_iob(toks, gold)
        decoded = iob_to_spans(toks, tags, text=EXAMPLE_SENTENCE)
        assert [(e.start, e.end, e.etype, e.surface) for e in decoded] == [
            (e.start, e.end, e.etype, e.surface) for e in gold
        ]

    def test_all_o(self):
        toks = tokenize("Nothing here.")
        assert iob_to_spans(toks, [O_TAG] * len(toks)) == []

    def test_stray_inside_tag_repaired_to_begin(self):
        toks = tokenize("meeting Nigerian Army")
        tags = [O_TAG, IobTag("I", "ORG"), IobTag("I", "ORG")]
        spans = iob_to_spans(toks, tags, text="meeting Nigerian Army")
        assert len(spans) == 1
        assert spans[0].etype is EntityType.ORGANIZATION
        assert spans[0].surface == "Nigerian Army"

    def test_length_mismatch(self):
        toks = tokenize("a b")
        with pytest.raises(DataError, match="tokens vs"):
            iob_to_spans(toks, [O_TAG])

    def test_label_change_without_b_starts_new_span(self):
        toks = tokenize("General Nwaogbo")
        tags = [IobTag("I", "RNK"), IobTag("I", "PER")]
        spans = iob_to_spans(toks, tags)
        assert [e.etype for e in spans] == [EntityType.RANK, EntityType.PERSON]


class TestValidTransition:
    def test_inside_cannot_follow_other_label(self):
        assert not valid_transition(IobTag("I", "PER"), IobTag("I", "ORG"))

    def test_inside_follows_begin(self):
        assert valid_transition(IobTag("B", "ORG"), IobTag("I", "ORG"))

    def test_inside_cannot_open(self):
        assert not valid_transition(O_TAG, IobTag("I", "RNK"))

    def test_begin_and_o_always_allowed(self):
        for prev in TAGSET:
            assert valid_transition(prev, O_TAG)
            assert valid_transition(prev, IobTag("B", "PER"))


def random_layout(rng, n_tokens):
    """Synthetic sentence text, tokens and non-overlapping entities."""
    words = [f"w{i}x" for i in range(n_tokens)]
    text = " ".join(words)
    toks = tokenize(text)
    assert len(toks) == n_tokens
    entities = []
    i = 0
    tid = 1
    while i < n_tokens:
        if rng.random() < 0.4:
            width = min(rng.randint(1, 3), n_tokens - i)
            start = toks[i].start
            end = toks[i + width - 1].end
            etype = rng.choice(list(EntityType))
            entities.append(
                EntitySpan(f"T{tid}", etype, start, end, text[start:end])
            )
            tid += 1
            i += width
        else:
            i += 1
    return text, toks, entities


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 16))
@settings(max_examples=120, deadline=None)
def test_round_trip_property(seed, n_tokens):
    rng = random.Random(seed)
    text, toks, entities = random_layout(rng, n_tokens)
    tags = spans_to_iob(toks, entities)
    decoded = iob_to_spans(toks, tags, text=text)
    assert [(e.start, e.end, e.etype, e.surface) for e in decoded] == [
        (e.start, e.end, e.etype, e.surface) for e in entities
    ]


@given(st.lists(st.sampled_from([str(t) for t in TAGSET]), min_size=1, max_size=12))
@settings(max_examples=150, deadline=None)
def test_decode_then_encode_is_transition_valid(tag_names):
    text = " ".join(f"w{i}" for i in range(len(tag_names)))
    toks = tokenize(text)
    tags = [IobTag.parse(s) for s in tag_names]
    spans = iob_to_spans(toks, tags, text=text)
    repaired = spans_to_iob(toks, spans)
    prev = O_TAG
    for tag in repaired:
        assert valid_transition(prev, tag)
        prev = tag
