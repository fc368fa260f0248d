import logging
from pathlib import Path

import pytest

from unitgraph.corpus import load_corpus

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS_DIR = FIXTURES / "corpus"
GAZETTEERS = FIXTURES / "gazetteers"

# Raw text laid out so the annotation block below lands on its published
# offsets (GOC at 35..38, Officer Commanding at 52..70, and so on).
EXAMPLE_TEXT = (
    "Boko Haram: Army assures on safety\n"
    "GOC, the General Officer Commanding 3 Armoured Division of the "
    "Nigerian Army, Major General Jack Nwaogbo, has again re-assured "
    "Nigerians that the Boko Haram insurgency would soon be contained.\n"
)

# Verbatim annotation block for the sentence above, including its two
# schema-inconsistent relations (kept as-is on load, only flagged).
EXAMPLE_ANN = (
    "T1\tTitle_Role 35 38\tGOC\n"
    "T2\tTitle_Role 52 70\tOfficer Commanding\n"
    "T3\tOrganization 71 90\t3 Armoured Division\n"
    "T4\tOrganization 98 111\tNigerian Army\n"
    "R1 has_rank Arg1:T1 Arg2:T2\t\n"
    "R2 is_posted Arg1:T1 Arg2:T3\t\n"
    "R3 has_title Arg1:T1 Arg2:T4\t\n"
)

# The annotated example sentence on its own (tokenization/IOB fixture).
EXAMPLE_SENTENCE = (
    "General Officer Commanding 3 Armoured Division of the Nigerian Army, "
    "Major General Jack Nwaogbo, has again re-assured Nigerians that the "
    "Boko Haram insurgency would soon be contained."
)

DOC_VANGUARD = "3f8a12bc-90de-4f61-8a2b-5c7e94d0a113"
DOC_ADEOSUN = "7b4c55e0-1a2f-4d3c-9e8b-0f6a7c2d4e85"
DOC_LOGISTICS = "a95d77f2-63b8-4c04-b1de-2f90c3a6b7c1"
DOC_GOVERNOR = "c2e94b08-5f17-4a6d-8c3b-91d0e4f2a5b6"
DOC_CEREMONY = "e610f3a9-8d2c-4b75-a0e1-7c4f92b8d3e2"


@pytest.fixture(autouse=True)
def _quiet_warnings(caplog):
    caplog.set_level(logging.ERROR)
    yield


@pytest.fixture(scope="session")
def corpus_entries():
    return load_corpus(CORPUS_DIR)


@pytest.fixture(scope="session")
def corpus_by_id(corpus_entries):
    return {doc.doc_id: (doc, trees) for doc, trees in corpus_entries}
