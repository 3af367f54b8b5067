"""Golden-corpus, round-trip, and robustness tests for the quiz parser."""

import json
import random
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arabiq.core import SkillTag, new_ulid
from arabiq.quizparse import (
    CORRECT_TEXT_MISMATCH,
    NO_QUESTIONS,
    InvalidQuiz,
    ParseOutcome,
    parse_quiz_block,
    serialize_quiz,
    strip_bidi_controls,
)
from conftest import REFERENCE_QUIZ_TEXT, make_quiz

CORPUS_DIR = Path(__file__).parent / "testdata" / "quiz_blocks"
CORPUS_NAMES = sorted(p.stem for p in CORPUS_DIR.glob("*.txt"))


def outcome_to_comparable(outcome: ParseOutcome) -> dict:
    return {
        "quizzes": [q.to_dict() for q in outcome.quizzes],
        "diagnostic_codes": sorted(outcome.codes()),
    }


@pytest.mark.parametrize("name", CORPUS_NAMES)
def test_golden_corpus(name):
    raw = (CORPUS_DIR / f"{name}.txt").read_text(encoding="utf-8")
    expected = json.loads((CORPUS_DIR / f"{name}.json").read_text(encoding="utf-8"))
    got = outcome_to_comparable(parse_quiz_block(raw))
    expected["diagnostic_codes"] = sorted(expected["diagnostic_codes"])
    assert got == expected, f"corpus file {name} parsed differently"


def test_reference_sample_details():
    outcome = parse_quiz_block(REFERENCE_QUIZ_TEXT)
    assert len(outcome.quizzes) == 2
    assert not outcome.diagnostics
    first = outcome.quizzes[0]
    assert first.declared_correct == "a"
    assert first.options[0].text_ar == "يَكْتُبُ"
    assert [q.ordinal for q in outcome.quizzes] == [1, 2]


def test_empty_input_no_questions():
    outcome = parse_quiz_block("")
    assert outcome.quizzes == ()
    assert outcome.codes() == [NO_QUESTIONS]


def test_mismatch_still_emits_quiz():
    mutated = REFERENCE_QUIZ_TEXT.splitlines()[0].replace("Correct answer: a) يَكْتُبُ", "Correct answer: a) يَجْلِسُ")
    outcome = parse_quiz_block(mutated)
    assert len(outcome.quizzes) == 1
    assert outcome.codes() == [CORRECT_TEXT_MISMATCH]
    assert outcome.quizzes[0].declared_correct_text == "يَجْلِسُ"


def test_order_preserved_by_header_position():
    text = (
        "Question 7: First one? a) واحد b) اثنان c) ثلاثة d) أربعة Correct answer: a) واحد\n"
        "Question 3: Second one? a) واحد b) اثنان c) ثلاثة d) أربعة Correct answer: b) اثنان\n"
    )
    outcome = parse_quiz_block(text)
    assert [q.ordinal for q in outcome.quizzes] == [7, 3]


def test_strip_bidi_controls():
    assert strip_bidi_controls("a‏b") == "ab"
    assert strip_bidi_controls("plain text") == "plain text"
    assert strip_bidi_controls("‫نص‬") == "نص"
    assert strip_bidi_controls("⁦x⁩‎") == "x"


# --- serialization ---------------------------------------------------------


def test_serialize_reference_quiz(reference_quiz):
    line = serialize_quiz(reference_quiz)
    assert line.startswith("- Question 1: What is the boy doing?")
    assert line.endswith("Correct answer: a) يَكْتُبُ")
    assert "\n" not in line


def test_serialize_skill_tag():
    q = make_quiz(skill=SkillTag.COLORS, ordinal=5)
    line = serialize_quiz(q)
    assert line.startswith("- Question 5 (Colors): ")
    outcome = parse_quiz_block(line)
    assert outcome.quizzes[0].skill is SkillTag.COLORS


def test_serialize_rejects_invalid():
    q = make_quiz([("a", "x"), ("b", "y"), ("c", "z")])
    with pytest.raises(InvalidQuiz):
        serialize_quiz(q)


# --- properties -------------------------------------------------------------

_arabic_word = st.text(
    alphabet=st.characters(min_codepoint=0x0621, max_codepoint=0x064A),
    min_size=1,
    max_size=8,
)
_stem = st.text(alphabet="abcdefghijklmnopqrstuvwxyz ?'", min_size=1, max_size=50).filter(
    lambda s: s.strip()
)


@st.composite
def valid_quizzes(draw):
    words = draw(st.lists(_arabic_word, min_size=4, max_size=4, unique=True))
    return make_quiz(
        list(zip("abcd", words)),
        declared=draw(st.sampled_from("abcd")),
        stem=draw(_stem),
        ordinal=draw(st.integers(min_value=1, max_value=500)),
        skill=draw(st.sampled_from(list(SkillTag))),
        quiz_id=new_ulid(),
    )


@settings(max_examples=1000, deadline=None)
@given(valid_quizzes())
def test_roundtrip_property(quiz):
    outcome = parse_quiz_block(serialize_quiz(quiz))
    assert not outcome.diagnostics
    assert len(outcome.quizzes) == 1
    assert outcome.quizzes[0].matches(quiz)


def test_fuzz_never_raises():
    rng = random.Random(20260809)
    pools = (
        (0x20, 0x7E),        # ASCII
        (0x0600, 0x06FF),    # Arabic
        (0x200E, 0x2069),    # bidi controls and punctuation
        (0x1F300, 0x1F5FF),  # astral plane
    )
    for _ in range(10_000):
        length = rng.randrange(0, 120)
        chars = []
        for _ in range(length):
            lo, hi = pools[rng.randrange(len(pools))]
            cp = rng.randrange(lo, hi + 1)
            if 0xD800 <= cp <= 0xDFFF:
                cp = 0x20
            chars.append(chr(cp))
        raw = "".join(chars)
        outcome = parse_quiz_block(raw)
        assert isinstance(outcome, ParseOutcome)
        if not outcome.quizzes:
            assert outcome.diagnostics


def test_fuzz_structured_fragments():
    rng = random.Random(99)
    fragments = [
        "Question ", "Q ", "1", "23", ":", "(", ")", "(Actions)", "a)", "b)", "c)", "d)",
        "Correct answer:", "Translation (x, y)", "كتاب", "يَكْتُبُ", "what?", "-", "\n", " ",
        "‏", "e)", "أ)",
    ]
    for _ in range(2_000):
        raw = "".join(rng.choice(fragments) for _ in range(rng.randrange(0, 30)))
        outcome = parse_quiz_block(raw)
        for draft in outcome.quizzes:
            assert sorted(o.label for o in draft.options) == ["a", "b", "c", "d"]
