"""Tests for model answer parsing."""
import json

import pytest

from llm.responses import (
    CTI, CtiAnswer, LongestString, Malformed, MitreMethod, Refusal, UrlList, classify_refusal,
    parse_json_response, strip_fences,
)


def test_known_refusals_are_classified(refusals):
    """Both observed refusal texts match the default patterns."""
    for text in refusals:
        assert classify_refusal(text)
        assert isinstance(parse_json_response(text).parsed, Refusal)


def test_typographic_apostrophe_refusal():
    """Curly apostrophes match the ASCII patterns."""
    assert classify_refusal("I’m sorry, I cannot help with that.")


def test_custom_refusal_patterns():
    """Explicit patterns replace the configured ones."""
    assert classify_refusal("As an AI I decline", patterns=[r"\bdecline\b"])
    assert not classify_refusal("I'm sorry, I cannot", patterns=[r"\bdecline\b"])


def test_url_array():
    """A bare JSON array of URLs is parsed and validated."""
    answer = parse_json_response('["https://a.com/x", "not a url", "https://a.com/x"]')
    assert answer.parsed == UrlList(("https://a.com/x",))


def test_empty_array():
    """[] means the model found nothing."""
    assert parse_json_response("[]").parsed == UrlList(())


def test_fenced_object_with_url_array():
    """Code fences and a wrapping object are accepted."""
    raw = '```json\n{"urls": ["http://b.org/1"]}\n```'
    assert parse_json_response(raw).parsed == UrlList(("http://b.org/1",))


def test_longest_string_fallback():
    """The kk key carries the model's longest string."""
    assert parse_json_response('{"kk": "abc@def"}').parsed == LongestString("abc@def")


@pytest.mark.parametrize("raw", ["not json at all", '{"other": 1}', "42", '[1, 2]'])
def test_malformed_answers(raw):
    """Anything else is malformed, never an exception."""
    assert isinstance(parse_json_response(raw).parsed, Malformed)


def test_raw_text_is_kept():
    """The original answer travels with the parse."""
    assert parse_json_response("[]").raw_text == "[]"


def test_strip_fences():
    """Only the surrounding fence is removed."""
    assert strip_fences("```\n[1]\n```") == "[1]"
    assert strip_fences("[1]") == "[1]"


def test_cti_answer(analyst_answer):
    """A description plus ID/name pairs parse into a CTI answer."""
    parsed = parse_json_response(analyst_answer, CTI).parsed
    assert isinstance(parsed, CtiAnswer)
    assert parsed.description.startswith("The script performs")
    assert [m.id for m in parsed.methods] == ["T1566", "T1105", "T1059", "T1027"]


def test_cti_answer_drops_duplicate_ids():
    """Each technique is listed once."""
    raw = json.dumps({"description": "d", "mitre_attack_methods": [
        {"ID": "T1059.001", "name": "PowerShell"}, {"ID": "T1059.001", "name": "PowerShell"}]})
    assert parse_json_response(raw, CTI).parsed.methods == (MitreMethod("T1059.001", "PowerShell"),)


@pytest.mark.parametrize("payload", [
    {"description": "d"},
    {"description": "d", "mitre_attack_methods": [{"ID": "X1", "name": "n"}]},
    {"description": "d", "mitre_attack_methods": [{"ID": "T1"}]},
    ["T1059"],
])
def test_malformed_cti_answers(payload):
    """Missing keys or bad technique IDs make the answer malformed."""
    assert isinstance(parse_json_response(json.dumps(payload), CTI).parsed, Malformed)


def test_mitre_method_validation():
    """Technique references need a T-number and a name."""
    assert MitreMethod("T1027", "Obfuscated Files or Information").to_dict() == {
        "ID": "T1027", "name": "Obfuscated Files or Information"}
    with pytest.raises(ValueError):
        MitreMethod("T1027", " ")


def test_refusal_matching_ignores_case():
    """Patterns match regardless of case; ordinary JSON never matches."""
    assert classify_refusal("I'M SORRY, I CANNOT do that")
    assert not classify_refusal('{"kk":"abc"}')
