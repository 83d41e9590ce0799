"""Tests for prompt rendering."""
import json
from pathlib import Path

import pytest

from llm.errors import PromptTooLarge
from llm.prompts import (
    CODE_SLOT, PromptStyle, PromptTemplate, build_cti_prompt, build_deobf_prompt, prompt_size,
)

FIXTURES = Path(__file__).parent / "fixtures"


def _golden(name):
    return json.loads((FIXTURES / name).read_text(encoding="utf-8"))


@pytest.mark.parametrize("style, fixture", [
    (PromptStyle.SYSTEM_USER, "deobf_system_user.json"),
    (PromptStyle.INST_SYS, "deobf_inst_sys.json"),
    ("inst-sys", "deobf_inst_sys.json"),
])
def test_deobf_prompt_matches_golden(style, fixture):
    """The extraction prompt is byte-for-byte stable in both framings."""
    assert build_deobf_prompt("Write-Host 1", style) == _golden(fixture)


def test_cti_prompt_matches_golden():
    """The threat-intelligence prompt is stable."""
    assert build_cti_prompt("Write-Host 1") == _golden("cti_system_user.json")


def test_code_is_fenced_once():
    """The code appears exactly once, inside a fence."""
    messages = build_deobf_prompt("$x = 'marker'")
    text = "".join(m["content"] for m in messages)
    assert text.count("$x = 'marker'") == 1
    assert "```\n$x = 'marker'\n```" in text


def test_empty_code_is_rejected():
    """There is nothing to ask about blank input."""
    with pytest.raises(ValueError):
        build_deobf_prompt("  \n")


def test_prompt_budget():
    """Prompts over the character budget raise with both sizes."""
    size = prompt_size(build_deobf_prompt("x" * 100))
    assert build_deobf_prompt("x" * 100, max_chars=size)
    with pytest.raises(PromptTooLarge) as info:
        build_deobf_prompt("x" * 100, max_chars=size - 1)
    assert info.value.size == size
    assert info.value.limit == size - 1


def test_template_needs_one_code_slot():
    """A user text without exactly one slot is a programming error."""
    with pytest.raises(ValueError):
        PromptTemplate(PromptStyle.SYSTEM_USER, "sys", "no slot")
    with pytest.raises(ValueError):
        PromptTemplate(PromptStyle.SYSTEM_USER, "sys", CODE_SLOT + CODE_SLOT)
