"""Parsing model answers into typed results.

Every input maps to exactly one answer variant; nothing here raises.
"""
import json
import logging
import re
from dataclasses import dataclass
from typing import Any, Iterable, Optional, Tuple, Union

from iocs.urls import validate_url
from utils.config import config

logger = logging.getLogger(__name__)

_FENCE = re.compile(r"^```[\w-]*\s*\n?|\n?```\s*$")
_TECHNIQUE_ID = re.compile(r"T\d+(?:\.\d+)?")

DEOBF = "deobf"
CTI = "cti"


@dataclass(frozen=True)
class UrlList:
    urls: Tuple[str, ...]


@dataclass(frozen=True)
class LongestString:
    """The ``kk`` fallback: the model found no URL and returned its longest string."""
    text: str


@dataclass(frozen=True)
class MitreMethod:
    """One ATT&CK technique reference.

    Attributes:
        id: ``T`` followed by digits, optionally ``.`` and sub-technique digits
        name: Technique name, non-empty
    """
    id: str
    name: str

    def __post_init__(self):
        if not _TECHNIQUE_ID.fullmatch(self.id) or not self.name.strip():
            raise ValueError(f"invalid technique reference {self.id!r} / {self.name!r}")

    def to_dict(self) -> dict:
        return {"ID": self.id, "name": self.name}


@dataclass(frozen=True)
class CtiAnswer:
    description: str
    methods: Tuple[MitreMethod, ...]


@dataclass(frozen=True)
class Refusal:
    reason: str


@dataclass(frozen=True)
class Malformed:
    detail: str


Parsed = Union[UrlList, LongestString, CtiAnswer, Refusal, Malformed]


@dataclass(frozen=True)
class LlmAnswer:
    raw_text: str
    parsed: Parsed


def classify_refusal(raw: str, patterns: Optional[Iterable[str]] = None) -> bool:
    """True if ``raw`` matches any refusal pattern, case-insensitively.

    Args:
        raw: Model output
        patterns: Regular expressions; defaults to ``llm.refusal_patterns``
    """
    if patterns is None:
        patterns = config.get("llm.refusal_patterns", [])
    # models answer with typographic apostrophes as often as ASCII ones
    text = raw.replace("’", "'")
    return any(re.search(p, text, re.IGNORECASE) for p in patterns)


def strip_fences(text: str) -> str:
    """Remove a surrounding markdown code fence such as ```` ```json ````."""
    return _FENCE.sub("", text.strip()).strip()


def parse_json_response(raw: str, expected: str = DEOBF,
                        refusal_patterns: Optional[Iterable[str]] = None) -> LlmAnswer:
    """Interpret a model answer.

    Refusals are recognised before any JSON parsing.  For ``deobf`` a JSON
    array of URLs, an object holding a URL array, or an object with key
    ``kk`` is accepted; for ``cti`` the object needs ``description`` and
    ``mitre_attack_methods`` whose entries carry ``ID`` and ``name``.

    Args:
        raw: Model output
        expected: ``"deobf"`` or ``"cti"``
        refusal_patterns: Overrides the configured refusal patterns

    Returns:
        LlmAnswer whose ``parsed`` is one of the answer variants
    """
    if classify_refusal(raw, refusal_patterns):
        return LlmAnswer(raw, Refusal(raw.strip()))
    try:
        data = json.loads(strip_fences(raw))
    except (json.JSONDecodeError, TypeError) as exc:
        return LlmAnswer(raw, Malformed(f"not JSON: {exc}"))

    parsed = _parse_cti(data) if expected == CTI else _parse_deobf(data)
    if isinstance(parsed, Malformed):
        logger.debug("malformed %s answer: %s", expected, parsed.detail)
    return LlmAnswer(raw, parsed)


def _valid_urls(items: Any) -> Optional[Tuple[str, ...]]:
    if not isinstance(items, list) or not all(isinstance(i, str) for i in items):
        return None
    urls = []
    for item in items:
        url = validate_url(item)
        if url is not None and url not in urls:
            urls.append(url)
    return tuple(urls)


def _parse_deobf(data: Any) -> Parsed:
    if isinstance(data, list):
        urls = _valid_urls(data)
        return UrlList(urls) if urls is not None else Malformed("array holds non-text items")
    if not isinstance(data, dict):
        return Malformed(f"unexpected JSON {type(data).__name__}")
    if isinstance(data.get("kk"), str):
        return LongestString(data["kk"])
    for value in data.values():
        urls = _valid_urls(value)
        if urls is not None:
            return UrlList(urls)
    return Malformed("object holds neither a URL array nor kk")


def _parse_cti(data: Any) -> Parsed:
    if not isinstance(data, dict):
        return Malformed("CTI answer is not an object")
    description = data.get("description")
    entries = data.get("mitre_attack_methods")
    if not isinstance(description, str) or not isinstance(entries, list):
        return Malformed("CTI answer lacks description or mitre_attack_methods")
    methods = []
    for entry in entries:
        if not isinstance(entry, dict) or not isinstance(entry.get("ID"), str) \
                or not isinstance(entry.get("name"), str):
            return Malformed(f"technique entry without ID and name: {entry!r}")
        try:
            method = MitreMethod(entry["ID"].strip(), entry["name"].strip())
        except ValueError as exc:
            return Malformed(str(exc))
        if all(m.id != method.id for m in methods):
            methods.append(method)
    return CtiAnswer(description, tuple(methods))
