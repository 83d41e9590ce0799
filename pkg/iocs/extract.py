"""Dropper URL extraction from deobfuscation results and model answers."""
import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

from deobfuscator.evaluator import DeobResult
from deobfuscator.values import TextList
from iocs.urls import url_to_domain, validate_url
from llm.responses import LlmAnswer, LongestString, UrlList
from utils.config import config

logger = logging.getLogger(__name__)


class Provenance(str, Enum):
    STATIC = "static"
    LLM = "llm"
    MERGED = "merged"


@dataclass(frozen=True)
class ExtractionResult:
    """URLs found for one sample.

    Attributes:
        urls: Normalized URLs, unique, in discovery order
        domains: Unique hosts of ``urls``
        provenance: Which engine produced the URLs
        longest_string: Longest folded string, kept only when no URL was found
    """
    urls: Tuple[str, ...] = ()
    domains: Tuple[str, ...] = ()
    provenance: Provenance = Provenance.STATIC
    longest_string: Optional[str] = None

    @classmethod
    def from_urls(cls, urls: Iterable[str], provenance: Provenance = Provenance.STATIC,
                  longest_string: Optional[str] = None) -> "ExtractionResult":
        unique = _unique(urls)
        return cls(unique, _unique(url_to_domain(u) for u in unique), provenance, longest_string)

    def to_dict(self) -> dict:
        return {
            "urls": list(self.urls),
            "domains": list(self.domains),
            "provenance": self.provenance.value,
            "longest_string": self.longest_string,
        }


def _unique(items: Iterable[str]) -> Tuple[str, ...]:
    return tuple(dict.fromkeys(items))


def _separators(separators: Optional[Sequence[str]]) -> List[str]:
    return list(separators if separators is not None else config.get("ioc.separators", ["@", "*"]))


def split_candidates(text: str, separators: Optional[Sequence[str]] = None) -> List[str]:
    """Pieces of ``text`` between any of the URL separators."""
    seps = [s for s in _separators(separators) if s]
    if not seps:
        return [text]
    pattern = "|".join(re.escape(s) for s in seps)
    return [piece.strip() for piece in re.split(pattern, text) if piece.strip()]


def _valid(candidates: Iterable[str]) -> List[str]:
    return [url for url in (validate_url(c) for c in candidates) if url is not None]


def longest_string(pool: Sequence[str]) -> Optional[str]:
    """Longest entry; on equal length the earliest wins."""
    best: Optional[str] = None
    for text in pool:
        if best is None or len(text) > len(best):
            best = text
    return best


def extract_urls(result: DeobResult, separators: Optional[Sequence[str]] = None) -> ExtractionResult:
    """Collect dropper URLs from a finished static run.

    Folded string arrays whose elements are URLs win outright.  Otherwise
    every folded string is split on the separators, longest string first,
    and the pieces that validate are kept.  With no URL at all the longest
    folded string is reported for inspection.
    """
    from_lists: List[str] = []
    for value in result.folded_env.bindings.values():
        if isinstance(value, TextList):
            from_lists.extend(_valid(value.items))
    if from_lists:
        return ExtractionResult.from_urls(from_lists)

    pool = list(result.string_pool)
    ordered = sorted(range(len(pool)), key=lambda i: (-len(pool[i]), i))
    urls: List[str] = []
    for index in ordered:
        urls.extend(_valid(split_candidates(pool[index], separators)))
    if urls:
        return ExtractionResult.from_urls(urls)
    fallback = longest_string(pool)
    if fallback is not None:
        logger.debug("no URL recovered; longest folded string has %d characters", len(fallback))
    return ExtractionResult(longest_string=fallback)


def extraction_from_answer(answer: LlmAnswer, separators: Optional[Sequence[str]] = None) -> ExtractionResult:
    """ExtractionResult for a model answer; refusals and malformed answers are empty."""
    parsed = answer.parsed
    if isinstance(parsed, UrlList):
        return ExtractionResult.from_urls(parsed.urls, Provenance.LLM)
    if isinstance(parsed, LongestString):
        compact = re.sub(r"\s+", "", parsed.text)
        urls = _valid(split_candidates(compact, separators))
        if urls:
            return ExtractionResult.from_urls(urls, Provenance.LLM)
        return ExtractionResult(provenance=Provenance.LLM, longest_string=parsed.text or None)
    return ExtractionResult(provenance=Provenance.LLM)


def merge_extractions(static: ExtractionResult, llm: ExtractionResult) -> ExtractionResult:
    """Union of two results, static URLs first."""
    if static.urls and llm.urls:
        provenance = Provenance.MERGED
    elif llm.urls:
        provenance = Provenance.LLM
    else:
        provenance = static.provenance
    urls = static.urls + llm.urls
    longest = None if urls else (static.longest_string or llm.longest_string)
    return ExtractionResult.from_urls(urls, provenance, longest)


def with_folded_domains(extraction: ExtractionResult) -> ExtractionResult:
    """Copy whose domains have a leading ``www.`` removed."""
    domains = _unique(url_to_domain(u, fold_www=True) for u in extraction.urls)
    return ExtractionResult(extraction.urls, domains, extraction.provenance, extraction.longest_string)
