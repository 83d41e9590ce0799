"""Oversize inputs: shrink a script until its final prompt fits.

Long droppers (very long variable names, large comment blocks) exceed the
endpoint's input limit.  The reduction runs as prompt rounds: comments are
removed chunk by chunk, then variables are renamed, and only then is the
extraction or threat-report prompt sent.
"""
import logging
from bisect import bisect_right
from typing import List, Optional

from deobfuscator.errors import LexError
from deobfuscator.lexer import shorten_variable_names, strip_comments, tokenize
from llm.client import LlmClient
from llm.errors import PromptTooLarge
from llm.prompts import (
    DEOBF_TEMPLATES, SHORTEN_NAMES_TEMPLATE, STRIP_COMMENTS_TEMPLATE, PromptStyle, PromptTemplate,
    build_deobf_prompt, prompt_size,
)
from llm.responses import DEOBF, LlmAnswer, classify_refusal, parse_json_response, strip_fences

logger = logging.getLogger(__name__)


def _overhead(template: PromptTemplate) -> int:
    return prompt_size(template.render(""))


def _fits(template: PromptTemplate, code: str, max_chars: int) -> bool:
    return prompt_size(template.render(code)) <= max_chars


def _token_starts(line: str) -> List[int]:
    try:
        return [token.start for token in tokenize(line)]
    except LexError:
        return []


def _split_long_line(line: str, max_chars: int) -> List[str]:
    """Cut ``line`` into pieces of at most ``max_chars``, at token starts where possible.

    Only a single token longer than the limit is cut inside; joining the
    pieces with ``""`` always gives back ``line``.
    """
    starts = _token_starts(line)
    pieces: List[str] = []
    offset = 0
    while len(line) - offset > max_chars:
        limit = offset + max_chars
        index = bisect_right(starts, limit) - 1
        cut = starts[index] if index >= 0 and starts[index] > offset else limit
        pieces.append(line[offset:cut])
        offset = cut
    pieces.append(line[offset:])
    return pieces


def chunk_lines(code: str, max_chars: int) -> List[str]:
    """Split ``code`` into pieces of at most ``max_chars``, preferring line boundaries.

    A line longer than the limit is cut between tokens.  Only chunks that
    end on a real line break end with ``"\\n"``, so ``"".join(chunks) == code``.
    """
    if max_chars <= 0:
        raise ValueError("chunk size must be positive")
    chunks: List[str] = []
    current = ""
    for line in code.splitlines(keepends=True):
        if len(line) > max_chars:
            if current:
                chunks.append(current)
                current = ""
            *head, line = _split_long_line(line, max_chars)
            chunks.extend(head)
        if len(current) + len(line) > max_chars:
            chunks.append(current)
            current = ""
        current += line
    if current:
        chunks.append(current)
    return chunks


def _rejoin(chunks: List[str], rewritten: List[str]) -> str:
    # the model drops trailing newlines; only real line breaks are put back
    return "".join(text.rstrip("\n") + ("\n" if chunk.endswith("\n") else "")
                   for chunk, text in zip(chunks, rewritten))


def _rewrite(client: LlmClient, template: PromptTemplate, code: str, fallback) -> str:
    answer = client.complete(template.render(code))
    if classify_refusal(answer, client.config.refusal_patterns or None) or not answer.strip():
        logger.info("rewrite round declined; applying it locally")
        return fallback(code)
    return strip_fences(answer)


def reduce_for_budget(code: str, client: LlmClient,
                      template: Optional[PromptTemplate] = None) -> str:
    """Shrink ``code`` until the final prompt fits ``client.config.max_chars``.

    Round one removes comments through the model, one chunk per prompt.
    Round two renames variables through the model when the whole script fits
    a single prompt; otherwise the local renamer is used so names stay
    consistent across chunks.

    Args:
        code: Script text
        client: Model client; its config holds the budget and style
        template: Template of the prompt the reduced code goes into;
            defaults to the extraction template for the configured style

    Raises:
        PromptTooLarge: If the script still does not fit after both rounds
    """
    budget = client.config.max_chars
    template = template or DEOBF_TEMPLATES[PromptStyle(client.config.style)]
    room = budget - prompt_size(template.render("x")) + 1
    if len(code) <= room:
        return code

    chunk_size = budget - _overhead(STRIP_COMMENTS_TEMPLATE)
    if chunk_size <= 0:
        raise PromptTooLarge(len(code), budget)
    chunks = chunk_lines(code, chunk_size)
    logger.info("removing comments in %d prompt(s)", len(chunks))
    code = _rejoin(chunks, [_rewrite(client, STRIP_COMMENTS_TEMPLATE, chunk, strip_comments)
                            for chunk in chunks])
    if len(code) <= room:
        return code

    if _fits(SHORTEN_NAMES_TEMPLATE, code, budget):
        code = _rewrite(client, SHORTEN_NAMES_TEMPLATE, code, shorten_variable_names)
    else:
        code = shorten_variable_names(code)
    if len(code) > room:
        raise PromptTooLarge(len(code) + budget - room, budget)
    return code


def deobfuscate_with_llm(code: str, client: LlmClient) -> LlmAnswer:
    """Ask the model for the URLs in ``code``, reducing oversize input first."""
    cfg = client.config
    try:
        messages = build_deobf_prompt(code, cfg.style, cfg.max_chars)
    except PromptTooLarge:
        messages = build_deobf_prompt(reduce_for_budget(code, client), cfg.style, cfg.max_chars)
    raw = client.complete(messages)
    return parse_json_response(raw, DEOBF, cfg.refusal_patterns or None)
