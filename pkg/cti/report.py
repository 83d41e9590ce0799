"""Threat-intelligence summaries: a description plus ATT&CK techniques.

The model path asks for the JSON shape analysts already consume; when the
model refuses or answers garbage, a rule table over the static
deobfuscation result takes over.
"""
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import yaml

from deobfuscator import nodes
from deobfuscator.evaluator import DeobResult, command_name, deobfuscate
from iocs.extract import ExtractionResult, extract_urls
from llm.chunking import reduce_for_budget
from llm.client import LlmClient
from llm.errors import PromptTooLarge
from llm.prompts import CTI_TEMPLATE, build_cti_prompt
from llm.responses import CTI, CtiAnswer, MitreMethod, parse_json_response
from utils.config import config

logger = logging.getLogger(__name__)

_DOWNLOAD_METHODS = frozenset({"downloadfile", "downloadstring", "downloaddata", "openread",
                               "downloadfileasync", "downloadstringasync"})
_DOWNLOAD_COMMANDS = frozenset({"invoke-webrequest", "iwr", "wget", "curl", "invoke-restmethod",
                                "irm", "start-bitstransfer"})
_DOWNLOAD_TEXT = re.compile(
    r"(?i)\.download(?:file|string|data)|invoke-webrequest|invoke-restmethod|start-bitstransfer")


class CtiSource(str, Enum):
    LLM = "llm"
    HEURISTIC = "heuristic"


@dataclass(frozen=True)
class CtiReport:
    """What a script does, in ATT&CK terms.

    Attributes:
        description: Prose summary; empty only for heuristic reports with no match
        methods: Techniques, unique by id, in the order found
        iocs: Static URL extraction for the same script
        source: Whether the model or the rule table produced the report
    """
    description: str
    methods: Tuple[MitreMethod, ...]
    iocs: ExtractionResult = field(default_factory=ExtractionResult)
    source: CtiSource = CtiSource.HEURISTIC

    def to_dict(self) -> dict:
        return {
            "description": self.description,
            "mitre_attack_methods": [m.to_dict() for m in self.methods],
            "extensions": {"source": self.source.value, "iocs": self.iocs.to_dict()},
        }


def _unique_methods(methods: Iterable[MitreMethod]) -> Tuple[MitreMethod, ...]:
    by_id: Dict[str, MitreMethod] = {}
    for method in methods:
        by_id.setdefault(method.id, method)
    return tuple(by_id.values())


# ---------------------------------------------------------------------------
# Evidence predicates
# ---------------------------------------------------------------------------

def downloads_remote_file(result: DeobResult) -> bool:
    """A web download call survives in the residual script."""
    for stmt in nodes.walk_statements(result.residual.statements):
        if isinstance(stmt, nodes.UnknownStmt) and _DOWNLOAD_TEXT.search(stmt.raw.replace("`", "")):
            return True
        for top in nodes.statement_exprs(stmt):
            for expr in nodes.walk(top):
                if isinstance(expr, nodes.MethodCall) and expr.method.lower() in _DOWNLOAD_METHODS:
                    return True
                if isinstance(expr, nodes.CmdletCall) and command_name(expr) in _DOWNLOAD_COMMANDS:
                    return True
    return False


def powershell_context(result: DeobResult) -> bool:
    """There was any script at all."""
    source = result.residual.source
    return bool(result.residual.statements) or bool(source is not None and source.decoded.strip())


def obfuscation_transforms(result: DeobResult) -> bool:
    return sum(result.transforms.values()) > 0


EVIDENCE: Dict[str, Callable[[DeobResult], bool]] = {
    "downloads_remote_file": downloads_remote_file,
    "powershell_context": powershell_context,
    "obfuscation_transforms": obfuscation_transforms,
}


@dataclass(frozen=True)
class TechniqueRule:
    method: MitreMethod
    evidence: Callable[[DeobResult], bool]
    summary: str


def load_rules(path: Optional[str] = None) -> Tuple[TechniqueRule, ...]:
    """Read the technique table; entries with unknown evidence are skipped.

    Args:
        path: YAML file; defaults to ``cti.rules_file`` from the config at call time
    """
    return _load_rules(str(path or config.get("cti.rules_file")))


@lru_cache(maxsize=8)
def _load_rules(path: str) -> Tuple[TechniqueRule, ...]:
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}

    rules: List[TechniqueRule] = []
    for entry in data.get("techniques", []):
        predicate = EVIDENCE.get(entry.get("evidence", ""))
        if predicate is None:
            logger.warning("%s: unknown evidence %r for %s; rule skipped",
                           path, entry.get("evidence"), entry.get("id"))
            continue
        try:
            method = MitreMethod(str(entry["id"]), str(entry["name"]))
        except (KeyError, ValueError) as exc:
            logger.warning("%s: bad technique entry %r (%s)", path, entry, exc)
            continue
        rules.append(TechniqueRule(method, predicate, str(entry.get("summary", method.name.lower()))))
    return tuple(rules)


def _describe(summaries: List[str], iocs: ExtractionResult) -> str:
    if not summaries:
        return ""
    if len(summaries) == 1:
        text = summaries[0]
    else:
        text = ", ".join(summaries[:-1]) + " and " + summaries[-1]
    description = f"The script {text}."
    if iocs.urls:
        description += f" It references {len(iocs.urls)} URL(s) on {len(iocs.domains)} domain(s)."
    return description


def cti_heuristic(result: DeobResult, iocs: Optional[ExtractionResult] = None,
                  rules_path: Optional[str] = None) -> CtiReport:
    """Report built from the rule table alone.

    Phishing is never claimed here: the delivery channel is not visible in
    the script.
    """
    iocs = iocs if iocs is not None else extract_urls(result)
    matched = [rule for rule in load_rules(rules_path) if rule.evidence(result)]
    return CtiReport(
        description=_describe([rule.summary for rule in matched], iocs),
        methods=_unique_methods(rule.method for rule in matched),
        iocs=iocs,
        source=CtiSource.HEURISTIC,
    )


def cti_from_llm(code: str, client: Optional[LlmClient] = None) -> CtiReport:
    """Ask the model for a report, falling back to the heuristic.

    Args:
        code: Script text as captured, non-empty
        client: Model client; a default one is built if omitted

    Returns:
        A model report, or a heuristic one if the answer was a refusal or malformed

    Raises:
        ValueError: If ``code`` is empty
        LlmError: Transport, auth and rate-limit failures
    """
    if not code.strip():
        raise ValueError("cannot report on an empty script")
    client = client or LlmClient()
    result = deobfuscate(code)
    iocs = extract_urls(result)

    try:
        messages = build_cti_prompt(code, client.config.max_chars)
    except PromptTooLarge:
        messages = build_cti_prompt(reduce_for_budget(code, client, CTI_TEMPLATE),
                                    client.config.max_chars)
    answer = parse_json_response(client.complete(messages), CTI, client.config.refusal_patterns or None)

    parsed = answer.parsed
    if isinstance(parsed, CtiAnswer) and parsed.description.strip():
        return CtiReport(parsed.description, _unique_methods(parsed.methods), iocs, CtiSource.LLM)
    logger.info("model gave no usable report (%s); using the rule table", type(parsed).__name__)
    return cti_heuristic(result, iocs)
