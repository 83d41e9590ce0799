"""Corpus evaluation: run an engine over every truth sample and score it."""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from pathlib import Path
from typing import Optional, Tuple, Union

import pandas as pd

from deobfuscator.errors import UndecodableInput
from deobfuscator.evaluator import deobfuscate
from deobfuscator.lexer import SourceText, decode_input
from evaluation.scoring import EvalReport, PerSampleScore, aggregate, score_sample
from evaluation.truth import EmptyCorpus, GroundTruthEntry, load_ground_truth
from iocs.extract import ExtractionResult, Provenance, extract_urls, extraction_from_answer, merge_extractions
from llm.chunking import deobfuscate_with_llm
from llm.client import LlmClient
from llm.errors import AuthError, LlmError
from llm.responses import Refusal

logger = logging.getLogger(__name__)

TRUTH_FILE = "truth.jsonl"


class Engine(str, Enum):
    STATIC = "static"
    LLM = "llm"
    STATIC_THEN_LLM = "static-then-llm"

    @property
    def uses_llm(self) -> bool:
        return self is not Engine.STATIC


def static_extraction(source: SourceText) -> ExtractionResult:
    return extract_urls(deobfuscate(source))


def llm_extraction(source: SourceText, client: LlmClient) -> Tuple[ExtractionResult, bool]:
    """Model answer for one script, and whether the model refused."""
    answer = deobfuscate_with_llm(source.decoded, client)
    return extraction_from_answer(answer), isinstance(answer.parsed, Refusal)


def extract_sample(source: SourceText, engine: Engine,
                   client: Optional[LlmClient] = None) -> Tuple[ExtractionResult, bool]:
    """Run ``engine`` on one decoded script.

    In static-then-llm mode the model is asked only when the static pass
    found no URL, and a failing model call leaves the static result.

    Returns:
        (extraction, refused)

    Raises:
        LlmError: Model failures in llm mode
    """
    if engine is Engine.LLM:
        return llm_extraction(source, client)

    static = static_extraction(source)
    if engine is Engine.STATIC or static.urls:
        return static, False
    try:
        answer, refused = llm_extraction(source, client)
    except AuthError:
        raise
    except LlmError as exc:
        logger.warning("model fallback failed (%s); keeping the static result", exc)
        return static, False
    return merge_extractions(static, answer), refused


def _score_entry(entry: GroundTruthEntry, engine: Engine, client: Optional[LlmClient],
                 lenient: bool, fold_www: bool) -> PerSampleScore:
    empty = ExtractionResult(provenance=Provenance.LLM if engine is Engine.LLM else Provenance.STATIC)
    try:
        source = decode_input(Path(entry.script_path).read_bytes())
        extraction, refused = extract_sample(source, engine, client)
    except (OSError, UndecodableInput) as exc:
        logger.warning("%s: %s", entry.script_path, exc)
        return score_sample(empty, entry, lenient, fold_www, error=str(exc))
    except AuthError:
        raise
    except LlmError as exc:
        logger.warning("%s: model request failed: %s", entry.script_path, exc)
        return score_sample(empty, entry, lenient, fold_www, error=str(exc))
    return score_sample(extraction, entry, lenient, fold_www, refused=refused)


def run_corpus(corpus_dir: Union[str, Path], truth_path: Union[str, Path, None] = None,
               engine: Union[Engine, str] = Engine.STATIC, client: Optional[LlmClient] = None,
               jobs: int = 1, lenient: bool = False, fold_www: bool = False,
               macro: bool = False) -> EvalReport:
    """Score an engine against a corpus.

    Args:
        corpus_dir: Directory holding the scripts
        truth_path: Truth JSONL; defaults to ``truth.jsonl`` inside ``corpus_dir``
        engine: static, llm or static-then-llm
        client: Model client for the llm engines; a default one is built if omitted
        jobs: Worker threads; results are identical for any value
        lenient: Ignore trailing ``/`` when matching URLs
        fold_www: Treat ``www.host`` and ``host`` as one domain
        macro: Also compute per-sample mean accuracies

    Returns:
        The aggregated report, per-sample scores in truth order

    Raises:
        TruthFormatError, DuplicateSampleId: Bad truth file
        EmptyCorpus: No truth file or no entries
        AuthError: The model endpoint rejected the credentials
    """
    engine = Engine(engine)
    truth_path = Path(truth_path) if truth_path is not None else Path(corpus_dir) / TRUTH_FILE
    if not truth_path.is_file():
        raise EmptyCorpus(f"no ground truth at {truth_path}")
    entries = load_ground_truth(truth_path)
    if not entries:
        raise EmptyCorpus(f"{truth_path} lists no samples")
    if engine.uses_llm and client is None:
        client = LlmClient()

    logger.info("scoring %d samples with the %s engine (%d jobs)", len(entries), engine.value, jobs)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        scores = list(pool.map(lambda e: _score_entry(e, engine, client, lenient, fold_www), entries))
    report = aggregate(scores, macro=macro)
    logger.info(report.summary_line())
    return report


def write_report(report: EvalReport, path: Union[str, Path],
                 csv_path: Union[str, Path, None] = None) -> None:
    """Write the report as JSON and, optionally, per-sample rows as CSV."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2)
        f.write("\n")
    if csv_path is not None:
        rows = [score.to_row() for score in report.per_sample]
        pd.DataFrame(rows).to_csv(csv_path, index=False)
    logger.debug("report written to %s", path)
