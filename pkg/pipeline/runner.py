"""Run modes behind the command line: one file, a corpus, or a synthetic corpus.

Each mode reads a ``RunConfig`` and returns its result; printing and exit
codes belong to ``pipeline.cli``.
"""
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple

from cti.report import CtiReport, cti_from_llm, cti_heuristic
from deobfuscator.errors import UndecodableInput
from deobfuscator.evaluator import deobfuscate
from deobfuscator.lexer import Encoding, SourceText, decode_input
from evaluation.harness import Engine, llm_extraction, run_corpus, write_report
from evaluation.scoring import EvalReport
from evaluation.synthetic import write_synthetic_corpus
from evaluation.truth import GroundTruthEntry
from iocs.extract import ExtractionResult, extract_urls, merge_extractions, with_folded_domains
from llm.client import LlmClient, LlmConfig
from llm.errors import LlmError

logger = logging.getLogger(__name__)


class Mode(str, Enum):
    DEOBFUSCATE = "deobfuscate"
    EXTRACT = "extract"
    EVALUATE = "evaluate"
    CTI = "cti"
    SYNTH = "synth"


@dataclass
class RunConfig:
    """Everything one invocation needs.

    Attributes:
        mode: What to run
        engine: static, llm or static-then-llm
        inputs: Script files, or the corpus directory for evaluate
        truth: Truth JSONL (evaluate only)
        llm_config: Model settings; required by the llm engines
        out: Output file or directory
        jobs: Worker threads for evaluate
        lenient: Ignore trailing ``/`` when scoring
        fold_www: Treat ``www.host`` and ``host`` as one domain
        macro: Add per-sample mean accuracies to the report
        csv: Per-sample CSV path (evaluate only)
        seed: Synthetic corpus seed
        count: Synthetic sample count
        techniques: Synthetic obfuscation techniques; None for all
        encode_base64: Store synthetic scripts as base64 UTF-16LE
    """
    mode: Mode
    engine: Engine = Engine.STATIC
    inputs: List[Path] = field(default_factory=list)
    truth: Optional[Path] = None
    llm_config: Optional[LlmConfig] = None
    out: Optional[Path] = None
    jobs: int = 1
    lenient: bool = False
    fold_www: bool = False
    macro: bool = False
    csv: Optional[Path] = None
    seed: int = 0
    count: int = 0
    techniques: Optional[Tuple[str, ...]] = None
    encode_base64: bool = False

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.engine = Engine(self.engine)
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")
        if self.mode is Mode.EVALUATE and self.truth is None:
            raise ValueError("evaluate needs a truth file")
        if self.engine.uses_llm and self.llm_config is None:
            raise ValueError(f"the {self.engine.value} engine needs an LLM configuration")

    def client(self) -> Optional[LlmClient]:
        return LlmClient(self.llm_config) if self.engine.uses_llm else None


@dataclass
class DeobOutput:
    """Result of one file.

    Attributes:
        path: Input file
        rendered: Residual script after static deobfuscation
        extraction: URLs from the configured engine
        llm_error: Why the model fallback failed, if it did
    """
    path: Path
    rendered: str
    extraction: ExtractionResult
    llm_error: Optional[str] = None

    def to_dict(self) -> dict:
        data = {"path": str(self.path), "rendered": self.rendered, "extraction": self.extraction.to_dict()}
        if self.llm_error:
            data["llm_error"] = self.llm_error
        return data


def read_source(path: Path) -> SourceText:
    """Decode a script file.

    Bytes that are not text are read with replacement characters so the
    engine still renders them; only an empty file is rejected.

    Raises:
        OSError: If the file cannot be read
        UndecodableInput: If the file is empty
    """
    data = Path(path).read_bytes()
    try:
        return decode_input(data)
    except UndecodableInput:
        if not data.strip():
            raise
        logger.warning("%s is not valid text; decoding with replacement characters", path)
        return SourceText(data, data.decode("utf-8", errors="replace"), Encoding.PLAIN_UTF8)


def deobfuscate_file(path: Path, run_config: RunConfig,
                     client: Optional[LlmClient] = None) -> DeobOutput:
    """Static deobfuscation plus URL extraction for one file.

    The static chain always runs and supplies the rendered script.  The llm
    engine replaces its URLs with the model's; static-then-llm asks the
    model only when the static pass found none, and keeps the static result
    if the model fails.  With ``run_config.out`` the rendered script and the
    extraction JSON are written as ``<stem>.deob.ps1`` and ``<stem>.iocs.json``.

    Raises:
        OSError, UndecodableInput: Unreadable or empty input
        LlmError: Model failures in llm mode
    """
    source = read_source(path)
    result = deobfuscate(source)
    extraction = extract_urls(result)
    llm_error = None

    if run_config.engine.uses_llm and (run_config.engine is Engine.LLM or not extraction.urls):
        client = client or run_config.client()
        try:
            answer, refused = llm_extraction(source, client)
        except LlmError as exc:
            if run_config.engine is Engine.LLM:
                raise
            logger.warning("model fallback failed (%s); keeping the static result", exc)
            llm_error = str(exc)
        else:
            if refused:
                logger.info("%s: the model declined", path)
            extraction = answer if run_config.engine is Engine.LLM else merge_extractions(extraction, answer)

    if run_config.fold_www:
        extraction = with_folded_domains(extraction)
    output = DeobOutput(Path(path), result.rendered, extraction, llm_error)
    if run_config.out is not None:
        _write_outputs(output, run_config.out)
    return output


def _write_outputs(output: DeobOutput, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = output.path.stem
    (out_dir / f"{stem}.deob.ps1").write_text(output.rendered, encoding="utf-8")
    with open(out_dir / f"{stem}.iocs.json", "w", encoding="utf-8") as f:
        json.dump(output.extraction.to_dict(), f, indent=2)
        f.write("\n")
    logger.info("wrote %s.deob.ps1 and %s.iocs.json to %s", stem, stem, out_dir)


def run_cti(path: Path, run_config: RunConfig, client: Optional[LlmClient] = None) -> CtiReport:
    """Threat-intelligence report for one file.

    The static engine uses the rule table only.  static-then-llm falls back
    to it when the model fails; llm lets model failures through.
    """
    source = read_source(path)
    if not run_config.engine.uses_llm:
        return cti_heuristic(deobfuscate(source))
    client = client or run_config.client()
    try:
        return cti_from_llm(source.decoded, client)
    except LlmError as exc:
        if run_config.engine is Engine.LLM:
            raise
        logger.warning("model report failed (%s); using the rule table", exc)
        return cti_heuristic(deobfuscate(source))


def run_evaluation(run_config: RunConfig, client: Optional[LlmClient] = None) -> EvalReport:
    """Score the corpus and write the report when ``out`` is set."""
    corpus_dir = run_config.inputs[0] if run_config.inputs else Path(run_config.truth).parent
    report = run_corpus(
        corpus_dir, run_config.truth, run_config.engine,
        client=client or run_config.client(), jobs=run_config.jobs, lenient=run_config.lenient,
        fold_www=run_config.fold_www, macro=run_config.macro,
    )
    if run_config.out is not None:
        write_report(report, run_config.out, run_config.csv)
    elif run_config.csv is not None:
        logger.warning("--csv is ignored without --out")
    return report


def run_synth(run_config: RunConfig) -> List[GroundTruthEntry]:
    """Write a synthetic corpus and its truth file into ``out``."""
    if run_config.out is None:
        raise ValueError("synth needs an output directory")
    return write_synthetic_corpus(run_config.out, run_config.count, run_config.seed,
                                  run_config.techniques, run_config.encode_base64)
