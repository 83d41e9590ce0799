"""Command-line entry point.

JSON results go to stdout, logs and summaries to stderr, so the output can
be piped straight into other tools::

    python -m pipeline deobfuscate sample.ps1 | jq .extraction.urls
    python -m pipeline synth --out corpus --count 500 --seed 1
    python -m pipeline evaluate corpus --out report.json

Exit codes: 0 ok, 1 unexpected failure, 2 unreadable or empty input (and
usage errors), 3 model failure in llm mode, 4 bad ground truth or empty
corpus.
"""
import functools
import json
import logging
import sys
from enum import IntEnum
from pathlib import Path
from typing import Optional

import click
from rich import box
from rich.markup import escape
from rich.table import Table

from deobfuscator.errors import UndecodableInput
from evaluation.harness import Engine
from evaluation.synthetic import TECHNIQUES
from evaluation.truth import TruthError
from llm.client import load_llm_config
from llm.errors import LlmError
from pipeline.runner import (
    Mode, RunConfig, deobfuscate_file, run_cti, run_evaluation, run_synth,
)
from utils.config import config
from utils.logger import console, setup_logger

logger = logging.getLogger(__name__)


class ExitCode(IntEnum):
    OK = 0
    FAILURE = 1
    BAD_INPUT = 2
    LLM_FAILURE = 3
    BAD_TRUTH = 4


def _abort(code: ExitCode, exc: BaseException) -> None:
    console.print(f"[red]error:[/red] {escape(str(exc))}")
    sys.exit(int(code))


def handle_errors(fn):
    """Map exceptions of a command onto exit codes."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (click.ClickException, click.exceptions.Exit, click.exceptions.Abort):
            raise
        except (OSError, UndecodableInput) as exc:
            _abort(ExitCode.BAD_INPUT, exc)
        except LlmError as exc:
            _abort(ExitCode.LLM_FAILURE, exc)
        except TruthError as exc:
            _abort(ExitCode.BAD_TRUTH, exc)
        except ValueError as exc:
            raise click.UsageError(str(exc))
        except Exception as exc:
            logger.exception("unexpected failure")
            _abort(ExitCode.FAILURE, exc)
    return wrapper


def _llm_config(engine: str, path: Optional[str]):
    return load_llm_config(path) if Engine(engine).uses_llm else None


def _emit(data) -> None:
    click.echo(json.dumps(data, ensure_ascii=False))


# ---------------------------------------------------------------------------
# Shared options
# ---------------------------------------------------------------------------

engine_option = click.option(
    "--engine", type=click.Choice([e.value for e in Engine]), default=Engine.STATIC.value,
    show_default=True, help="Which engine recovers the URLs.")
llm_config_option = click.option(
    "--llm-config", "llm_config_path", type=click.Path(exists=True, dir_okay=False),
    help="YAML/JSON model settings; the API key comes from the environment.")
fold_www_option = click.option(
    "--fold-www", is_flag=True, default=None, help="Treat www.host and host as one domain.")
inputs_argument = click.argument(
    "inputs", nargs=-1, required=True, type=click.Path(dir_okay=False, path_type=Path))


def _fold_www(flag: Optional[bool]) -> bool:
    return bool(config.get("ioc.fold_www", False)) if flag is None else flag


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON or YAML settings merged over the defaults.")
def cli(verbose: bool, config_path: Optional[str]):
    """Static and model-assisted deobfuscation of PowerShell droppers."""
    setup_logger(None, logging.DEBUG if verbose else logging.INFO)
    if config_path:
        config.load(config_path)


@cli.command()
@inputs_argument
@engine_option
@llm_config_option
@fold_www_option
@click.option("--out", type=click.Path(file_okay=False, path_type=Path),
              help="Write <stem>.deob.ps1 and <stem>.iocs.json here.")
@handle_errors
def deobfuscate(inputs, engine, llm_config_path, fold_www, out):
    """Print the deobfuscated script and its URLs as JSON, one line per file."""
    run_config = RunConfig(Mode.DEOBFUSCATE, engine, list(inputs), out=out, fold_www=_fold_www(fold_www),
                           llm_config=_llm_config(engine, llm_config_path))
    client = run_config.client()
    for path in inputs:
        _emit(deobfuscate_file(path, run_config, client).to_dict())


@cli.command()
@inputs_argument
@engine_option
@llm_config_option
@fold_www_option
@handle_errors
def extract(inputs, engine, llm_config_path, fold_www):
    """Print the URLs and domains of each file as JSON."""
    run_config = RunConfig(Mode.EXTRACT, engine, list(inputs), fold_www=_fold_www(fold_www),
                           llm_config=_llm_config(engine, llm_config_path))
    client = run_config.client()
    for path in inputs:
        output = deobfuscate_file(path, run_config, client)
        _emit(dict(path=str(path), **output.extraction.to_dict()))


@cli.command()
@inputs_argument
@engine_option
@llm_config_option
@handle_errors
def cti(inputs, engine, llm_config_path):
    """Print a threat-intelligence report (description and ATT&CK techniques)."""
    run_config = RunConfig(Mode.CTI, engine, list(inputs), llm_config=_llm_config(engine, llm_config_path))
    client = run_config.client()
    for path in inputs:
        _emit(run_cti(path, run_config, client).to_dict())


@cli.command()
@click.argument("corpus", type=click.Path(file_okay=False, path_type=Path))
@click.option("--truth", type=click.Path(dir_okay=False, path_type=Path),
              help="Ground truth JSONL [default: CORPUS/truth.jsonl].")
@engine_option
@llm_config_option
@fold_www_option
@click.option("--jobs", type=click.IntRange(min=1), default=None, help="Worker threads.")
@click.option("--lenient", is_flag=True, default=None, help="Ignore trailing slashes in URLs.")
@click.option("--macro", is_flag=True, default=None, help="Also report per-sample mean accuracies.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path),
              help="Write the report JSON here instead of stdout.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False, path_type=Path),
              help="Write per-sample rows as CSV (needs --out).")
@handle_errors
def evaluate(corpus, truth, engine, llm_config_path, fold_www, jobs, lenient, macro, out, csv_path):
    """Score an engine against a corpus with known URLs."""
    run_config = RunConfig(
        Mode.EVALUATE, engine, [corpus], truth=truth or corpus / "truth.jsonl",
        llm_config=_llm_config(engine, llm_config_path), out=out, csv=csv_path,
        jobs=jobs or int(config.get("evaluation.jobs", 1)),
        lenient=bool(config.get("evaluation.lenient", False)) if lenient is None else lenient,
        macro=bool(config.get("evaluation.macro", False)) if macro is None else macro,
        fold_www=_fold_www(fold_www),
    )
    report = run_evaluation(run_config)
    if out is None:
        _emit(report.to_dict())

    table = Table(title="Evaluation", box=box.ROUNDED)
    table.add_column("Metric", style="cyan")
    table.add_column("Value", justify="right")
    table.add_row("Samples", str(len(report.per_sample)))
    table.add_row("URL accuracy", f"{float(report.url_accuracy) * 100:.2f}%")
    table.add_row("Domain accuracy", f"{float(report.domain_accuracy) * 100:.2f}%")
    table.add_row("Hallucinated domains", str(report.hallucinated_domain_count))
    table.add_row("Refusals", str(report.refusal_count))
    table.add_row("Errors", str(report.error_count))
    console.print(table)
    console.print(report.summary_line(), markup=False)


@cli.command()
@click.option("--out", required=True, type=click.Path(file_okay=False, path_type=Path),
              help="Directory for the scripts and truth.jsonl.")
@click.option("--count", type=click.IntRange(min=0), required=True, help="Number of samples.")
@click.option("--seed", type=int, required=True, help="Makes the corpus reproducible.")
@click.option("--technique", "techniques", multiple=True, type=click.Choice(sorted(TECHNIQUES)),
              help="Enable only these techniques (repeatable) [default: configured list].")
@click.option("--base64", "encode_base64", is_flag=True,
              help="Store each script as base64 of its UTF-16LE bytes.")
@handle_errors
def synth(out, count, seed, techniques, encode_base64):
    """Write obfuscated samples with known URLs and their truth file."""
    chosen = tuple(techniques) or tuple(config.get("synthetic.techniques", sorted(TECHNIQUES)))
    run_config = RunConfig(Mode.SYNTH, out=out, count=count, seed=seed, techniques=chosen,
                           encode_base64=encode_base64)
    entries = run_synth(run_config)
    console.print(f"wrote {len(entries)} samples to {escape(str(out))}")


def main() -> None:
    cli(prog_name="psdeob")


if __name__ == "__main__":
    main()
