"""Command-line tests through click's runner."""
import json
import logging

import pytest
import requests
from click.testing import CliRunner

from pipeline.cli import ExitCode, cli


@pytest.fixture(autouse=True)
def restore_root_logger():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers, root.level = handlers, level


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def emotet_file(tmp_path, emotet_bytes):
    path = tmp_path / "emotet.ps1"
    path.write_bytes(emotet_bytes)
    return path


def test_deobfuscate_prints_json(runner, emotet_file, emotet_urls, no_network):
    """One JSON line per file with the rendered script and the URLs; the static engine stays offline."""
    result = runner.invoke(cli, ["deobfuscate", str(emotet_file)])
    assert result.exit_code == ExitCode.OK, result.output
    data = json.loads(result.stdout)
    assert data["extraction"]["urls"] == emotet_urls
    assert data["extraction"]["provenance"] == "static"
    assert "downloadfile(" in data["rendered"]


def test_deobfuscate_writes_outputs(runner, emotet_file, tmp_path):
    """--out stores the rendered script and the IOC JSON."""
    out = tmp_path / "out"
    result = runner.invoke(cli, ["deobfuscate", str(emotet_file), "--out", str(out)])
    assert result.exit_code == ExitCode.OK, result.output
    assert (out / "emotet.deob.ps1").read_text(encoding="utf-8") == json.loads(result.stdout)["rendered"]
    assert len(json.loads((out / "emotet.iocs.json").read_text(encoding="utf-8"))["urls"]) == 8


def test_extract_with_fold_www(runner, emotet_file):
    """Folded domains drop the www label."""
    result = runner.invoke(cli, ["extract", str(emotet_file), "--fold-www"])
    assert result.exit_code == ExitCode.OK, result.output
    data = json.loads(result.stdout)
    assert data["path"] == str(emotet_file)
    assert "mymathlabhomework.com" in data["domains"]


def test_empty_file(runner, tmp_path):
    """An empty script is bad input."""
    path = tmp_path / "empty.ps1"
    path.write_bytes(b"")
    result = runner.invoke(cli, ["deobfuscate", str(path)])
    assert result.exit_code == ExitCode.BAD_INPUT
    assert "error:" in result.stderr


def test_missing_file(runner, tmp_path):
    """A path that does not exist is bad input."""
    result = runner.invoke(cli, ["extract", str(tmp_path / "nope.ps1")])
    assert result.exit_code == ExitCode.BAD_INPUT


def test_garbage_bytes_still_render(runner, tmp_path):
    """Binary content is processed, not rejected."""
    path = tmp_path / "garbage.bin"
    path.write_bytes(bytes(range(128, 256)) * 4)
    result = runner.invoke(cli, ["deobfuscate", str(path)])
    assert result.exit_code == ExitCode.OK, result.output
    assert json.loads(result.stdout)["extraction"]["urls"] == []


def test_static_cti(runner, emotet_file):
    """The static engine reports from the rule table."""
    result = runner.invoke(cli, ["cti", str(emotet_file)])
    assert result.exit_code == ExitCode.OK, result.output
    data = json.loads(result.stdout)
    assert data["extensions"]["source"] == "heuristic"
    assert {"T1105", "T1059", "T1027"} <= {m["ID"] for m in data["mitre_attack_methods"]}


def test_synth_then_evaluate(runner, tmp_path):
    """A synthetic corpus scores 100% with the static engine."""
    corpus = tmp_path / "corpus"
    result = runner.invoke(cli, ["synth", "--out", str(corpus), "--count", "10", "--seed", "1"])
    assert result.exit_code == ExitCode.OK, result.output
    assert len(list(corpus.glob("*.ps1"))) == 10

    result = runner.invoke(cli, ["evaluate", str(corpus)])
    assert result.exit_code == ExitCode.OK, result.output
    assert json.loads(result.stdout)["url_accuracy"] == 1.0
    assert "url 100.0% domain 100.0% halluc 0 refusals 0" in result.stderr


def test_evaluate_writes_report_files(runner, tmp_path):
    """--out and --csv replace the JSON on stdout."""
    corpus = tmp_path / "corpus"
    runner.invoke(cli, ["synth", "--out", str(corpus), "--count", "3", "--seed", "2", "--base64"])
    report, rows = tmp_path / "report.json", tmp_path / "rows.csv"
    result = runner.invoke(cli, ["evaluate", str(corpus), "--out", str(report), "--csv", str(rows),
                                 "--jobs", "2", "--macro"])
    assert result.exit_code == ExitCode.OK, result.output
    assert result.stdout == ""
    assert json.loads(report.read_text(encoding="utf-8"))["macro_url_accuracy"] == 1.0
    assert rows.read_text(encoding="utf-8").startswith("sample_id,")


def test_synth_is_deterministic(runner, tmp_path):
    """Same seed, same files."""
    for name in ("a", "b"):
        runner.invoke(cli, ["synth", "--out", str(tmp_path / name), "--count", "2", "--seed", "9"])
    for name in ("truth.jsonl", "sample_00000.ps1", "sample_00001.ps1"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_synth_counts_files_and_truth_lines(runner, tmp_path):
    """count 5 writes five scripts and five truth lines."""
    result = runner.invoke(cli, ["synth", "--out", str(tmp_path), "--count", "5", "--seed", "7"])
    assert result.exit_code == ExitCode.OK, result.output
    assert len(list(tmp_path.glob("*.ps1"))) == 5
    assert len((tmp_path / "truth.jsonl").read_text(encoding="utf-8").splitlines()) == 5


def test_synth_into_a_file_path(runner, tmp_path):
    """An output directory that cannot be created is bad input."""
    blocker = tmp_path / "taken"
    blocker.write_text("x", encoding="utf-8")
    result = runner.invoke(cli, ["synth", "--out", str(blocker), "--count", "1", "--seed", "1"])
    assert result.exit_code == ExitCode.BAD_INPUT


def test_synth_zero_samples(runner, tmp_path):
    """Zero samples is a valid request; scoring it is not."""
    corpus = tmp_path / "corpus"
    result = runner.invoke(cli, ["synth", "--out", str(corpus), "--count", "0", "--seed", "1"])
    assert result.exit_code == ExitCode.OK, result.output
    assert (corpus / "truth.jsonl").read_text(encoding="utf-8") == ""

    result = runner.invoke(cli, ["evaluate", str(corpus)])
    assert result.exit_code == ExitCode.BAD_TRUTH


def test_bad_truth_line(runner, tmp_path):
    """A malformed truth file stops evaluation."""
    (tmp_path / "truth.jsonl").write_text('{"sample_id": "a"\n', encoding="utf-8")
    result = runner.invoke(cli, ["evaluate", str(tmp_path)])
    assert result.exit_code == ExitCode.BAD_TRUTH
    assert "line 1" in result.stderr


def test_missing_truth(runner, tmp_path):
    """A corpus without a truth file is empty."""
    result = runner.invoke(cli, ["evaluate", str(tmp_path)])
    assert result.exit_code == ExitCode.BAD_TRUTH


def test_unknown_technique_is_a_usage_error(runner, tmp_path):
    """Technique names are validated by the option."""
    result = runner.invoke(cli, ["synth", "--out", str(tmp_path), "--count", "1", "--seed", "1",
                                 "--technique", "rot13"])
    assert result.exit_code == 2


def test_llm_transport_failure(runner, emotet_file, tmp_path, monkeypatch):
    """A model that cannot be reached is exit code 3 in llm mode."""
    def refuse(self, *args, **kwargs):
        raise requests.ConnectionError("connection refused")

    monkeypatch.setattr(requests.Session, "post", refuse)
    settings = tmp_path / "llm.yaml"
    settings.write_text("endpoint: http://127.0.0.1:9/v1/chat/completions\nretries: 0\n", encoding="utf-8")
    result = runner.invoke(cli, ["extract", str(emotet_file), "--engine", "llm", "--llm-config", str(settings)])
    assert result.exit_code == ExitCode.LLM_FAILURE


def test_static_then_llm_survives_transport_failure(runner, tmp_path, monkeypatch):
    """The fallback engine keeps the static result when the model is down."""
    def refuse(self, *args, **kwargs):
        raise requests.ConnectionError("connection refused")

    monkeypatch.setattr(requests.Session, "post", refuse)
    script = tmp_path / "plain.ps1"
    script.write_text("Write-Host 'hello'\n", encoding="utf-8")
    settings = tmp_path / "llm.yaml"
    settings.write_text("retries: 0\n", encoding="utf-8")
    result = runner.invoke(cli, ["deobfuscate", str(script), "--engine", "static-then-llm",
                                 "--llm-config", str(settings)])
    assert result.exit_code == ExitCode.OK, result.output
    data = json.loads(result.stdout)
    assert data["extraction"]["urls"] == []
    assert "connection refused" in data["llm_error"]
