"""Tests for corpus scoring runs."""
import json

import pandas as pd
import pytest

from evaluation.harness import Engine, run_corpus, write_report
from evaluation.truth import EmptyCorpus, GroundTruthEntry, sample_id_for, write_ground_truth
from evaluation.synthetic import write_synthetic_corpus
from iocs.extract import Provenance
from llm.client import LlmClient, LlmConfig
from llm.errors import AuthError


def _client(session):
    return LlmClient(LlmConfig(endpoint="http://stub/v1", retries=0), session=session, sleep=lambda _: None)


@pytest.fixture
def corpus(tmp_path):
    write_synthetic_corpus(tmp_path, 12, seed=1)
    return tmp_path


def test_static_engine_is_exact(corpus, request):
    """The static engine scores 100% on synthetic samples, offline and read-only."""
    request.getfixturevalue("no_network")
    request.getfixturevalue("no_writes")
    report = run_corpus(corpus)
    assert report.url_accuracy == 1
    assert report.domain_accuracy == 1
    assert report.hallucinated_domain_count == 0
    assert report.error_count == 0
    assert len(report.per_sample) == 12


def test_jobs_do_not_change_results(corpus):
    """Thread count never changes the report."""
    assert run_corpus(corpus, jobs=1).to_dict() == run_corpus(corpus, jobs=4).to_dict()


def test_llm_engine_with_empty_answers(corpus, stub_session):
    """A model that finds nothing scores zero and hallucinates nothing."""
    session = stub_session(["[]"])
    report = run_corpus(corpus, engine="llm", client=_client(session))
    assert report.url_accuracy == 0
    assert report.hallucinated_domain_count == 0
    assert report.refusal_count == 0
    assert len(session.bodies) == 12


def test_llm_engine_refusals(corpus, stub_session, refusals):
    """Every refusal is counted."""
    report = run_corpus(corpus, engine=Engine.LLM, client=_client(stub_session([refusals[0]])))
    assert report.refusal_count == 12
    assert report.url_accuracy == 0


def test_llm_engine_invented_domain(corpus, stub_session):
    """An invented URL shows up as a hallucinated domain in every sample."""
    session = stub_session(['["https://blueyellows.com/x/"]'])
    report = run_corpus(corpus, engine="llm", client=_client(session))
    assert report.hallucinated_domain_count == 12
    assert report.top_hallucinated == [("blueyellows.com", 12)]


def test_llm_failures_are_scored_as_errors(corpus, stub_session):
    """Transport failures mark samples, the run continues."""
    report = run_corpus(corpus, engine="llm", client=_client(stub_session([(500, None)])))
    assert report.error_count == 12
    assert report.url_accuracy == 0


def test_auth_error_aborts(corpus, stub_session):
    """Bad credentials stop the whole run."""
    with pytest.raises(AuthError):
        run_corpus(corpus, engine="llm", client=_client(stub_session([(401, None)])))


def _plain_corpus(tmp_path):
    tmp_path.mkdir(exist_ok=True)
    script = tmp_path / "plain.ps1"
    script.write_text("Write-Host 'hello'\n", encoding="utf-8")
    entry = GroundTruthEntry(sample_id_for(script.read_bytes()), str(script), ("https://a.com/x",))
    write_ground_truth([entry], tmp_path / "truth.jsonl", relative_to=tmp_path)
    return tmp_path


def test_static_then_llm_asks_only_when_static_finds_nothing(tmp_path, stub_session):
    """The model is consulted for the sample the static pass cannot read."""
    write_synthetic_corpus(tmp_path, 3, seed=2)
    corpus = _plain_corpus(tmp_path / "extra")
    session = stub_session(['["https://a.com/x"]'])
    report = run_corpus(corpus, engine="static-then-llm", client=_client(session))
    assert report.url_accuracy == 1
    assert report.per_sample[0].extracted.provenance is Provenance.LLM
    assert len(session.bodies) == 1

    session = stub_session(["[]"])
    report = run_corpus(tmp_path, engine="static-then-llm", client=_client(session))
    assert report.url_accuracy == 1
    assert session.bodies == []


def test_static_then_llm_keeps_static_on_model_failure(tmp_path, stub_session):
    """A failing fallback is not an error."""
    corpus = _plain_corpus(tmp_path)
    report = run_corpus(corpus, engine="static-then-llm", client=_client(stub_session([(503, None)])))
    assert report.error_count == 0
    assert report.url_accuracy == 0


def test_missing_script_is_an_error(tmp_path):
    """An unreadable script is scored as an error, not raised."""
    corpus = _plain_corpus(tmp_path)
    (corpus / "plain.ps1").unlink()
    report = run_corpus(corpus)
    assert report.error_count == 1
    assert report.per_sample[0].missed_urls == ("https://a.com/x",)


def test_missing_truth_file(tmp_path):
    """No truth file means there is nothing to score."""
    with pytest.raises(EmptyCorpus):
        run_corpus(tmp_path)


def test_empty_truth_file(tmp_path):
    """A truth file with only blank lines is empty."""
    (tmp_path / "truth.jsonl").write_text("\n\n", encoding="utf-8")
    with pytest.raises(EmptyCorpus):
        run_corpus(tmp_path)


def test_write_report(corpus, tmp_path_factory):
    """JSON report and per-sample CSV."""
    out = tmp_path_factory.mktemp("out")
    report = run_corpus(corpus, macro=True)
    write_report(report, out / "report.json", out / "scores.csv")

    data = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert data["url_accuracy"] == 1.0
    assert data["macro_url_accuracy"] == 1.0
    assert data["sample_count"] == 12

    rows = pd.read_csv(out / "scores.csv")
    assert len(rows) == 12
    assert (rows["tp_urls"] == rows["truth_urls"]).all()
    assert (rows["hallucinated_domains"] == 0).all()
