"""Tests for the synthetic dropper generator."""
import random

import pytest
from faker import Faker

from deobfuscator.lexer import decode_input
from evaluation.harness import static_extraction
from evaluation.synthetic import (
    TECHNIQUES, fake_urls, generate_synthetic_sample, write_synthetic_corpus,
)
from evaluation.truth import load_ground_truth

PLAIN_URLS = ["https://a-b.com/x/y/", "http://c.org/index.php?id=1", "https://www.d.net/"]


def _recovered(script):
    return static_extraction(decode_input(script.encode("utf-8"))).urls


def test_static_engine_recovers_every_sample():
    """500 seeds with every technique: the planted URLs come back exactly."""
    faker = Faker()
    faker.seed_instance(1)
    rng = random.Random(1)
    for seed in range(500):
        urls = fake_urls(faker, rng, 4, 9)
        script, entry = generate_synthetic_sample(urls, seed)
        assert _recovered(script) == entry.urls, f"seed {seed}"


@pytest.mark.parametrize("technique", sorted(TECHNIQUES))
def test_single_technique(technique):
    """Each technique on its own still folds back to the URLs."""
    for seed in range(20):
        script, entry = generate_synthetic_sample(PLAIN_URLS, seed, techniques=[technique])
        assert _recovered(script) == entry.urls


def test_no_techniques():
    """With everything off the URL list is a plain string."""
    script, entry = generate_synthetic_sample(PLAIN_URLS, 0, techniques=[])
    assert "@".join(PLAIN_URLS) in script
    assert "`" not in script
    assert _recovered(script) == entry.urls


def test_backticks_only_when_enabled():
    """Backticks appear only with the backticks technique."""
    without = {t for t in TECHNIQUES if t != "backticks"}
    for seed in range(10):
        script, _ = generate_synthetic_sample(PLAIN_URLS, seed, techniques=without)
        assert "`" not in script


def test_same_seed_same_script():
    """Generation is reproducible."""
    first = generate_synthetic_sample(PLAIN_URLS, 42)
    assert generate_synthetic_sample(PLAIN_URLS, 42) == first
    assert generate_synthetic_sample(PLAIN_URLS, 43)[0] != first[0]


@pytest.mark.parametrize("urls", [
    [],
    ["https://a.com/x@y"],
    ["https://user@a.com/"],
    ["ftp://a.com/"],
])
def test_unplantable_urls(urls):
    """Empty lists, '@' and non-http URLs are rejected."""
    with pytest.raises(ValueError):
        generate_synthetic_sample(urls, 0)


def test_unknown_technique():
    """Technique names are checked."""
    with pytest.raises(ValueError, match="rot13"):
        generate_synthetic_sample(PLAIN_URLS, 0, techniques=["rot13"])


def test_write_corpus(tmp_path):
    """Scripts and truth.jsonl land in the directory and load back."""
    entries = write_synthetic_corpus(tmp_path, 5, seed=7)
    assert sorted(p.name for p in tmp_path.glob("*.ps1")) == [f"sample_{i:05d}.ps1" for i in range(5)]
    assert load_ground_truth(tmp_path / "truth.jsonl") == entries
    for entry in entries:
        assert 4 <= len(entry.urls) <= 9
        script = (tmp_path / entry.script_path).read_text(encoding="utf-8")
        assert _recovered(script) == entry.urls


def test_write_corpus_is_deterministic(tmp_path):
    """Same count and seed write the same bytes."""
    write_synthetic_corpus(tmp_path / "one", 3, seed=11)
    write_synthetic_corpus(tmp_path / "two", 3, seed=11)
    for name in ["truth.jsonl", "sample_00000.ps1", "sample_00002.ps1"]:
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_write_corpus_base64(tmp_path):
    """Encoded samples decode to scripts that still yield their URLs."""
    entries = write_synthetic_corpus(tmp_path, 3, seed=5, encode_base64=True)
    for entry in entries:
        data = (tmp_path / entry.script_path).read_bytes()
        assert data.endswith(b"\n")
        assert static_extraction(decode_input(data)).urls == entry.urls


def test_single_url_sample():
    """One URL, every technique, one URL back."""
    script, entry = generate_synthetic_sample(["http://a.example/x"], 1)
    assert entry.urls == ("http://a.example/x",)
    assert _recovered(script) == entry.urls
