"""Tests for the settings layer."""
import json

import pytest

from utils.config import Config


def test_defaults_without_file(tmp_path):
    """A missing file leaves the built-in defaults."""
    cfg = Config(str(tmp_path / "absent.json"))
    assert cfg.get("llm.temperature") == 0
    assert cfg.get("ioc.separators") == ["@", "*"]
    assert cfg.get("llm.nope", "fallback") == "fallback"


def test_yaml_file_is_deep_merged(tmp_path):
    """Only the keys in the file change."""
    path = tmp_path / "settings.yaml"
    path.write_text("llm:\n  model: local\nevaluation:\n  jobs: 3\n", encoding="utf-8")
    cfg = Config(str(path))
    assert cfg.get("llm.model") == "local"
    assert cfg.get("llm.retries") == 3
    assert cfg.get("evaluation.jobs") == 3


def test_load_replaces_previous_file(tmp_path):
    """load() starts again from the defaults."""
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    first.write_text(json.dumps({"evaluation": {"jobs": 5}}), encoding="utf-8")
    second.write_text(json.dumps({"ioc": {"fold_www": True}}), encoding="utf-8")
    cfg = Config(str(first))
    cfg.load(str(second))
    assert cfg.get("evaluation.jobs") == 1
    assert cfg.get("ioc.fold_www") is True


def test_set_and_save(tmp_path):
    """Values set by dot path survive a save and reload."""
    path = tmp_path / "out.yaml"
    cfg = Config(str(path))
    cfg.set("synthetic.min_urls", 2)
    cfg.set("extra.nested.key", "v")
    cfg.save()
    reloaded = Config(str(path))
    assert reloaded.get("synthetic.min_urls") == 2
    assert reloaded.get("extra.nested.key") == "v"


def test_file_must_hold_a_mapping(tmp_path):
    """A list is not a settings file."""
    path = tmp_path / "bad.json"
    path.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ValueError):
        Config(str(path))


def test_env_lookup(tmp_path, monkeypatch):
    """Secrets come from the variable named in the settings."""
    cfg = Config(str(tmp_path / "absent.json"))
    monkeypatch.setenv("PSDEOB_API_KEY", "secret")
    assert cfg.env("llm.api_key_env") == "secret"
    cfg.set("llm.api_key_env", "OTHER_KEY")
    monkeypatch.delenv("OTHER_KEY", raising=False)
    assert cfg.env("llm.api_key_env") is None
