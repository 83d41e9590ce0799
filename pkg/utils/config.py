"""Configuration management for the dropper deobfuscation toolkit."""
import copy
import json
import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

DEFAULT_REFUSAL_PATTERNS = [
    r"I'm sorry, I cannot",
    r"I'm designed solely to process",
]


class Config:
    """Configuration manager for the deobfuscation toolkit."""

    def __init__(self, config_file: Optional[str] = None):
        """Initialize configuration with defaults.

        Args:
            config_file: Optional JSON or YAML file merged over the defaults.
                Falls back to ``config.json`` at the repository root if present.
        """
        self.root_dir = Path(__file__).parent.parent
        self.config_file = Path(config_file) if config_file else self.root_dir / "config.json"
        self.config = self._load_config()

    def _load_config(self) -> Dict[str, Any]:
        """Load configuration from file and merge it over the defaults.

        Returns:
            Configuration dictionary
        """
        defaults = self._get_default_config()
        if not self.config_file.exists():
            return defaults

        with open(self.config_file, 'r', encoding='utf-8') as f:
            if self.config_file.suffix.lower() in (".yaml", ".yml"):
                loaded = yaml.safe_load(f) or {}
            else:
                loaded = json.load(f)
        if not isinstance(loaded, dict):
            raise ValueError(f"Config file {self.config_file} must contain a mapping")
        return _deep_merge(defaults, loaded)

    def _get_default_config(self) -> Dict[str, Any]:
        """Get default configuration.

        Returns:
            Default configuration dictionary
        """
        return {
            "deobfuscation": {
                "trim_path_separators": False,
            },
            "ioc": {
                "separators": ["@", "*"],
                "fold_www": False,
            },
            "llm": {
                "endpoint": "http://localhost:8000/v1/chat/completions",
                "model": "gpt-4-1106-preview",
                "style": "system-user",
                "temperature": 0,
                "max_tokens": 2048,
                "timeout_s": 120,
                "retries": 3,
                "backoff_s": 1.0,
                "max_chars": 24000,
                "max_in_flight": 4,
                "api_key_env": "PSDEOB_API_KEY",
                "endpoint_env": "PSDEOB_ENDPOINT",
                "refusal_patterns": list(DEFAULT_REFUSAL_PATTERNS),
            },
            "evaluation": {
                "jobs": 1,
                "lenient": False,
                "macro": False,
            },
            "synthetic": {
                "min_urls": 4,
                "max_urls": 9,
                "techniques": [
                    "split-strings", "format-op", "replace-token", "char-cast",
                    "backticks", "dead-code", "random-names",
                ],
            },
            "cti": {
                "rules_file": str(self.root_dir / "cti" / "techniques.yaml"),
            },
        }

    def load(self, config_file: str) -> None:
        """Replace the current settings with ``config_file`` merged over the defaults."""
        self.config_file = Path(config_file)
        self.config = self._load_config()

    def save(self) -> None:
        """Save current configuration to file."""
        with open(self.config_file, 'w', encoding='utf-8') as f:
            if self.config_file.suffix.lower() in (".yaml", ".yml"):
                yaml.safe_dump(self.config, f, sort_keys=False)
            else:
                json.dump(self.config, f, indent=2)

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value.

        Args:
            key: Dot-separated key path (e.g., "llm.timeout_s")
            default: Default value if key not found

        Returns:
            Configuration value
        """
        keys = key.split('.')
        value = self.config
        for k in keys:
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def set(self, key: str, value: Any) -> None:
        """Set configuration value.

        Args:
            key: Dot-separated key path
            value: Value to set
        """
        keys = key.split('.')
        config = self.config
        for k in keys[:-1]:
            if k not in config:
                config[k] = {}
            config = config[k]
        config[keys[-1]] = value

    def env(self, key: str) -> Optional[str]:
        """Read the environment variable whose name is stored under ``key``."""
        name = self.get(key)
        return os.environ.get(name) if name else None


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


# Global config instance
config = Config()
