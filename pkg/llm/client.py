"""Chat-completion HTTP client.

Speaks the OpenAI-style ``/chat/completions`` JSON shape, which both hosted
APIs and local model gateways accept.  Temperature defaults to zero so
repeated runs over a corpus are comparable.
"""
import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import requests
import yaml

from llm.errors import AuthError, LlmError, PromptTooLarge, RateLimited, TransportError
from llm.prompts import Message, PromptStyle
from utils.config import Config, config as default_config

logger = logging.getLogger(__name__)

__all__ = [
    "AuthError", "LlmClient", "LlmConfig", "LlmError", "PromptTooLarge", "RateLimited",
    "TransportError", "complete", "load_llm_config",
]


@dataclass
class LlmConfig:
    """Connection and sampling settings for one model endpoint.

    Attributes:
        endpoint: Full chat-completion URL
        model: Model identifier sent in the request body
        temperature: Sampling temperature, 0 unless explicitly overridden
        max_tokens: Output token cap
        timeout_s: Per-request timeout in seconds
        retries: Extra attempts after the first on 5xx, 429 and network errors
        backoff_s: First retry delay; doubles on each further retry
        max_chars: Prompt budget in characters
        max_in_flight: Concurrent requests allowed per client
        style: Prompt framing for the deobfuscation prompt
        refusal_patterns: Regular expressions that mark a refusal
        api_key: Bearer token, read from the environment only
    """
    endpoint: str = "http://localhost:8000/v1/chat/completions"
    model: str = "gpt-4-1106-preview"
    temperature: float = 0
    max_tokens: int = 2048
    timeout_s: float = 120
    retries: int = 3
    backoff_s: float = 1.0
    max_chars: int = 24000
    max_in_flight: int = 4
    style: PromptStyle = PromptStyle.SYSTEM_USER
    refusal_patterns: List[str] = field(default_factory=list)
    api_key: Optional[str] = field(default=None, repr=False)

    @classmethod
    def from_config(cls, cfg: Config) -> "LlmConfig":
        """Build from the ``llm`` section of a Config plus environment variables."""
        section = cfg.get("llm", {})
        endpoint = cfg.env("llm.endpoint_env") or section.get("endpoint", cls.endpoint)
        return cls(
            endpoint=endpoint,
            model=section.get("model", cls.model),
            temperature=section.get("temperature", 0),
            max_tokens=int(section.get("max_tokens", cls.max_tokens)),
            timeout_s=float(section.get("timeout_s", cls.timeout_s)),
            retries=int(section.get("retries", cls.retries)),
            backoff_s=float(section.get("backoff_s", cls.backoff_s)),
            max_chars=int(section.get("max_chars", cls.max_chars)),
            max_in_flight=max(1, int(section.get("max_in_flight", cls.max_in_flight))),
            style=PromptStyle(section.get("style", PromptStyle.SYSTEM_USER.value)),
            refusal_patterns=list(section.get("refusal_patterns", [])),
            api_key=cfg.env("llm.api_key_env"),
        )


def load_llm_config(path: Optional[str] = None) -> LlmConfig:
    """LlmConfig from a JSON/YAML file merged over the defaults.

    Keys in the file: model, temperature, timeout_s, retries, max_chars,
    refusal_patterns, endpoint, style, max_in_flight.  The file may hold
    them at top level or under ``llm``.  Secrets never come from the file.
    """
    if path is None:
        return LlmConfig.from_config(default_config)
    with open(path, "r", encoding="utf-8") as f:
        loaded = yaml.safe_load(f) or {}
    if not isinstance(loaded, dict):
        raise ValueError(f"LLM config {path} must contain a mapping")
    section = loaded.get("llm", loaded)

    cfg = Config()
    for key, value in section.items():
        if key in ("api_key", "token"):
            logger.warning("ignoring %s in %s; set it in the environment", key, path)
            continue
        cfg.set(f"llm.{key}", value)
    return LlmConfig.from_config(cfg)


class LlmClient:
    """Thread-safe client with an in-flight cap and a request counter.

    Args:
        llm_config: Endpoint settings
        session: ``requests.Session`` to send through (tests pass a stub)
        sleep: Delay function used between retries
    """

    def __init__(self, llm_config: Optional[LlmConfig] = None,
                 session: Optional[requests.Session] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = llm_config or LlmConfig.from_config(default_config)
        self.session = session or requests.Session()
        self.sleep = sleep
        self.request_count = 0
        self._slots = threading.BoundedSemaphore(self.config.max_in_flight)
        self._lock = threading.Lock()

    def request_body(self, messages: List[Message]) -> dict:
        return {
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        }

    def complete(self, messages: List[Message]) -> str:
        """Send one chat-completion request and return the assistant text.

        Retries network errors, HTTP 5xx and 429 with exponential backoff.

        Raises:
            AuthError: HTTP 401 or 403 (not retried)
            RateLimited: HTTP 429 on every attempt
            TransportError: Network failure, 5xx on every attempt, other 4xx,
                or a response without assistant text
        """
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        body = self.request_body(messages)

        last_error: LlmError = TransportError("no attempt made")
        for attempt in range(self.config.retries + 1):
            if attempt:
                delay = self.config.backoff_s * (2 ** (attempt - 1))
                logger.info("retrying in %.1fs after: %s", delay, last_error)
                self.sleep(delay)
            with self._slots:
                with self._lock:
                    self.request_count += 1
                try:
                    response = self.session.post(
                        self.config.endpoint, json=body, headers=headers,
                        timeout=self.config.timeout_s,
                    )
                except requests.exceptions.RequestException as exc:
                    last_error = TransportError(f"request failed: {exc}")
                    continue

            status = response.status_code
            if status in (401, 403):
                raise AuthError(status)
            if status == 429:
                last_error = RateLimited("endpoint rate limit (HTTP 429)")
                continue
            if status >= 500:
                last_error = TransportError(f"server error (HTTP {status})", status)
                continue
            if status >= 400:
                raise TransportError(f"request rejected (HTTP {status})", status)
            return _assistant_text(response)
        raise last_error


def _assistant_text(response) -> str:
    try:
        payload = response.json()
        content = payload["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"unexpected response body: {exc}") from exc
    if not isinstance(content, str):
        raise TransportError("response carries no assistant text")
    return content


def complete(prompt: List[Message], llm_config: Optional[LlmConfig] = None,
             session: Optional[requests.Session] = None) -> str:
    """One-off request through a fresh client."""
    return LlmClient(llm_config, session=session).complete(prompt)
