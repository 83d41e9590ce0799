"""Errors raised by the chat-completion client."""
from typing import Optional


class LlmError(Exception):
    """Base class for model access failures."""


class TransportError(LlmError):
    """Network failure or HTTP 5xx that persisted through every retry."""

    def __init__(self, message: str, status: Optional[int] = None):
        super().__init__(message)
        self.status = status


class AuthError(LlmError):
    """HTTP 401/403; never retried."""

    def __init__(self, status: int):
        super().__init__(f"endpoint rejected credentials (HTTP {status})")
        self.status = status


class RateLimited(LlmError):
    """HTTP 429 that persisted through every retry."""


class PromptTooLarge(LlmError):
    """The rendered prompt exceeds the configured character budget."""

    def __init__(self, size: int, limit: int):
        super().__init__(f"prompt of {size} characters exceeds the {limit} character budget")
        self.size = size
        self.limit = limit
