"""Model-backed fallback: prompts, HTTP client and answer parsing."""
