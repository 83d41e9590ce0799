"""Shared pytest fixtures: sample scripts, a stub model endpoint, effect guards."""
import builtins
import json
import os
import socket
from pathlib import Path

import pytest
import requests

FIXTURES_DIR = Path(__file__).parent / "deobfuscator" / "tests" / "fixtures"

EMOTET_URLS = [
    "https://paasologrp.com/parseopmlo/5/",
    "http://launch.tactikafacewear.com/wp-content/Uk/",
    "https://singohotel.com/dashboardl/q/",
    "https://www.mymathlabhomework.com/wp-content/o/",
    "https://dietherbsindia.com/assets/k8oo/",
    "https://dev-tech.eu/demoshop/P0/",
    "https://mithraa.co/nMT/",
    "http://chess-pgn.com/win-raid/l6T5/",
]

GPT4_REFUSAL = (
    "I'm sorry, I cannot extract URLs from this Powershell code as it appears to be obfuscated "
    "and possibly malicious. As a language model, I prioritise ethical and safe utilisation of "
    "technology."
)
GEMINI_REFUSAL = "I'm designed solely to process and generate text, so I'm unable to assist you with that."


@pytest.fixture
def fixtures_dir():
    return FIXTURES_DIR


@pytest.fixture
def emotet_bytes():
    return (FIXTURES_DIR / "emotet_sample.ps1").read_bytes()


@pytest.fixture
def emotet_urls():
    return list(EMOTET_URLS)


# ---------------------------------------------------------------------------
# Stub chat-completion endpoint
# ---------------------------------------------------------------------------

class StubResponse:
    def __init__(self, status_code: int, content=None):
        self.status_code = status_code
        self._content = content

    def json(self):
        if self._content is None:
            raise ValueError("no body")
        return {"choices": [{"message": {"role": "assistant", "content": self._content}}]}


class StubSession:
    """Stands in for ``requests.Session``; replays canned answers.

    ``replies`` items are assistant texts, ``(status, text)`` pairs, or
    exceptions to raise.  The last item repeats once the list runs out.
    """

    def __init__(self, replies):
        self.replies = list(replies)
        self.bodies = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.bodies.append(json)
        reply = self.replies[min(len(self.bodies), len(self.replies)) - 1]
        if isinstance(reply, Exception):
            raise reply
        if isinstance(reply, tuple):
            return StubResponse(*reply)
        return StubResponse(200, reply)


class EchoSession(StubSession):
    """A model that answers every prompt with the fenced code it was given."""

    def __init__(self):
        super().__init__([])

    def post(self, url, json=None, headers=None, timeout=None):
        self.bodies.append(json)
        content = json["messages"][-1]["content"]
        start = content.index("```\n") + 4
        return StubResponse(200, content[start:content.rindex("\n```")])


@pytest.fixture
def stub_session():
    return StubSession


@pytest.fixture
def echo_session():
    return EchoSession()


@pytest.fixture
def refusals():
    return GPT4_REFUSAL, GEMINI_REFUSAL


@pytest.fixture
def analyst_answer():
    return json.dumps({
        "description": (
            "The script performs several malicious activities: It creates a directory in the "
            "user's home folder, sets the security protocol to TLS 1.2 for secure connections, "
            "downloads executables from multiple URLs until it finds one that is at least 48,813 "
            "bytes in size, and then executes the downloaded executable. This behavior is "
            "indicative of a downloader trying to fetch and execute malware from the internet."
        ),
        "mitre_attack_methods": [
            {"ID": "T1566", "name": "Phishing"},
            {"ID": "T1105", "name": "Ingress Tool Transfer"},
            {"ID": "T1059", "name": "Command and Scripting Interpreter"},
            {"ID": "T1027", "name": "Obfuscated Files or Information"},
        ],
    }, indent=2)


# ---------------------------------------------------------------------------
# Effect guards
# ---------------------------------------------------------------------------

@pytest.fixture
def no_network(monkeypatch):
    """Fail the test on any socket connection or HTTP request."""
    def deny(*args, **kwargs):
        raise AssertionError("network access attempted")

    monkeypatch.setattr(socket.socket, "connect", deny)
    monkeypatch.setattr(socket, "create_connection", deny)
    monkeypatch.setattr(requests.Session, "send", deny)


@pytest.fixture
def no_writes(monkeypatch):
    """Fail the test on any attempt to create or modify a file."""
    real_open = builtins.open

    def guarded_open(file, mode="r", *args, **kwargs):
        if any(flag in mode for flag in "wax+"):
            raise AssertionError(f"write access attempted: {file}")
        return real_open(file, mode, *args, **kwargs)

    def deny(*args, **kwargs):
        raise AssertionError("filesystem change attempted")

    monkeypatch.setattr(builtins, "open", guarded_open)
    monkeypatch.setattr(Path, "write_text", deny)
    monkeypatch.setattr(Path, "write_bytes", deny)
    monkeypatch.setattr(Path, "mkdir", deny)
    monkeypatch.setattr(os, "mkdir", deny)
    monkeypatch.setattr(os, "makedirs", deny)
