"""URL validation and normalization shared by the static and LLM paths."""
import ipaddress
import re
from typing import Optional
from urllib.parse import urlsplit

_SCHEMES = ("http", "https")
_LABEL = re.compile(r"[a-z0-9](?:[a-z0-9-]{0,61}[a-z0-9])?")
_WHITESPACE = re.compile(r"\s")


def _valid_host(host: str) -> bool:
    if "." not in host or len(host) > 253:
        return False
    try:
        ipaddress.IPv4Address(host)
        return True
    except ValueError:
        pass
    labels = host.split(".")
    if not all(_LABEL.fullmatch(label) for label in labels):
        return False
    # an all-numeric last label is a malformed address, not a TLD
    return not labels[-1].isdigit()


def validate_url(candidate: str) -> Optional[str]:
    """Return the normalized form of an http(s) URL, or None.

    Normalization lowercases the scheme and host, keeps the port, path,
    query and fragment exactly, and strips surrounding whitespace.  Hosts
    must be DNS names or IPv4 literals containing a dot; IPv6 literals and
    credentials in the authority are rejected.

    Args:
        candidate: Any text

    Returns:
        Normalized URL, or None if ``candidate`` is not acceptable
    """
    text = candidate.strip()
    if not text or _WHITESPACE.search(text):
        return None
    try:
        parts = urlsplit(text)
        port = parts.port
    except ValueError:
        return None
    scheme = parts.scheme.lower()
    if scheme not in _SCHEMES or not parts.netloc:
        return None
    if "@" in parts.netloc or "[" in parts.netloc:
        return None
    host = (parts.hostname or "").lower()
    if not _valid_host(host):
        return None

    if not text[len(parts.scheme):].startswith("://"):
        return None
    authority = host if port is None else f"{host}:{port}"
    # everything after the authority is copied verbatim
    rest = text[len(parts.scheme) + 3 + len(parts.netloc):]
    return f"{scheme}://{authority}{rest}"


def url_to_domain(url: str, fold_www: bool = False) -> str:
    """Host of a normalized URL, lowercase, without port.

    Args:
        url: Output of ``validate_url``
        fold_www: Drop a leading ``www.`` label
    """
    host = (urlsplit(url).hostname or "").lower()
    if fold_www and host.startswith("www.") and host.count(".") > 1:
        host = host[4:]
    return host


def strip_trailing_slash(url: str) -> str:
    """Lenient matching form: the URL without trailing ``/`` characters."""
    return url.rstrip("/")
