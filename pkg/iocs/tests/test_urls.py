"""Tests for URL validation and domain derivation."""
import pytest

from iocs.urls import strip_trailing_slash, url_to_domain, validate_url


@pytest.mark.parametrize("candidate, expected", [
    ("https://paasologrp.com/parseopmlo/5/", "https://paasologrp.com/parseopmlo/5/"),
    ("HTTP://Launch.Example.COM/Wp-Content/Uk/", "http://launch.example.com/Wp-Content/Uk/"),
    ("  https://a.co/x  ", "https://a.co/x"),
    ("http://10.0.0.1:8080/p?q=1#f", "http://10.0.0.1:8080/p?q=1#f"),
    ("https://dev-tech.eu", "https://dev-tech.eu"),
    ("HTTPS://Dev-Tech.eu/demoshop/P0/", "https://dev-tech.eu/demoshop/P0/"),
])
def test_valid_urls_are_normalized(candidate, expected):
    """Scheme and host are lowercased; everything after the host is kept."""
    assert validate_url(candidate) == expected


@pytest.mark.parametrize("candidate", [
    "",
    "ftp://example.com/file",
    "https://",
    "https://localhost/x",
    "http://nodot/z",
    "https://user:pw@example.com/",
    "https://[::1]/x",
    "https://exa mple.com/",
    "https://1.2.3/x",
    "https://-bad-.com/",
    "example.com/path",
    "https:/example.com/x",
])
def test_invalid_urls_are_rejected(candidate):
    """Anything that is not an http(s) URL with a dotted host is refused."""
    assert validate_url(candidate) is None


def test_url_to_domain():
    """The host comes back lowercase and without port."""
    assert url_to_domain("https://WWW.Example.com:8443/a") == "www.example.com"


def test_url_to_domain_folds_www_on_request():
    """A leading www. label is dropped only when asked, and never from a bare www.tld."""
    assert url_to_domain("https://www.example.com/", fold_www=True) == "example.com"
    assert url_to_domain("https://www.com/", fold_www=True) == "www.com"
    assert url_to_domain("https://www.example.com/") == "www.example.com"


def test_strip_trailing_slash():
    """Lenient matching ignores trailing slashes."""
    assert strip_trailing_slash("https://a.com/x/") == "https://a.com/x"
    assert strip_trailing_slash("https://a.com/x") == "https://a.com/x"


@pytest.mark.parametrize("url, domain", [
    ("https://www.mymathlabhomework.com/wp-content/o/", "www.mymathlabhomework.com"),
    ("http://a.example:8080/x", "a.example"),
    ("https://mithraa.co/nMT/", "mithraa.co"),
])
def test_url_to_domain_examples(url, domain):
    """Hosts of sample URLs."""
    assert url_to_domain(url) == domain


def test_normalization_is_a_fixed_point(emotet_urls):
    """Validating a normalized URL returns it unchanged."""
    for url in emotet_urls + ["HTTPS://Dev-Tech.eu/demoshop/P0/"]:
        normalized = validate_url(url)
        assert validate_url(normalized) == normalized
