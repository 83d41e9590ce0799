"""Input decoding, comment stripping and tokenization for PowerShell droppers.

The token grammar covers what Invoke-Obfuscation style droppers use:
split string literals, ``-f`` format operators, casts such as ``[char]92``,
backtick-mangled member names (``."R`eP`lAce"``) and cmdlets invoked
through computed names (``&('Ge'+'t'+'-Item')``).  Backticks inside
identifiers and member names are removed here so that every later stage
sees canonical names.
"""
import base64
import binascii
import codecs
import logging
import re
import string
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

from deobfuscator.errors import LexError, UndecodableInput

logger = logging.getLogger(__name__)

# PowerShell accepts typographic quotes and dashes wherever the ASCII ones work
SINGLE_QUOTES = "'‘’‚‛"
DOUBLE_QUOTES = '"“”„'
DASHES = "-–—―"

KEYWORDS = frozenset({
    "foreach", "in", "try", "catch", "finally", "if", "elseif", "else",
    "break", "continue", "return", "while", "do", "for", "function",
    "switch", "throw", "trap", "param", "exit",
})

DASH_OPERATORS = frozenset({
    "f", "ge", "gt", "lt", "le", "eq", "ne", "like", "notlike", "match",
    "notmatch", "replace", "ireplace", "creplace", "split", "isplit",
    "csplit", "join", "and", "or", "xor", "not", "band", "bor", "bxor",
    "bnot", "shl", "shr", "is", "isnot", "as", "contains", "notcontains",
    "in", "notin", "ceq", "cne", "ieq", "ine", "clike", "ilike", "cmatch",
    "imatch", "cge", "cgt", "clt", "cle", "ige", "igt", "ilt", "ile",
})

# Runtime-provided variables; their values are never known statically
AUTOMATIC_VARIABLES = frozenset({
    "$", "?", "^", "_", "args", "consolefilename", "error", "erroractionpreference",
    "event", "eventargs", "eventsubscriber", "executioncontext", "false", "foreach",
    "home", "host", "input", "lastexitcode", "matches", "myinvocation",
    "nestedpromptlevel", "null", "ofs", "pid", "profile", "psboundparameters",
    "pscmdlet", "pscommandpath", "psculture", "psdebugcontext", "pshome", "psitem",
    "psscriptroot", "pssenderinfo", "psuiculture", "psversiontable", "pwd", "sender",
    "shellid", "stacktrace", "switch", "this", "true", "verbosepreference",
})

_BASE64_ALPHABET = frozenset(string.ascii_letters + string.digits + "+/=")
_BACKTICK_ESCAPES = {"n": "\n", "t": "\t", "0": "\0"}
_TWO_CHAR_OPERATORS = ("+=", "-=", "*=", "/=", "%=", "++", "--", "||", "&&")

_NUMBER = re.compile(r"0[xX][0-9a-fA-F]+|\d+(?:\.\d+)?(?:[eE][+-]?\d+)?")
_TYPE_LITERAL = re.compile(r"\[\s*([A-Za-z_`][\w.`]*(?:\[\])?)\s*\]")
_DASH_WORD = re.compile(r"[" + DASHES + r"]([A-Za-z]+)")
_PARAMETER = re.compile(r"[" + DASHES + r"][A-Za-z_][\w\-`]*:?")
_LAUNCHER_FLAG = re.compile(r"(?:^|\s)[-/](\w+)\s+['\"]?([A-Za-z0-9+/=]{8,})['\"]?")


class Encoding(str, Enum):
    """How ``decode_input`` recovered the script text."""
    PLAIN_UTF8 = "plain-utf8"
    BASE64_UTF16LE = "base64-utf16le"
    BASE64_UTF8 = "base64-utf8"


@dataclass(frozen=True)
class SourceText:
    """Raw input bytes alongside the recovered script text."""
    raw_bytes: bytes
    decoded: str
    encoding_detected: Encoding


class TokenKind(str, Enum):
    STRING = "string-literal"
    VARIABLE = "variable"
    NUMBER = "number"
    OPERATOR = "operator"
    MEMBER = "member-access"
    TYPE = "type-literal"
    PAREN = "paren"
    BRACE = "brace"
    SEMICOLON = "semicolon"
    KEYWORD = "keyword"
    CMDLET = "cmdlet-name"
    FORMAT = "format-operator"
    COMMENT = "comment"
    NEWLINE = "newline"
    PARAMETER = "parameter"


@dataclass(frozen=True)
class Token:
    """A lexical token.

    Attributes:
        kind: Token category.
        text: Canonical text (quotes removed, escapes resolved, backticks
            deleted from identifiers).
        span: (start, end) offsets into the tokenized text.
        raw: The exact source slice covered by ``span``.
        parts: For double-quoted strings that reference variables, the
            ``("text", s)`` / ``("var", name)`` / ``("sub", raw)`` segments.
    """
    kind: TokenKind
    text: str
    span: Tuple[int, int]
    raw: str = ""
    parts: Optional[Tuple[Tuple[str, str], ...]] = None

    @property
    def start(self) -> int:
        return self.span[0]

    @property
    def end(self) -> int:
        return self.span[1]

    def is_op(self, *texts: str) -> bool:
        return self.kind == TokenKind.OPERATOR and self.text in texts


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------

def decode_input(raw_bytes: bytes) -> SourceText:
    """Recover script text from file or stdin bytes.

    Base64 is tried first (UTF-16LE before UTF-8, since ``-EncodedCommand``
    mandates UTF-16LE), then a ``powershell -enc <b64>`` launcher line,
    then the bytes as plain text.

    Raises:
        UndecodableInput: If no strategy yields valid text.
    """
    if not raw_bytes:
        raise UndecodableInput("input is empty")

    plain = _decode_plain(raw_bytes)
    if plain is None:
        raise UndecodableInput("input is neither base64 nor valid UTF-8/UTF-16 text")

    if _looks_like_base64(plain):
        decoded = _decode_base64_payload("".join(plain.split()))
        if decoded is not None:
            text, encoding = decoded
            logger.debug("decoded %d bytes as %s", len(raw_bytes), encoding.value)
            return SourceText(raw_bytes, text, encoding)

    launcher = _decode_launcher(plain)
    if launcher is not None:
        text, encoding = launcher
        logger.debug("decoded launcher payload as %s", encoding.value)
        return SourceText(raw_bytes, text, encoding)

    if _is_text(plain):
        return SourceText(raw_bytes, plain, Encoding.PLAIN_UTF8)
    raise UndecodableInput("decoded bytes do not look like script text")


def _decode_plain(raw_bytes: bytes) -> Optional[str]:
    try:
        if raw_bytes.startswith(codecs.BOM_UTF8):
            return raw_bytes[len(codecs.BOM_UTF8):].decode("utf-8")
        if raw_bytes.startswith(codecs.BOM_UTF16_LE):
            return raw_bytes[len(codecs.BOM_UTF16_LE):].decode("utf-16-le")
        if raw_bytes.startswith(codecs.BOM_UTF16_BE):
            return raw_bytes[len(codecs.BOM_UTF16_BE):].decode("utf-16-be")
        return raw_bytes.decode("utf-8")
    except UnicodeDecodeError:
        return None


def _looks_like_base64(text: str) -> bool:
    compact = "".join(text.split())
    if len(compact) < 4 or len(compact) % 4:
        return False
    inside = sum(1 for ch in compact if ch in _BASE64_ALPHABET)
    return inside / len(compact) >= 0.95


def _decode_base64_payload(compact: str) -> Optional[Tuple[str, Encoding]]:
    try:
        data = base64.b64decode(compact, validate=True)
    except (binascii.Error, ValueError):
        return None

    if data and len(data) % 2 == 0:
        try:
            text = data.decode("utf-16-le").lstrip("﻿")
        except UnicodeDecodeError:
            text = None
        if text and _is_text(text) and _mostly_narrow(text):
            return text, Encoding.BASE64_UTF16LE

    try:
        text = data.decode("utf-8").lstrip("﻿")
    except UnicodeDecodeError:
        return None
    if text and _is_text(text):
        return text, Encoding.BASE64_UTF8
    return None


def _decode_launcher(text: str) -> Optional[Tuple[str, Encoding]]:
    head = text.lstrip().split(None, 1)[0].lower() if text.strip() else ""
    if not re.search(r"(powershell|pwsh)(\.exe)?[\"']?$", head):
        return None
    for match in _LAUNCHER_FLAG.finditer(text):
        flag = match.group(1).lower()
        if flag in ("e", "ec") or (flag.startswith("en") and "encodedcommand".startswith(flag)):
            payload = match.group(2)
            if len(payload) % 4 == 0:
                return _decode_base64_payload(payload)
    return None


def _is_text(text: str) -> bool:
    if not text:
        return False
    good = sum(1 for ch in text if ch.isprintable() or ch in "\r\n\t")
    return good / len(text) >= 0.95


def _mostly_narrow(text: str) -> bool:
    # UTF-8 bytes read as UTF-16LE land in CJK ranges; scripts stay mostly below U+0800
    visible = [ch for ch in text if not ch.isspace()]
    if not visible:
        return True
    narrow = sum(1 for ch in visible if ord(ch) < 0x0800)
    return narrow / len(visible) >= 0.9


# ---------------------------------------------------------------------------
# Comments
# ---------------------------------------------------------------------------

def strip_comments(text: str) -> str:
    """Remove ``# ...`` line comments and ``<# ... #>`` block comments.

    String literal contents are left untouched; an unterminated block
    comment swallows the rest of the input.
    """
    out: List[str] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "`":
            out.append(text[i:i + 2])
            i += 2
        elif ch in SINGLE_QUOTES or ch in DOUBLE_QUOTES:
            scan = _scan_single_quoted if ch in SINGLE_QUOTES else _scan_double_quoted
            end = scan(text, i)
            end = n if end < 0 else end
            out.append(text[i:end])
            i = end
        elif text.startswith("<#", i):
            close = text.find("#>", i + 2)
            i = n if close < 0 else close + 2
        elif ch == "#" and (i == 0 or text[i - 1].isspace() or text[i - 1] in ";(){}|,=+"):
            newline = text.find("\n", i)
            i = n if newline < 0 else newline
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _scan_single_quoted(text: str, start: int) -> int:
    """Index just past the closing quote, or -1 if the literal is unterminated."""
    j, n = start + 1, len(text)
    while j < n:
        if text[j] in SINGLE_QUOTES:
            if j + 1 < n and text[j + 1] in SINGLE_QUOTES:
                j += 2
                continue
            return j + 1
        j += 1
    return -1


def _scan_double_quoted(text: str, start: int) -> int:
    j, n = start + 1, len(text)
    while j < n:
        ch = text[j]
        if ch == "`":
            j += 2
            continue
        if ch in DOUBLE_QUOTES:
            if j + 1 < n and text[j + 1] in DOUBLE_QUOTES:
                j += 2
                continue
            return j + 1
        j += 1
    return -1


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

def normalize_identifier(raw: str) -> str:
    """Lowercase an identifier and drop every backtick."""
    return raw.replace("`", "").lower()


_PLAIN_SCOPES = ("global:", "script:", "local:", "private:", "variable:", "using:")


def canonical_variable(raw: str) -> str:
    """Normalized variable name with plain scope prefixes removed.

    ``$Script:X`` and ``$x`` name the same binding for a single script;
    provider scopes such as ``env:`` are kept.
    """
    name = normalize_identifier(raw)
    for scope in _PLAIN_SCOPES:
        if name.startswith(scope) and len(name) > len(scope):
            return name[len(scope):]
    return name


def tokenize(text: str) -> List[Token]:
    """Split comment-free script text into tokens.

    Raises:
        LexError: On an unterminated string literal or braced variable.
    """
    return _Tokenizer(text).run()


def _is_word_char(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


class _Tokenizer:
    """Single-pass scanner; ``tokens`` doubles as the look-behind context."""

    def __init__(self, text: str):
        self.text = text
        self.n = len(text)
        self.pos = 0
        self.tokens: List[Token] = []

    def run(self) -> List[Token]:
        text = self.text
        while self.pos < self.n:
            ch = text[self.pos]
            nxt = text[self.pos + 1] if self.pos + 1 < self.n else ""
            if ch in " \t\f\v ":
                self.pos += 1
            elif ch == "`":
                self._backtick(nxt)
            elif ch in "\r\n":
                end = self.pos + 2 if text.startswith("\r\n", self.pos) else self.pos + 1
                self._emit(TokenKind.NEWLINE, "\n", self.pos, end)
            elif ch == ";":
                self._emit(TokenKind.SEMICOLON, ";", self.pos, self.pos + 1)
            elif ch in "()":
                self._emit(TokenKind.PAREN, ch, self.pos, self.pos + 1)
            elif ch in "{}":
                self._emit(TokenKind.BRACE, ch, self.pos, self.pos + 1)
            elif ch in SINGLE_QUOTES:
                self._single_quoted(TokenKind.STRING)
            elif ch in DOUBLE_QUOTES:
                self._double_quoted(TokenKind.STRING)
            elif ch == "$":
                self._variable()
            elif ch == "[":
                self._bracket()
            elif ch in string.digits:
                self._number()
            elif ch in DASHES:
                self._dash()
            elif ch == ".":
                self._dot(nxt)
            elif ch == ":" and nxt == ":":
                self._emit(TokenKind.OPERATOR, "::", self.pos, self.pos + 2)
                self._maybe_member()
            elif ch.isalpha() or ch == "_":
                self._bareword()
            else:
                self._operator()
        return self.tokens

    # -- helpers -----------------------------------------------------------

    def _emit(self, kind: TokenKind, value: str, start: int, end: int,
              parts: Optional[Tuple[Tuple[str, str], ...]] = None) -> None:
        self.tokens.append(Token(kind, value, (start, end), self.text[start:end], parts))
        self.pos = end

    def _postfix_adjacent(self) -> bool:
        """True when the previous token can take ``.member`` and touches ``pos``."""
        if not self.tokens:
            return False
        prev = self.tokens[-1]
        if prev.end != self.pos:
            return False
        if prev.kind in (TokenKind.VARIABLE, TokenKind.STRING, TokenKind.MEMBER,
                         TokenKind.TYPE, TokenKind.NUMBER):
            return True
        return (prev.kind == TokenKind.PAREN and prev.text == ")") or prev.is_op("]")

    def _scan_word(self, start: int, extra: str = "") -> int:
        """End offset of a run of word characters, backticks and ``extra``."""
        j = start
        while j < self.n:
            ch = self.text[j]
            if _is_word_char(ch) or ch in extra:
                j += 1
            elif ch == "`" and j + 1 < self.n and _is_word_char(self.text[j + 1]):
                j += 2
            else:
                break
        return j

    # -- token scanners ----------------------------------------------------

    def _backtick(self, nxt: str) -> None:
        if nxt == "\n":
            self.pos += 2
        elif nxt == "\r" and self.text.startswith("\n", self.pos + 2):
            self.pos += 3
        elif nxt and _is_word_char(nxt):
            self._bareword()
        else:
            self._emit(TokenKind.OPERATOR, "`", self.pos, self.pos + 1)

    def _single_quoted(self, kind: TokenKind) -> None:
        start = self.pos
        end = _scan_single_quoted(self.text, start)
        if end < 0:
            raise LexError("unterminated string literal", start)
        body = self.text[start + 1:end - 1]
        value = re.sub("[" + SINGLE_QUOTES + "]{2}", lambda m: m.group(0)[0], body)
        if kind == TokenKind.MEMBER:
            value = value.replace("`", "")
        self._emit(kind, value, start, end)

    def _double_quoted(self, kind: TokenKind) -> None:
        text, start = self.text, self.pos
        j = start + 1
        buffer: List[str] = []
        parts: List[Tuple[str, str]] = []
        expandable = False
        while True:
            if j >= self.n:
                raise LexError("unterminated string literal", start)
            ch = text[j]
            if ch == "`":
                if j + 1 >= self.n:
                    raise LexError("unterminated string literal", start)
                escaped = text[j + 1]
                if kind == TokenKind.MEMBER:
                    buffer.append(escaped)
                else:
                    buffer.append(_BACKTICK_ESCAPES.get(escaped, escaped))
                j += 2
            elif ch in DOUBLE_QUOTES:
                if j + 1 < self.n and text[j + 1] in DOUBLE_QUOTES:
                    buffer.append('"')
                    j += 2
                else:
                    j += 1
                    break
            elif ch == "$" and kind == TokenKind.STRING and j + 1 < self.n \
                    and (text[j + 1].isalpha() or text[j + 1] in "_{("):
                if buffer:
                    parts.append(("text", "".join(buffer)))
                    buffer = []
                expandable = True
                if text[j + 1] == "(":
                    close = _matching_paren(text, j + 1)
                    if close < 0:
                        raise LexError("unterminated subexpression", j)
                    parts.append(("sub", text[j:close + 1]))
                    j = close + 1
                else:
                    name, j = _scan_variable_name(text, j + 1)
                    if name is None:
                        raise LexError("unterminated braced variable", j)
                    parts.append(("var", name))
            else:
                buffer.append(ch)
                j += 1
        if buffer:
            parts.append(("text", "".join(buffer)))
        if expandable:
            value = "".join(v if k == "text" else ("$" + v if k == "var" else v) for k, v in parts)
            self._emit(kind, value, start, j, tuple(parts))
        else:
            self._emit(kind, "".join(s for _, s in parts), start, j)

    def _variable(self) -> None:
        start = self.pos
        name, end = _scan_variable_name(self.text, start + 1)
        if name is None:
            raise LexError("unterminated braced variable", start)
        if end == start + 1:
            self._emit(TokenKind.OPERATOR, "$", start, start + 1)
        else:
            self._emit(TokenKind.VARIABLE, name, start, end)

    def _bracket(self) -> None:
        match = _TYPE_LITERAL.match(self.text, self.pos)
        # an index like $a[0] is never a type literal
        if match and not (self._postfix_adjacent() and self.tokens[-1].kind != TokenKind.TYPE):
            self._emit(TokenKind.TYPE, match.group(1).replace("`", ""), self.pos, match.end())
        else:
            self._emit(TokenKind.OPERATOR, "[", self.pos, self.pos + 1)

    def _number(self) -> None:
        match = _NUMBER.match(self.text, self.pos)
        end = match.end()
        if end < self.n and (self.text[end].isalpha() or self.text[end] == "_"):
            self._bareword()
            return
        self._emit(TokenKind.NUMBER, match.group(0), self.pos, end)

    def _dash(self) -> None:
        text, start = self.text, self.pos
        word = _DASH_WORD.match(text, start)
        if word:
            after = text[word.end()] if word.end() < self.n else ""
            name = word.group(1).lower()
            if name in DASH_OPERATORS and not (_is_word_char(after) or after in "-`"):
                kind = TokenKind.FORMAT if name == "f" else TokenKind.OPERATOR
                self._emit(kind, "-" + word.group(1), start, word.end())
                return
            if not self._postfix_adjacent():
                param = _PARAMETER.match(text, start)
                self._emit(TokenKind.PARAMETER, "-" + param.group(0)[1:].replace("`", ""),
                           start, param.end())
                return
        for op in ("-=", "--"):
            if text.startswith(op, start):
                self._emit(TokenKind.OPERATOR, op, start, start + 2)
                return
        self._emit(TokenKind.OPERATOR, "-", start, start + 1)

    def _dot(self, nxt: str) -> None:
        start = self.pos
        if nxt == ".":
            self._emit(TokenKind.OPERATOR, "..", start, start + 2)
            return
        member_follows = bool(nxt) and (_is_word_char(nxt) or nxt in SINGLE_QUOTES + DOUBLE_QUOTES)
        adjacent = self._postfix_adjacent()
        self._emit(TokenKind.OPERATOR, ".", start, start + 1)
        if adjacent and member_follows:
            self._maybe_member()

    def _maybe_member(self) -> None:
        if self.pos >= self.n:
            return
        ch = self.text[self.pos]
        if ch in SINGLE_QUOTES:
            self._single_quoted(TokenKind.MEMBER)
        elif ch in DOUBLE_QUOTES:
            self._double_quoted(TokenKind.MEMBER)
        elif _is_word_char(ch) or ch == "`":
            end = self._scan_word(self.pos)
            self._emit(TokenKind.MEMBER, self.text[self.pos:end].replace("`", ""), self.pos, end)

    def _bareword(self) -> None:
        start = self.pos
        end = self._scan_word(start, extra="-.\\/")
        # drive and provider paths: variable:name, env:temp, c:\users
        while end + 1 < self.n and self.text[end] == ":" and (
                _is_word_char(self.text[end + 1]) or self.text[end + 1] in "\\/"):
            end = self._scan_word(end + 1, extra="-.\\/")
        # a trailing dot belongs to the next token (`cmd.` is rare, `a.b` common)
        while end - 1 > start and self.text[end - 1] == ".":
            end -= 1
        word = self.text[start:end].replace("`", "")
        kind = TokenKind.KEYWORD if word.lower() in KEYWORDS else TokenKind.CMDLET
        self._emit(kind, word, start, end)

    def _operator(self) -> None:
        start = self.pos
        for op in _TWO_CHAR_OPERATORS:
            if self.text.startswith(op, start):
                self._emit(TokenKind.OPERATOR, op, start, start + 2)
                return
        self._emit(TokenKind.OPERATOR, self.text[start], start, start + 1)


def _scan_variable_name(text: str, pos: int) -> Tuple[Optional[str], int]:
    """Scan a variable name starting right after ``$``.

    Returns the canonical (backtick-free) name and the end offset; the name
    is empty when nothing name-like follows and ``None`` for an unterminated
    ``${...}``.
    """
    n = len(text)
    if pos < n and text[pos] == "{":
        # a backtick escapes the next character, so `} does not close the name
        chars: List[str] = []
        j = pos + 1
        while j < n and text[j] != "}":
            if text[j] == "`" and j + 1 < n:
                j += 1
            chars.append(text[j])
            j += 1
        if j >= n:
            return None, pos
        return "".join(chars), j + 1
    if pos < n and text[pos] in "$?^":
        return text[pos], pos + 1

    def word_end(j: int) -> int:
        while j < n:
            if _is_word_char(text[j]):
                j += 1
            elif text[j] == "`" and j + 1 < n and _is_word_char(text[j + 1]):
                j += 2
            else:
                break
        return j

    end = word_end(pos)
    if end > pos and end + 1 < n and text[end] == ":" and _is_word_char(text[end + 1]):
        end = word_end(end + 1)
    return text[pos:end].replace("`", ""), end


def _matching_paren(text: str, open_index: int) -> int:
    depth = 0
    for j in range(open_index, len(text)):
        if text[j] == "(":
            depth += 1
        elif text[j] == ")":
            depth -= 1
            if depth == 0:
                return j
    return -1


def shorten_variable_names(text: str) -> str:
    """Rename variables to ``$v1, $v2, ...`` in order of first appearance.

    Automatic variables are kept, as are names that also occur as string or
    bareword text (they may be reached through ``Get-Variable`` or
    ``Set-Item variable:``).  Comments must already be stripped.
    """
    tokens = tokenize(text)
    mentioned = {
        canonical_variable(tok.text) for tok in tokens
        if tok.kind in (TokenKind.STRING, TokenKind.CMDLET)
    }
    for tok in tokens:
        for kind, value in tok.parts or ():
            if kind == "var":
                mentioned.add(canonical_variable(value))

    mapping: Dict[str, str] = {}
    pieces: List[str] = []
    cursor = 0
    for tok in tokens:
        if tok.kind != TokenKind.VARIABLE:
            continue
        name = canonical_variable(tok.text)
        if name in AUTOMATIC_VARIABLES or ":" in name or name in mentioned:
            continue
        short = mapping.setdefault(name, f"v{len(mapping) + 1}")
        pieces.append(text[cursor:tok.start])
        pieces.append("$" + short)
        cursor = tok.end
    pieces.append(text[cursor:])
    return "".join(pieces)
