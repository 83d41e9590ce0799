"""Exceptions raised by the static deobfuscation engine."""
from typing import Optional


class DeobfuscationError(Exception):
    """Base class for every engine error."""


class UndecodableInput(DeobfuscationError):
    """No decoding strategy produced valid text from the input bytes."""


class LexError(DeobfuscationError):
    """The tokenizer hit input it cannot split into tokens."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ParseError(DeobfuscationError):
    """Tokens do not form the construct the parser expected."""

    def __init__(self, message: str, offset: Optional[int] = None):
        suffix = f" at offset {offset}" if offset is not None else " at end of input"
        super().__init__(f"{message}{suffix}")
        self.offset = offset


class FoldError(DeobfuscationError):
    """A constant operation failed; the expression stays Unknown."""


class FormatIndexError(FoldError):
    """A ``{k}`` placeholder refers past the end of the argument list."""


class SplitSeparatorError(FoldError):
    """A split separator folded to empty text (usually an unresolved variable)."""


class CharRangeError(FoldError):
    """A ``[char]`` cast received a code point outside 0..0x10FFFF."""


class ReplaceNeedleError(FoldError):
    """``.replace`` was called with an empty needle."""
