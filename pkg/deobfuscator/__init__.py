"""Static deobfuscation of PowerShell droppers.

Typical use::

    from deobfuscator import deobfuscate
    result = deobfuscate(raw_bytes)
    print(result.rendered)
"""
from deobfuscator.errors import (
    CharRangeError, DeobfuscationError, FoldError, FormatIndexError, LexError, ParseError,
    ReplaceNeedleError, SplitSeparatorError, UndecodableInput,
)
from deobfuscator.evaluator import (
    DeobResult, deobfuscate, eliminate_dead_code, eval_charcast, eval_format, eval_replace,
    eval_split, fold_expr, run_script,
)
from deobfuscator.lexer import (
    Encoding, SourceText, Token, TokenKind, decode_input, shorten_variable_names,
    strip_comments, tokenize,
)
from deobfuscator.parser import parse_expression, parse_script
from deobfuscator.render import render_deobfuscated, render_script
from deobfuscator.values import Environment

__all__ = [
    "CharRangeError", "DeobResult", "DeobfuscationError", "Encoding", "Environment",
    "FoldError", "FormatIndexError", "LexError", "ParseError", "ReplaceNeedleError",
    "SourceText", "SplitSeparatorError", "Token", "TokenKind", "UndecodableInput",
    "decode_input", "deobfuscate", "eliminate_dead_code", "eval_charcast", "eval_format",
    "eval_replace", "eval_split", "fold_expr", "parse_expression", "parse_script",
    "render_deobfuscated", "render_script", "run_script", "shorten_variable_names",
    "strip_comments", "tokenize",
]
