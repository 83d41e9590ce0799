"""Recursive-descent parser producing a ``ScriptAst`` from lexer tokens.

Operator binding, loosest first:

    comparison / other dash operators  (-ge, -eq, -join, ...)
    -f                                  (right side is a comma list)
    +  -
    *  /  %
    casts                               ([char]92, [string][char]92)
    member access and calls             (."replace"(...), ::CreateDirectory(...))

A statement that does not parse degrades to ``UnknownStmt`` covering its
tokens; the rest of the script is still parsed.
"""
import logging
from typing import List, Optional, Sequence, Tuple

from deobfuscator import nodes
from deobfuscator.errors import DeobfuscationError, ParseError
from deobfuscator.lexer import (
    SourceText, Token, TokenKind, canonical_variable, normalize_identifier, tokenize,
)

logger = logging.getLogger(__name__)

_SET_ITEM_COMMANDS = frozenset({"set-item", "si"})
_SET_VARIABLE_COMMANDS = frozenset({"set-variable", "sv"})
_CAST_OPERAND_KINDS = frozenset({TokenKind.STRING, TokenKind.NUMBER, TokenKind.VARIABLE, TokenKind.TYPE})
_SEPARATORS = frozenset({TokenKind.NEWLINE, TokenKind.SEMICOLON})


def parse_script(tokens: Sequence[Token], source: Optional[SourceText] = None) -> nodes.ScriptAst:
    """Parse a whole script; never raises on malformed statements."""
    parser = _Parser(tokens)
    return nodes.ScriptAst(tuple(parser.block(top_level=True)), source)


def parse_expression(tokens: Sequence[Token]) -> nodes.Expr:
    """Parse tokens that form exactly one expression.

    Grouping parentheses around the whole expression are dropped, so
    ``("{0}" -F 'q')`` yields the ``FormatOp`` itself.

    Raises:
        ParseError: If the tokens are not a single well-formed expression.
    """
    parser = _Parser(tokens)
    parser.skip_newlines()
    expr = parser.pipeline_element()
    parser.skip_newlines()
    if not parser.at_end():
        raise parser.error("unexpected token after expression")
    while isinstance(expr, nodes.Paren):
        expr = expr.inner
    return expr


def _number_value(text: str):
    lowered = text.lower()
    if lowered.startswith("0x"):
        return int(lowered, 16)
    if "." in lowered or "e" in lowered:
        return float(lowered)
    return int(lowered)


def _is_dash_operator(tok: Token) -> bool:
    return tok.kind == TokenKind.OPERATOR and len(tok.text) > 1 and tok.text[0] == "-" \
        and tok.text[1:].isalpha()


class _Parser:
    def __init__(self, tokens: Sequence[Token]):
        self.tokens: List[Token] = [t for t in tokens if t.kind != TokenKind.COMMENT]
        self.pos = 0

    # -- cursor ------------------------------------------------------------

    def peek(self, offset: int = 0) -> Optional[Token]:
        index = self.pos + offset
        return self.tokens[index] if index < len(self.tokens) else None

    def at_end(self) -> bool:
        return self.pos >= len(self.tokens)

    def advance(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise self.error("unexpected end of input")
        self.pos += 1
        return tok

    def previous(self) -> Token:
        return self.tokens[self.pos - 1]

    def error(self, message: str) -> ParseError:
        tok = self.peek()
        return ParseError(message, tok.start if tok else None)

    def check(self, kind: TokenKind, text: Optional[str] = None, offset: int = 0) -> bool:
        tok = self.peek(offset)
        return tok is not None and tok.kind == kind and (text is None or tok.text.lower() == text)

    def check_op(self, *texts: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.is_op(*texts)

    def expect(self, kind: TokenKind, text: Optional[str] = None) -> Token:
        if not self.check(kind, text):
            raise self.error(f"expected {text or kind.value}")
        return self.advance()

    def skip_newlines(self) -> None:
        while self.check(TokenKind.NEWLINE):
            self.pos += 1

    def skip_separators(self) -> None:
        while self.peek() is not None and self.peek().kind in _SEPARATORS:
            self.pos += 1

    def span_from(self, start_tok: Token) -> nodes.Span:
        return (start_tok.start, self.previous().end)

    # -- statements --------------------------------------------------------

    def block(self, top_level: bool) -> List[nodes.Stmt]:
        statements: List[nodes.Stmt] = []
        while True:
            self.skip_separators()
            tok = self.peek()
            if tok is None or (not top_level and tok.kind == TokenKind.BRACE and tok.text == "}"):
                return statements
            start = self.pos
            try:
                stmt = self.statement()
                self.end_of_statement(stmt, top_level)
            except ParseError as exc:
                logger.debug("statement degraded to Unknown: %s", exc)
                self.pos = start
                self.recover(top_level)
                stmt = self.unknown_statement(start, self.pos)
            statements.append(stmt)

    def end_of_statement(self, stmt: nodes.Stmt, top_level: bool) -> None:
        if isinstance(stmt, (nodes.ForEach, nodes.If, nodes.TryCatch)):
            return
        tok = self.peek()
        if tok is None or tok.kind in _SEPARATORS:
            return
        if not top_level and tok.kind == TokenKind.BRACE and tok.text == "}":
            return
        raise self.error("expected end of statement")

    def recover(self, top_level: bool) -> None:
        """Skip to the next statement boundary at nesting depth zero."""
        depth = 0
        consumed = False
        while not self.at_end():
            tok = self.peek()
            if depth == 0 and consumed and tok.kind in _SEPARATORS:
                return
            opening = tok.text in ("(", "{") and tok.kind in (TokenKind.PAREN, TokenKind.BRACE)
            closing = tok.text in (")", "}") and tok.kind in (TokenKind.PAREN, TokenKind.BRACE)
            if opening or tok.is_op("["):
                depth += 1
            elif closing or tok.is_op("]"):
                depth -= 1
                if depth < 0:
                    if not top_level and tok.text == "}" and consumed:
                        return
                    depth = 0
            self.pos += 1
            consumed = True

    def unknown_statement(self, start: int, end: int) -> nodes.UnknownStmt:
        toks = self.tokens[start:end]
        pieces: List[str] = []
        for i, tok in enumerate(toks):
            if i and tok.start > toks[i - 1].end:
                pieces.append(" ")
            pieces.append(tok.raw)
        return nodes.UnknownStmt("".join(pieces), (toks[0].start, toks[-1].end))

    def statement(self) -> nodes.Stmt:
        tok = self.peek()
        if tok.kind == TokenKind.KEYWORD:
            keyword = tok.text.lower()
            if keyword == "foreach":
                return self.foreach_statement()
            if keyword == "if":
                return self.if_statement()
            if keyword == "try":
                return self.try_statement()
            if keyword in ("break", "continue"):
                self.advance()
                return nodes.Break(keyword, tok.span)
            raise self.error(f"unsupported keyword {keyword!r}")

        if self.at_command():
            call = self.command()
            return self.command_statement(call, self.span_from(tok))

        target = self.expression()
        op = self.peek()
        if op is not None and op.is_op("=", "+="):
            self.advance()
            self.skip_newlines()
            value = self.pipeline_element()
            span = self.span_from(tok)
            if isinstance(target, nodes.VarRef):
                if op.text == "+=":
                    value = nodes.Concat(nodes.VarRef(target.name), value)
                return nodes.Assign(target.name, value, span)
            if isinstance(target, nodes.PropertyRef) and op.text == "=":
                return nodes.PropertySet(target, value, span)
            raise ParseError("unsupported assignment target", op.start)
        return nodes.ExprStmt(target, self.span_from(tok))

    def command_statement(self, call: nodes.CmdletCall, span: nodes.Span) -> nodes.Stmt:
        name = call.name.text.lower() if isinstance(call.name, nodes.Bareword) else None
        if name in _SET_ITEM_COMMANDS or name in _SET_VARIABLE_COMMANDS:
            path, value = _set_item_operands(call.args)
            if path is not None and value is not None:
                if name in _SET_VARIABLE_COMMANDS:
                    path = nodes.Concat(nodes.StringLit("variable:"), path)
                return nodes.SetItem(path, value, span)
        return nodes.ExprStmt(call, span)

    def braced_block(self) -> Tuple[nodes.Stmt, ...]:
        self.skip_newlines()
        self.expect(TokenKind.BRACE, "{")
        body = self.block(top_level=False)
        self.expect(TokenKind.BRACE, "}")
        return tuple(body)

    def foreach_statement(self) -> nodes.ForEach:
        start = self.advance()
        self.expect(TokenKind.PAREN, "(")
        self.skip_newlines()
        var = self.expect(TokenKind.VARIABLE)
        self.expect(TokenKind.KEYWORD, "in")
        self.skip_newlines()
        iterable = self.pipeline_element()
        self.skip_newlines()
        self.expect(TokenKind.PAREN, ")")
        body = self.braced_block()
        return nodes.ForEach(canonical_variable(var.text), iterable, body, self.span_from(start))

    def if_statement(self) -> nodes.If:
        start = self.advance()
        self.expect(TokenKind.PAREN, "(")
        self.skip_newlines()
        cond = self.pipeline_element()
        self.skip_newlines()
        self.expect(TokenKind.PAREN, ")")
        body = self.braced_block()

        orelse: Tuple[nodes.Stmt, ...] = ()
        save = self.pos
        self.skip_newlines()
        if self.check(TokenKind.KEYWORD, "elseif"):
            orelse = (self.if_statement(),)
        elif self.check(TokenKind.KEYWORD, "else"):
            self.advance()
            orelse = self.braced_block()
        else:
            self.pos = save
        return nodes.If(cond, body, orelse, self.span_from(start))

    def try_statement(self) -> nodes.TryCatch:
        start = self.advance()
        body = self.braced_block()
        handler: Tuple[nodes.Stmt, ...] = ()
        final: Tuple[nodes.Stmt, ...] = ()
        seen = False
        while True:
            save = self.pos
            self.skip_newlines()
            if not self.check(TokenKind.KEYWORD, "catch"):
                self.pos = save
                break
            self.advance()
            while self.check(TokenKind.TYPE) or self.check_op(","):
                self.advance()
            handler += self.braced_block()
            seen = True
        save = self.pos
        self.skip_newlines()
        if self.check(TokenKind.KEYWORD, "finally"):
            self.advance()
            final = self.braced_block()
            seen = True
        else:
            self.pos = save
        if not seen:
            raise self.error("try without catch or finally")
        return nodes.TryCatch(body, handler, final, self.span_from(start))

    # -- commands ----------------------------------------------------------

    def at_command(self) -> bool:
        tok = self.peek()
        if tok is None:
            return False
        if tok.kind == TokenKind.CMDLET:
            return True
        if tok.is_op("&"):
            return True
        if tok.is_op("."):
            nxt = self.peek(1)
            return nxt is not None and (
                nxt.kind in (TokenKind.STRING, TokenKind.VARIABLE, TokenKind.CMDLET)
                or (nxt.kind == TokenKind.PAREN and nxt.text == "(")
            )
        return False

    def command(self) -> nodes.CmdletCall:
        tok = self.peek()
        invoker = ""
        if tok.is_op("&", "."):
            invoker = self.advance().text
            if self.check(TokenKind.CMDLET):
                name: nodes.Expr = nodes.Bareword(self.advance().text)
            else:
                name = self.postfix()
        else:
            name = nodes.Bareword(self.advance().text)

        args: List[nodes.Expr] = []
        while True:
            tok = self.peek()
            if tok is None or tok.kind in _SEPARATORS:
                break
            if tok.kind in (TokenKind.PAREN, TokenKind.BRACE) and tok.text in ")}":
                break
            if tok.is_op("|"):
                raise self.error("pipelines are not supported")
            arg = self.command_argument()
            if self.check_op(","):
                items = [arg]
                while self.check_op(","):
                    self.advance()
                    items.append(self.command_argument())
                arg = nodes.ArrayLit(tuple(items))
            args.append(arg)
        return nodes.CmdletCall(name, tuple(args), invoker)

    def command_argument(self) -> nodes.Expr:
        tok = self.peek()
        if tok is None:
            raise self.error("expected command argument")
        if tok.kind == TokenKind.PARAMETER or tok.kind == TokenKind.FORMAT or _is_dash_operator(tok):
            # in argument mode "-f" and friends are parameters
            self.advance()
            return nodes.Bareword(tok.text, parameter=True)
        if tok.kind in (TokenKind.CMDLET, TokenKind.KEYWORD):
            self.advance()
            return nodes.Bareword(tok.text)
        return self.unary()

    def pipeline_element(self) -> nodes.Expr:
        """An expression or a command, optionally a bare comma list."""
        if self.at_command():
            return self.command()
        expr = self.expression()
        if self.check_op(","):
            items = [expr]
            while self.check_op(","):
                self.advance()
                self.skip_newlines()
                items.append(self.expression())
            return nodes.ArrayLit(tuple(items))
        return expr

    # -- expressions -------------------------------------------------------

    def expression(self) -> nodes.Expr:
        left = self.format_expression()
        while self.peek() is not None and _is_dash_operator(self.peek()):
            op = self.advance()
            self.skip_newlines()
            right = self.format_expression()
            left = nodes.BinaryOp("-" + op.text[1:].lower(), left, right)
        return left

    def format_expression(self) -> nodes.Expr:
        left = self.additive()
        while self.check(TokenKind.FORMAT):
            self.advance()
            self.skip_newlines()
            args = [self.additive()]
            while self.check_op(","):
                self.advance()
                self.skip_newlines()
                args.append(self.additive())
            left = nodes.FormatOp(left, tuple(args))
        return left

    def additive(self) -> nodes.Expr:
        left = self.multiplicative()
        while self.check_op("+", "-"):
            op = self.advance().text
            self.skip_newlines()
            right = self.multiplicative()
            left = nodes.Concat(left, right) if op == "+" else nodes.BinaryOp("-", left, right)
        return left

    def multiplicative(self) -> nodes.Expr:
        left = self.unary()
        while self.check_op("*", "/", "%"):
            op = self.advance().text
            self.skip_newlines()
            left = nodes.BinaryOp(op, left, self.unary())
        return left

    def unary(self) -> nodes.Expr:
        tok = self.peek()
        if tok is None:
            raise self.error("unexpected end of input")
        if tok.kind == TokenKind.TYPE and self.cast_follows():
            self.advance()
            inner = self.unary()
            if isinstance(inner, nodes.Paren):
                inner = inner.inner
            type_name = tok.text.lower()
            if type_name in ("char", "system.char"):
                return nodes.CharCast(inner)
            return nodes.TypeCast(type_name, inner)
        if tok.is_op("-") and self.check(TokenKind.NUMBER, offset=1) and self.peek(1).start == tok.end:
            self.advance()
            return nodes.Number(-_number_value(self.advance().text))
        return self.postfix()

    def cast_follows(self) -> bool:
        nxt = self.peek(1)
        if nxt is None:
            return False
        if nxt.kind in _CAST_OPERAND_KINDS:
            return True
        if nxt.kind == TokenKind.PAREN and nxt.text == "(":
            return True
        return nxt.is_op("@", "$", "-")

    def postfix(self) -> nodes.Expr:
        expr = self.primary()
        while True:
            op, member = self.peek(), self.peek(1)
            if op is None or not op.is_op(".", "::") or member is None \
                    or member.kind != TokenKind.MEMBER or member.start != op.end:
                return expr
            self.pos += 2
            static = op.text == "::"
            name = normalize_identifier(member.text)
            nxt = self.peek()
            if nxt is not None and nxt.kind == TokenKind.PAREN and nxt.text == "(" \
                    and nxt.start == member.end:
                args = self.call_arguments()
                expr = nodes.StaticCall(expr, name, args) if static else nodes.MethodCall(expr, name, args)
            else:
                expr = nodes.PropertyRef(expr, name, static)

    def call_arguments(self) -> Tuple[nodes.Expr, ...]:
        self.expect(TokenKind.PAREN, "(")
        self.skip_newlines()
        args: List[nodes.Expr] = []
        if self.check(TokenKind.PAREN, ")"):
            self.advance()
            return ()
        while True:
            args.append(self.expression())
            self.skip_newlines()
            if self.check_op(","):
                self.advance()
                self.skip_newlines()
                continue
            self.expect(TokenKind.PAREN, ")")
            return tuple(args)

    def primary(self) -> nodes.Expr:
        tok = self.peek()
        if tok is None:
            raise self.error("unexpected end of input")
        if tok.kind == TokenKind.STRING:
            self.advance()
            return _string_expr(tok)
        if tok.kind == TokenKind.NUMBER:
            self.advance()
            return nodes.Number(_number_value(tok.text))
        if tok.kind == TokenKind.VARIABLE:
            self.advance()
            return nodes.VarRef(canonical_variable(tok.text))
        if tok.kind == TokenKind.TYPE:
            self.advance()
            return nodes.TypeLit(tok.text.lower())
        if tok.kind == TokenKind.PAREN and tok.text == "(":
            return self.paren()
        if tok.is_op("@", "$") and self.check(TokenKind.PAREN, "(", offset=1) \
                and self.peek(1).start == tok.end:
            self.advance()
            if tok.text == "@":
                return self.array_subexpression()
            return self.paren()
        raise self.error(f"unexpected {tok.kind.value} {tok.text!r}")

    def paren(self) -> nodes.Paren:
        self.expect(TokenKind.PAREN, "(")
        self.skip_newlines()
        inner = self.pipeline_element()
        self.skip_newlines()
        self.expect(TokenKind.PAREN, ")")
        return nodes.Paren(inner)

    def array_subexpression(self) -> nodes.ArrayLit:
        self.expect(TokenKind.PAREN, "(")
        items: List[nodes.Expr] = []
        while True:
            self.skip_separators()
            if self.check(TokenKind.PAREN, ")"):
                self.advance()
                return nodes.ArrayLit(tuple(items))
            item = self.pipeline_element()
            if isinstance(item, nodes.ArrayLit):
                items.extend(item.items)
            else:
                items.append(item)


def _string_expr(tok: Token) -> nodes.Expr:
    """A literal, or a concatenation for strings that expand ``$name``."""
    if tok.parts is None:
        return nodes.StringLit(tok.text)
    pieces: List[nodes.Expr] = []
    for kind, value in tok.parts:
        if kind == "text":
            pieces.append(nodes.StringLit(value))
        elif kind == "var":
            pieces.append(nodes.VarRef(canonical_variable(value)))
        else:
            pieces.append(_subexpression(value, tok))
    if not isinstance(pieces[0], nodes.StringLit):
        pieces.insert(0, nodes.StringLit(""))
    expr = pieces[0]
    for piece in pieces[1:]:
        expr = nodes.Concat(expr, piece)
    return expr


def _subexpression(raw: str, tok: Token) -> nodes.Expr:
    try:
        return nodes.Paren(parse_expression(tokenize(raw[2:-1])))
    except DeobfuscationError:
        return nodes.Unknown(raw, tok.span)


def _set_item_operands(args: Sequence[nodes.Expr]) -> Tuple[Optional[nodes.Expr], Optional[nodes.Expr]]:
    """Pick the path and value out of ``Set-Item``/``Set-Variable`` arguments."""
    positional: List[nodes.Expr] = []
    path: Optional[nodes.Expr] = None
    value: Optional[nodes.Expr] = None
    i = 0
    while i < len(args):
        arg = args[i]
        if isinstance(arg, nodes.Bareword) and arg.parameter:
            pname = arg.text[1:].rstrip(":").lower()
            has_operand = i + 1 < len(args) and not (
                isinstance(args[i + 1], nodes.Bareword) and args[i + 1].parameter)
            if pname and has_operand and any(p.startswith(pname) for p in ("path", "name", "literalpath")):
                path = args[i + 1]
                i += 2
                continue
            if pname and has_operand and "value".startswith(pname):
                value = args[i + 1]
                i += 2
                continue
            # switches such as -Force take no operand
            i += 1
            continue
        positional.append(arg)
        i += 1
    if path is None and positional:
        path = positional.pop(0)
    if value is None and positional:
        value = positional.pop(0)
    return path, value
