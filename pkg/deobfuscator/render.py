"""Normalized PowerShell text for residual scripts.

One statement per line, four-space indentation, lowercase identifiers,
double-quoted strings and no redundant parentheses.  The output parses back
to the same residual, so running the deobfuscator on it again changes
nothing.
"""
import re
from typing import List, Sequence

from deobfuscator import nodes
from deobfuscator.lexer import KEYWORDS
from deobfuscator.values import format_number

INDENT = "    "

_BARE_MEMBER = re.compile(r"[a-z_][a-z0-9_]*")
_BARE_VARIABLE = re.compile(r"(?:[a-z_]\w*:)?[a-z_0-9]\w*|[$?^_]")
_BARE_COMMAND = re.compile(r"[A-Za-z_][\w\-.]*")
_STRING_ESCAPES = {
    "`": "``", '"': '`"', "“": '`"', "”": '`"', "„": '`"', "$": "`$",
    "\n": "`n", "\t": "`t", "\0": "`0",
}

# binding strength, loosest first
_COMMAND, _COMPARE, _FORMAT, _ADD, _MUL, _CAST, _ATOM = range(7)


def render_deobfuscated(result, trim_path_separators: bool = False) -> str:
    """Render ``result.residual``; empty scripts render as ``""``."""
    return render_script(result.residual, trim_path_separators)


def render_script(ast: nodes.ScriptAst, trim_path_separators: bool = False) -> str:
    renderer = _Renderer(trim_path_separators)
    lines: List[str] = []
    renderer.block(ast.statements, 0, lines)
    return "\n".join(lines)


def render_expr(expr: nodes.Expr, trim_path_separators: bool = False) -> str:
    return _Renderer(trim_path_separators).expr(expr)


def quote(text: str, trim_path_separators: bool = False) -> str:
    """Double-quoted PowerShell literal for ``text``."""
    if trim_path_separators and "\\" in text:
        text = text.rstrip("\\")
    return '"' + "".join(_STRING_ESCAPES.get(ch, ch) for ch in text) + '"'


class _Renderer:
    def __init__(self, trim_path_separators: bool):
        self.trim = trim_path_separators

    # -- statements --------------------------------------------------------

    def block(self, stmts: Sequence[nodes.Stmt], depth: int, lines: List[str]) -> None:
        for stmt in stmts:
            self.statement(stmt, depth, lines)

    def statement(self, stmt: nodes.Stmt, depth: int, lines: List[str]) -> None:
        pad = INDENT * depth
        if isinstance(stmt, nodes.ForEach):
            lines.append(f"{pad}foreach (${_variable(stmt.var)} in {self.expr(stmt.iterable, _COMPARE)}) {{")
            self.block(stmt.body, depth + 1, lines)
            lines.append(pad + "}")
        elif isinstance(stmt, nodes.If):
            lines.append(f"{pad}if ({self.expr(stmt.cond, _COMMAND)}) {{")
            self.if_tail(stmt, depth, lines)
        elif isinstance(stmt, nodes.TryCatch):
            lines.append(pad + "try {")
            self.block(stmt.body, depth + 1, lines)
            if stmt.handler or not stmt.final:
                lines.append(pad + "} catch {")
                self.block(stmt.handler, depth + 1, lines)
            if stmt.final:
                lines.append(pad + "} finally {")
                self.block(stmt.final, depth + 1, lines)
            lines.append(pad + "}")
        else:
            lines.append(pad + self.simple(stmt) + ";")

    def if_tail(self, stmt: nodes.If, depth: int, lines: List[str]) -> None:
        pad = INDENT * depth
        self.block(stmt.body, depth + 1, lines)
        orelse = stmt.orelse
        if len(orelse) == 1 and isinstance(orelse[0], nodes.If):
            lines.append(f"{pad}}} elseif ({self.expr(orelse[0].cond, _COMMAND)}) {{")
            self.if_tail(orelse[0], depth, lines)
            return
        if orelse:
            lines.append(pad + "} else {")
            self.block(orelse, depth + 1, lines)
        lines.append(pad + "}")

    def simple(self, stmt: nodes.Stmt) -> str:
        if isinstance(stmt, nodes.Assign):
            return f"${_variable(stmt.name)} = {self.expr(stmt.value, _COMMAND)}"
        if isinstance(stmt, nodes.ExprStmt):
            return self.expr(stmt.expr, _COMMAND)
        if isinstance(stmt, nodes.PropertySet):
            return f"{self.expr(stmt.target)} = {self.expr(stmt.value, _COMMAND)}"
        if isinstance(stmt, nodes.SetItem):
            return f"set-item {self.expr(stmt.path, _ATOM)} {self.expr(stmt.value, _ATOM)}"
        if isinstance(stmt, nodes.Break):
            return stmt.keyword
        return stmt.raw

    # -- expressions -------------------------------------------------------

    def expr(self, expr: nodes.Expr, context: int = _ATOM) -> str:
        """Render ``expr`` where an operand of strength ``context`` is expected."""
        text, strength = self.bare(expr)
        if strength < context:
            return f"({text})"
        return text

    def bare(self, expr: nodes.Expr):
        if isinstance(expr, nodes.StringLit):
            return quote(expr.text, self.trim), _ATOM
        if isinstance(expr, nodes.Number):
            text = format_number(expr.value)
            return text, _CAST if text.startswith("-") else _ATOM
        if isinstance(expr, nodes.VarRef):
            return "$" + _variable(expr.name), _ATOM
        if isinstance(expr, nodes.TypeLit):
            return f"[{expr.name}]", _ATOM
        if isinstance(expr, nodes.Bareword):
            return expr.text.lower(), _ATOM
        if isinstance(expr, nodes.Unknown):
            return expr.raw, _ATOM
        if isinstance(expr, nodes.Paren):
            return self.bare(expr.inner)
        if isinstance(expr, nodes.Concat):
            return f"{self.expr(expr.left, _ADD)} + {self.expr(expr.right, _MUL)}", _ADD
        if isinstance(expr, nodes.BinaryOp):
            if expr.op == "-":
                return f"{self.expr(expr.left, _ADD)} - {self.expr(expr.right, _MUL)}", _ADD
            if expr.op in ("*", "/", "%"):
                return f"{self.expr(expr.left, _MUL)} {expr.op} {self.expr(expr.right, _CAST)}", _MUL
            return f"{self.expr(expr.left, _COMPARE)} {expr.op} {self.expr(expr.right, _FORMAT)}", _COMPARE
        if isinstance(expr, nodes.FormatOp):
            args = ", ".join(self.expr(a, _ADD) for a in expr.args)
            return f"{self.expr(expr.template, _FORMAT)} -f {args}", _FORMAT
        if isinstance(expr, nodes.CharCast):
            return f"[char]{self.expr(expr.code, _CAST)}", _CAST
        if isinstance(expr, nodes.TypeCast):
            return f"[{expr.type_name}]{self.expr(expr.inner, _CAST)}", _CAST
        if isinstance(expr, nodes.ArrayLit):
            return "@(" + ", ".join(self.expr(i, _COMPARE) for i in expr.items) + ")", _ATOM
        if isinstance(expr, (nodes.MethodCall, nodes.StaticCall)):
            sep = "::" if isinstance(expr, nodes.StaticCall) else "."
            name = expr.method if isinstance(expr, nodes.MethodCall) else expr.member
            args = ", ".join(self.expr(a, _COMPARE) for a in expr.args)
            return f"{self.expr(expr.receiver)}{sep}{_member(name)}({args})", _ATOM
        if isinstance(expr, nodes.PropertyRef):
            sep = "::" if expr.static else "."
            return f"{self.expr(expr.receiver)}{sep}{_member(expr.name)}", _ATOM
        if isinstance(expr, nodes.CmdletCall):
            return self.command(expr), _COMMAND
        raise TypeError(f"cannot render {type(expr).__name__}")

    def command(self, call: nodes.CmdletCall) -> str:
        name = call.name
        if isinstance(name, nodes.Bareword) or (
                isinstance(name, nodes.StringLit) and _BARE_COMMAND.fullmatch(name.text)
                and name.text.lower() not in KEYWORDS):
            head = name.text.lower()
        else:
            head = f"{call.invoker or '&'}{self.expr(name)}"
        parts = [head] + [self.expr(a, _ATOM) for a in call.args]
        return " ".join(parts)


def _member(name: str) -> str:
    return name if _BARE_MEMBER.fullmatch(name) else quote(name)


def _variable(name: str) -> str:
    if _BARE_VARIABLE.fullmatch(name):
        return name
    return "{" + name.replace("`", "``").replace("}", "`}") + "}"
