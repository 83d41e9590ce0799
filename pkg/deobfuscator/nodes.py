"""Statement and expression tree for the supported PowerShell subset.

All nodes are immutable.  Names that PowerShell compares case-insensitively
(variables, members, cmdlets, types) are stored lowercase and backtick-free.
"""
from dataclasses import dataclass
from typing import Optional, Tuple, Union

from deobfuscator.lexer import SourceText

Span = Tuple[int, int]


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StringLit:
    text: str


@dataclass(frozen=True)
class Number:
    value: Union[int, float]


@dataclass(frozen=True)
class VarRef:
    name: str


@dataclass(frozen=True)
class Concat:
    """The ``+`` operator; string concatenation when the left side is text."""
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class FormatOp:
    template: "Expr"
    args: Tuple["Expr", ...]


@dataclass(frozen=True)
class CharCast:
    code: "Expr"


@dataclass(frozen=True)
class TypeCast:
    type_name: str
    inner: "Expr"


@dataclass(frozen=True)
class TypeLit:
    name: str


@dataclass(frozen=True)
class MethodCall:
    receiver: "Expr"
    method: str
    args: Tuple["Expr", ...]


@dataclass(frozen=True)
class StaticCall:
    receiver: "Expr"
    member: str
    args: Tuple["Expr", ...]


@dataclass(frozen=True)
class PropertyRef:
    receiver: "Expr"
    name: str
    static: bool = False


@dataclass(frozen=True)
class CmdletCall:
    """A command invocation.

    Attributes:
        name: ``Bareword`` for a literal command name, any expression for
            ``&(...)`` / ``.(...)`` invocations.
        args: Positional arguments and ``Bareword`` parameters in order.
        invoker: ``""``, ``"&"`` or ``"."``.
    """
    name: "Expr"
    args: Tuple["Expr", ...]
    invoker: str = ""


@dataclass(frozen=True)
class Paren:
    inner: "Expr"


@dataclass(frozen=True)
class ArrayLit:
    items: Tuple["Expr", ...]


@dataclass(frozen=True)
class BinaryOp:
    """Operators the engine keeps residual (comparisons, arithmetic, ``-join``)."""
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Bareword:
    text: str
    parameter: bool = False


@dataclass(frozen=True)
class Unknown:
    """Source the parser could not type; rendered back verbatim."""
    raw: str
    span: Span = (0, 0)


Expr = Union[
    StringLit, Number, VarRef, Concat, FormatOp, CharCast, TypeCast, TypeLit,
    MethodCall, StaticCall, PropertyRef, CmdletCall, Paren, ArrayLit, BinaryOp,
    Bareword, Unknown,
]

LITERAL_TYPES = (StringLit, Number, TypeLit)


def is_literal(expr: Expr) -> bool:
    """True for constants, including arrays made only of constants."""
    if isinstance(expr, LITERAL_TYPES):
        return True
    return isinstance(expr, ArrayLit) and all(is_literal(item) for item in expr.items)


# ---------------------------------------------------------------------------
# Statements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Assign:
    name: str
    value: Expr
    span: Span = (0, 0)


@dataclass(frozen=True)
class ExprStmt:
    expr: Expr
    span: Span = (0, 0)


@dataclass(frozen=True)
class ForEach:
    var: str
    iterable: Expr
    body: Tuple["Stmt", ...]
    span: Span = (0, 0)


@dataclass(frozen=True)
class If:
    cond: Expr
    body: Tuple["Stmt", ...]
    orelse: Tuple["Stmt", ...] = ()
    span: Span = (0, 0)


@dataclass(frozen=True)
class TryCatch:
    body: Tuple["Stmt", ...]
    handler: Tuple["Stmt", ...]
    final: Tuple["Stmt", ...] = ()
    span: Span = (0, 0)


@dataclass(frozen=True)
class Break:
    keyword: str = "break"
    span: Span = (0, 0)


@dataclass(frozen=True)
class SetItem:
    """``Set-Item variable:NAME value`` and its ``Set-Variable`` spelling."""
    path: Expr
    value: Expr
    span: Span = (0, 0)


@dataclass(frozen=True)
class PropertySet:
    target: PropertyRef
    value: Expr
    span: Span = (0, 0)


@dataclass(frozen=True)
class UnknownStmt:
    raw: str
    span: Span = (0, 0)


Stmt = Union[Assign, ExprStmt, ForEach, If, TryCatch, Break, SetItem, PropertySet, UnknownStmt]


@dataclass(frozen=True)
class ScriptAst:
    statements: Tuple[Stmt, ...]
    source: Optional[SourceText] = None


def child_blocks(stmt: Stmt) -> Tuple[Tuple[Stmt, ...], ...]:
    """Nested statement blocks of a compound statement, in source order."""
    if isinstance(stmt, ForEach):
        return (stmt.body,)
    if isinstance(stmt, If):
        return (stmt.body, stmt.orelse)
    if isinstance(stmt, TryCatch):
        return (stmt.body, stmt.handler, stmt.final)
    return ()


def assigned_names(stmts: Tuple[Stmt, ...]) -> set:
    """Every variable a block may assign, including loop variables."""
    names = set()
    for stmt in stmts:
        if isinstance(stmt, Assign):
            names.add(stmt.name)
        elif isinstance(stmt, ForEach):
            names.add(stmt.var)
        for block in child_blocks(stmt):
            names |= assigned_names(block)
    return names


def children(expr: Expr) -> Tuple[Expr, ...]:
    """Direct sub-expressions of ``expr``."""
    if isinstance(expr, Concat):
        return (expr.left, expr.right)
    if isinstance(expr, FormatOp):
        return (expr.template,) + expr.args
    if isinstance(expr, CharCast):
        return (expr.code,)
    if isinstance(expr, TypeCast):
        return (expr.inner,)
    if isinstance(expr, (MethodCall, StaticCall)):
        return (expr.receiver,) + expr.args
    if isinstance(expr, PropertyRef):
        return (expr.receiver,)
    if isinstance(expr, CmdletCall):
        return (expr.name,) + expr.args
    if isinstance(expr, Paren):
        return (expr.inner,)
    if isinstance(expr, ArrayLit):
        return expr.items
    if isinstance(expr, BinaryOp):
        return (expr.left, expr.right)
    return ()


def walk(expr: Expr):
    """Yield ``expr`` and every expression nested in it, parents first."""
    stack = [expr]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def statement_exprs(stmt: Stmt) -> Tuple[Expr, ...]:
    """Expressions a statement evaluates itself, excluding nested blocks."""
    if isinstance(stmt, Assign):
        return (stmt.value,)
    if isinstance(stmt, ExprStmt):
        return (stmt.expr,)
    if isinstance(stmt, ForEach):
        return (stmt.iterable,)
    if isinstance(stmt, If):
        return (stmt.cond,)
    if isinstance(stmt, SetItem):
        return (stmt.path, stmt.value)
    if isinstance(stmt, PropertySet):
        return (stmt.target, stmt.value)
    return ()


def walk_statements(stmts: Tuple[Stmt, ...]):
    """Yield every statement in ``stmts`` and in their nested blocks."""
    for stmt in stmts:
        yield stmt
        for block in child_blocks(stmt):
            yield from walk_statements(block)
