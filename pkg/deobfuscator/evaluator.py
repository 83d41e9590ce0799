"""Partial evaluation: fold constant string assembly, keep effects residual.

Nothing here executes PowerShell.  Statements are walked once in source
order; assignments bind folded values, every other statement is kept with
its constant sub-expressions replaced by literals.  Loops are never iterated
and branches are never chosen: variables they assign become Unknown after
the block.
"""
import logging
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

from deobfuscator import nodes
from deobfuscator.errors import (
    CharRangeError, FoldError, FormatIndexError, LexError, ReplaceNeedleError,
    SplitSeparatorError,
)
from deobfuscator.lexer import (
    Encoding, SourceText, TokenKind, canonical_variable, decode_input, strip_comments, tokenize,
)
from deobfuscator.parser import parse_script
from deobfuscator.render import render_deobfuscated
from deobfuscator.values import (
    UNKNOWN, Environment, Number, Text, TextList, TypeName, Value, as_text, format_number,
    is_known,
)
from utils.config import config

logger = logging.getLogger(__name__)

_STRING_TYPES = frozenset({"string", "system.string"})
_INT_TYPES = frozenset({"int", "int32", "int64", "long", "byte", "system.int32", "system.int64"})
_TYPE_TYPES = frozenset({"type", "system.type"})
_STRING_ARRAY_TYPES = frozenset({"string[]", "system.string[]"})
_GET_VARIABLE = frozenset({"get-variable", "gv"})
_VARIABLE_COMMANDS = frozenset({
    "get-variable", "gv", "set-variable", "sv", "set-item", "si", "new-variable", "nv",
    "remove-variable", "rv", "clear-variable", "clv",
})
_EVAL_COMMANDS = frozenset({"iex", "invoke-expression", "invoke-command", "icm"})
_EVAL_METHODS = frozenset({"invoke", "invokescript", "newscriptblock"})
_STRING_AUTOMATICS = frozenset({"home", "pshome", "psscriptroot", "pscommandpath"})
_TYPE_NAME = re.compile(r"[a-z_][\w.]*(\[\])?")
_FORMAT_ITEM = re.compile(r"\{\{|\}\}|\{([^{}]*)\}|[{}]")
_PLACEHOLDER = re.compile(r"\s*(\d+)\s*(?:,\s*(-?\d+)\s*)?(?::(.*))?", re.S)
_RAW_VARIABLE = re.compile(r"\$\{?((?:[A-Za-z_]\w*:)?[\w`]+)\}?")
_RAW_ASSIGNMENT = re.compile(r"\$\{?((?:[A-Za-z_]\w*:)?[\w`]+)\}?\s*[+\-*/%]?=(?!=)")


# ---------------------------------------------------------------------------
# Constant operations
# ---------------------------------------------------------------------------

def eval_format(template: str, args: Sequence[str]) -> str:
    """Apply the ``-f`` operator.

    Supports ``{k}``, ``{k,width}`` alignment and ``{{``/``}}`` escapes.

    Raises:
        FormatIndexError: A placeholder index is not below ``len(args)``.
        FoldError: The template is malformed or uses a format specifier.
    """
    out: List[str] = []
    pos = 0
    for match in _FORMAT_ITEM.finditer(template):
        out.append(template[pos:match.start()])
        pos = match.end()
        item = match.group(0)
        if item in ("{{", "}}"):
            out.append(item[0])
            continue
        if match.group(1) is None:
            raise FoldError(f"unbalanced brace in format template at {match.start()}")
        spec = _PLACEHOLDER.fullmatch(match.group(1))
        if spec is None:
            raise FoldError(f"malformed placeholder {item!r}")
        index = int(spec.group(1))
        if index >= len(args):
            raise FormatIndexError(f"placeholder {{{index}}} with only {len(args)} argument(s)")
        if spec.group(3):
            raise FoldError(f"format specifier in {item!r} is not supported")
        text = args[index]
        width = int(spec.group(2)) if spec.group(2) else 0
        out.append(text.rjust(width) if width >= 0 else text.ljust(-width))
    out.append(template[pos:])
    return "".join(out)


def eval_replace(subject: str, needle: str, replacement: str) -> str:
    """Case-sensitive ``String.Replace``."""
    if not needle:
        raise ReplaceNeedleError("replace needle folded to empty text")
    return subject.replace(needle, replacement)


def eval_split(subject: str, separator: str) -> List[str]:
    """Split on every occurrence of ``separator``, dropping empty segments."""
    if not separator:
        raise SplitSeparatorError("split separator folded to empty text")
    return [part for part in subject.split(separator) if part]


def eval_charcast(code: Union[int, float]) -> str:
    """``[char]code`` for a code point in 0..0x10FFFF."""
    if isinstance(code, float):
        code = round(code)
    if not 0 <= code <= 0x10FFFF:
        raise CharRangeError(f"code point {code} out of range")
    return chr(code)


def _split_many(subject: str, separators: Sequence[str]) -> List[str]:
    if not separators or not all(separators):
        raise SplitSeparatorError("split separator folded to empty text")
    pattern = "|".join(re.escape(sep) for sep in sorted(separators, key=len, reverse=True))
    return [part for part in re.split(pattern, subject) if part]


def _add(left: Value, right: Value) -> Value:
    """The ``+`` operator on two known values."""
    if isinstance(left, Text):
        text = as_text(right)
        if text is None:
            raise FoldError("cannot append a type to text")
        return Text(left.value + text)
    if isinstance(left, TextList):
        if isinstance(right, TextList):
            return TextList(left.items + right.items)
        text = as_text(right)
        if text is None:
            raise FoldError("cannot append a type to an array")
        return TextList(left.items + (text,))
    if isinstance(left, Number):
        if isinstance(right, Number):
            return Number(left.value + right.value)
        if isinstance(right, Text) and re.fullmatch(r"\s*-?\d+\s*", right.value):
            return Number(left.value + int(right.value))
    raise FoldError("operands do not add")


# ---------------------------------------------------------------------------
# Folding
# ---------------------------------------------------------------------------

def fold_expr(expr: nodes.Expr, env: Environment, transforms: Optional[Counter] = None) -> Value:
    """Fold ``expr`` to a value under ``env``.

    Never raises; anything that cannot be decided statically is ``Unknown``
    and Unknown operands make the whole operation Unknown.  Bindings are
    only read.  ``transforms`` counts the obfuscation operations undone.
    """
    return _Folder(env, transforms if transforms is not None else Counter()).fold(expr)


class _Folder:
    def __init__(self, env: Environment, transforms: Counter):
        self.env = env
        self.transforms = transforms
        self.handlers = {
            nodes.StringLit: lambda e: Text(e.text),
            nodes.Number: lambda e: Number(e.value),
            nodes.VarRef: lambda e: self.env.lookup(e.name),
            nodes.TypeLit: lambda e: TypeName(e.name),
            nodes.Paren: lambda e: self.fold(e.inner),
            nodes.Unknown: lambda e: UNKNOWN,
            nodes.Bareword: lambda e: UNKNOWN if e.parameter else Text(e.text),
            nodes.Concat: self.concat,
            nodes.FormatOp: self.format_op,
            nodes.CharCast: self.char_cast,
            nodes.TypeCast: self.type_cast,
            nodes.ArrayLit: self.array,
            nodes.MethodCall: self.method_call,
            nodes.StaticCall: self.static_call,
            nodes.PropertyRef: self.property_ref,
            nodes.CmdletCall: self.cmdlet_call,
            nodes.BinaryOp: self.binary_op,
        }

    def fold(self, expr: nodes.Expr) -> Value:
        try:
            return self.handlers[type(expr)](expr)
        except FoldError as exc:
            logger.debug("fold failed: %s", exc)
            return UNKNOWN

    def fold_all(self, exprs: Iterable[nodes.Expr]) -> List[Value]:
        return [self.fold(e) for e in exprs]

    def concat(self, expr: nodes.Concat) -> Value:
        left, right = self.fold(expr.left), self.fold(expr.right)
        if not (is_known(left) and is_known(right)):
            return UNKNOWN
        result = _add(left, right)
        self.transforms["concat"] += 1
        return result

    def format_op(self, expr: nodes.FormatOp) -> Value:
        template = self.fold(expr.template)
        args = self.fold_all(expr.args)
        if not is_known(template) or not all(is_known(a) for a in args):
            return UNKNOWN
        if len(args) == 1 and isinstance(args[0], TextList):
            texts = list(args[0].items)
        else:
            texts = [as_text(a) for a in args]
        template_text = as_text(template)
        if template_text is None or any(t is None for t in texts):
            raise FoldError("format operands are not text")
        result = eval_format(template_text, texts)
        self.transforms["format"] += 1
        return Text(result)

    def char_cast(self, expr: nodes.CharCast) -> Value:
        code = self.fold(expr.code)
        if isinstance(code, Number):
            result = Text(eval_charcast(code.value))
        elif isinstance(code, Text) and len(code.value) == 1:
            result = code
        elif is_known(code):
            raise FoldError("[char] needs a number or a single character")
        else:
            return UNKNOWN
        self.transforms["charcast"] += 1
        return result

    def type_cast(self, expr: nodes.TypeCast) -> Value:
        inner = self.fold(expr.inner)
        if not is_known(inner):
            return UNKNOWN
        name = expr.type_name
        if name in _STRING_TYPES:
            text = as_text(inner)
            if text is None:
                raise FoldError("cannot convert a type to string")
            result: Value = Text(text)
        elif name in _TYPE_TYPES:
            if isinstance(inner, TypeName):
                result = inner
            elif isinstance(inner, Text) and _TYPE_NAME.fullmatch(inner.value.strip().lower()):
                result = TypeName(inner.value.strip().lower())
            else:
                raise FoldError(f"not a type name: {inner!r}")
        elif name in _INT_TYPES:
            if isinstance(inner, Number):
                result = Number(int(round(inner.value)))
            elif isinstance(inner, Text) and re.fullmatch(r"\s*-?\d+\s*", inner.value):
                result = Number(int(inner.value))
            else:
                raise FoldError("cannot convert to integer")
        elif name in _STRING_ARRAY_TYPES:
            if isinstance(inner, TextList):
                result = inner
            else:
                text = as_text(inner)
                if text is None:
                    raise FoldError("cannot convert a type to string")
                result = TextList((text,))
        else:
            return UNKNOWN
        self.transforms["typecast"] += 1
        return result

    def array(self, expr: nodes.ArrayLit) -> Value:
        items: List[str] = []
        for value in self.fold_all(expr.items):
            if isinstance(value, Text):
                items.append(value.value)
            elif isinstance(value, TextList):
                items.extend(value.items)
            else:
                return UNKNOWN
        return TextList(tuple(items))

    def method_call(self, expr: nodes.MethodCall) -> Value:
        receiver = self.fold(expr.receiver)
        args = self.fold_all(expr.args)
        if not is_known(receiver) or not all(is_known(a) for a in args):
            return UNKNOWN
        method = expr.method
        if not isinstance(receiver, Text):
            if method == "tostring" and not args and isinstance(receiver, (Number, TextList)):
                return Text(as_text(receiver))
            return UNKNOWN
        subject = receiver.value
        texts = [as_text(a) for a in args]

        if method == "replace" and len(args) == 2 and None not in texts:
            self.transforms["replace"] += 1
            return Text(eval_replace(subject, texts[0], texts[1]))
        if method == "split" and len(args) == 1:
            if isinstance(args[0], TextList):
                parts = _split_many(subject, args[0].items)
            elif texts[0] is not None:
                parts = eval_split(subject, texts[0])
            else:
                raise FoldError("split separator is not text")
            self.transforms["split"] += 1
            return TextList(tuple(parts))
        if method == "tostring" and not args:
            return receiver
        if method in ("tolower", "tolowerinvariant") and not args:
            self.transforms["case"] += 1
            return Text(subject.lower())
        if method in ("toupper", "toupperinvariant") and not args:
            self.transforms["case"] += 1
            return Text(subject.upper())
        if method in ("trim", "trimstart", "trimend") and None not in texts:
            chars = "".join(texts) if texts else None
            strip = {"trim": str.strip, "trimstart": str.lstrip, "trimend": str.rstrip}[method]
            return Text(strip(subject, chars))
        if method == "substring" and 1 <= len(args) <= 2 and all(isinstance(a, Number) for a in args):
            start = int(args[0].value)
            length = int(args[1].value) if len(args) == 2 else len(subject) - start
            if start < 0 or length < 0 or start + length > len(subject):
                raise FoldError("substring out of range")
            return Text(subject[start:start + length])
        return UNKNOWN

    def static_call(self, expr: nodes.StaticCall) -> Value:
        receiver = self.fold(expr.receiver)
        args = self.fold_all(expr.args)
        if not isinstance(receiver, TypeName) or receiver.name not in _STRING_TYPES:
            return UNKNOWN
        if not all(is_known(a) for a in args):
            return UNKNOWN
        if expr.member == "join" and args:
            separator = as_text(args[0])
            if len(args) == 2 and isinstance(args[1], TextList):
                items = list(args[1].items)
            else:
                items = [as_text(a) for a in args[1:]]
            if separator is None or None in items:
                raise FoldError("join operands are not text")
            self.transforms["join"] += 1
            return Text(separator.join(items))
        if expr.member == "concat":
            items = [as_text(a) for a in args]
            if None in items:
                raise FoldError("concat operands are not text")
            self.transforms["concat"] += 1
            return Text("".join(items))
        if expr.member == "format" and args:
            template = as_text(args[0])
            items = [as_text(a) for a in args[1:]]
            if template is None or None in items:
                raise FoldError("format operands are not text")
            self.transforms["format"] += 1
            return Text(eval_format(template, items))
        return UNKNOWN

    def property_ref(self, expr: nodes.PropertyRef) -> Value:
        if expr.name == "value":
            target = _get_variable_target(expr.receiver, self)
            if target is not None:
                self.transforms["get-variable"] += 1
                return self.env.lookup(target)
        receiver = self.fold(expr.receiver)
        if expr.name in ("length", "count"):
            if isinstance(receiver, Text):
                return Number(len(receiver.value) if expr.name == "length" else 1)
            if isinstance(receiver, TextList):
                return Number(len(receiver.items))
        return UNKNOWN

    def cmdlet_call(self, expr: nodes.CmdletCall) -> Value:
        name = command_name(expr, self)
        if name in _GET_VARIABLE and _has_switch(expr.args, "valueonly"):
            target = _first_positional(expr.args, self)
            if target is not None:
                self.transforms["get-variable"] += 1
                return self.env.lookup(target)
        self.fold_all(expr.args)
        return UNKNOWN

    def binary_op(self, expr: nodes.BinaryOp) -> Value:
        left, right = self.fold(expr.left), self.fold(expr.right)
        if expr.op != "-join" or not (is_known(left) and is_known(right)):
            return UNKNOWN
        items = list(left.items) if isinstance(left, TextList) else [as_text(left)]
        separator = as_text(right)
        if separator is None or None in items:
            raise FoldError("join operands are not text")
        self.transforms["join"] += 1
        return Text(separator.join(items))


def command_name(call: nodes.CmdletCall, folder: Optional[_Folder] = None) -> Optional[str]:
    """Lowercase command name, or None when it is computed and unresolved."""
    if isinstance(call.name, (nodes.Bareword, nodes.StringLit)):
        return call.name.text.lower()
    if folder is None:
        return None
    value = folder.fold(call.name)
    return value.value.lower() if isinstance(value, Text) else None


def _has_switch(args: Sequence[nodes.Expr], switch: str) -> bool:
    for arg in args:
        if isinstance(arg, nodes.Bareword) and arg.parameter:
            name = arg.text[1:].rstrip(":").lower()
            if len(name) >= 2 and switch.startswith(name):
                return True
    return False


def _first_positional(args: Sequence[nodes.Expr], folder: _Folder) -> Optional[str]:
    for arg in args:
        if isinstance(arg, nodes.Bareword) and arg.parameter:
            continue
        value = folder.fold(arg)
        return canonical_variable(value.value) if isinstance(value, Text) and value.value else None
    return None


def _get_variable_target(expr: nodes.Expr, folder: _Folder) -> Optional[str]:
    """Variable named by ``(Get-Variable NAME)``, if that is what ``expr`` is."""
    while isinstance(expr, nodes.Paren):
        expr = expr.inner
    if isinstance(expr, nodes.CmdletCall) and command_name(expr, folder) in _GET_VARIABLE:
        return _first_positional(expr.args, folder)
    return None


# ---------------------------------------------------------------------------
# Script evaluation
# ---------------------------------------------------------------------------

@dataclass
class DeobResult:
    """Outcome of statically running one script.

    Attributes:
        folded_env: Bindings after the last statement.
        residual: The script with constants substituted and dead code removed.
        rendered: ``residual`` as normalized PowerShell text.
        string_pool: Every folded text, in the order it was produced.
        transforms: Count of undone obfuscation operations by kind.
    """
    folded_env: Environment
    residual: nodes.ScriptAst
    rendered: str
    string_pool: Tuple[str, ...]
    transforms: Counter = field(default_factory=Counter)


class _Runner:
    def __init__(self):
        self.env = Environment()
        self.transforms: Counter = Counter()
        self.pool: List[str] = []
        self._pooled: Set[str] = set()

    def remember(self, value: Value) -> None:
        texts: Tuple[str, ...] = ()
        if isinstance(value, Text):
            texts = (value.value,)
        elif isinstance(value, TextList):
            texts = value.items
        for text in texts:
            if text and text not in self._pooled:
                self._pooled.add(text)
                self.pool.append(text)

    def fold(self, expr: nodes.Expr) -> Value:
        return fold_expr(expr, self.env, self.transforms)

    def bind(self, name: str, value: Value) -> None:
        self.remember(value)
        self.env.bind(name, value)

    # -- statements --------------------------------------------------------

    def run_block(self, stmts: Sequence[nodes.Stmt]) -> Tuple[nodes.Stmt, ...]:
        return tuple(self.run_statement(stmt) for stmt in stmts)

    def run_statement(self, stmt: nodes.Stmt) -> nodes.Stmt:
        if isinstance(stmt, nodes.Assign):
            value = self.fold(stmt.value)
            residual = self.residualize(stmt.value)
            self.bind(stmt.name, value)
            return replace(stmt, value=residual)

        if isinstance(stmt, nodes.SetItem):
            path = self.fold(stmt.path)
            value = self.fold(stmt.value)
            name = _variable_path(path)
            if name is not None:
                self.transforms["set-item"] += 1
                residual = self.residualize(stmt.value)
                self.bind(name, value)
                return nodes.Assign(name, residual, stmt.span)
            return replace(stmt, path=self.residualize(stmt.path), value=self.residualize(stmt.value))

        if isinstance(stmt, nodes.PropertySet):
            self.fold(stmt.value)
            target = replace(stmt.target, receiver=self.residualize(stmt.target.receiver))
            return replace(stmt, target=target, value=self.residualize(stmt.value))

        if isinstance(stmt, nodes.ExprStmt):
            self.fold(stmt.expr)
            return replace(stmt, expr=self.residualize(stmt.expr))

        if isinstance(stmt, nodes.ForEach):
            self.fold(stmt.iterable)
            iterable = self.residualize(stmt.iterable)
            loop_names = nodes.assigned_names(stmt.body) | {stmt.var}
            self.demote(loop_names)
            body = self.run_block(stmt.body)
            # zero or many iterations: nothing assigned inside is known afterwards
            self.demote(loop_names)
            return replace(stmt, iterable=iterable, body=body)

        if isinstance(stmt, nodes.If):
            self.fold(stmt.cond)
            cond = self.residualize(stmt.cond)
            before = dict(self.env.bindings)
            body = self.run_block(stmt.body)
            after_body = self.env.bindings
            self.env.bindings = dict(before)
            orelse = self.run_block(stmt.orelse)
            self.env.bindings = _merge(after_body, self.env.bindings)
            return replace(stmt, cond=cond, body=body, orelse=orelse)

        if isinstance(stmt, nodes.TryCatch):
            before = dict(self.env.bindings)
            body = self.run_block(stmt.body)
            after_try = self.env.bindings
            # the handler may start after any prefix of the try block
            self.env.bindings = dict(before)
            self.demote(nodes.assigned_names(stmt.body))
            handler = self.run_block(stmt.handler)
            self.env.bindings = _merge(after_try, self.env.bindings)
            final = self.run_block(stmt.final)
            return replace(stmt, body=body, handler=handler, final=final)

        if isinstance(stmt, nodes.UnknownStmt):
            self.demote(canonical_variable(m) for m in _RAW_ASSIGNMENT.findall(stmt.raw))
        return stmt

    def demote(self, names: Iterable[str]) -> None:
        for name in names:
            self.env.bind(name, UNKNOWN)

    # -- residual construction -------------------------------------------

    def residualize(self, expr: nodes.Expr) -> nodes.Expr:
        """Replace every maximal constant sub-expression with a literal."""
        if isinstance(expr, (nodes.StringLit, nodes.Number, nodes.TypeLit, nodes.Unknown,
                             nodes.Bareword, nodes.VarRef)):
            return expr
        value = self.peek(expr)
        if is_known(value):
            literal = self.literal(value)
            if literal is not None:
                return literal

        if isinstance(expr, nodes.Concat):
            return self.residualize_concat(expr)
        if isinstance(expr, nodes.Paren):
            return nodes.Paren(self.residualize(expr.inner))
        if isinstance(expr, nodes.FormatOp):
            return nodes.FormatOp(self.residualize(expr.template), self.residualize_all(expr.args))
        if isinstance(expr, nodes.CharCast):
            return nodes.CharCast(self.residualize(expr.code))
        if isinstance(expr, nodes.TypeCast):
            return replace(expr, inner=self.residualize(expr.inner))
        if isinstance(expr, (nodes.MethodCall, nodes.StaticCall)):
            return replace(expr, receiver=self.residualize(expr.receiver),
                           args=self.residualize_all(expr.args))
        if isinstance(expr, nodes.PropertyRef):
            return replace(expr, receiver=self.residualize(expr.receiver))
        if isinstance(expr, nodes.CmdletCall):
            name = expr.name if isinstance(expr.name, nodes.Bareword) else self.residualize(expr.name)
            return replace(expr, name=name, args=self.residualize_all(expr.args))
        if isinstance(expr, nodes.ArrayLit):
            return nodes.ArrayLit(self.residualize_all(expr.items))
        if isinstance(expr, nodes.BinaryOp):
            return replace(expr, left=self.residualize(expr.left), right=self.residualize(expr.right))
        return expr

    def residualize_all(self, exprs: Sequence[nodes.Expr]) -> Tuple[nodes.Expr, ...]:
        return tuple(self.residualize(e) for e in exprs)

    def peek(self, expr: nodes.Expr) -> Value:
        """Fold without touching counters; residual building re-folds subtrees."""
        reads = self.env.read_of_unbound
        value = fold_expr(expr, self.env)
        self.env.read_of_unbound = reads
        return value

    def literal(self, value: Value) -> Optional[nodes.Expr]:
        if isinstance(value, Text):
            self.remember(value)
            return nodes.StringLit(value.value)
        if isinstance(value, Number):
            return nodes.Number(value.value)
        if isinstance(value, TextList):
            self.remember(value)
            return nodes.ArrayLit(tuple(nodes.StringLit(item) for item in value.items))
        if isinstance(value, TypeName):
            return nodes.TypeLit(value.name)
        return None

    def residualize_concat(self, expr: nodes.Concat) -> nodes.Expr:
        operands: List[nodes.Expr] = []
        node: nodes.Expr = expr
        while isinstance(node, nodes.Concat):
            operands.append(node.right)
            node = node.left
        operands.append(node)
        operands.reverse()

        residual: List[nodes.Expr] = []
        for operand in operands:
            if isinstance(operand, nodes.VarRef):
                bound = self.env.bindings.get(operand.name)
                if isinstance(bound, (Text, Number)):
                    residual.append(self.literal(bound))
                    continue
            residual.append(self.residualize(operand))

        head = residual[0]
        if isinstance(head, nodes.StringLit) or (
                isinstance(head, nodes.VarRef) and _is_string_automatic(head.name)):
            residual = _merge_text_runs(residual)
        result = residual[0]
        for operand in residual[1:]:
            result = nodes.Concat(result, operand)
        return result


def _merge_text_runs(operands: List[nodes.Expr]) -> List[nodes.Expr]:
    """Join adjacent literals of a chain that is string concatenation throughout."""
    merged: List[nodes.Expr] = []
    for operand in operands:
        text = None
        if isinstance(operand, nodes.StringLit):
            text = operand.text
        elif isinstance(operand, nodes.Number) and merged:
            text = format_number(operand.value)
        if text is not None and merged and isinstance(merged[-1], nodes.StringLit):
            merged[-1] = nodes.StringLit(merged[-1].text + text)
        else:
            merged.append(operand)
    return merged


def _is_string_automatic(name: str) -> bool:
    return name in _STRING_AUTOMATICS or name.startswith("env:")


def _variable_path(path: Value) -> Optional[str]:
    if not isinstance(path, Text):
        return None
    text = path.value.strip()
    if text.lower().startswith("variable:") and len(text) > len("variable:"):
        return canonical_variable(text[len("variable:"):])
    return None


def _merge(left: Dict[str, Value], right: Dict[str, Value]) -> Dict[str, Value]:
    merged: Dict[str, Value] = {}
    for name in set(left) | set(right):
        if name in left and name in right and left[name] == right[name]:
            merged[name] = left[name]
        else:
            merged[name] = UNKNOWN
    return merged


def run_script(ast: nodes.ScriptAst, trim_path_separators: Optional[bool] = None) -> DeobResult:
    """Fold ``ast`` statement by statement and render the residual.

    Performs no I/O of any kind.  Per-statement failures leave the statement
    residual.
    """
    runner = _Runner()
    statements = runner.run_block(ast.statements)
    residual = eliminate_dead_code(nodes.ScriptAst(statements, ast.source), runner.env)
    result = DeobResult(runner.env, residual, "", tuple(runner.pool), runner.transforms)
    if trim_path_separators is None:
        trim_path_separators = bool(config.get("deobfuscation.trim_path_separators", False))
    result.rendered = render_deobfuscated(result, trim_path_separators=trim_path_separators)
    return result


# ---------------------------------------------------------------------------
# Dead code
# ---------------------------------------------------------------------------

def eliminate_dead_code(ast: nodes.ScriptAst, env: Environment) -> nodes.ScriptAst:
    """Drop unread constant assignments and statements after ``break``.

    An assignment goes when no statement reads its variable and its right
    side is a literal (or a plain variable read).  When the script can reach
    variables by computed name (``iex``, ``Get-Variable $name``) only the
    unreachable statements are removed.
    """
    statements = _prune_after_break(ast.statements)
    if _has_dynamic_access(statements):
        logger.debug("dynamic variable access; keeping all assignments")
        return replace(ast, statements=statements)
    while True:
        reads = _collect_reads(statements)
        pruned = _remove_unread(statements, reads)
        if pruned == statements:
            break
        statements = pruned
    logger.debug("dead code pass kept %d statements, %d bindings", len(statements), len(env.bindings))
    return replace(ast, statements=statements)


def _prune_after_break(stmts: Tuple[nodes.Stmt, ...]) -> Tuple[nodes.Stmt, ...]:
    kept: List[nodes.Stmt] = []
    for stmt in stmts:
        kept.append(_map_blocks(stmt, _prune_after_break))
        if isinstance(stmt, nodes.Break):
            break
    return tuple(kept)


def _map_blocks(stmt: nodes.Stmt, fn) -> nodes.Stmt:
    if isinstance(stmt, nodes.ForEach):
        return replace(stmt, body=fn(stmt.body))
    if isinstance(stmt, nodes.If):
        return replace(stmt, body=fn(stmt.body), orelse=fn(stmt.orelse))
    if isinstance(stmt, nodes.TryCatch):
        return replace(stmt, body=fn(stmt.body), handler=fn(stmt.handler), final=fn(stmt.final))
    return stmt


def _literal_name(expr: nodes.Expr) -> Optional[str]:
    if isinstance(expr, (nodes.Bareword, nodes.StringLit)) and not getattr(expr, "parameter", False):
        return canonical_variable(expr.text)
    return None


def _has_dynamic_access(stmts: Tuple[nodes.Stmt, ...]) -> bool:
    for stmt in nodes.walk_statements(stmts):
        if isinstance(stmt, nodes.SetItem):
            return True
        if isinstance(stmt, nodes.UnknownStmt) and re.search(
                r"(?i)\biex\b|invoke-|variable", stmt.raw.replace("`", "")):
            return True
        for top in nodes.statement_exprs(stmt):
            for expr in nodes.walk(top):
                if isinstance(expr, nodes.MethodCall) and expr.method in _EVAL_METHODS:
                    return True
                if not isinstance(expr, nodes.CmdletCall):
                    continue
                name = command_name(expr)
                if name is None or name in _EVAL_COMMANDS:
                    return True
                if name in _VARIABLE_COMMANDS:
                    positional = [a for a in expr.args
                                  if not (isinstance(a, nodes.Bareword) and a.parameter)]
                    if not positional or _literal_name(positional[0]) is None:
                        return True
    return False


def _collect_reads(stmts: Tuple[nodes.Stmt, ...]) -> Set[str]:
    reads: Set[str] = set()
    for stmt in nodes.walk_statements(stmts):
        if isinstance(stmt, nodes.UnknownStmt):
            reads.update(canonical_variable(m) for m in _RAW_VARIABLE.findall(stmt.raw))
            continue
        for top in nodes.statement_exprs(stmt):
            for expr in nodes.walk(top):
                if isinstance(expr, nodes.VarRef):
                    reads.add(expr.name)
                elif isinstance(expr, nodes.Unknown):
                    reads.update(canonical_variable(m) for m in _RAW_VARIABLE.findall(expr.raw))
                elif isinstance(expr, nodes.CmdletCall) and command_name(expr) in _VARIABLE_COMMANDS:
                    for arg in expr.args:
                        name = _literal_name(arg)
                        if name is not None:
                            reads.add(name)
    return reads


def _remove_unread(stmts: Tuple[nodes.Stmt, ...], reads: Set[str]) -> Tuple[nodes.Stmt, ...]:
    kept: List[nodes.Stmt] = []
    for stmt in stmts:
        if isinstance(stmt, nodes.Assign) and stmt.name not in reads and (
                nodes.is_literal(stmt.value) or isinstance(stmt.value, nodes.VarRef)):
            continue
        kept.append(_map_blocks(stmt, lambda block: _remove_unread(block, reads)))
    return tuple(kept)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def deobfuscate(source: Union[bytes, str, SourceText],
                trim_path_separators: Optional[bool] = None) -> DeobResult:
    """Decode, strip comments, tokenize, parse and run one script.

    Raises:
        UndecodableInput: If ``source`` is bytes that decode to nothing.
    """
    if isinstance(source, bytes):
        source = decode_input(source)
    elif isinstance(source, str):
        source = SourceText(source.encode("utf-8"), source, Encoding.PLAIN_UTF8)

    text = strip_comments(source.decoded)
    try:
        tokens = tokenize(text)
    except LexError as exc:
        logger.warning("tokenizer gave up (%s); keeping the script residual", exc)
        ast = nodes.ScriptAst((nodes.UnknownStmt(text.strip(), (0, len(text))),), source) \
            if text.strip() else nodes.ScriptAst((), source)
        return run_script(ast, trim_path_separators)

    ast = parse_script(tokens, source)
    result = run_script(ast, trim_path_separators)
    mangled = sum(1 for tok in tokens if "`" in tok.raw and tok.kind in (
        TokenKind.MEMBER, TokenKind.CMDLET, TokenKind.VARIABLE, TokenKind.TYPE))
    if mangled:
        result.transforms["backtick"] += mangled
    return result
