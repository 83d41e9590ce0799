"""Tests for the recursive-descent parser."""
import pytest

from deobfuscator import nodes
from deobfuscator.errors import ParseError
from deobfuscator.lexer import TokenKind, decode_input, strip_comments, tokenize
from deobfuscator.parser import parse_expression, parse_script
from evaluation.synthetic import generate_synthetic_sample


def _expr(text):
    return parse_expression(tokenize(text))


def _script(text):
    return parse_script(tokenize(text)).statements


def test_format_operator_takes_argument_list():
    """-f binds looser than + and collects a comma list."""
    expr = _expr("('{0}{1}' -f 'a'+'b','c')")
    assert expr == nodes.FormatOp(
        nodes.StringLit("{0}{1}"),
        (nodes.Concat(nodes.StringLit("a"), nodes.StringLit("b")), nodes.StringLit("c")),
    )


def test_concat_is_left_associative():
    """'a'+'b'+'c' nests to the left."""
    assert _expr("'a'+'b'+'c'") == nodes.Concat(
        nodes.Concat(nodes.StringLit("a"), nodes.StringLit("b")), nodes.StringLit("c"))


def test_char_and_type_casts():
    """[char] gets its own node, other casts keep the type name."""
    assert _expr("[Char]92") == nodes.CharCast(nodes.Number(92))
    assert _expr("[StriNG][Char]92") == nodes.TypeCast("string", nodes.CharCast(nodes.Number(92)))


def test_method_call_on_parenthesised_receiver():
    """Member names are canonical lowercase."""
    expr = _expr("('a'+'b').\"Re`PlAce\"('a','c')")
    assert isinstance(expr, nodes.MethodCall)
    assert expr.method == "replace"
    assert expr.args == (nodes.StringLit("a"), nodes.StringLit("c"))


def test_static_call_and_property():
    """:: builds a static call, .name without parentheses a property."""
    assert _expr("[io.path]::combine('a','b')") == nodes.StaticCall(
        nodes.TypeLit("io.path"), "combine", (nodes.StringLit("a"), nodes.StringLit("b")))
    assert _expr("$x.length") == nodes.PropertyRef(nodes.VarRef("x"), "length")


def test_foreach_and_try():
    """Block statements keep their bodies."""
    (loop,) = _script("foreach($u in $list){ try { $w.downloadfile($u, $p); break } catch {} }")
    assert isinstance(loop, nodes.ForEach)
    assert loop.var == "u"
    (guard,) = loop.body
    assert isinstance(guard, nodes.TryCatch)
    assert isinstance(guard.body[1], nodes.Break)
    assert guard.handler == ()


def test_if_elseif_else():
    """elseif chains nest in the else branch."""
    (stmt,) = _script("if ($a) { 1 } elseif ($b) { 2 } else { 3 }")
    assert isinstance(stmt, nodes.If)
    assert isinstance(stmt.orelse[0], nodes.If)
    assert len(stmt.orelse[0].orelse) == 1


def test_set_item_and_set_variable():
    """Both spellings become SetItem statements."""
    first, second = _script("Set-Item -Path variable:a -Value 'x'; sv b 'y'")
    assert first == nodes.SetItem(nodes.Bareword("variable:a"), nodes.StringLit("x"), first.span)
    assert isinstance(second, nodes.SetItem)
    assert second.path == nodes.Concat(nodes.StringLit("variable:"), nodes.Bareword("b"))


def test_compound_assignment():
    """$a += x is $a = $a + x."""
    (stmt,) = _script("$a += 'x'")
    assert stmt == nodes.Assign("a", nodes.Concat(nodes.VarRef("a"), nodes.StringLit("x")), stmt.span)


def test_command_with_computed_name():
    """&(...) invokes whatever the expression names."""
    (stmt,) = _script("&('Ne'+'w-Item') -ItemType Directory $p")
    call = stmt.expr
    assert isinstance(call, nodes.CmdletCall)
    assert call.invoker == "&"
    assert call.args[0] == nodes.Bareword("-ItemType", parameter=True)


def test_pipeline_degrades_to_unknown():
    """Unsupported statements do not stop the parse."""
    statements = _script("Get-Foo | Out-Null; $b='y'")
    assert isinstance(statements[0], nodes.UnknownStmt)
    assert statements[0].raw == "Get-Foo | Out-Null"
    assert isinstance(statements[1], nodes.Assign)


def test_expression_rejects_trailing_tokens():
    """Two adjacent literals are not one expression."""
    with pytest.raises(ParseError):
        _expr("'a' 'b'")


def test_expandable_string_becomes_concat():
    """Variables inside double quotes are read like $a + ..."""
    assert _expr('"x$a"') == nodes.Concat(nodes.StringLit("x"), nodes.VarRef("a"))


def _unwrap(expr):
    while isinstance(expr, nodes.Paren):
        expr = expr.inner
    return expr


def test_garbage_is_one_unknown_statement():
    """Unparsable input is contained, never raised."""
    from deobfuscator.evaluator import deobfuscate

    (stmt,) = deobfuscate("@@@@").residual.statements
    assert isinstance(stmt, nodes.UnknownStmt)
    assert stmt.raw == "@@@@"


def test_sample_parses_completely(emotet_bytes):
    """Every statement of the real dropper is understood."""
    from deobfuscator.lexer import decode_input, strip_comments

    statements = parse_script(tokenize(strip_comments(decode_input(emotet_bytes).decoded))).statements
    assert not any(isinstance(s, nodes.UnknownStmt) for s in nodes.walk_statements(statements))

    first = statements[0]
    assert isinstance(first, nodes.Assign) and first.name == "jcfvpb"
    assert isinstance(first.value, nodes.TypeCast)
    assert isinstance(_unwrap(first.value.inner), nodes.FormatOp)
    assert isinstance(statements[1], nodes.SetItem)


def test_parse_is_deterministic(emotet_bytes):
    """The same tokens give the same tree."""
    tokens = tokenize(emotet_bytes.decode("utf-8"))
    assert parse_script(tokens) == parse_script(tokens)


def _assert_spans_partition(text):
    tokens = tokenize(text)
    spans = [stmt.span for stmt in parse_script(tokens).statements]
    for (_, end), (start, _) in zip(spans, spans[1:]):
        assert end <= start
    for tok in tokens:
        covering = [span for span in spans if span[0] <= tok.start and tok.end <= span[1]]
        if tok.kind in (TokenKind.NEWLINE, TokenKind.SEMICOLON) and not covering:
            continue
        assert len(covering) == 1, tok


@pytest.mark.parametrize("text", [
    "$a=('x'+'y'); Write-Host $a",
    "@@@@; $b = 1\n\n$c = $b",
    "foreach($u in $l){try{$w.DownloadFile($u, $p);break}catch{}}; if ($x) { 1 } else { 2 }",
])
def test_statement_spans_partition_tokens(text):
    """Every token outside top-level separators belongs to exactly one statement."""
    _assert_spans_partition(text)


def test_statement_spans_partition_the_sample(emotet_bytes):
    """The sample's statements account for all of its tokens."""
    _assert_spans_partition(strip_comments(decode_input(emotet_bytes).decoded))


def test_statement_spans_partition_synthetic_scripts():
    """Generated droppers partition the same way."""
    for seed in range(20):
        script, _ = generate_synthetic_sample(["https://a.com/x/", "http://b.org/y"], seed)
        _assert_spans_partition(script)
