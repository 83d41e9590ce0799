"""Tests for residual rendering."""
import pytest

from deobfuscator import nodes
from deobfuscator.evaluator import deobfuscate
from deobfuscator.lexer import tokenize
from deobfuscator.parser import parse_script
from deobfuscator.render import quote, render_expr
from evaluation.synthetic import TECHNIQUES, generate_synthetic_sample

URLS = ["https://a-b.com/x/y/", "http://c.org/index.php?id=1", "https://www.d.net/"]


def test_folded_assignment_renders_as_literal():
    """Constants are substituted, commands keep their variable arguments."""
    result = deobfuscate("$a=('h'+'i'); Write-Host $a")
    assert result.rendered == '$a = "hi";\nwrite-host $a;'


def test_blocks_are_indented():
    """Nested statements get four spaces per level."""
    result = deobfuscate("foreach($u in $l){try{Get-It $u;break}catch{}}")
    assert result.rendered == "\n".join([
        "foreach ($u in $l) {",
        "    try {",
        "        get-it $u;",
        "        break;",
        "    } catch {",
        "    }",
        "}",
    ])


def test_quote_escapes_special_characters():
    """Characters that would expand or end the literal are escaped."""
    assert quote('a$b"c`d') == '"a`$b`"c``d"'
    assert quote("tab\there") == '"tab`there"'


def test_quote_trims_trailing_backslashes_when_asked():
    """Path separators at the end of a literal are optional."""
    assert quote("C:\\temp\\", trim_path_separators=True) == '"C:\\temp"'
    assert quote("C:\\temp\\") == '"C:\\temp\\"'


def test_member_names_needing_quotes():
    """Members that are not plain identifiers stay quoted."""
    expr = nodes.MethodCall(nodes.VarRef("x"), "odd name", ())
    assert render_expr(expr) == '$x."odd name"()'


def test_rendering_is_idempotent():
    """Deobfuscating rendered output changes nothing."""
    source = (
        "$dir = $env:USERPROFILE + ('\\'+'Qy'+'\\'); "
        "if ((Get-Item $dir).length -ge 10) { Write-Host ('{1}{0}' -f 'b','a') } "
        "$list = ('a@b').split('@'); foreach($e in $list){ Write-Host $e }"
    )
    once = deobfuscate(source).rendered
    assert deobfuscate(once).rendered == once


def test_sample_rendering_is_idempotent(emotet_bytes):
    """The Emotet dropper reaches a fixed point after one pass."""
    once = deobfuscate(emotet_bytes).rendered
    assert deobfuscate(once).rendered == once


def _assert_fixed_point(source):
    once = deobfuscate(source).rendered
    assert deobfuscate(once).rendered == once
    statements = parse_script(tokenize(once)).statements
    assert not any(isinstance(s, nodes.UnknownStmt) for s in nodes.walk_statements(statements))


def test_sample_rendering_reparses_cleanly(emotet_bytes):
    """The rendered dropper is itself fully parseable."""
    _assert_fixed_point(emotet_bytes)


@pytest.mark.parametrize("seed", range(25))
def test_synthetic_rendering_is_a_fixed_point(seed):
    """Every technique at once: one pass reaches the fixed point and reparses cleanly."""
    script, _ = generate_synthetic_sample(URLS, seed)
    _assert_fixed_point(script)


@pytest.mark.parametrize("technique", sorted(TECHNIQUES))
def test_single_technique_rendering_is_a_fixed_point(technique):
    """Each technique on its own renders to a fixed point."""
    for seed in range(5):
        script, _ = generate_synthetic_sample(URLS, seed, techniques=[technique])
        _assert_fixed_point(script)


@pytest.mark.parametrize("name", ["odd}name", "tick`s", "a b", "we}ird`"])
def test_braced_variable_names_round_trip(name):
    """Names that need ${...} come back unchanged through the lexer."""
    rendered = render_expr(nodes.VarRef(name))
    tokens = tokenize(rendered)
    assert len(tokens) == 1
    assert tokens[0].text == name
