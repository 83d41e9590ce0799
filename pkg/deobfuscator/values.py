"""Folded values and the variable environment."""
from dataclasses import dataclass, field
from typing import Dict, Tuple, Union

from deobfuscator.lexer import AUTOMATIC_VARIABLES


@dataclass(frozen=True)
class Text:
    value: str


@dataclass(frozen=True)
class Number:
    value: Union[int, float]


@dataclass(frozen=True)
class TextList:
    items: Tuple[str, ...]


@dataclass(frozen=True)
class TypeName:
    """A .NET type reference; ``name`` is lowercase."""
    name: str


@dataclass(frozen=True)
class Unknown:
    """A value that cannot be known without running the script."""


UNKNOWN = Unknown()

Value = Union[Text, Number, TextList, TypeName, Unknown]


def is_known(value: Value) -> bool:
    return not isinstance(value, Unknown)


def format_number(value: Union[int, float]) -> str:
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


def as_text(value: Value):
    """String conversion as PowerShell performs it, or None if unknown."""
    if isinstance(value, Text):
        return value.value
    if isinstance(value, Number):
        return format_number(value.value)
    if isinstance(value, TextList):
        # $OFS defaults to a single space
        return " ".join(value.items)
    return None


def is_runtime_variable(name: str) -> bool:
    """Automatic and provider-scoped variables (``$HOME``, ``$env:TEMP``)."""
    return name in AUTOMATIC_VARIABLES or ":" in name


@dataclass
class Environment:
    """Variable bindings keyed by lowercase name.

    Attributes:
        bindings: Canonical name to folded value.
        read_of_unbound: Reads of names that were never assigned.
    """
    bindings: Dict[str, Value] = field(default_factory=dict)
    read_of_unbound: int = 0

    def lookup(self, name: str) -> Value:
        key = name.lower()
        if key in self.bindings:
            return self.bindings[key]
        if key == "null":
            return Text("")
        if is_runtime_variable(key):
            return UNKNOWN
        # PowerShell reads an unset variable as $null, which concatenates as ""
        self.read_of_unbound += 1
        return Text("")

    def bind(self, name: str, value: Value) -> None:
        self.bindings[name.lower()] = value

    def is_bound(self, name: str) -> bool:
        return name.lower() in self.bindings
