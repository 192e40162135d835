"""Parser, value model and pretty-printer for toolbox call scripts.

The accepted language is a small MATLAB-flavoured call grammar:

    script    := statement*
    statement := [ident "="] ident "(" [args] ")" [";"]
    args      := arg ("," arg)*
    arg       := value | ident
    value     := NUMBER | STRING | cell | vector | logspace | "on" | "off"
    cell      := "{" [STRING ("," STRING)*] "}"
    vector    := "[" NUMBER ("," NUMBER)* "]"
    logspace  := "logspace" "(" NUMBER "," NUMBER "," NUMBER ")"

``%`` starts a comment that runs to the end of the line.  Whitespace is
insignificant outside strings.  Identifiers are case-sensitive.  ``on`` and
``off`` are reserved flag literals; they also appear as defaults in the
option registry, so scripts and registry share one value model.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import NoCodeFound, ScriptParseError

# Dotted names such as ``num.trainSample`` are legal option names; they only
# ever appear inside quoted strings, never as bare identifiers.
OPTION_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*")

_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


def is_option_name(text: str) -> bool:
    return OPTION_NAME_RE.fullmatch(text) is not None


# ===========================================================================
# Value model
# ===========================================================================


@dataclass(frozen=True, slots=True)
class Number:
    value: float


@dataclass(frozen=True, slots=True)
class Str:
    value: str


@dataclass(frozen=True, slots=True)
class Cell:
    items: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class Vector:
    values: tuple[float, ...]


@dataclass(frozen=True, slots=True)
class Logspace:
    """A ``logspace(start, stop, count)`` literal, kept unexpanded.

    Expansion follows the MATLAB convention: ``count`` points from
    ``10**start`` to ``10**stop``, equally spaced in the exponent, and a
    single point collapses onto ``10**stop``.
    """

    start: float
    stop: float
    count: int

    def expand(self) -> tuple[float, ...]:
        if self.count == 1:
            return (10.0**self.stop,)
        step = (self.stop - self.start) / (self.count - 1)
        return tuple(10.0 ** (self.start + i * step) for i in range(self.count))


@dataclass(frozen=True, slots=True)
class Flag:
    value: bool


@dataclass(frozen=True, slots=True)
class Ident:
    """A bare identifier used as an argument, i.e. a variable reference."""

    name: str


Value = Number | Str | Cell | Vector | Logspace | Flag
Arg = Value | Ident


@dataclass(frozen=True, slots=True)
class CallNode:
    """One parsed call statement.

    ``options`` keeps name/value pairs in source order and may contain
    duplicate names; rejecting duplicates is the validator's job, not the
    parser's.
    """

    function: str
    positional_args: tuple[Arg, ...] = ()
    options: tuple[tuple[str, Value], ...] = ()
    assign_to: str | None = None


@dataclass(frozen=True, slots=True)
class ScriptAST:
    calls: tuple[CallNode, ...]


# ===========================================================================
# Tokenizer
# ===========================================================================

_PUNCT = {
    "(": "LPAREN",
    ")": "RPAREN",
    "{": "LBRACE",
    "}": "RBRACE",
    "[": "LBRACKET",
    "]": "RBRACKET",
    ",": "COMMA",
    ";": "SEMI",
    "=": "EQUALS",
}

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")


@dataclass(frozen=True, slots=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    line = 1
    line_start = 0
    pos = 0
    n = len(source)
    while pos < n:
        ch = source[pos]
        if ch == "\n":
            line += 1
            pos += 1
            line_start = pos
            continue
        if ch in " \t\r":
            pos += 1
            continue
        col = pos - line_start + 1
        if ch == "%":
            while pos < n and source[pos] != "\n":
                pos += 1
            continue
        if ch == "'":
            end = source.find("'", pos + 1)
            newline = source.find("\n", pos + 1)
            if end == -1 or (newline != -1 and newline < end):
                raise ScriptParseError(line, col, "closing quote")
            tokens.append(Token("STRING", source[pos + 1 : end], line, col))
            pos = end + 1
            continue
        if ch in _PUNCT:
            tokens.append(Token(_PUNCT[ch], ch, line, col))
            pos += 1
            continue
        m = _IDENT_RE.match(source, pos)
        if m:
            tokens.append(Token("IDENT", m.group(), line, col))
            pos = m.end()
            continue
        m = _NUMBER_RE.match(source, pos)
        if m:
            tokens.append(Token("NUMBER", m.group(), line, col))
            pos = m.end()
            continue
        raise ScriptParseError(line, col, f"a valid token (found {ch!r})")
    tokens.append(Token("EOF", "", line, (n - line_start) + 1))
    return tokens


# ===========================================================================
# Parser
# ===========================================================================


class _Parser:
    def __init__(self, tokens: list[Token]) -> None:
        self.tokens = tokens
        self.pos = 0

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def eat(self, kind: str, expected: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            raise ScriptParseError(tok.line, tok.column, expected)
        self.pos += 1
        return tok

    def parse_script(self) -> ScriptAST:
        """script := statement*  (at least one statement required)"""
        calls: list[CallNode] = []
        while self.peek().kind != "EOF":
            calls.append(self.parse_statement())
        if not calls:
            tok = self.peek()
            raise ScriptParseError(tok.line, tok.column, "at least one call statement")
        return ScriptAST(tuple(calls))

    def parse_statement(self) -> CallNode:
        """statement := [ident "="] ident "(" [args] ")" [";"]"""
        first = self.eat("IDENT", "a function or variable name")
        assign_to: str | None = None
        if self.peek().kind == "EQUALS":
            self.pos += 1
            assign_to = first.text
            first = self.eat("IDENT", "a function name")
        self.eat("LPAREN", "'(' after the function name")
        args: list[Arg] = []
        if self.peek().kind != "RPAREN":
            args.append(self.parse_arg())
            while self.peek().kind == "COMMA":
                self.pos += 1
                args.append(self.parse_arg())
        self.eat("RPAREN", "')' to close the call")
        if self.peek().kind == "SEMI":
            self.pos += 1
        positional, options = _split_args(tuple(args))
        return CallNode(first.text, positional, options, assign_to)

    def parse_arg(self) -> Arg:
        """arg := value | ident"""
        tok = self.peek()
        if tok.kind == "IDENT":
            if tok.text == "logspace" and self.peek(1).kind == "LPAREN":
                return self.parse_logspace()
            if tok.text in ("on", "off"):
                self.pos += 1
                return Flag(tok.text == "on")
            if self.peek(1).kind == "LPAREN":
                raise ScriptParseError(
                    tok.line, tok.column, "a value or variable name (nested calls are not supported)"
                )
            self.pos += 1
            return Ident(tok.text)
        return self.parse_value()

    def parse_value(self) -> Value:
        """value := NUMBER | STRING | cell | vector | logspace | "on" | "off" """
        tok = self.peek()
        if tok.kind == "NUMBER":
            self.pos += 1
            return Number(float(tok.text))
        if tok.kind == "STRING":
            self.pos += 1
            return Str(tok.text)
        if tok.kind == "LBRACE":
            return self.parse_cell()
        if tok.kind == "LBRACKET":
            return self.parse_vector()
        if tok.kind == "IDENT" and tok.text == "logspace":
            return self.parse_logspace()
        if tok.kind == "IDENT" and tok.text in ("on", "off"):
            self.pos += 1
            return Flag(tok.text == "on")
        raise ScriptParseError(tok.line, tok.column, "a value")

    def parse_cell(self) -> Cell:
        """cell := "{" [STRING ("," STRING)*] "}" """
        self.eat("LBRACE", "'{'")
        items: list[str] = []
        if self.peek().kind != "RBRACE":
            items.append(self.eat("STRING", "a quoted string inside the cell").text)
            while self.peek().kind == "COMMA":
                self.pos += 1
                items.append(self.eat("STRING", "a quoted string inside the cell").text)
        self.eat("RBRACE", "'}' to close the cell")
        return Cell(tuple(items))

    def parse_vector(self) -> Vector:
        """vector := "[" NUMBER ("," NUMBER)* "]" """
        self.eat("LBRACKET", "'['")
        values = [float(self.eat("NUMBER", "a number inside the vector").text)]
        while self.peek().kind == "COMMA":
            self.pos += 1
            values.append(float(self.eat("NUMBER", "a number inside the vector").text))
        self.eat("RBRACKET", "']' to close the vector")
        return Vector(tuple(values))

    def parse_logspace(self) -> Logspace:
        """logspace := "logspace" "(" NUMBER "," NUMBER "," NUMBER ")" """
        self.eat("IDENT", "'logspace'")
        self.eat("LPAREN", "'(' after logspace")
        start = float(self.eat("NUMBER", "the logspace start exponent").text)
        self.eat("COMMA", "',' between logspace arguments")
        stop = float(self.eat("NUMBER", "the logspace stop exponent").text)
        self.eat("COMMA", "',' between logspace arguments")
        count_tok = self.eat("NUMBER", "the logspace point count")
        count = float(count_tok.text)
        if count != int(count) or count < 1:
            raise ScriptParseError(count_tok.line, count_tok.column, "a positive integer point count")
        self.eat("RPAREN", "')' to close logspace")
        return Logspace(start, stop, int(count))


def _split_args(args: tuple[Arg, ...]) -> tuple[tuple[Arg, ...], tuple[tuple[str, Value], ...]]:
    """Split a flat argument list into positional args and option pairs.

    The option section is the longest even-length suffix that alternates
    between option-name strings and plain values.  Everything before it is
    positional.  A lone trailing name-like string therefore stays positional.
    """
    for start in range(len(args) + 1):
        suffix = args[start:]
        if len(suffix) % 2 != 0:
            continue
        if _is_option_suffix(suffix):
            options = tuple(
                (suffix[i].value, suffix[i + 1])  # type: ignore[union-attr]
                for i in range(0, len(suffix), 2)
            )
            return args[:start], options
    return args, ()


def _is_option_suffix(suffix: tuple[Arg, ...]) -> bool:
    for i in range(0, len(suffix), 2):
        name = suffix[i]
        value = suffix[i + 1]
        if not (isinstance(name, Str) and is_option_name(name.value)):
            return False
        if isinstance(value, Ident):
            return False
    return True


def parse_script(source: str) -> ScriptAST:
    """Parse ``source`` into a :class:`ScriptAST`.

    Raises :class:`ScriptParseError` with a 1-based line/column position and
    a description of what was expected there.
    """
    return _Parser(_tokenize(source)).parse_script()


def parse_value_literal(text: str) -> Value:
    """Parse a single value literal, e.g. a registry default."""
    parser = _Parser(_tokenize(text))
    value = parser.parse_value()
    parser.eat("EOF", "end of the value")
    return value


# ===========================================================================
# Pretty-printer
# ===========================================================================


def format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def format_value(value: Arg) -> str:
    if isinstance(value, Number):
        return format_number(value.value)
    if isinstance(value, Str):
        return f"'{value.value}'"
    if isinstance(value, Cell):
        return "{" + ", ".join(f"'{item}'" for item in value.items) + "}"
    if isinstance(value, Vector):
        return "[" + ", ".join(format_number(v) for v in value.values) + "]"
    if isinstance(value, Logspace):
        args = f"{format_number(value.start)}, {format_number(value.stop)}, {value.count}"
        return f"logspace({args})"
    if isinstance(value, Flag):
        return "on" if value.value else "off"
    return value.name


def format_call(call: CallNode) -> str:
    parts = [format_value(arg) for arg in call.positional_args]
    for name, value in call.options:
        parts.append(f"'{name}'")
        parts.append(format_value(value))
    rendered = f"{call.function}({', '.join(parts)});"
    if call.assign_to is not None:
        rendered = f"{call.assign_to} = {rendered}"
    return rendered


def pretty_print(ast: ScriptAST) -> str:
    """Render an AST back to canonical source, one statement per line."""
    return "\n".join(format_call(call) for call in ast.calls)


# ===========================================================================
# Code extraction from chat responses
# ===========================================================================


def extract_code(response: str) -> str:
    """Pull the script out of a chat response.

    Prefers the last fenced code block (any language tag).  If the response
    has no fences, falls back to the longest run of consecutive lines that
    each parse as call statements.  Raises :class:`NoCodeFound` otherwise.
    """
    blocks = _FENCE_RE.findall(response)
    if blocks:
        return blocks[-1].strip("\n")

    lines = response.split("\n")
    best: tuple[int, int] | None = None  # (start, length)
    run_start: int | None = None
    for i, line in enumerate(lines + [""]):
        ok = _parses_as_calls(line)
        if ok and run_start is None:
            run_start = i
        elif not ok and run_start is not None:
            length = i - run_start
            if best is None or length > best[1]:
                best = (run_start, length)
            run_start = None
    if best is None:
        raise NoCodeFound("the response contains no fenced code block and no call-like lines")
    start, length = best
    return "\n".join(lines[start : start + length])


def _parses_as_calls(line: str) -> bool:
    if not line.strip():
        return False
    try:
        parse_script(line)
    except ScriptParseError:
        return False
    return True
