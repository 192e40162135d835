"""Knowledge base: option registry, example library, manual chunks.

The knowledge base is the single source of truth for retrieval and
validation.  It is assembled once from three text sources and treated as
immutable afterwards:

* an option registry (``name :: default :: explanation :: functions`` lines),
* an example library (``=== EXAMPLE id ===`` blocks),
* a free-text manual, sliced into overlapping chunks.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .errors import (
    DanglingReference,
    InvalidParams,
    MalformedBlock,
    MalformedRecord,
    ScriptParseError,
    UnparseableExample,
)
from .parser import (
    Cell,
    Flag,
    Logspace,
    Number,
    Str,
    Value,
    Vector,
    format_value,
    is_option_name,
    parse_script,
    parse_value_literal,
)

VALUE_KINDS = ("number", "string", "cell-of-strings", "numeric-vector", "boolean-flag")

SOURCE_OPTIONS = "options_doc"
SOURCE_EXAMPLES = "examples_doc"
SOURCE_MANUAL = "manual"

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_EXAMPLE_HEADER_RE = re.compile(r"^=== EXAMPLE (.+?) ===\s*$")


def kind_of_value(value: Value) -> str:
    """Map a parsed value literal onto its declared kind name."""
    if isinstance(value, Number):
        return "number"
    if isinstance(value, Str):
        return "string"
    if isinstance(value, Cell):
        return "cell-of-strings"
    if isinstance(value, (Vector, Logspace)):
        return "numeric-vector"
    if isinstance(value, Flag):
        return "boolean-flag"
    raise TypeError(f"not a value literal: {value!r}")


# ===========================================================================
# Data model
# ===========================================================================


@dataclass(frozen=True, slots=True)
class OptionSpec:
    """One tunable option of the emulated toolbox."""

    name: str
    default_value: Value
    explanation: str
    associated_functions: tuple[str, ...]

    @property
    def value_kind(self) -> str:
        return kind_of_value(self.default_value)


@dataclass(frozen=True, slots=True)
class PositionalParam:
    """A positional parameter of a toolbox function.

    ``kind`` extends the option value kinds with ``reference`` for arguments
    that name a previously assigned variable.  ``domain`` restricts string
    or cell content to a vocabulary (``case`` or ``method``) or states what
    a reference must point at.
    """

    name: str
    kind: str
    required: bool = True
    domain: str | None = None


@dataclass(frozen=True, slots=True)
class FunctionSpec:
    name: str
    positional_params: tuple[PositionalParam, ...]
    accepted_options: tuple[str, ...]
    description: str


@dataclass(frozen=True, slots=True)
class ExampleSnippet:
    id: str
    keywords: tuple[str, ...]
    description: str
    code: str


@dataclass(frozen=True, slots=True)
class KnowledgeChunk:
    id: str
    source: str
    keywords: tuple[str, ...]
    text: str


@dataclass(frozen=True)
class KnowledgeBase:
    """Immutable bundle of everything the assistant may know.

    ``methods`` and ``cases`` carry the recognised linearization methods and
    grid case names; the validator checks string arguments against them.
    """

    options: tuple[OptionSpec, ...]
    functions: tuple[FunctionSpec, ...]
    examples: tuple[ExampleSnippet, ...]
    chunks: tuple[KnowledgeChunk, ...]
    methods: tuple[str, ...] = ()
    cases: tuple[str, ...] = ()

    option_by_name: dict[str, OptionSpec] = field(init=False, repr=False, compare=False)
    function_by_name: dict[str, FunctionSpec] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "option_by_name", {o.name: o for o in self.options})
        object.__setattr__(self, "function_by_name", {f.name: f for f in self.functions})


# ===========================================================================
# Option registry
# ===========================================================================


def parse_option_registry(text: str) -> list[OptionSpec]:
    """Parse registry lines into specs, preserving file order.

    Lines are ``name :: default :: explanation :: func1,func2``.  Blank
    lines and ``#`` comments are skipped.  Any structural problem raises
    :class:`MalformedRecord` carrying the 1-based line number.
    """
    options: list[OptionSpec] = []
    seen: set[str] = set()
    for line_no, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(" :: ")
        if len(fields) != 4:
            raise MalformedRecord(line_no, f"expected 4 ' :: ' separated fields, found {len(fields)}")
        name, default_text, explanation, funcs_text = (f.strip() for f in fields)
        if not is_option_name(name):
            raise MalformedRecord(line_no, f"invalid option name {name!r}")
        if name in seen:
            raise MalformedRecord(line_no, f"duplicate option name {name!r}")
        try:
            default = parse_value_literal(default_text)
        except ScriptParseError as exc:
            raise MalformedRecord(line_no, f"bad default value {default_text!r}: {exc}") from exc
        if not explanation:
            raise MalformedRecord(line_no, "empty explanation")
        functions = tuple(f.strip() for f in funcs_text.split(",") if f.strip())
        if not functions:
            raise MalformedRecord(line_no, "no associated functions")
        for func in functions:
            if not _IDENT_RE.fullmatch(func):
                raise MalformedRecord(line_no, f"invalid function name {func!r}")
        seen.add(name)
        options.append(OptionSpec(name, default, explanation, functions))
    return options


def serialize_option_registry(options: list[OptionSpec]) -> str:
    """Render specs back into registry lines; inverse of the parser."""
    lines = []
    for opt in options:
        funcs = ",".join(opt.associated_functions)
        lines.append(f"{opt.name} :: {format_value(opt.default_value)} :: {opt.explanation} :: {funcs}")
    return "\n".join(lines) + "\n"


# ===========================================================================
# Example library
# ===========================================================================


def parse_example_library(text: str) -> list[ExampleSnippet]:
    """Parse ``=== EXAMPLE id ===`` blocks into snippets.

    Each block holds a ``KEYWORDS:`` line (semicolon-separated), a
    ``DESCRIPTION:`` section and a ``CODE:`` section running to the next
    block or end of file.  The code must parse under the call grammar.
    """
    snippets: list[ExampleSnippet] = []
    seen: set[str] = set()
    blocks = _split_example_blocks(text)
    for block_id, lines in blocks:
        if block_id in seen:
            raise MalformedBlock(block_id, "duplicate example id")
        seen.add(block_id)
        snippets.append(_parse_example_block(block_id, lines))
    return snippets


def _split_example_blocks(text: str) -> list[tuple[str, list[str]]]:
    blocks: list[tuple[str, list[str]]] = []
    current: list[str] | None = None
    for raw in text.split("\n"):
        header = _EXAMPLE_HEADER_RE.match(raw)
        if header:
            block_id = header.group(1).strip()
            if not block_id:
                raise MalformedBlock("", "empty example id")
            current = []
            blocks.append((block_id, current))
        elif current is not None:
            current.append(raw)
        elif raw.strip():
            raise MalformedBlock("", f"text outside any example block: {raw.strip()!r}")
    return blocks


def _parse_example_block(block_id: str, lines: list[str]) -> ExampleSnippet:
    keywords: tuple[str, ...] | None = None
    description: list[str] = []
    code: list[str] = []
    section = None
    for raw in lines:
        stripped = raw.strip()
        if stripped.startswith("KEYWORDS:"):
            raw_keywords = [k.strip().lower() for k in stripped[len("KEYWORDS:") :].split(";")]
            deduped: list[str] = []
            for k in raw_keywords:
                if k and k not in deduped:
                    deduped.append(k)
            keywords = tuple(deduped)
        elif stripped.startswith("DESCRIPTION:"):
            section = description
            rest = stripped[len("DESCRIPTION:") :].strip()
            if rest:
                section.append(rest)
        elif stripped.startswith("CODE:"):
            section = code
            rest = stripped[len("CODE:") :].strip()
            if rest:
                section.append(rest)
        elif section is not None:
            section.append(raw)
    if keywords is None or not keywords:
        raise MalformedBlock(block_id, "missing or empty KEYWORDS line")
    if not any(line.strip() for line in description):
        raise MalformedBlock(block_id, "missing DESCRIPTION section")
    code_text = "\n".join(code).strip("\n")
    if not code_text.strip():
        raise MalformedBlock(block_id, "missing CODE section")
    try:
        parse_script(code_text)
    except ScriptParseError as exc:
        raise UnparseableExample(block_id, str(exc)) from exc
    return ExampleSnippet(block_id, keywords, "\n".join(description).strip(), code_text)


# ===========================================================================
# Manual chunking
# ===========================================================================


def chunk_manual(text: str, chunk_chars: int, overlap_chars: int) -> list[str]:
    """Slice manual prose into overlapping windows.

    Windows advance by ``chunk_chars - overlap_chars``; when a paragraph
    break (``\\n\\n``) falls within 15% of the target window end, the window
    snaps to the break closest to the target instead.  Empty text yields no
    chunks.
    """
    if chunk_chars <= 0:
        raise InvalidParams(f"chunk_chars must be positive, got {chunk_chars}")
    if overlap_chars < 0 or overlap_chars >= chunk_chars:
        raise InvalidParams(f"overlap_chars must be in [0, chunk_chars), got {overlap_chars}")
    if not text:
        return []

    boundaries = [m.end() for m in re.finditer(r"\n\n", text)]
    chunks: list[str] = []
    start = 0
    n = len(text)
    while True:
        target = start + chunk_chars
        end = min(target, n)
        if end < n:
            snapped = _nearest_boundary(boundaries, start, target, chunk_chars, overlap_chars)
            if snapped is not None:
                end = snapped
        chunks.append(text[start:end])
        if end >= n:
            return chunks
        start = end - overlap_chars


def _nearest_boundary(
    boundaries: list[int], start: int, target: int, chunk_chars: int, overlap_chars: int
) -> int | None:
    slack = math.floor(0.15 * chunk_chars)
    lo = max(target - slack, start + overlap_chars + 1)
    hi = target + slack
    candidates = [b for b in boundaries if lo <= b <= hi]
    if not candidates:
        return None
    return min(candidates, key=lambda b: (abs(b - target), b))


# ===========================================================================
# Assembly
# ===========================================================================


def build_knowledge_base(
    options: list[OptionSpec],
    functions: list[FunctionSpec],
    examples: list[ExampleSnippet],
    manual_chunks: list[str],
    methods: tuple[str, ...] = (),
    cases: tuple[str, ...] = (),
) -> KnowledgeBase:
    """Cross-link the sources and synthesize one chunk per knowledge item.

    Every option and every example becomes exactly one chunk, followed by
    one chunk per manual slice.  Option/function cross-references must
    close; a broken link raises :class:`DanglingReference`.
    """
    function_names = {f.name for f in functions}
    option_names = {o.name for o in options}
    if len(function_names) != len(functions):
        raise ValueError("duplicate function names")
    if len(option_names) != len(options):
        raise ValueError("duplicate option names")

    for opt in options:
        for func in opt.associated_functions:
            if func not in function_names:
                raise DanglingReference(func, f"option {opt.name!r}")
    for func in functions:
        for opt_name in func.accepted_options:
            if opt_name not in option_names:
                raise DanglingReference(opt_name, f"function {func.name!r}")

    # Fold the registry's associations into each function's accepted set so
    # either side may declare the link.
    accepted: dict[str, list[str]] = {f.name: list(f.accepted_options) for f in functions}
    for opt in options:
        for func in opt.associated_functions:
            if opt.name not in accepted[func]:
                accepted[func].append(opt.name)
    linked_functions = tuple(
        FunctionSpec(f.name, f.positional_params, tuple(accepted[f.name]), f.description)
        for f in functions
    )

    chunks: list[KnowledgeChunk] = []
    for opt in options:
        text = (
            f"Option '{opt.name}' (default: {format_value(opt.default_value)}, "
            f"kind: {opt.value_kind}). {opt.explanation} "
            f"Applies to: {', '.join(opt.associated_functions)}."
        )
        chunks.append(
            KnowledgeChunk(
                id=f"opt:{opt.name}",
                source=SOURCE_OPTIONS,
                keywords=(opt.name, *opt.associated_functions),
                text=text,
            )
        )
    for ex in examples:
        chunks.append(
            KnowledgeChunk(
                id=f"ex:{ex.id}",
                source=SOURCE_EXAMPLES,
                keywords=ex.keywords,
                text=f"{ex.description}\n{ex.code}",
            )
        )
    for i, chunk_text in enumerate(manual_chunks):
        chunks.append(
            KnowledgeChunk(id=f"man:{i:04d}", source=SOURCE_MANUAL, keywords=(), text=chunk_text)
        )

    ids = [c.id for c in chunks]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate chunk ids")

    return KnowledgeBase(
        options=tuple(options),
        functions=linked_functions,
        examples=tuple(examples),
        chunks=tuple(chunks),
        methods=methods,
        cases=cases,
    )


# ===========================================================================
# Serialization (for ``simloop kb-build`` artifacts)
# ===========================================================================


def kb_to_dict(kb: KnowledgeBase) -> dict:
    return {
        "options": [
            {
                "name": o.name,
                "default": format_value(o.default_value),
                "explanation": o.explanation,
                "functions": list(o.associated_functions),
            }
            for o in kb.options
        ],
        "functions": [
            {
                "name": f.name,
                "params": [
                    {"name": p.name, "kind": p.kind, "required": p.required, "domain": p.domain}
                    for p in f.positional_params
                ],
                "accepted_options": list(f.accepted_options),
                "description": f.description,
            }
            for f in kb.functions
        ],
        "examples": [
            {"id": e.id, "keywords": list(e.keywords), "description": e.description, "code": e.code}
            for e in kb.examples
        ],
        "chunks": [
            {"id": c.id, "source": c.source, "keywords": list(c.keywords), "text": c.text}
            for c in kb.chunks
        ],
        "methods": list(kb.methods),
        "cases": list(kb.cases),
    }


def kb_from_dict(data: dict) -> KnowledgeBase:
    return KnowledgeBase(
        options=tuple(
            OptionSpec(
                o["name"],
                parse_value_literal(o["default"]),
                o["explanation"],
                tuple(o["functions"]),
            )
            for o in data["options"]
        ),
        functions=tuple(
            FunctionSpec(
                f["name"],
                tuple(
                    PositionalParam(p["name"], p["kind"], p["required"], p["domain"])
                    for p in f["params"]
                ),
                tuple(f["accepted_options"]),
                f["description"],
            )
            for f in data["functions"]
        ),
        examples=tuple(
            ExampleSnippet(e["id"], tuple(e["keywords"]), e["description"], e["code"])
            for e in data["examples"]
        ),
        chunks=tuple(
            KnowledgeChunk(c["id"], c["source"], tuple(c["keywords"]), c["text"])
            for c in data["chunks"]
        ),
        methods=tuple(data.get("methods", ())),
        cases=tuple(data.get("cases", ())),
    )
