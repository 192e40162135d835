"""Exception types shared across the simloop package."""

from __future__ import annotations


class SimloopError(Exception):
    """Base class for all errors raised by this package."""


# ---------------------------------------------------------------------------
# Knowledge base
# ---------------------------------------------------------------------------


class MalformedRecord(SimloopError):
    """A registry line could not be parsed."""

    def __init__(self, line_no: int, reason: str) -> None:
        super().__init__(f"registry line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class MalformedBlock(SimloopError):
    """An example block is structurally broken (missing header fields, etc.)."""

    def __init__(self, block_id: str, reason: str) -> None:
        super().__init__(f"example block {block_id!r}: {reason}")
        self.block_id = block_id
        self.reason = reason


class UnparseableExample(SimloopError):
    """An example block's code section does not parse."""

    def __init__(self, block_id: str, reason: str) -> None:
        super().__init__(f"example block {block_id!r} has unparseable code: {reason}")
        self.block_id = block_id
        self.reason = reason


class InvalidParams(SimloopError):
    """Chunking was called with a nonsensical size/overlap combination."""


class DanglingReference(SimloopError):
    """An option/function cross-reference points at a name that does not exist."""

    def __init__(self, name: str, referenced_by: str) -> None:
        super().__init__(f"{referenced_by} references unknown name {name!r}")
        self.name = name
        self.referenced_by = referenced_by


# ---------------------------------------------------------------------------
# Retrieval
# ---------------------------------------------------------------------------


class EmptyIndex(SimloopError):
    """Retrieval was attempted against an index with no entries."""


class ProviderUnavailable(SimloopError):
    """A remote embedding endpoint could not be reached."""


# ---------------------------------------------------------------------------
# Planning
# ---------------------------------------------------------------------------


class NoPlanLines(SimloopError):
    """A planner response contained no parseable sub-request lines."""


# ---------------------------------------------------------------------------
# LLM client
# ---------------------------------------------------------------------------


class ProviderError(SimloopError):
    """A chat provider failed to produce a completion.

    ``transient`` distinguishes retryable transport trouble from fatal
    configuration or protocol problems.
    """

    def __init__(self, detail: str, *, transient: bool) -> None:
        super().__init__(detail)
        self.detail = detail
        self.transient = transient


class ReplayExhausted(ProviderError):
    """The replay file has no entry for a prompt and no fallback left."""

    def __init__(self, detail: str) -> None:
        super().__init__(detail, transient=False)


# ---------------------------------------------------------------------------
# Script handling
# ---------------------------------------------------------------------------


class NoCodeFound(SimloopError):
    """A chat response contained neither a fenced block nor call-like lines."""


class ScriptParseError(SimloopError):
    """A script violates the call grammar."""

    def __init__(self, line: int, column: int, expected: str) -> None:
        super().__init__(f"line {line}, column {column}: expected {expected}")
        self.line = line
        self.column = column
        self.expected = expected
