"""Deterministic prompt assembly for system, user and feedback messages.

Every optional technique contributes its own marked section, so ablations
can be asserted by section-marker presence: enabling a flag only ever adds
sections.  The static texts live in template fixture files; everything
dynamic (syntax summaries, worked examples, retrieved context) is rendered
from the knowledge base.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .config import TechniqueConfig
from .knowledge_base import KnowledgeBase, KnowledgeChunk
from .retrieval import MATCHED_BY_KEYWORD, ContextBundle, RetrievalResult
from .templates import load_template
from .validation import GENERIC_FAILURE_MESSAGE, ErrorReport, degrade_report

MARK_ROLE = "## Role"
MARK_STEPS = "## Action steps"
MARK_SYNTAX = "## Toolbox syntax"
MARK_EXAMPLES = "## Worked examples"
MARK_REASONING = "## Reasoning style"
MARK_CONTRACT = "## Output contract"

MARK_REQUEST = "## Request"
MARK_CONTEXT = "## Retrieved context"
NO_CONTEXT_MARKER = "(no retrieved context)"

MARK_FB_CODE = "## Problematic code"
MARK_FB_ERROR = "## Error message"
MARK_FB_HINTS = "## Troubleshooting hints"
MARK_FB_CORRECTION = "## Correction request"
MARK_FB_MISTAKES = "## Common mistakes to avoid"
MARK_FB_HISTORY = "## Chat history"

SYSTEM_MARKERS = (MARK_ROLE, MARK_STEPS, MARK_SYNTAX, MARK_EXAMPLES, MARK_REASONING, MARK_CONTRACT)
FEEDBACK_MARKERS = (
    MARK_FB_CODE,
    MARK_FB_ERROR,
    MARK_FB_HINTS,
    MARK_FB_CORRECTION,
    MARK_FB_MISTAKES,
    MARK_FB_HISTORY,
)

SOURCE_LABELS = {"options_doc": "[OPTIONS]", "examples_doc": "[EXAMPLE]", "manual": "[MANUAL]"}

_SECTION_RE = re.compile(r"^<<<SECTION (\w+)>>>$", re.MULTILINE)

_MAX_WORKED_EXAMPLES = 3
_MAX_LISTED_OPTIONS = 8


def parse_sections(template_text: str) -> dict[str, str]:
    """Split a template file into named sections."""
    sections: dict[str, str] = {}
    matches = list(_SECTION_RE.finditer(template_text))
    for i, match in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(template_text)
        sections[match.group(1)] = template_text[match.end() : end].strip("\n")
    return sections


def _system_sections() -> dict[str, str]:
    return parse_sections(load_template("system_sections.txt"))


def _feedback_sections() -> dict[str, str]:
    return parse_sections(load_template("feedback_sections.txt"))


@dataclass(frozen=True, slots=True)
class AttemptDigest:
    """One-line summary of a prior attempt for the feedback history."""

    attempt_no: int
    line: str


# ===========================================================================
# System prompt
# ===========================================================================


def assemble_system_prompt(config: TechniqueConfig, kb: KnowledgeBase) -> str:
    """Build the system prompt for the given technique configuration.

    The full role section and the six action steps ride on ``role_prompt``;
    syntax, worked examples and the reasoning instruction each hang off
    their own flag.  The output contract is always present, because the
    pipeline cannot extract code without it.
    """
    sections = _system_sections()
    parts: list[str] = []
    if config.role_prompt:
        parts.append(sections["role"])
        parts.append(sections["steps"])
    else:
        parts.append(sections["role_minimal"])
    if config.syntax_in_role:
        parts.append(f"{sections['syntax_header']}\n{_syntax_summary(kb)}")
    if config.few_shot_examples:
        parts.append(f"{sections['examples_header']}\n{_worked_examples(kb)}")
    if config.chain_of_thought:
        parts.append(sections["reasoning"])
    parts.append(sections["contract"])
    return "\n\n".join(parts)


def _syntax_summary(kb: KnowledgeBase) -> str:
    lines: list[str] = []
    for func in kb.functions:
        params = ", ".join(p.name for p in func.positional_params)
        line = f"{func.name}({params}) - {func.description}"
        if func.accepted_options:
            listed = func.accepted_options[:_MAX_LISTED_OPTIONS]
            suffix = "" if len(func.accepted_options) <= _MAX_LISTED_OPTIONS else ", ..."
            line += f" Options: {', '.join(listed)}{suffix}"
        lines.append(line)
    if kb.methods:
        lines.append(f"Methods: {', '.join(kb.methods)}")
    if kb.cases:
        lines.append(f"Cases: {', '.join(kb.cases)}")
    lines.append(
        "Statements look like: result = function('positional', 'option.name', value); "
        "options are quoted names followed by their value."
    )
    return "\n".join(lines)


def _worked_examples(kb: KnowledgeBase) -> str:
    blocks: list[str] = []
    for example in kb.examples[:_MAX_WORKED_EXAMPLES]:
        blocks.append(f"Request: {example.description}\n```matlab\n{example.code}\n```")
    if not blocks:
        return "(no examples available)"
    return "\n\n".join(blocks)


# ===========================================================================
# User prompt
# ===========================================================================


def assemble_user_prompt(
    request: str,
    bundle: ContextBundle,
    kb: KnowledgeBase,
    config: TechniqueConfig,
) -> str:
    """Request verbatim plus retrieved context, grouped in plan order.

    Context is capped at ``config.context_char_budget`` characters by
    dropping the lowest-scored vector results first; keyword-tagged results
    are never dropped.
    """
    parts = [f"{MARK_REQUEST}\n{request}", MARK_CONTEXT]
    if not bundle.groups:
        parts.append(NO_CONTEXT_MARKER)
        return "\n\n".join(parts)

    chunk_by_id = {c.id: c for c in kb.chunks}
    kept = _within_budget(bundle, chunk_by_id, config.context_char_budget)
    for gi, group in enumerate(bundle.groups):
        keyword = f" (keyword: {group.keyword})" if group.keyword else ""
        lines = [f"### Sub-request: {group.sub_request_text}{keyword}"]
        for ri, result in enumerate(group.results):
            if (gi, ri) in kept:
                lines.append(_render_result(result, chunk_by_id))
        parts.append("\n\n".join(lines))
    return "\n\n".join(parts)


def _render_result(result: RetrievalResult, chunk_by_id: dict[str, KnowledgeChunk]) -> str:
    chunk = chunk_by_id[result.chunk_id]
    return f"{SOURCE_LABELS[chunk.source]} {chunk.text}"


def _within_budget(
    bundle: ContextBundle, chunk_by_id: dict[str, KnowledgeChunk], budget: int
) -> set[tuple[int, int]]:
    sized: list[tuple[int, int, RetrievalResult, int]] = []
    for gi, group in enumerate(bundle.groups):
        for ri, result in enumerate(group.results):
            sized.append((gi, ri, result, len(_render_result(result, chunk_by_id))))

    total = sum(size for *_rest, size in sized)
    kept = {(gi, ri) for gi, ri, _r, _s in sized}
    if total <= budget:
        return kept

    droppable = [
        (result.score, -gi, -ri, gi, ri, size)
        for gi, ri, result, size in sized
        if result.matched_by != MATCHED_BY_KEYWORD
    ]
    droppable.sort()
    for _score, _ngi, _nri, gi, ri, size in droppable:
        if total <= budget:
            break
        kept.discard((gi, ri))
        total -= size
    return kept


# ===========================================================================
# Feedback prompt
# ===========================================================================


def assemble_feedback_prompt(
    report: ErrorReport,
    history: Sequence[AttemptDigest],
    config: TechniqueConfig,
) -> str:
    """Six-part repair prompt built from the previous attempt's report.

    With ``error_reporting`` disabled the report is degraded first: the
    error section collapses to a generic failure line and the hints section
    disappears entirely.
    """
    detailed = config.error_reporting
    if not detailed:
        report = degrade_report(report)

    parts = [f"{MARK_FB_CODE}\n```matlab\n{report.problematic_code}\n```"]

    if detailed:
        error_lines = []
        for issue in report.issues:
            where = f"call {issue.call_index + 1}"
            if issue.option_name:
                where += f", option '{issue.option_name}'"
            error_lines.append(f"- [{issue.kind}] {where}: {issue.message}")
        parts.append(f"{MARK_FB_ERROR} (stage: {report.stage})\n" + "\n".join(error_lines))
        hint_lines = []
        for issue in report.issues:
            if issue.hint:
                hint_lines.append(f"- {issue.hint}")
            if issue.suggestion:
                hint_lines.append(f"- consider '{issue.suggestion}'")
        if hint_lines:
            parts.append(f"{MARK_FB_HINTS}\n" + "\n".join(hint_lines))
    else:
        parts.append(f"{MARK_FB_ERROR}\n{GENERIC_FAILURE_MESSAGE}")

    sections = _feedback_sections()
    parts.append(sections["correction"])
    parts.append(sections["mistakes"])

    history_lines = [f"attempt {d.attempt_no}: {d.line}" for d in history]
    if not history_lines:
        history_lines = ["(no prior attempts)"]
    parts.append(f"{MARK_FB_HISTORY}\n" + "\n".join(history_lines))
    return "\n\n".join(parts)
