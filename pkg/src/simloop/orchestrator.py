"""Session orchestration: plan, retrieve, generate, check, execute, repair.

One session serves one request.  Planning and retrieval happen once;
generation and repair iterate up to the attempt budget, feeding each
failure report back to the model as a structured correction prompt.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

from .config import TechniqueConfig
from .errors import NoCodeFound, ProviderError, ScriptParseError
from .executor import ExecutionOutcome, execute
from .knowledge_base import KnowledgeBase
from .llm import ChatMessage, ChatProvider, complete
from .parser import extract_code, parse_script
from .prompts import (
    AttemptDigest,
    assemble_feedback_prompt,
    assemble_system_prompt,
    assemble_user_prompt,
)
from .query_planner import QueryPlan, degenerate_plan, plan as build_plan
from .retrieval import ContextBundle, VectorIndex, retrieve_planned
from .validation import (
    CorrectionFix,
    ErrorReport,
    autocorrect,
    build_validation_report,
    report_from_parse_error,
    report_no_code,
    validate,
)

OUTCOME_SUCCESS = "success"
OUTCOME_PARSE_FAIL = "parse_fail"
OUTCOME_VALIDATE_FAIL = "validate_fail"
OUTCOME_EXECUTE_FAIL = "execute_fail"
OUTCOME_NO_CODE = "no_code"
OUTCOME_PROVIDER_FAIL = "provider_fail"

FINAL_SUCCESS = "success"
FINAL_EXHAUSTED = "exhausted"


@dataclass(slots=True)
class AttemptRecord:
    attempt_no: int
    code: str
    fixes_applied: tuple[CorrectionFix, ...]
    outcome: str
    report: ErrorReport | None
    messages: tuple[ChatMessage, ...] = ()
    response_text: str = ""
    execution: ExecutionOutcome | None = None


@dataclass(slots=True)
class SessionTranscript:
    request: str
    plan: QueryPlan
    context: ContextBundle
    attempts: list[AttemptRecord] = field(default_factory=list)
    final_status: str = FINAL_EXHAUSTED
    llm_calls: int = 0
    diagnostics: list[str] = field(default_factory=list)


class _CountingSession:
    """Wraps a provider session and counts completion calls."""

    def __init__(self, inner: ChatProvider) -> None:
        self.inner = inner
        self.calls = 0

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        self.calls += 1
        return self.inner.complete(messages)

    def session(self) -> "_CountingSession":
        return self


def run_session(
    request: str,
    config: TechniqueConfig,
    kb: KnowledgeBase,
    index: VectorIndex | None,
    provider: ChatProvider,
) -> SessionTranscript:
    """Run one full request session and return its transcript.

    ``index=None`` means retrieval is switched off entirely; the session
    then also skips the planning call, since there is nothing to retrieve.
    Total LLM calls stay within ``n_max + 1`` (one optional planning call
    plus one call per attempt).
    """
    session = _CountingSession(provider.session())
    diagnostics: list[str] = []

    if index is None:
        query_plan = degenerate_plan(request)
        bundle = ContextBundle(())
    else:
        query_plan = build_plan(request, session, config, diagnostics)
        bundle = retrieve_planned(index, query_plan, config.top_k)

    transcript = SessionTranscript(request, query_plan, bundle, diagnostics=diagnostics)
    system_text = assemble_system_prompt(config, kb)
    user_text = assemble_user_prompt(request, bundle, kb, config)
    base_messages = [ChatMessage("system", system_text), ChatMessage("user", user_text)]

    for attempt_no in range(1, config.effective_attempts + 1):
        messages = list(base_messages)
        previous = transcript.attempts[-1] if transcript.attempts else None
        if previous is not None and previous.report is not None:
            history = _history(transcript.attempts, detailed=config.error_reporting)
            feedback = assemble_feedback_prompt(previous.report, history, config)
            messages.append(ChatMessage("user", feedback))

        record = _run_attempt(attempt_no, messages, config, kb, session, diagnostics)
        transcript.attempts.append(record)
        if record.outcome == OUTCOME_SUCCESS:
            transcript.final_status = FINAL_SUCCESS
            break
        if record.outcome == OUTCOME_PROVIDER_FAIL:
            break

    transcript.llm_calls = session.calls
    return transcript


def _run_attempt(
    attempt_no: int,
    messages: list[ChatMessage],
    config: TechniqueConfig,
    kb: KnowledgeBase,
    session: _CountingSession,
    diagnostics: list[str],
) -> AttemptRecord:
    frozen = tuple(messages)
    try:
        response = complete(messages, session)
    except ProviderError as exc:
        diagnostics.append(f"attempt {attempt_no}: provider failure: {exc}")
        return AttemptRecord(attempt_no, "", (), OUTCOME_PROVIDER_FAIL, None, frozen)

    try:
        code = extract_code(response)
    except NoCodeFound:
        report = report_no_code(response)
        return AttemptRecord(attempt_no, "", (), OUTCOME_NO_CODE, report, frozen, response)

    try:
        ast = parse_script(code)
    except ScriptParseError as exc:
        report = report_from_parse_error(code, exc)
        return AttemptRecord(attempt_no, code, (), OUTCOME_PARSE_FAIL, report, frozen, response)

    fixes: tuple[CorrectionFix, ...] = ()
    if config.syntax_checking:
        ast, fix_list = autocorrect(ast, kb)
        fixes = tuple(fix_list)
        issues = validate(ast, kb)
        if issues:
            report = build_validation_report(code, issues)
            return AttemptRecord(
                attempt_no, code, fixes, OUTCOME_VALIDATE_FAIL, report, frozen, response
            )

    outcome = execute(ast, kb)
    if outcome.status != "success":
        return AttemptRecord(
            attempt_no, code, fixes, OUTCOME_EXECUTE_FAIL, outcome.error, frozen, response, outcome
        )
    return AttemptRecord(attempt_no, code, fixes, OUTCOME_SUCCESS, None, frozen, response, outcome)


def _history(attempts: Sequence[AttemptRecord], *, detailed: bool) -> list[AttemptDigest]:
    # with error reporting ablated the history must not leak diagnostics either
    digests = []
    for attempt in attempts:
        if detailed and attempt.report is not None:
            first = attempt.report.issues[0]
            line = f"{attempt.outcome} ({first.kind}): {first.message[:100]}"
        else:
            line = attempt.outcome
        digests.append(AttemptDigest(attempt.attempt_no, line))
    return digests


# ===========================================================================
# Transcript serialization
# ===========================================================================


def report_to_dict(report: ErrorReport | None) -> dict | None:
    if report is None:
        return None
    return {
        "problematic_code": report.problematic_code,
        "stage": report.stage,
        "issues": [
            {
                "kind": i.kind,
                "call_index": i.call_index,
                "option_name": i.option_name,
                "message": i.message,
                "hint": i.hint,
                "suggestion": i.suggestion,
            }
            for i in report.issues
        ],
    }


def transcript_to_dict(transcript: SessionTranscript) -> dict:
    return {
        "request": transcript.request,
        "plan": {
            "degenerate": transcript.plan.degenerate,
            "sub_queries": [
                {"sub_request_text": s.sub_request_text, "keyword": s.keyword}
                for s in transcript.plan.sub_queries
            ],
        },
        "context": [
            {
                "sub_request_text": g.sub_request_text,
                "keyword": g.keyword,
                "results": [
                    {"chunk_id": r.chunk_id, "score": r.score, "matched_by": r.matched_by}
                    for r in g.results
                ],
            }
            for g in transcript.context.groups
        ],
        "attempts": [
            {
                "attempt_no": a.attempt_no,
                "outcome": a.outcome,
                "code": a.code,
                "fixes": [
                    {
                        "rule": f.rule,
                        "call_index": f.call_index,
                        "place": f.place,
                        "before": f.before,
                        "after": f.after,
                    }
                    for f in a.fixes_applied
                ],
                "messages": [{"role": m.role, "content": m.content} for m in a.messages],
                "response": a.response_text,
                "report": report_to_dict(a.report),
            }
            for a in transcript.attempts
        ],
        "final_status": transcript.final_status,
        "llm_calls": transcript.llm_calls,
        "diagnostics": list(transcript.diagnostics),
    }


def save_transcript(transcript: SessionTranscript, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(transcript_to_dict(transcript), handle, indent=2, sort_keys=False)
        handle.write("\n")
