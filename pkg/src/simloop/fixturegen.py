"""Build deterministic replay fixtures by recording scripted responders.

A responder is a plain callable that plays the model's part.  Wrapping one
in a :class:`RecordingProvider` and running the normal evaluation path
yields a replay file keyed by prompt digest, so the same evaluation can be
re-run later with no responder at all.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

from .evaluation import SchemeConfig, TaskSpec, run_evaluation
from .knowledge_base import KnowledgeBase
from .llm import ChatMessage, ReplayEntry, format_replay_text, message_digest
from .parser import Cell, pretty_print
from .prompts import MARK_REQUEST

Responder = Callable[[Sequence[ChatMessage]], str]


class RecordingProvider:
    """Chat provider that answers via ``responder`` and records every pair.

    Entries are keyed by message digest and deduplicated, so the recorded
    file replays identically regardless of task order or repetition.
    """

    def __init__(self, responder: Responder) -> None:
        self.responder = responder
        self.entries: list[ReplayEntry] = []
        self._seen: set[str] = set()

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        text = self.responder(messages)
        key = message_digest(messages)
        if key not in self._seen:
            self._seen.add(key)
            self.entries.append(ReplayEntry(key, text))
        return text

    def session(self) -> "RecordingProvider":
        return self


def is_planner_prompt(messages: Sequence[ChatMessage]) -> bool:
    """Planner prompts carry the sub-request line format; generation
    prompts carry the request section marker instead."""
    content = messages[-1].content
    return MARK_REQUEST not in content and "SUBREQUEST:" in content


def find_task(messages: Sequence[ChatMessage], tasks: Sequence[TaskSpec]) -> TaskSpec:
    """Locate the task whose request text appears in the prompt."""
    joined = "\n".join(message.content for message in messages)
    hits = [task for task in tasks if task.request in joined]
    if not hits:
        raise LookupError("no task request found in prompt")
    if len(hits) > 1:
        raise LookupError(f"ambiguous prompt matches tasks {[t.id for t in hits]}")
    return hits[0]


def _plan_lines(task: TaskSpec) -> str:
    lines = []
    seen: set[str] = set()
    for call in task.expected.calls:
        if call.function not in seen:
            seen.add(call.function)
            lines.append(f"SUBREQUEST: carry out the {call.function} step ||| KEYWORD: {call.function}")
        for name, _ in call.options:
            if name not in seen:
                seen.add(name)
                lines.append(f"SUBREQUEST: configure {name} ||| KEYWORD: {name}")
    return "\n".join(lines)


def _fenced(code: str) -> str:
    return f"The script below carries out the request.\n\n```matlab\n{code}\n```\n"


def perfect_responder(tasks: Sequence[TaskSpec]) -> Responder:
    """Answers planner prompts with a per-step plan and generation prompts
    with the task's reference program, verbatim."""

    def respond(messages: Sequence[ChatMessage]) -> str:
        task = find_task(messages, tasks)
        if is_planner_prompt(messages):
            return _plan_lines(task)
        return _fenced(pretty_print(task.expected))

    return respond


def imperfect_responder(
    tasks: Sequence[TaskSpec],
    wrong_ids: Iterable[str],
    mode: str = "wrong_method",
) -> Responder:
    """Like :func:`perfect_responder`, but flawed on selected tasks.

    ``wrong_method`` swaps the first method cell entry for an unknown name
    and never backs down, so affected sessions burn every attempt.
    ``extra_call`` appends a harmless trailing plot, worth half credit.
    """
    if mode not in ("wrong_method", "extra_call"):
        raise ValueError(f"unknown mode {mode!r}")
    wrong = set(wrong_ids)

    def respond(messages: Sequence[ChatMessage]) -> str:
        task = find_task(messages, tasks)
        if is_planner_prompt(messages):
            return _plan_lines(task)
        code = pretty_print(task.expected)
        if task.id in wrong:
            if mode == "wrong_method":
                code = _swap_first_method(task, code)
            else:
                code = _append_plot(task, code)
        return _fenced(code)

    return respond


def _swap_first_method(task: TaskSpec, code: str) -> str:
    for call in task.expected.calls:
        for arg in call.positional_args:
            if isinstance(arg, Cell) and arg.items:
                return code.replace(f"'{arg.items[0]}'", "'XGB'", 1)
    return code


def _append_plot(task: TaskSpec, code: str) -> str:
    for call in task.expected.calls:
        if call.function == "generate_data" and call.assign_to:
            return f"{code}\nvisualize({call.assign_to}, {{'OLS'}});"
    return code


def record_evaluation(
    tasks: Sequence[TaskSpec],
    schemes: Sequence[SchemeConfig],
    kb: KnowledgeBase,
    responder: Responder,
) -> str:
    """Run every scheme against the responder and return the replay text."""
    provider = RecordingProvider(responder)
    for scheme in schemes:
        run_evaluation(tasks, scheme, kb, provider)
    return format_replay_text(provider.entries)
