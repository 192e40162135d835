"""Benchmark harness: task decks, technique schemes, scoring, reports.

Every task carries a reference program.  An attempt earns 1 point when its
execution trace realizes that program exactly, 0.5 when it realizes it with
harmless extra work, and 0 otherwise.  Attempts that never trigger (the
session stopped early) inherit the score of the last attempt that ran.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Callable, Sequence

from .config import FLAG_NAMES, TechniqueConfig
from .errors import ProviderError
from .executor import TraceEntry
from .knowledge_base import (
    SOURCE_EXAMPLES,
    SOURCE_MANUAL,
    SOURCE_OPTIONS,
    KnowledgeBase,
    KnowledgeChunk,
)
from .llm import ChatProvider, ProviderConfig
from .orchestrator import (
    OUTCOME_SUCCESS,
    AttemptRecord,
    SessionTranscript,
    run_session,
)
from .parser import (
    CallNode,
    Cell,
    Flag,
    Ident,
    Logspace,
    Number,
    ScriptAST,
    Str,
    Value,
    Vector,
    parse_script,
)
from .retrieval import VectorIndex, build_index
from .validation import validate

TASK_KINDS = ("normal", "complex")
RAG_MODES = ("enhanced", "standard", "none")

_TOGGLE_FUNCTIONS = frozenset({"pollute_data", "clean_data", "normalize_data"})

_TASK_HEADER_RE = re.compile(r"^=== TASK (\S+) ===$")
_SCHEME_HEADER_RE = re.compile(r"^=== SCHEME (\S+) ===$")


@dataclass(frozen=True, slots=True)
class TaskSpec:
    """One benchmark request plus the program it should produce."""

    id: str
    kind: str
    request: str
    expected: ScriptAST


@dataclass(frozen=True, slots=True)
class SchemeConfig:
    """A named technique combination plus its retrieval mode.

    ``provider`` is an optional per-scheme provider record; callers that
    pass an explicit provider to :func:`run_evaluation` override it.
    """

    name: str
    technique: TechniqueConfig
    rag_mode: str
    provider: ProviderConfig | None = None

    def __post_init__(self) -> None:
        if self.rag_mode not in RAG_MODES:
            raise ValueError(f"unknown rag_mode {self.rag_mode!r}")
        if self.rag_mode == "enhanced" and not self.technique.query_planning:
            raise ValueError(f"scheme {self.name!r}: enhanced retrieval requires query_planning")
        if self.rag_mode != "enhanced" and self.technique.query_planning:
            raise ValueError(f"scheme {self.name!r}: query_planning requires enhanced retrieval")
        if self.rag_mode != "none" and not (
            self.technique.rag_friendly_docs or self.technique.manual_in_kb
        ):
            raise ValueError(f"scheme {self.name!r}: retrieval is on but no document source is")


@dataclass(frozen=True, slots=True)
class TaskCard:
    """Per-task scores: one entry per attempt slot, already filled forward.

    ``triggered`` counts the attempts that actually ran; slots beyond it
    repeat the last real score.
    """

    task_id: str
    kind: str
    attempt_scores: tuple[float, ...]
    triggered: int
    final_status: str
    llm_calls: int
    diagnostics: tuple[str, ...] = ()

    @property
    def points(self) -> float:
        return sum(self.attempt_scores)


@dataclass(slots=True)
class EvalResult:
    scheme: SchemeConfig
    cards: list[TaskCard]
    transcripts: dict[str, SessionTranscript] = field(default_factory=dict)

    @property
    def points(self) -> float:
        return sum(card.points for card in self.cards)

    @property
    def max_points(self) -> float:
        return len(self.cards) * self.scheme.technique.n_max

    @property
    def accuracy(self) -> str:
        return accuracy_percent(self.points, len(self.cards), self.scheme.technique.n_max)

    @property
    def accuracy_by_class(self) -> dict[str, str]:
        """Accuracy split by task class; classes with no tasks are omitted."""
        split: dict[str, str] = {}
        for kind in TASK_KINDS:
            cards = [card for card in self.cards if card.kind == kind]
            if cards:
                points = sum(card.points for card in cards)
                split[kind] = accuracy_percent(points, len(cards), self.scheme.technique.n_max)
        return split


# ===========================================================================
# Fixture parsing
# ===========================================================================


def _split_blocks(text: str, header_re: re.Pattern[str]) -> list[tuple[str, list[str]]]:
    blocks: list[tuple[str, list[str]]] = []
    current: list[str] | None = None
    for line in text.splitlines():
        match = header_re.match(line.strip())
        if match:
            current = []
            blocks.append((match.group(1), current))
        elif current is not None:
            current.append(line)
        elif line.strip() and not line.lstrip().startswith("#"):
            raise ValueError(f"content before first block header: {line.strip()!r}")
    return blocks


def load_tasks(text: str, kb: KnowledgeBase) -> list[TaskSpec]:
    """Parse a task deck and check every reference program against ``kb``."""
    tasks: list[TaskSpec] = []
    seen: set[str] = set()
    for task_id, lines in _split_blocks(text, _TASK_HEADER_RE):
        if task_id in seen:
            raise ValueError(f"duplicate task id {task_id!r}")
        seen.add(task_id)
        kind, request, code = _parse_task_body(task_id, lines)
        try:
            expected = parse_script(code)
        except Exception as exc:
            raise ValueError(f"task {task_id}: reference program does not parse: {exc}") from exc
        issues = validate(expected, kb)
        if issues:
            first = issues[0]
            raise ValueError(f"task {task_id}: reference program invalid: {first.message}")
        tasks.append(TaskSpec(task_id, kind, request, expected))
    if not tasks:
        raise ValueError("task deck is empty")
    return tasks


def _parse_task_body(task_id: str, lines: list[str]) -> tuple[str, str, str]:
    kind = ""
    request_lines: list[str] = []
    code_lines: list[str] = []
    mode = "head"
    for line in lines:
        stripped = line.strip()
        if mode == "head":
            if stripped.startswith("KIND:"):
                kind = stripped[len("KIND:"):].strip()
            elif stripped.startswith("REQUEST:"):
                request_lines.append(stripped[len("REQUEST:"):].strip())
                mode = "request"
            elif stripped:
                raise ValueError(f"task {task_id}: unexpected line {stripped!r}")
        elif mode == "request":
            if stripped == "EXPECTED:":
                mode = "code"
            else:
                request_lines.append(line.rstrip())
        else:
            code_lines.append(line)
    if kind not in TASK_KINDS:
        raise ValueError(f"task {task_id}: kind must be one of {TASK_KINDS}, got {kind!r}")
    request = "\n".join(request_lines).strip()
    if not request:
        raise ValueError(f"task {task_id}: empty request")
    code = "\n".join(code_lines).strip()
    if not code:
        raise ValueError(f"task {task_id}: missing reference program")
    return kind, request, code


def load_schemes(text: str) -> list[SchemeConfig]:
    """Parse a scheme sheet: per scheme, a RAG mode and the flags it drops."""
    schemes: list[SchemeConfig] = []
    seen: set[str] = set()
    for name, lines in _split_blocks(text, _SCHEME_HEADER_RE):
        if name in seen:
            raise ValueError(f"duplicate scheme {name!r}")
        seen.add(name)
        rag_mode = ""
        off: list[str] = []
        for line in lines:
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("RAG:"):
                rag_mode = stripped[len("RAG:"):].strip()
            elif stripped.startswith("OFF:"):
                raw = stripped[len("OFF:"):].strip()
                if raw and raw != "none":
                    off = [part.strip() for part in raw.split(",") if part.strip()]
            else:
                raise ValueError(f"scheme {name}: unexpected line {stripped!r}")
        for flag in off:
            if flag not in FLAG_NAMES:
                raise ValueError(f"scheme {name}: unknown flag {flag!r}")
        technique = TechniqueConfig().with_flags(**{flag: False for flag in off})
        schemes.append(SchemeConfig(name, technique, rag_mode))
    if not schemes:
        raise ValueError("scheme sheet is empty")
    return schemes


def select_chunks(kb: KnowledgeBase, technique: TechniqueConfig) -> tuple[KnowledgeChunk, ...]:
    """Pick the retrievable chunks a technique combination allows."""
    keep_sources = set()
    if technique.rag_friendly_docs:
        keep_sources.update((SOURCE_OPTIONS, SOURCE_EXAMPLES))
    if technique.manual_in_kb:
        keep_sources.add(SOURCE_MANUAL)
    return tuple(chunk for chunk in kb.chunks if chunk.source in keep_sources)


def build_scheme_index(kb: KnowledgeBase, scheme: SchemeConfig) -> VectorIndex | None:
    if scheme.rag_mode == "none":
        return None
    return build_index(select_chunks(kb, scheme.technique))


# ===========================================================================
# Scoring
# ===========================================================================


def values_equal(left: Value, right: Value) -> bool:
    """Compare two literal values up to harmless representation changes.

    Flags compare equal to 0/1 numbers, log-spaced sweeps to their expanded
    vectors, and string cells ignore item order.
    """
    left = _expand(left)
    right = _expand(right)
    if isinstance(left, Flag) or isinstance(right, Flag):
        return _as_bool(left) is not None and _as_bool(left) == _as_bool(right)
    if isinstance(left, Number) and isinstance(right, Number):
        return _close(left.value, right.value)
    if isinstance(left, Str) and isinstance(right, Str):
        return left.value == right.value
    if isinstance(left, Cell) and isinstance(right, Cell):
        return sorted(left.items) == sorted(right.items)
    if isinstance(left, Vector) and isinstance(right, Vector):
        return len(left.values) == len(right.values) and all(
            _close(a, b) for a, b in zip(left.values, right.values)
        )
    return False


def _expand(value: Value) -> Value:
    if isinstance(value, Logspace):
        return Vector(value.expand())
    return value


def _as_bool(value: Value) -> bool | None:
    if isinstance(value, Flag):
        return value.value
    if isinstance(value, Number) and value.value in (0.0, 1.0):
        return bool(value.value)
    return None


def _close(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12)


def _last_wins(options: Sequence[tuple[str, Value]]) -> dict[str, Value]:
    return dict(options)


def _try_match(
    expected: CallNode, entry: TraceEntry, mapping: dict[str, str]
) -> dict[str, str] | None:
    if expected.function != entry.function:
        return None
    if len(expected.positional_args) != len(entry.positional):
        return None
    new_mapping = dict(mapping)
    for exp_arg, got_arg in zip(expected.positional_args, entry.positional):
        if isinstance(exp_arg, Ident):
            if not isinstance(got_arg, Ident):
                return None
            if not _bind(new_mapping, exp_arg.name, got_arg.name):
                return None
        else:
            if isinstance(got_arg, Ident) or not values_equal(exp_arg, got_arg):
                return None
    realized_opts = _last_wins(entry.options)
    for name, value in _last_wins(expected.options).items():
        if name not in realized_opts or not values_equal(value, realized_opts[name]):
            return None
    if expected.assign_to is not None:
        if entry.assign_to is None:
            return None
        if not _bind(new_mapping, expected.assign_to, entry.assign_to):
            return None
    return new_mapping


def _bind(mapping: dict[str, str], expected_name: str, realized_name: str) -> bool:
    if expected_name in mapping:
        return mapping[expected_name] == realized_name
    if realized_name in mapping.values():
        return False
    mapping[expected_name] = realized_name
    return True


def _realize(
    trace: Sequence[TraceEntry], expected_calls: Sequence[CallNode]
) -> tuple[list[int], dict[str, str]] | None:
    """Find expected calls as an ordered subsequence of the trace."""

    def recurse(
        exp_idx: int, trace_idx: int, mapping: dict[str, str], picked: list[int]
    ) -> tuple[list[int], dict[str, str]] | None:
        if exp_idx == len(expected_calls):
            return list(picked), mapping
        for j in range(trace_idx, len(trace)):
            new_mapping = _try_match(expected_calls[exp_idx], trace[j], mapping)
            if new_mapping is not None:
                picked.append(j)
                found = recurse(exp_idx + 1, j + 1, new_mapping, picked)
                if found is not None:
                    return found
                picked.pop()
        return None

    return recurse(0, 0, {}, [])


def _rebound_name(entry: TraceEntry) -> str | None:
    """Variable the call writes: its target, or the dataset it mutates."""
    if entry.assign_to is not None:
        return entry.assign_to
    if entry.function in _TOGGLE_FUNCTIONS and entry.positional:
        first = entry.positional[0]
        if isinstance(first, Ident):
            return first.name
    return None


def _alters_matched_work(trace: Sequence[TraceEntry], extra_idx: int, picked: list[int]) -> bool:
    name = _rebound_name(trace[extra_idx])
    if name is None:
        return False
    for matched_idx in picked:
        if matched_idx <= extra_idx:
            continue
        reads = any(
            isinstance(arg, Ident) and arg.name == name
            for arg in trace[matched_idx].positional
        )
        if not reads:
            continue
        shadowed = any(
            _rebound_name(trace[between]) == name
            for between in range(extra_idx + 1, matched_idx)
        )
        if not shadowed:
            return True
    return False


def score_attempt(attempt: AttemptRecord, expected: ScriptAST, kb: KnowledgeBase) -> float:
    """Score one attempt: 1 exact, 0.5 harmless surplus, 0 otherwise."""
    if attempt.outcome != OUTCOME_SUCCESS or attempt.execution is None:
        return 0.0
    trace = attempt.execution.trace
    found = _realize(trace, expected.calls)
    if found is None:
        return 0.0
    picked, _ = found
    picked_set = set(picked)
    extras = [j for j in range(len(trace)) if j not in picked_set]
    if extras:
        if any(_alters_matched_work(trace, j, picked) for j in extras):
            return 0.0
        return 0.5
    for exp_idx, trace_idx in enumerate(picked):
        expected_opts = _last_wins(expected.calls[exp_idx].options)
        for name, value in _last_wins(trace[trace_idx].options).items():
            if name in expected_opts:
                continue
            spec = kb.option_by_name.get(name)
            if spec is None or not values_equal(spec.default_value, value):
                return 0.5
    return 1.0


def fill_untriggered(scores: Sequence[float], n_max: int) -> list[float]:
    """Pad per-attempt scores to ``n_max`` by repeating the last one."""
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    if not scores:
        return [0.0] * n_max
    padded = list(scores[:n_max])
    while len(padded) < n_max:
        padded.append(padded[-1])
    return padded


def accuracy_percent(points: float, n_tasks: int, n_max: int) -> str:
    """Percentage of available points, two decimals, half-up."""
    if n_tasks < 1 or n_max < 1:
        raise ValueError("need at least one task and one attempt")
    half_units = round(points * 2)
    if not math.isclose(half_units / 2, points, abs_tol=1e-9):
        raise ValueError(f"points must be a multiple of 0.5, got {points}")
    value = Decimal(100) * Decimal(half_units) / (Decimal(2) * n_tasks * n_max)
    return str(value.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


# ===========================================================================
# Evaluation run
# ===========================================================================


def evaluate_task(
    task: TaskSpec,
    scheme: SchemeConfig,
    kb: KnowledgeBase,
    index: VectorIndex | None,
    provider: ChatProvider,
) -> tuple[TaskCard, SessionTranscript | None]:
    n_max = scheme.technique.n_max
    try:
        transcript = run_session(task.request, scheme.technique, kb, index, provider)
    except ProviderError as exc:
        card = TaskCard(
            task.id,
            task.kind,
            tuple([0.0] * n_max),
            0,
            "exhausted",
            0,
            (f"provider failure before any attempt: {exc}",),
        )
        return card, None
    scores = [score_attempt(attempt, task.expected, kb) for attempt in transcript.attempts]
    card = TaskCard(
        task.id,
        task.kind,
        tuple(fill_untriggered(scores, n_max)),
        len(transcript.attempts),
        transcript.final_status,
        transcript.llm_calls,
        tuple(transcript.diagnostics),
    )
    return card, transcript


def run_evaluation(
    tasks: Sequence[TaskSpec],
    scheme: SchemeConfig,
    kb: KnowledgeBase,
    provider: ChatProvider,
    *,
    jobs: int = 1,
    keep_transcripts: bool = False,
) -> EvalResult:
    """Run every task under one scheme; task order is preserved."""
    if jobs < 1:
        raise ValueError("jobs must be at least 1")
    index = build_scheme_index(kb, scheme)

    def worker(task: TaskSpec) -> tuple[TaskCard, SessionTranscript | None]:
        return evaluate_task(task, scheme, kb, index, provider)

    if jobs == 1:
        outcomes = [worker(task) for task in tasks]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(worker, tasks))

    result = EvalResult(scheme, [card for card, _ in outcomes])
    if keep_transcripts:
        for (card, transcript), task in zip(outcomes, tasks):
            if transcript is not None:
                result.transcripts[task.id] = transcript
    return result


# ===========================================================================
# Reports
# ===========================================================================


def _format_score(score: float) -> str:
    return f"{score:g}"


def render_csv(results: Sequence[EvalResult]) -> str:
    """One row per task per attempt slot, per scheme."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["scheme", "task_id", "class", "attempt", "score", "triggered"])
    for result in results:
        for card in result.cards:
            for attempt_no, score in enumerate(card.attempt_scores, start=1):
                writer.writerow(
                    [
                        result.scheme.name,
                        card.task_id,
                        card.kind,
                        attempt_no,
                        _format_score(score),
                        card.triggered,
                    ]
                )
    return buffer.getvalue()


def render_summary(results: Sequence[EvalResult]) -> str:
    lines = ["scheme,tasks,points,max_points,overall,normal,complex"]
    for result in results:
        by_class = result.accuracy_by_class
        lines.append(
            f"{result.scheme.name},{len(result.cards)},{_format_score(result.points)},"
            f"{_format_score(result.max_points)},{result.accuracy},"
            f"{by_class.get('normal', '-')},{by_class.get('complex', '-')}"
        )
    return "\n".join(lines) + "\n"


def results_to_dict(results: Sequence[EvalResult]) -> dict:
    return {
        "schemes": [
            {
                "name": result.scheme.name,
                "rag_mode": result.scheme.rag_mode,
                "accuracy": result.accuracy,
                "accuracy_by_class": result.accuracy_by_class,
                "points": result.points,
                "max_points": result.max_points,
                "tasks": [
                    {
                        "task_id": card.task_id,
                        "class": card.kind,
                        "attempts": list(card.attempt_scores),
                        "points": card.points,
                        "triggered": card.triggered,
                        "final_status": card.final_status,
                        "llm_calls": card.llm_calls,
                        "diagnostics": list(card.diagnostics),
                    }
                    for card in result.cards
                ],
            }
            for result in results
        ]
    }


def emit_report(results: Sequence[EvalResult], out_dir: str, *, basename: str = "results") -> dict:
    """Write CSV, summary, and JSON reports; returns the paths written.

    Output contains no timestamps or machine identifiers, so identical runs
    produce byte-identical files.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "csv": os.path.join(out_dir, f"{basename}.csv"),
        "summary": os.path.join(out_dir, f"{basename}_summary.txt"),
        "json": os.path.join(out_dir, f"{basename}.json"),
    }
    with open(paths["csv"], "w", encoding="utf-8", newline="") as handle:
        handle.write(render_csv(results))
    with open(paths["summary"], "w", encoding="utf-8") as handle:
        handle.write(render_summary(results))
    with open(paths["json"], "w", encoding="utf-8") as handle:
        json.dump(results_to_dict(results), handle, indent=2)
        handle.write("\n")
    return paths
