"""LLM-driven decomposition of a request into retrieval sub-queries.

The planner asks the chat model to split a request into sub-requests, each
tagged with one keyword (a function or option name).  Planning never sinks
the pipeline: any provider trouble or unparseable answer falls back to the
degenerate single-query plan, which makes retrieval behave exactly like
standard RAG.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Sequence

from .config import TechniqueConfig
from .errors import NoPlanLines, ProviderError
from .llm import ChatMessage, ChatProvider, complete
from .templates import load_template

logger = logging.getLogger(__name__)

PLAN_LINE_RE = re.compile(r"^\s*SUBREQUEST:\s*(.+?)\s*\|\|\|\s*KEYWORD:\s*(.*?)\s*$")


@dataclass(frozen=True, slots=True)
class SubQuery:
    sub_request_text: str
    keyword: str

    def __post_init__(self) -> None:
        if not self.sub_request_text.strip():
            raise ValueError("sub_request_text must be non-empty")
        if "\n" in self.keyword:
            raise ValueError("keyword must not contain newlines")


@dataclass(frozen=True, slots=True)
class QueryPlan:
    sub_queries: tuple[SubQuery, ...]
    degenerate: bool = False

    def __post_init__(self) -> None:
        if not self.sub_queries:
            raise ValueError("a plan needs at least one sub-query")
        if self.degenerate and len(self.sub_queries) != 1:
            raise ValueError("a degenerate plan holds exactly one sub-query")


def degenerate_plan(request: str) -> QueryPlan:
    """The whole request as a single untagged sub-query (standard RAG)."""
    return QueryPlan((SubQuery(request, ""),), degenerate=True)


def build_planner_prompt(request: str) -> str:
    """Render the planner instruction with the request spliced in verbatim.

    ``|||`` inside the request is escaped so it cannot masquerade as the
    line separator the parser looks for.
    """
    if not request.strip():
        raise ValueError("request must be non-empty")
    escaped = request.replace("|||", r"\|\|\|")
    return load_template("planner_prompt.txt").replace("{{request}}", escaped)


def parse_plan(response: str) -> QueryPlan:
    """Extract ``SUBREQUEST ... ||| KEYWORD ...`` lines from a response.

    Lines that do not match are ignored, so the model may chatter around
    the plan.  A response without a single plan line raises
    :class:`NoPlanLines`.
    """
    sub_queries: list[SubQuery] = []
    for line in response.split("\n"):
        m = PLAN_LINE_RE.match(line)
        if m:
            sub_queries.append(SubQuery(m.group(1), m.group(2)))
    if not sub_queries:
        raise NoPlanLines("the planner response contains no SUBREQUEST lines")
    return QueryPlan(tuple(sub_queries), degenerate=False)


def plan(
    request: str,
    provider: ChatProvider,
    config: TechniqueConfig,
    diagnostics: list[str] | None = None,
) -> QueryPlan:
    """Produce a query plan, never raising on planner trouble.

    With planning disabled this is the degenerate plan and costs no LLM
    call.  With planning enabled it costs exactly one call; failures are
    recorded in ``diagnostics`` and degrade to the degenerate plan.
    """
    if not request.strip():
        raise ValueError("request must be non-empty")
    if not config.query_planning:
        return degenerate_plan(request)
    prompt = build_planner_prompt(request)
    try:
        response = complete([ChatMessage("user", prompt)], provider)
        return parse_plan(response)
    except (NoPlanLines, ProviderError) as exc:
        note = f"query planning fell back to the whole request: {exc}"
        logger.warning(note)
        if diagnostics is not None:
            diagnostics.append(note)
        return degenerate_plan(request)
