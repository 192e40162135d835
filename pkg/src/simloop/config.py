"""Technique switches controlling how the assistant is assembled.

Each flag enables one independently ablatable ingredient; evaluation
schemes are just named bundles of these switches.
"""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True, slots=True)
class TechniqueConfig:
    """Feature switches plus the attempt and retrieval budgets.

    ``n_max`` caps repair attempts per request; ``top_k`` is the retrieval
    depth per sub-request; ``context_char_budget`` bounds how much retrieved
    text the user prompt may carry.
    """

    role_prompt: bool = True
    chain_of_thought: bool = True
    few_shot_examples: bool = True
    syntax_in_role: bool = True
    query_planning: bool = True
    rag_friendly_docs: bool = True
    manual_in_kb: bool = True
    syntax_checking: bool = True
    error_reporting: bool = True
    feedback_loop: bool = True
    n_max: int = 3
    top_k: int = 4
    context_char_budget: int = 12000

    def __post_init__(self) -> None:
        if self.n_max < 1:
            raise ValueError(f"n_max must be at least 1, got {self.n_max}")
        if self.top_k < 1:
            raise ValueError(f"top_k must be at least 1, got {self.top_k}")
        if self.context_char_budget < 0:
            raise ValueError("context_char_budget must be non-negative")

    @property
    def effective_attempts(self) -> int:
        return self.n_max if self.feedback_loop else 1

    def with_flags(self, **flags: bool | int) -> "TechniqueConfig":
        return replace(self, **flags)


FLAG_NAMES: tuple[str, ...] = (
    "role_prompt",
    "chain_of_thought",
    "few_shot_examples",
    "syntax_in_role",
    "query_planning",
    "rag_friendly_docs",
    "manual_in_kb",
    "syntax_checking",
    "error_reporting",
    "feedback_loop",
)
