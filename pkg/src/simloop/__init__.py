"""Retrieval-assisted script assistant for an emulated power-system
linearization toolbox, plus the benchmark harness that measures it."""

from .config import TechniqueConfig
from .defaults import default_knowledge_base, default_schemes, default_tasks
from .evaluation import (
    EvalResult,
    SchemeConfig,
    TaskSpec,
    accuracy_percent,
    load_schemes,
    load_tasks,
    run_evaluation,
    score_attempt,
)
from .knowledge_base import KnowledgeBase, build_knowledge_base
from .llm import ChatMessage, ProviderConfig, ReplayProvider, make_provider
from .orchestrator import SessionTranscript, run_session
from .parser import ScriptAST, parse_script, pretty_print
from .retrieval import build_index, retrieve, retrieve_planned

__version__ = "0.1.0"

__all__ = [
    "ChatMessage",
    "EvalResult",
    "KnowledgeBase",
    "ProviderConfig",
    "ReplayProvider",
    "SchemeConfig",
    "ScriptAST",
    "SessionTranscript",
    "TaskSpec",
    "TechniqueConfig",
    "accuracy_percent",
    "build_index",
    "build_knowledge_base",
    "default_knowledge_base",
    "default_schemes",
    "default_tasks",
    "load_schemes",
    "load_tasks",
    "make_provider",
    "parse_script",
    "pretty_print",
    "retrieve",
    "retrieve_planned",
    "run_evaluation",
    "run_session",
    "score_attempt",
    "__version__",
]
