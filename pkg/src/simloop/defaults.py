"""Packaged fixtures: default knowledge base, task deck, and scheme sheet."""

from __future__ import annotations

from importlib.resources import files

from .evaluation import SchemeConfig, TaskSpec, load_schemes, load_tasks
from .knowledge_base import (
    KnowledgeBase,
    build_knowledge_base,
    chunk_manual,
    parse_example_library,
    parse_option_registry,
)
from .toolbox import CASES, METHODS, default_functions

MANUAL_CHUNK_CHARS = 1000
MANUAL_OVERLAP_CHARS = 100


def read_fixture(name: str) -> str:
    return (files("simloop") / "fixtures" / name).read_text(encoding="utf-8")


def default_knowledge_base() -> KnowledgeBase:
    options = parse_option_registry(read_fixture("registry.kbreg"))
    examples = parse_example_library(read_fixture("examples.kbex"))
    manual = chunk_manual(read_fixture("manual.txt"), MANUAL_CHUNK_CHARS, MANUAL_OVERLAP_CHARS)
    return build_knowledge_base(options, default_functions(), examples, manual, METHODS, CASES)


def default_tasks(kb: KnowledgeBase) -> list[TaskSpec]:
    return load_tasks(read_fixture("tasks.txt"), kb)


def default_schemes() -> list[SchemeConfig]:
    return load_schemes(read_fixture("schemes.txt"))
