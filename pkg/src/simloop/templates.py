"""Access to packaged prompt template files."""

from __future__ import annotations

from importlib import resources


def load_template(name: str) -> str:
    path = resources.files("simloop") / "fixtures" / "prompts" / name
    return path.read_text(encoding="utf-8")
