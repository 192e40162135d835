"""Chat completion providers: an HTTP client and a deterministic replayer.

The replay provider feeds recorded responses back to the pipeline.  A
recorded entry is keyed either by a stable 64-bit digest of the prompt it
answers, or by ``*`` to mean "answer whatever comes next".  Digest-keyed
entries are reusable; ``*`` entries form an ordered pool consumed once each
per session.
"""

from __future__ import annotations

import hashlib
import os
import re
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import httpx

from .errors import ProviderError, ReplayExhausted

ROLES = ("system", "user", "assistant")

_KEY_LINE_RE = re.compile(r"^--- KEY (\*|[0-9a-f]{16}) ---$")

RETRY_BACKOFF_S = (1.0, 2.0, 4.0)
MAX_ATTEMPTS = 3


@dataclass(frozen=True, slots=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if not self.content:
            raise ValueError("message content must be non-empty")


@dataclass(frozen=True, slots=True)
class ProviderConfig:
    kind: str = "replay"
    base_url: str = ""
    model_name: str = ""
    api_key_env_var: str = "SIMLOOP_API_KEY"
    timeout_s: float = 60.0
    replay_path: str | None = None
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("http", "replay"):
            raise ValueError(f"provider kind must be 'http' or 'replay', got {self.kind!r}")


class ChatProvider(Protocol):
    def complete(self, messages: Sequence[ChatMessage]) -> str: ...

    def session(self) -> "ChatProvider": ...


def message_digest(messages: Sequence[ChatMessage]) -> str:
    """Stable 64-bit digest (hex) of the concatenated message contents."""
    joined = "".join(m.content for m in messages)
    return hashlib.blake2b(joined.encode("utf-8"), digest_size=8).hexdigest()


def _check_messages(messages: Sequence[ChatMessage]) -> None:
    if not messages:
        raise ProviderError("cannot complete an empty message list", transient=False)
    if messages[0].role not in ("system", "user"):
        raise ProviderError("the first message must come from 'system' or 'user'", transient=False)


def complete(messages: Sequence[ChatMessage], provider: ChatProvider) -> str:
    """Run one chat completion after validating the message sequence."""
    _check_messages(messages)
    return provider.complete(messages)


# ===========================================================================
# Replay provider
# ===========================================================================


@dataclass(frozen=True, slots=True)
class ReplayEntry:
    key: str  # 16 hex chars or "*"
    text: str


def parse_replay_text(text: str) -> list[ReplayEntry]:
    """Parse replay file text into entries.

    Response text runs from a ``--- KEY <hex-or-*> ---`` line to the next
    key line; trailing newlines of each response are not preserved.
    """
    entries: list[ReplayEntry] = []
    key: str | None = None
    lines: list[str] = []
    for raw in text.split("\n"):
        m = _KEY_LINE_RE.match(raw)
        if m:
            if key is not None:
                entries.append(ReplayEntry(key, "\n".join(lines).rstrip("\n")))
            key = m.group(1)
            lines = []
        elif key is None:
            if raw.strip():
                raise ProviderError(
                    f"replay text before the first KEY line: {raw.strip()!r}", transient=False
                )
        else:
            lines.append(raw)
    if key is not None:
        entries.append(ReplayEntry(key, "\n".join(lines).rstrip("\n")))
    return entries


def format_replay_text(entries: Sequence[ReplayEntry]) -> str:
    parts = [f"--- KEY {e.key} ---\n{e.text}\n" for e in entries]
    return "".join(parts)


class ReplaySession:
    """One session's view of a replay file, with its own fallback cursor."""

    def __init__(self, entries: Sequence[ReplayEntry]) -> None:
        self._entries = list(entries)
        self._keyed: dict[str, str] = {}
        for entry in entries:
            if entry.key != "*" and entry.key not in self._keyed:
                self._keyed[entry.key] = entry.text
        self._consumed: set[int] = set()

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        _check_messages(messages)
        digest = message_digest(messages)
        if digest in self._keyed:
            return self._keyed[digest]
        for i, entry in enumerate(self._entries):
            if entry.key == "*" and i not in self._consumed:
                self._consumed.add(i)
                return entry.text
        raise ReplayExhausted(f"no replay entry for digest {digest} and no fallback left")

    def session(self) -> "ReplaySession":
        return ReplaySession(self._entries)


class ReplayProvider:
    def __init__(self, entries: Sequence[ReplayEntry]) -> None:
        self._entries = list(entries)
        self._default_session = ReplaySession(entries)

    @classmethod
    def from_path(cls, path: str) -> "ReplayProvider":
        try:
            with open(path, encoding="utf-8") as handle:
                text = handle.read()
        except OSError as exc:
            raise ProviderError(f"cannot read replay file {path!r}: {exc}", transient=False) from exc
        return cls(parse_replay_text(text))

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        return self._default_session.complete(messages)

    def session(self) -> ReplaySession:
        return ReplaySession(self._entries)


# ===========================================================================
# HTTP provider
# ===========================================================================


@dataclass
class HttpProvider:
    """OpenAI-style chat endpoint client with bounded retries.

    Transient transport failures (connection errors, 429, 5xx) are retried
    up to three total attempts with growing backoff; anything else fails
    fast as a fatal :class:`ProviderError`.
    """

    config: ProviderConfig
    transport: httpx.BaseTransport | None = None
    sleep: Callable[[float], None] = field(default=time.sleep)

    def __post_init__(self) -> None:
        self._client = httpx.Client(transport=self.transport, timeout=self.config.timeout_s)

    def session(self) -> "HttpProvider":
        return self

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        _check_messages(messages)
        payload = {
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
        }
        headers = {}
        if self.config.api_key_env_var:
            key = os.environ.get(self.config.api_key_env_var)
            if key is None:
                raise ProviderError(
                    f"environment variable {self.config.api_key_env_var!r} is not set",
                    transient=False,
                )
            headers["Authorization"] = f"Bearer {key}"

        last_detail = ""
        for attempt in range(MAX_ATTEMPTS):
            try:
                response = self._client.post(self.config.base_url, json=payload, headers=headers)
            except httpx.HTTPError as exc:
                last_detail = f"transport error: {exc}"
            else:
                if response.status_code == 200:
                    return self._extract_content(response)
                if response.status_code == 429 or response.status_code >= 500:
                    last_detail = f"status {response.status_code}"
                else:
                    raise ProviderError(
                        f"chat endpoint returned status {response.status_code}", transient=False
                    )
            if attempt < MAX_ATTEMPTS - 1:
                self.sleep(RETRY_BACKOFF_S[attempt])
        raise ProviderError(f"chat endpoint kept failing ({last_detail})", transient=True)

    @staticmethod
    def _extract_content(response: httpx.Response) -> str:
        try:
            content = response.json()["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise ProviderError(f"malformed chat response: {exc}", transient=False) from exc
        if not isinstance(content, str):
            raise ProviderError("chat response content is not a string", transient=False)
        return content


def make_provider(
    config: ProviderConfig,
    *,
    transport: httpx.BaseTransport | None = None,
    sleep: Callable[[float], None] | None = None,
) -> ChatProvider:
    if config.kind == "replay":
        if not config.replay_path:
            raise ProviderError("replay provider needs a replay_path", transient=False)
        return ReplayProvider.from_path(config.replay_path)
    provider = HttpProvider(config, transport=transport)
    if sleep is not None:
        provider.sleep = sleep
    return provider
