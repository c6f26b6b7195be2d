"""Agent completion backends.

:class:`ChatCompletionsBackend` talks to any OpenAI-compatible
``/chat/completions`` endpoint.  :class:`ScriptedBackend` replays a fixed
script per role and is what tests and ``--offline`` runs use.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol, Sequence

import httpx

from .errors import ConfigurationError, InvalidArgument, ProviderError, ScriptUnderflow
from .graph import ResourceDelta

__all__ = [
    "AgentRequest",
    "AgentReply",
    "AgentBackend",
    "ScriptEntry",
    "ScriptedBackend",
    "ChatCompletionsBackend",
    "count_tokens_fallback",
    "API_KEY_ENV",
]

API_KEY_ENV = "CHAINSHORT_API_KEY"


def count_tokens_fallback(text: str) -> int:
    """Whitespace word count inflated by 4/3, rounded up."""
    words = len(text.split())
    # integer form of ceil(words * 4 / 3), free of float rounding
    return -(-words * 4 // 3)


@dataclass
class AgentRequest:
    role_profile: str
    system_prompt: str
    messages: list[tuple[str, str]]
    temperature: float = 0.2
    # values substituted into scripted replies, e.g. {"i": 0, "j": 2}
    variables: dict[str, Any] = field(default_factory=dict)

    def prompt_text(self) -> str:
        return "\n".join([self.system_prompt, *(text for _, text in self.messages)])


@dataclass(frozen=True)
class AgentReply:
    text: str
    usage: ResourceDelta


class AgentBackend(Protocol):
    def complete(self, request: AgentRequest) -> AgentReply: ...


@dataclass(frozen=True)
class ScriptEntry:
    role_profile: str
    text: str
    time_seconds: float | None = None
    tokens: int | None = None

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> ScriptEntry:
        return cls(
            role_profile=str(record["role_profile"]),
            text=str(record["text"]),
            time_seconds=record.get("time_seconds"),
            tokens=record.get("tokens"),
        )


class ScriptedBackend:
    """Replays scripted replies in order, one queue per role.

    An entry with ``tokens`` (or ``time_seconds``) set to ``None`` is charged
    from its content instead: the fallback token count of prompt plus reply,
    and a synthetic 5 ms per token.  This lets long shortcut instructions cost
    more than short ones while staying deterministic.

    With ``cycle=True`` each role's queue wraps around instead of raising
    :class:`ScriptUnderflow`.
    """

    SECONDS_PER_TOKEN = 0.005

    def __init__(self, entries: Sequence[ScriptEntry | dict[str, Any]], *, cycle: bool = False) -> None:
        self.entries = [e if isinstance(e, ScriptEntry) else ScriptEntry.from_record(e) for e in entries]
        self.cycle = cycle
        self._by_role: dict[str, list[ScriptEntry]] = {}
        for entry in self.entries:
            self._by_role.setdefault(entry.role_profile, []).append(entry)
        self._cursor: dict[str, int] = {}
        self._lock = threading.Lock()
        self.transcript: list[tuple[str, AgentRequest, AgentReply]] = []

    @classmethod
    def from_file(cls, path: str | Path, *, cycle: bool = False) -> ScriptedBackend:
        records = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(records, list):
            raise ConfigurationError(f"{path}: script must be a JSON list")
        return cls(records, cycle=cycle)

    def complete(self, request: AgentRequest) -> AgentReply:
        if not request.messages:
            raise InvalidArgument("completion requests need at least one message")
        with self._lock:
            queue = self._by_role.get(request.role_profile, [])
            ordinal = self._cursor.get(request.role_profile, 0)
            if not queue or (ordinal >= len(queue) and not self.cycle):
                raise ScriptUnderflow(
                    f"script exhausted for role {request.role_profile!r} at call {ordinal + 1}"
                )
            entry = queue[ordinal % len(queue)]
            self._cursor[request.role_profile] = ordinal + 1

            text = entry.text
            # plain placeholder replacement; scripted code may contain literal braces
            for key, value in request.variables.items():
                text = text.replace("{" + key + "}", str(value))
            if entry.tokens is not None:
                tokens = int(entry.tokens)
            else:
                tokens = count_tokens_fallback(request.prompt_text()) + count_tokens_fallback(text)
            seconds = entry.time_seconds if entry.time_seconds is not None else tokens * self.SECONDS_PER_TOKEN
            reply = AgentReply(text, ResourceDelta(seconds, tokens))
            self.transcript.append((request.role_profile, request, reply))
            return reply

    def reset(self) -> None:
        with self._lock:
            self._cursor.clear()
            self.transcript.clear()


class ChatCompletionsBackend:
    """Client for ``POST {base_url}/chat/completions``.

    Time charged for a call covers every attempt, including backoff sleeps.
    Missing ``usage`` fields fall back to :func:`count_tokens_fallback`.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        *,
        max_attempts: int = 3,
        backoff_seconds: float = 1.0,
        timeout_seconds: float = 120.0,
        client: httpx.Client | None = None,
        clock=time.monotonic,
        sleep=time.sleep,
    ) -> None:
        if api_key is None:
            api_key = os.environ.get(API_KEY_ENV)
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.max_attempts = max_attempts
        self.backoff_seconds = backoff_seconds
        self._headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = client or httpx.Client(timeout=timeout_seconds)
        self._clock = clock
        self._sleep = sleep

    def _payload(self, request: AgentRequest) -> dict[str, Any]:
        messages = [{"role": "system", "content": request.system_prompt}] if request.system_prompt else []
        for speaker, text in request.messages:
            role = speaker if speaker in ("system", "user", "assistant") else "user"
            messages.append({"role": role, "content": text})
        return {"model": self.model, "messages": messages, "temperature": request.temperature}

    def complete(self, request: AgentRequest) -> AgentReply:
        if not request.messages:
            raise InvalidArgument("completion requests need at least one message")
        payload = self._payload(request)
        start = self._clock()
        last_error: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                response = self._client.post(
                    f"{self.base_url}/chat/completions", json=payload, headers=self._headers
                )
                response.raise_for_status()
                body = response.json()
                text = body["choices"][0]["message"]["content"] or ""
                break
            except (httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
                last_error = exc
                if attempt < self.max_attempts:
                    self._sleep(self.backoff_seconds * 2 ** (attempt - 1))
        else:
            raise ProviderError(
                f"chat completion failed after {self.max_attempts} attempts: {last_error}",
                attempts=self.max_attempts,
                elapsed_seconds=self._clock() - start,
            )

        usage = body.get("usage") or {}
        prompt_tokens = usage.get("prompt_tokens")
        completion_tokens = usage.get("completion_tokens")
        if prompt_tokens is None or completion_tokens is None:
            tokens = count_tokens_fallback(request.prompt_text()) + count_tokens_fallback(text)
        else:
            tokens = int(prompt_tokens) + int(completion_tokens)
        elapsed = max(0.0, self._clock() - start)
        return AgentReply(text, ResourceDelta(elapsed, tokens))
