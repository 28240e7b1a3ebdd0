"""Chat-with-vision gateway: OpenAI-compatible HTTP backend and scripted mock."""

from __future__ import annotations

import base64
import io
import json
import math
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence, Union

import httpx
import numpy as np
from PIL import Image

from .metrics import TokenLedger
from .observer import Frame
from .trajectory import Trajectory

DEFAULT_TEMPERATURE = 0.3
RETRY_BACKOFF = (1.0, 2.0, 4.0)
ROLES = ("system", "user", "assistant")

ImageRef = Union[str, os.PathLike, Frame, np.ndarray]


class LLMError(RuntimeError):
    pass


class TransportError(LLMError):
    """HTTP or network failure; safe to retry."""


class MockExhausted(LLMError):
    pass


class MockMismatch(LLMError):
    pass


@dataclass(frozen=True)
class Message:
    role: str
    text: str
    images: tuple[ImageRef, ...] = ()

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")


@dataclass
class ChatRequest:
    messages: list[Message]
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = 2048
    model: str = ""

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    def last_user_text(self) -> str:
        for m in reversed(self.messages):
            if m.role == "user":
                return m.text
        return ""

    def prompt_text(self) -> str:
        return "\n\n".join(f"[{m.role}]\n{m.text}" for m in self.messages)


@dataclass(frozen=True)
class Completion:
    text: str
    tokens_in: int
    tokens_out: int
    latency_ms: float
    backend: str  # "live" | "mock"


def encode_image(ref: ImageRef, max_dim: int | None = None) -> str:
    """PNG data URL for an image path, frame or RGBA array."""
    if isinstance(ref, Frame):
        img = Image.fromarray(ref.pixels, mode="RGBA")
    elif isinstance(ref, np.ndarray):
        img = Image.fromarray(ref, mode="RGBA")
    else:
        img = Image.open(ref)
        img.load()
    if max_dim and max(img.size) > max_dim:
        img = img.copy()
        img.thumbnail((max_dim, max_dim))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


class LiveBackend:
    """One ``POST {base_url}/chat/completions`` per call."""

    name = "live"

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        model: str = "",
        client: httpx.Client | None = None,
        timeout: float = 120.0,
        max_image_dim: int | None = None,
    ):
        self.endpoint = base_url.rstrip("/") + "/chat/completions"
        if base_url.rstrip("/").endswith("/chat/completions"):
            self.endpoint = base_url.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.client = client or httpx.Client(timeout=timeout)
        self.max_image_dim = max_image_dim

    def payload(self, request: ChatRequest) -> dict:
        messages = []
        for m in request.messages:
            if m.images:
                parts: list[dict] = [{"type": "text", "text": m.text}]
                for ref in m.images:
                    parts.append({"type": "image_url", "image_url": {"url": encode_image(ref, self.max_image_dim)}})
                messages.append({"role": m.role, "content": parts})
            else:
                messages.append({"role": m.role, "content": m.text})
        return {
            "model": request.model or self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }

    def complete(self, request: ChatRequest) -> Completion:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        start = time.perf_counter()
        try:
            resp = self.client.post(self.endpoint, json=self.payload(request), headers=headers)
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code >= 400:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"unexpected response body: {exc}") from exc
        usage = body.get("usage") or {}
        return Completion(
            text,
            int(usage.get("prompt_tokens", 0)),
            int(usage.get("completion_tokens", 0)),
            (time.perf_counter() - start) * 1e3,
            self.name,
        )


@dataclass(frozen=True)
class MockEntry:
    reply: str
    match: str | None = None
    tokens_in: int | None = None
    tokens_out: int | None = None


def _estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


class MockBackend:
    """Replays a script strictly in order, one entry per call."""

    name = "mock"

    def __init__(self, entries: Sequence[MockEntry]):
        self.entries = list(entries)
        self._next = 0

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "MockBackend":
        return cls(load_script(path))

    @property
    def remaining(self) -> int:
        return len(self.entries) - self._next

    def complete(self, request: ChatRequest) -> Completion:
        if self._next >= len(self.entries):
            raise MockExhausted(f"mock script exhausted after {len(self.entries)} replies")
        entry = self.entries[self._next]
        if entry.match is not None and entry.match not in request.last_user_text():
            raise MockMismatch(f"entry {self._next} expects {entry.match!r} in the last user message")
        self._next += 1
        tin = entry.tokens_in if entry.tokens_in is not None else _estimate_tokens(request.prompt_text())
        tout = entry.tokens_out if entry.tokens_out is not None else _estimate_tokens(entry.reply)
        return Completion(entry.reply, tin, tout, 0.0, self.name)


def load_script(path: str | os.PathLike) -> list[MockEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                entries.append(
                    MockEntry(obj["reply"], obj.get("match"), obj.get("tokens_in"), obj.get("tokens_out"))
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{line_no}: bad mock entry: {exc}") from None
    return entries


def dump_script(entries: Sequence[MockEntry], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            obj: dict[str, Any] = {"reply": e.reply}
            for key in ("match", "tokens_in", "tokens_out"):
                if getattr(e, key) is not None:
                    obj[key] = getattr(e, key)
            fh.write(json.dumps(obj) + "\n")


class LLMSession:
    """A backend plus the token ledger and trajectory of one agent session."""

    def __init__(
        self,
        backend: LiveBackend | MockBackend,
        trajectory: Trajectory | None = None,
        role: str = "",
        model: str = "",
        temperature: float = DEFAULT_TEMPERATURE,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.backend = backend
        self.trajectory = trajectory
        self.role = role
        self.model = model
        self.temperature = temperature
        self.sleep = sleep
        self.ledger = TokenLedger(N=1)
        self.completions: list[Completion] = []
        self._lock = threading.Lock()

    def request(self, messages: Sequence[Message], max_tokens: int = 2048) -> ChatRequest:
        return ChatRequest(list(messages), self.temperature, max_tokens, self.model)

    def complete(self, request: ChatRequest | Sequence[Message]) -> Completion:
        if not isinstance(request, ChatRequest):
            request = self.request(request)
        attempts = 0
        while True:
            try:
                completion = self.backend.complete(request)
                break
            except TransportError:
                if attempts >= len(RETRY_BACKOFF):
                    raise
                self.sleep(RETRY_BACKOFF[attempts])
                attempts += 1
        with self._lock:
            call_id = f"{self.role or 'llm'}-{len(self.completions) + 1}"
            self.ledger.add(call_id, completion.tokens_in, completion.tokens_out)
            self.completions.append(completion)
        if self.trajectory is not None:
            self.trajectory.llm_call(
                request.prompt_text(),
                completion.text,
                completion.tokens_in,
                completion.tokens_out,
                role=self.role,
                backend=completion.backend,
            )
        return completion

    @property
    def total_tokens(self) -> int:
        return self.ledger.total_tokens


def complete(request: ChatRequest, session: LLMSession) -> Completion:
    return session.complete(request)


def ledger_total(session: LLMSession) -> TokenLedger:
    return TokenLedger(list(session.ledger.per_call), session.ledger.N)


@dataclass
class LLMProvider:
    """Hands out per-session LLM handles.

    ``mock:<file>`` replays the same script in every session. ``mock:<dir>``
    looks for ``<dir>/<task>/<role>-<seed>.jsonl``, then
    ``<dir>/<task>/<role>.jsonl``, then ``<dir>/<role>.jsonl``. Anything else
    is treated as an OpenAI-compatible base URL.
    """

    spec: str
    model: str = ""
    api_key: str | None = None
    temperature: float = DEFAULT_TEMPERATURE
    max_image_dim: int | None = None
    client: httpx.Client | None = field(default=None, repr=False)

    @property
    def is_mock(self) -> bool:
        return self.spec.startswith("mock:")

    def script_path(self, role: str, task: str | None = None, seed: int | None = None) -> Path:
        root = Path(self.spec[len("mock:"):])
        if root.is_file():
            return root
        candidates = []
        if task is not None:
            if seed is not None:
                candidates.append(root / task / f"{role}-{seed}.jsonl")
            candidates.append(root / task / f"{role}.jsonl")
        candidates.append(root / f"{role}.jsonl")
        for c in candidates:
            if c.is_file():
                return c
        raise FileNotFoundError(f"no mock script for role={role!r} task={task!r} under {root}")

    def session(
        self,
        role: str,
        task: str | None = None,
        seed: int | None = None,
        trajectory: Trajectory | None = None,
    ) -> LLMSession:
        if self.is_mock:
            backend: LiveBackend | MockBackend = MockBackend.from_file(self.script_path(role, task, seed))
        else:
            key = self.api_key or os.environ.get("GUIPLAY_API_KEY") or os.environ.get("OPENAI_API_KEY")
            model = self.model or os.environ.get("GUIPLAY_MODEL", "")
            backend = LiveBackend(self.spec, key, model, self.client, max_image_dim=self.max_image_dim)
        return LLMSession(backend, trajectory, role, self.model, self.temperature)
