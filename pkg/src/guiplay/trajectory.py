"""Append-only session trajectories (JSON Lines plus sidecar files)."""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable

from .metrics import TokenLedger

EVENT_KINDS = ("llm_call", "tool_use", "action", "screenshot", "decision", "phase")
TRAJECTORY_FILE = "trajectory.jsonl"


class TrajectoryParseError(ValueError):
    def __init__(self, line_no: int, detail: str):
        super().__init__(f"line {line_no}: {detail}")
        self.line_no = line_no


class TrajectoryWriteError(RuntimeError):
    """The session can no longer be recorded and must stop."""


@dataclass(frozen=True)
class TrajectoryEvent:
    seq: int
    at: float
    kind: str
    payload: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"seq": self.seq, "at": self.at, "kind": self.kind, "payload": self.payload},
            ensure_ascii=False,
            sort_keys=True,
        )


def digest(text: str | bytes) -> str:
    data = text.encode("utf-8") if isinstance(text, str) else text
    return "sha256:" + hashlib.sha256(data).hexdigest()


class Trajectory:
    """Recorder for one session directory.

    Every :meth:`record` is flushed (and fsync'ed when ``durable``) before it
    returns. Sequence numbers are assigned here, starting at 1.
    """

    def __init__(
        self,
        directory: str | os.PathLike,
        durable: bool = True,
        clock: Callable[[], float] = time.monotonic,
    ):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.path = self.dir / TRAJECTORY_FILE
        self.durable = durable
        self.clock = clock
        self._lock = threading.Lock()
        self._seq = 0
        if self.path.exists():
            existing = load(self.path)
            self._seq = existing[-1].seq if existing else 0
        self._fh = open(self.path, "a", encoding="utf-8")

    @property
    def last_seq(self) -> int:
        return self._seq

    def record(self, kind: str, **payload: Any) -> TrajectoryEvent:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        with self._lock:
            event = TrajectoryEvent(self._seq + 1, self.clock(), kind, payload)
            try:
                self._fh.write(event.to_json() + "\n")
                self._fh.flush()
                if self.durable:
                    os.fsync(self._fh.fileno())
            except (OSError, ValueError) as exc:
                raise TrajectoryWriteError(f"cannot append to {self.path}: {exc}") from exc
            self._seq = event.seq
            return event

    def write_sidecar(self, name: str, text: str) -> str:
        (self.dir / name).write_text(text, encoding="utf-8")
        return name

    def llm_call(self, prompt: str, completion: str, tokens_in: int, tokens_out: int, **extra: Any) -> TrajectoryEvent:
        n = self._seq + 1
        self.write_sidecar(f"llm_{n:06d}_prompt.txt", prompt)
        self.write_sidecar(f"llm_{n:06d}_completion.txt", completion)
        return self.record(
            "llm_call",
            prompt_digest=digest(prompt),
            completion_digest=digest(completion),
            tokens_in=tokens_in,
            tokens_out=tokens_out,
            **extra,
        )

    def close(self) -> None:
        with self._lock:
            if not self._fh.closed:
                self._fh.close()

    def __enter__(self) -> "Trajectory":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def record(trajectory: Trajectory, kind: str, **payload: Any) -> TrajectoryEvent:
    return trajectory.record(kind, **payload)


def parse_events(lines: Iterable[str]) -> list[TrajectoryEvent]:
    events: list[TrajectoryEvent] = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            event = TrajectoryEvent(int(obj["seq"]), float(obj["at"]), obj["kind"], obj["payload"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise TrajectoryParseError(line_no, str(exc)) from None
        if event.kind not in EVENT_KINDS:
            raise TrajectoryParseError(line_no, f"unknown event kind {event.kind!r}")
        if not isinstance(event.payload, dict):
            raise TrajectoryParseError(line_no, "payload must be an object")
        if events and event.seq <= events[-1].seq:
            raise TrajectoryParseError(line_no, f"seq {event.seq} does not increase")
        events.append(event)
    return events


def load(path: str | os.PathLike) -> list[TrajectoryEvent]:
    path = Path(path)
    if path.is_dir():
        path = path / TRAJECTORY_FILE
    with open(path, encoding="utf-8") as fh:
        return parse_events(fh)


def ledger_from_events(events: Iterable[TrajectoryEvent], n_problems: int = 0) -> TokenLedger:
    ledger = TokenLedger(N=n_problems)
    for e in events:
        if e.kind == "llm_call":
            ledger.add(f"seq{e.seq}", e.payload["tokens_in"], e.payload["tokens_out"])
    return ledger
