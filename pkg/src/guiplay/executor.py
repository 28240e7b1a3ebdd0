"""Executes validated actions against a backend and keeps the session history."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Callable, Protocol

from .actions import (
    Action,
    Click,
    Finish,
    Hotkey,
    Press,
    ScreenBounds,
    Scroll,
    Type,
    Wait,
    render_action,
)


class ExecutorBackend(Protocol):
    abort: threading.Event

    def screen_size(self) -> tuple[int, int]: ...
    def click(self, x: int, y: int) -> None: ...
    def type_text(self, text: str) -> None: ...
    def hotkey(self, keys: tuple[str, ...]) -> None: ...
    def press(self, key: str) -> None: ...
    def scroll(self, x: int, y: int, direction: str) -> None: ...
    def wait(self, seconds: float) -> None: ...


@dataclass(frozen=True)
class ActionResult:
    command: Action
    started_at: float
    ended_at: float
    status: str  # "ok" | "aborted" | "backend_error"
    note: str | None = None

    def to_dict(self) -> dict:
        return {"action": render_action(self.command), "status": self.status, "note": self.note}


class Executor:
    """Single-session actuator.

    ``backend.abort`` is the failsafe: it is checked before every command and,
    for ``wait``, by the backend while waiting.
    """

    def __init__(self, backend: ExecutorBackend, clock: Callable[[], float] = time.monotonic):
        self.backend = backend
        self.clock = clock
        self._history: list[ActionResult] = []

    @property
    def bounds(self) -> ScreenBounds:
        return ScreenBounds(*self.backend.screen_size())

    def history(self) -> list[ActionResult]:
        return list(self._history)

    def execute(self, cmd: Action) -> ActionResult:
        started = self.clock()
        status, note = "ok", None
        if self.backend.abort.is_set():
            status, note = "aborted", "abort flag set before execution"
        else:
            try:
                self._actuate(cmd)
            except Exception as exc:
                status, note = "backend_error", f"{type(exc).__name__}: {exc}"
            else:
                if isinstance(cmd, Wait) and self.backend.abort.is_set():
                    status, note = "aborted", "abort flag set during wait"
        result = ActionResult(cmd, started, max(started, self.clock()), status, note)
        self._history.append(result)
        return result

    def _actuate(self, cmd: Action) -> None:
        b = self.backend
        if isinstance(cmd, Click):
            b.click(cmd.x, cmd.y)
        elif isinstance(cmd, Type):
            b.type_text(cmd.text)
        elif isinstance(cmd, Hotkey):
            b.hotkey(cmd.keys)
        elif isinstance(cmd, Press):
            b.press(cmd.key)
        elif isinstance(cmd, Scroll):
            b.scroll(cmd.x, cmd.y, cmd.direction)
        elif isinstance(cmd, Wait):
            b.wait(cmd.seconds)
        elif isinstance(cmd, Finish):
            pass
        else:
            raise TypeError(f"not an action: {cmd!r}")


def execute(cmd: Action, executor: Executor) -> ActionResult:
    return executor.execute(cmd)


def history(executor: Executor) -> list[ActionResult]:
    return executor.history()
