from __future__ import annotations

import threading

import pytest

from guiplay.actions import Click, Finish, Press, Type, Wait
from guiplay.executor import Executor


class Recorder:
    def __init__(self, fail_on=None):
        self.abort = threading.Event()
        self.calls = []
        self.fail_on = fail_on

    def screen_size(self):
        return (100, 100)

    def _note(self, *call):
        if call[0] == self.fail_on:
            raise RuntimeError("device unplugged")
        self.calls.append(call)

    def click(self, x, y):
        self._note("click", x, y)

    def type_text(self, text):
        self._note("type", text)

    def hotkey(self, keys):
        self._note("hotkey", keys)

    def press(self, key):
        self._note("press", key)

    def scroll(self, x, y, direction):
        self._note("scroll", x, y, direction)

    def wait(self, seconds):
        self._note("wait", seconds)


def test_dispatch_and_history():
    be = Recorder()
    ex = Executor(be)
    for cmd in (Click(1, 2), Type("a"), Press("enter"), Finish("success")):
        assert ex.execute(cmd).status == "ok"
    assert be.calls == [("click", 1, 2), ("type", "a"), ("press", "enter")]
    hist = ex.history()
    assert [r.command for r in hist][-1] == Finish("success")
    hist.clear()
    assert len(ex.history()) == 4
    assert all(r.ended_at >= r.started_at for r in ex.history())


def test_abort_before_execution():
    be = Recorder()
    be.abort.set()
    result = Executor(be).execute(Click(1, 1))
    assert result.status == "aborted"
    assert be.calls == []


def test_backend_error_is_reported():
    result = Executor(Recorder(fail_on="press")).execute(Press("a"))
    assert result.status == "backend_error"
    assert "device unplugged" in result.note


def test_abort_during_wait():
    be = Recorder()
    be.wait = lambda s: be.abort.set()
    assert Executor(be).execute(Wait(1.0)).status == "aborted"


def test_bounds_follow_backend():
    assert Executor(Recorder()).bounds.width == 100
