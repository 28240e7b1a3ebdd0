"""Standalone target processes and the backend that drives them.

A served target reads one command per line on stdin and answers one line on
stdout:

    <action call>        -> ok | err <message>     (action grammar)
    capture              -> frame <file name>      (PNG in the handshake dir)
    tick [n]             -> ok
    probe                -> probe <json>           (test-only state snapshot)
    quit                 -> bye

It announces itself with ``ready <width> <height> <title>`` and writes
``PLAYLOG`` lines to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import threading
import traceback
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from ..actions import ActionParseError, Wait, parse_action, render_action, Click, Press, Type, Hotkey, Scroll
from ..observer import Frame, WindowRect, frame_filename
from ..sandbox import ProcessHandle
from .apps import TARGET_IDS, TargetApp, make_app

HANDSHAKE_VAR = "PLAY_HANDSHAKE"


class TargetExited(RuntimeError):
    pass


def _flush_logs(app: TargetApp, err: IO[str], sent: int) -> int:
    for line in app.logs[sent:]:
        err.write(line + "\n")
    err.flush()
    return len(app.logs)


def serve(app: TargetApp, handshake: str | os.PathLike, stdin: IO[str] = sys.stdin, stdout: IO[str] = sys.stdout, stderr: IO[str] = sys.stderr) -> int:
    """Run the command loop until ``quit`` or end of input; returns an exit code."""
    hs = Path(handshake)
    hs.mkdir(parents=True, exist_ok=True)
    w, h = app.size
    stdout.write(f"ready {w} {h} {app.title}\n")
    stdout.flush()
    sent = _flush_logs(app, stderr, 0)
    captures = 0
    try:
        for raw in stdin:
            line = raw.strip()
            if not line:
                continue
            word, _, rest = line.partition(" ")
            if word == "quit":
                stdout.write("bye\n")
                stdout.flush()
                return 0
            if word == "capture":
                captures += 1
                name = frame_filename(captures)
                Frame(app.frame()).save_png(hs / name)
                reply = f"frame {name}"
            elif word == "tick":
                app.advance(int(rest or 1))
                reply = "ok"
            elif word == "probe":
                reply = "probe " + json.dumps(app.probe(), sort_keys=True)
            else:
                try:
                    cmd = parse_action(line)
                except ActionParseError as exc:
                    reply = f"err {exc}"
                else:
                    if isinstance(cmd, Wait):
                        app.advance(round(cmd.seconds * app.ticks_per_second))
                    else:
                        app.handle(cmd)
                    reply = "ok"
            sent = _flush_logs(app, stderr, sent)
            stdout.write(reply + "\n")
            stdout.flush()
    except Exception as exc:
        app.log("ERROR", "crash", error=type(exc).__name__)
        _flush_logs(app, stderr, sent)
        traceback.print_exc(file=stderr)
        return 1
    return 0


def smoke(app: TargetApp, ticks: int = 60) -> int:
    """Headless launch check: advance, render once, emit logs."""
    app.advance(ticks)
    app.frame()
    _flush_logs(app, sys.stderr, 0)
    return 0


class ProcessBackend:
    """Observer and executor backend over a served target process."""

    def __init__(self, handle: ProcessHandle, handshake: str | os.PathLike):
        self.handle = handle
        self.handshake = Path(handshake)
        self.abort = threading.Event()
        ready = self._read()
        parts = ready.split(maxsplit=3)
        if len(parts) < 3 or parts[0] != "ready":
            raise TargetExited(f"target did not announce itself: {ready!r}")
        self._size = (int(parts[1]), int(parts[2]))
        self.title = parts[3] if len(parts) > 3 else ""

    def _read(self) -> str:
        line = self.handle.readline()
        if not line:
            raise TargetExited(f"target exited with status {self.handle.popen.wait()}")
        return line.rstrip("\n")

    def _call(self, line: str) -> str:
        if self.handle.poll() is not None:
            raise TargetExited(f"target exited with status {self.handle.poll()}")
        try:
            self.handle.send(line)
        except (BrokenPipeError, OSError) as exc:
            raise TargetExited(str(exc)) from exc
        reply = self._read()
        if reply.startswith("err "):
            raise RuntimeError(reply[4:])
        return reply

    @property
    def exit_status(self) -> int | None:
        return self.handle.poll()

    def screen_size(self) -> tuple[int, int]:
        return self._size

    def grab(self, region: WindowRect | None) -> np.ndarray:
        reply = self._call("capture")
        px = Frame.load_png(self.handshake / reply.split(maxsplit=1)[1]).pixels
        if region is not None:
            px = px[region.y : region.y + region.height, region.x : region.x + region.width]
        return np.ascontiguousarray(px)

    def settle(self, seconds: float) -> None:
        self._call("tick 1")

    def locate_window(self, title: str) -> WindowRect | None:
        if title.lower() in self.title.lower():
            return WindowRect(0, 0, *self._size, self.title)
        return None

    def probe(self) -> dict:
        return json.loads(self._call("probe")[len("probe "):])

    def logs(self) -> list[str]:
        return self.handle.playlog()

    def click(self, x: int, y: int) -> None:
        self._call(render_action(Click(x, y)))

    def type_text(self, text: str) -> None:
        self._call(render_action(Type(text)))

    def hotkey(self, keys: tuple[str, ...]) -> None:
        self._call(render_action(Hotkey(keys)))

    def press(self, key: str) -> None:
        self._call(render_action(Press(key)))

    def scroll(self, x: int, y: int, direction: str) -> None:
        self._call(render_action(Scroll(x, y, direction)))

    def wait(self, seconds: float) -> None:
        if not self.abort.is_set():
            self._call(render_action(Wait(seconds)))

    def close(self) -> None:
        if self.handle.poll() is None:
            try:
                self.handle.send("quit")
                self.handle.readline()
            except (BrokenPipeError, OSError, ValueError):
                pass


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="python -m guiplay.targets", description="Serve a virtual GUI target over stdin/stdout.")
    parser.add_argument("--target", required=True, choices=TARGET_IDS)
    parser.add_argument("--seed", type=int, default=None, help="defaults to $PLAY_SEED")
    parser.add_argument("--handshake", default=None, help="frame directory; defaults to $PLAY_HANDSHAKE or ./frames")
    parser.add_argument("--smoke", action="store_true", help="advance a few ticks and exit")
    args = parser.parse_args(argv)
    seed = args.seed if args.seed is not None else int(os.environ.get("PLAY_SEED", "0"))
    app = make_app(args.target, seed)
    if args.smoke:
        return smoke(app)
    handshake = args.handshake or os.environ.get(HANDSHAKE_VAR) or "frames"
    return serve(app, handshake)
