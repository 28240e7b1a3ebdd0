"""Virtual GUI applications and the in-process backend that drives them."""

from __future__ import annotations

import hashlib
import json
import threading
from typing import Callable

import numpy as np

from ..actions import Action, Click, Press, Scroll, Type, Hotkey
from ..observer import WindowRect
from . import flappy, game2048, render

TARGET_IDS = ("game2048_ok", "game2048_white_on_white", "flappy_ok", "flappy_passthrough")


class TargetApp:
    """Deterministic application: inputs, logical ticks, frames, probes."""

    target_id: str = ""
    title: str = ""
    ticks_per_second: int = 1

    def __init__(self, seed: int):
        self.seed = seed
        self.logs: list[str] = []

    @property
    def size(self) -> tuple[int, int]:
        raise NotImplementedError

    def handle(self, cmd: Action) -> None:
        raise NotImplementedError

    def advance(self, ticks: int) -> None:
        raise NotImplementedError

    def frame(self) -> np.ndarray:
        raise NotImplementedError

    def probe(self) -> dict:
        raise NotImplementedError

    def log(self, level: str, event: str, **fields) -> None:
        kv = " ".join(f"{k}={v}" for k, v in fields.items())
        self.logs.append(f"PLAYLOG {level} {event} {kv}".rstrip())

    def state_digest(self) -> str:
        return hashlib.sha256(json.dumps(self.probe(), sort_keys=True).encode()).hexdigest()


class Game2048App(TargetApp):
    title = "2048"
    _keys = {"up": "up", "down": "down", "left": "left", "right": "right"}

    def __init__(
        self,
        seed: int,
        variant: str = "game2048_ok",
        glyph_color: render.GlyphColor | None = None,
    ):
        super().__init__(seed)
        if variant not in ("game2048_ok", "game2048_white_on_white"):
            raise ValueError(f"unknown 2048 variant {variant!r}")
        self.target_id = variant
        self.glyph_color = glyph_color
        self.board = game2048.new_board(seed)
        self.log("INFO", "start", seed=seed)

    @property
    def size(self) -> tuple[int, int]:
        return render.BOARD_PX, render.BOARD_PX

    def handle(self, cmd: Action) -> None:
        if not isinstance(cmd, Press) or cmd.key not in self._keys or self.board.over:
            return
        before = self.board.score
        self.board = game2048.step_2048(self.board, self._keys[cmd.key])
        self.log("INFO", "move", dir=cmd.key, score=self.board.score, gained=self.board.score - before)
        if self.board.over:
            self.log("INFO", "game_over", score=self.board.score)

    def advance(self, ticks: int) -> None:
        pass

    def frame(self) -> np.ndarray:
        return render.render_2048(self.board, self.target_id, self.glyph_color)

    def probe(self) -> dict:
        return game2048.probe(self.board)


class FlappyApp(TargetApp):
    title = "Flappy"
    ticks_per_second = 30

    def __init__(
        self,
        seed: int,
        variant: str = "flappy_ok",
        collide: Callable[[flappy.Rect, flappy.Rect], bool] | None = None,
    ):
        super().__init__(seed)
        if variant not in flappy.VARIANTS:
            raise ValueError(f"unknown flappy variant {variant!r}")
        self.target_id = variant
        self.collide = collide
        self.state = flappy.new_game(seed)
        self._flap = False
        # ticks on which the bird overlapped a pipe: [tick, alive_after]
        self.contacts: list[list] = []
        self.log("INFO", "start", seed=seed)

    @property
    def size(self) -> tuple[int, int]:
        return flappy.CANVAS_W, flappy.CANVAS_H

    def handle(self, cmd: Action) -> None:
        if isinstance(cmd, Click) or (isinstance(cmd, Press) and cmd.key in ("space", "up")):
            self._flap = True

    def advance(self, ticks: int) -> None:
        for _ in range(ticks):
            if not self.state.alive:
                self._flap = False
                return
            self.state = flappy.step_flappy(self.state, self._flap, self.target_id, self.collide)
            self._flap = False
            if flappy.touching_pipe(self.state):
                self.contacts.append([self.state.tick, self.state.alive])
            if not self.state.alive:
                cause = "ground" if self.state.y + flappy.BIRD_SIZE >= flappy.GROUND_Y else "pipe"
                self.log("INFO", "death", tick=self.state.tick, cause=cause, score=self.state.score)

    def frame(self) -> np.ndarray:
        return render.render_flappy(self.state)

    def probe(self) -> dict:
        snap = flappy.probe(self.state)
        snap["contacts"] = [list(c) for c in self.contacts]
        return snap


def make_app(target_id: str, seed: int) -> TargetApp:
    if target_id.startswith("game2048"):
        return Game2048App(seed, target_id)
    if target_id.startswith("flappy"):
        return FlappyApp(seed, target_id)
    raise ValueError(f"unknown virtual target {target_id!r}; known: {', '.join(TARGET_IDS)}")


class VirtualBackend:
    """Observer and executor backend over an in-process :class:`TargetApp`.

    Waiting advances logical ticks instead of sleeping; the post-action
    capture delay is one tick.
    """

    def __init__(self, app: TargetApp):
        self.app = app
        self.abort = threading.Event()
        self.exit_status: int | None = None

    def screen_size(self) -> tuple[int, int]:
        return self.app.size

    def grab(self, region: WindowRect | None) -> np.ndarray:
        px = self.app.frame()
        if region is not None:
            px = px[region.y : region.y + region.height, region.x : region.x + region.width]
        return np.ascontiguousarray(px)

    def settle(self, seconds: float) -> None:
        self._guard(self.app.advance, 1)

    def locate_window(self, title: str) -> WindowRect | None:
        if title.lower() in self.app.title.lower():
            w, h = self.app.size
            return WindowRect(0, 0, w, h, self.app.title)
        return None

    def probe(self) -> dict:
        return self.app.probe()

    def logs(self) -> list[str]:
        return list(self.app.logs)

    def _guard(self, fn, *args) -> None:
        if self.exit_status is not None:
            raise RuntimeError("target has exited")
        try:
            fn(*args)
        except Exception as exc:
            self.exit_status = 1
            self.app.log("ERROR", "crash", error=type(exc).__name__)
            raise

    def _input(self, cmd: Action) -> None:
        self._guard(self.app.handle, cmd)

    def click(self, x: int, y: int) -> None:
        self._input(Click(x, y))

    def type_text(self, text: str) -> None:
        self._input(Type(text))

    def hotkey(self, keys: tuple[str, ...]) -> None:
        self._input(Hotkey(keys))

    def press(self, key: str) -> None:
        self._input(Press(key))

    def scroll(self, x: int, y: int, direction: str) -> None:
        self._input(Scroll(x, y, direction))

    def wait(self, seconds: float) -> None:
        for _ in range(round(seconds * self.app.ticks_per_second)):
            if self.abort.is_set():
                return
            self._guard(self.app.advance, 1)

    def close(self) -> None:
        pass
