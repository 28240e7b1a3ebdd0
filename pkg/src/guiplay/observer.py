"""Screen capture, the three-frame cache, and frame differencing."""

from __future__ import annotations

import os
import sys
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol

import numpy as np
from PIL import Image

CACHE_SIZE = 3
ANIMATION_THRESHOLD = 0.005
NATIVE_CHANNEL_TOLERANCE = 8


class UnsupportedPlatform(RuntimeError):
    pass


class RegionOutOfBounds(ValueError):
    pass


class Indeterminate(RuntimeError):
    """Not enough frames cached to decide."""


@dataclass(frozen=True)
class WindowRect:
    x: int
    y: int
    width: int
    height: int
    title: str = ""

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"window rect must have positive size, got {self.width}x{self.height}")


@dataclass(eq=False)
class Frame:
    """An RGBA capture, ``pixels`` shaped ``(height, width, 4)`` uint8."""

    pixels: np.ndarray
    seq: int = 0
    captured_at: float = 0.0

    def __post_init__(self) -> None:
        px = self.pixels
        if px.dtype != np.uint8 or px.ndim != 3 or px.shape[2] != 4:
            raise ValueError(f"frame pixels must be HxWx4 uint8, got {px.dtype} {px.shape}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def tobytes(self) -> bytes:
        return np.ascontiguousarray(self.pixels).tobytes()

    def crop(self, x: int, y: int, w: int, h: int) -> np.ndarray:
        return self.pixels[y : y + h, x : x + w]

    def save_png(self, path: str | os.PathLike) -> Path:
        path = Path(path)
        Image.fromarray(self.pixels, mode="RGBA").save(path, format="PNG")
        return path

    @classmethod
    def load_png(cls, path: str | os.PathLike, seq: int = 0, captured_at: float = 0.0) -> "Frame":
        with Image.open(path) as img:
            pixels = np.asarray(img.convert("RGBA"), dtype=np.uint8).copy()
        return cls(pixels, seq, captured_at)


def frame_filename(seq: int) -> str:
    return f"frame_{seq:06d}.png"


@dataclass(frozen=True)
class DiffReport:
    changed_fraction: float
    changed_bbox: tuple[int, int, int, int] | None  # x, y, width, height
    pixel_count: int


def diff(a: Frame, b: Frame, tolerance: int = 0) -> DiffReport:
    """Fraction of pixels where any channel differs by more than ``tolerance``."""
    if a.pixels.shape != b.pixels.shape:
        raise ValueError(f"frame sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}")
    if tolerance <= 0 and a.pixels.shape[2] == 4:
        # One 32-bit compare per RGBA pixel.
        pa = np.ascontiguousarray(a.pixels).view(np.uint32)[..., 0]
        pb = np.ascontiguousarray(b.pixels).view(np.uint32)[..., 0]
        changed = pa != pb
    else:
        delta = np.abs(a.pixels.astype(np.int16) - b.pixels.astype(np.int16))
        changed = (delta > tolerance).any(axis=2)
    count = int(changed.sum())
    total = changed.size
    bbox = None
    if count:
        rows = np.flatnonzero(changed.any(axis=1))
        cols = np.flatnonzero(changed.any(axis=0))
        bbox = (int(cols[0]), int(rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))
    return DiffReport(count / total, bbox, count)


class FrameCache:
    """The most recent frames, oldest first, at most three."""

    def __init__(self, frames: Iterable[Frame] = ()):
        self._frames: deque[Frame] = deque(maxlen=CACHE_SIZE)
        for f in frames:
            self.push(f)

    def push(self, frame: Frame) -> "FrameCache":
        if self._frames and frame.seq <= self._frames[-1].seq:
            raise ValueError(f"frame seq {frame.seq} not after cached seq {self._frames[-1].seq}")
        self._frames.append(frame)
        return self

    @property
    def frames(self) -> list[Frame]:
        return list(self._frames)

    def __len__(self) -> int:
        return len(self._frames)

    def latest(self) -> Frame | None:
        return self._frames[-1] if self._frames else None


def push(cache: FrameCache, frame: Frame) -> FrameCache:
    return cache.push(frame)


def pair_diffs(cache: FrameCache, tolerance: int = 0) -> list[DiffReport]:
    frames = cache.frames
    return [diff(a, b, tolerance) for a, b in zip(frames, frames[1:])]


def is_animating(cache: FrameCache, threshold: float = ANIMATION_THRESHOLD, tolerance: int = 0) -> bool:
    """True when any consecutive pair in a full cache changed more than ``threshold``."""
    if len(cache) < CACHE_SIZE:
        raise Indeterminate(f"need {CACHE_SIZE} cached frames, have {len(cache)}")
    return any(d.changed_fraction > threshold for d in pair_diffs(cache, tolerance))


def changed_since_oldest(cache: FrameCache, threshold: float = ANIMATION_THRESHOLD, tolerance: int = 0) -> bool:
    """Compare the newest frame with the oldest one still cached."""
    frames = cache.frames
    if len(frames) < 2:
        raise Indeterminate("need at least 2 cached frames")
    return diff(frames[0], frames[-1], tolerance).changed_fraction > threshold


class ObserverBackend(Protocol):
    def screen_size(self) -> tuple[int, int]: ...

    def grab(self, region: WindowRect | None) -> np.ndarray: ...

    def settle(self, seconds: float) -> None:
        """Let the target run for the post-action capture delay."""

    def locate_window(self, title: str) -> WindowRect | None: ...


class Observer:
    """One capture session: numbers frames and keeps the recent-frame cache."""

    def __init__(self, backend: ObserverBackend, clock: Callable[[], float] = time.monotonic):
        self.backend = backend
        self.clock = clock
        self.cache = FrameCache()
        self._seq = 0

    def capture(self, region: WindowRect | None = None) -> Frame:
        width, height = self.backend.screen_size()
        if region is not None and (
            region.x < 0 or region.y < 0 or region.x + region.width > width or region.y + region.height > height
        ):
            raise RegionOutOfBounds(f"{region} outside {width}x{height} screen")
        pixels = self.backend.grab(region)
        self._seq += 1
        frame = Frame(pixels, self._seq, self.clock())
        self.cache.push(frame)
        return frame


def capture(backend: ObserverBackend, region: WindowRect | None = None, session: Observer | None = None) -> Frame:
    session = session or Observer(backend)
    return session.capture(region)


def is_wayland(environ: dict | None = None) -> bool:
    env = os.environ if environ is None else environ
    return env.get("XDG_SESSION_TYPE", "").lower() == "wayland" or (
        bool(env.get("WAYLAND_DISPLAY")) and not env.get("DISPLAY")
    )


class NativeBackend:
    """Real display capture and input through ``pyautogui``.

    Wayland sessions are refused: the compositor blocks cross-window capture
    and synthetic input through the standard APIs.
    """

    def __init__(self, environ: dict | None = None, failsafe_corner: bool = True):
        if sys.platform.startswith("linux") and is_wayland(environ):
            raise UnsupportedPlatform("Wayland sessions cannot be captured or driven")
        try:
            import pyautogui  # type: ignore[import-not-found]
        except Exception as exc:  # no display server, or package missing
            raise UnsupportedPlatform(f"native GUI backend unavailable: {exc}") from exc
        self._gui = pyautogui
        self._gui.FAILSAFE = failsafe_corner
        import threading

        self.abort = threading.Event()

    def screen_size(self) -> tuple[int, int]:
        w, h = self._gui.size()
        return int(w), int(h)

    def grab(self, region: WindowRect | None) -> np.ndarray:
        box = None if region is None else (region.x, region.y, region.width, region.height)
        return np.asarray(self._gui.screenshot(region=box).convert("RGBA"), dtype=np.uint8).copy()

    def settle(self, seconds: float) -> None:
        time.sleep(seconds)

    def locate_window(self, title: str) -> WindowRect | None:
        getter = getattr(self._gui, "getWindowsWithTitle", None)
        if getter is None:
            return None
        for win in getter(title):
            return WindowRect(win.left, win.top, win.width, win.height, win.title)
        return None

    # executor side
    def click(self, x: int, y: int) -> None:
        self._gui.click(x, y)

    def type_text(self, text: str) -> None:
        self._gui.write(text)

    def hotkey(self, keys: tuple[str, ...]) -> None:
        self._gui.hotkey(*keys)

    def press(self, key: str) -> None:
        self._gui.press(key)

    def scroll(self, x: int, y: int, direction: str) -> None:
        if direction in ("up", "down"):
            self._gui.scroll(3 if direction == "up" else -3, x=x, y=y)
        else:
            self._gui.hscroll(3 if direction == "right" else -3, x=x, y=y)

    def wait(self, seconds: float) -> None:
        deadline = time.monotonic() + seconds
        while not self.abort.is_set() and time.monotonic() < deadline:
            time.sleep(min(0.05, max(0.0, deadline - time.monotonic())))
