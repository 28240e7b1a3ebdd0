"""GUI action vocabulary and its textual call-form grammar.

Model output is scanned for the first ``name(args)`` call whose name is one
of the seven action names. Arguments are comma separated; strings may be
single- or double-quoted, numbers are decimal. Surrounding prose is ignored.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Union

MAX_WAIT_SECONDS = 60.0
DIRECTIONS = ("up", "down", "left", "right")
OUTCOMES = ("success", "failure")

KEY_NAMES = frozenset(
    [chr(c) for c in range(ord("a"), ord("z") + 1)]
    + [str(d) for d in range(10)]
    + [f"f{i}" for i in range(1, 13)]
    + ["ctrl", "alt", "shift", "meta", "up", "down", "left", "right"]
    + ["enter", "esc", "space", "tab", "backspace"]
)
INPUT_KINDS = ("click", "type", "hotkey", "press", "scroll")


class ActionParseError(ValueError):
    pass


class NoAction(ActionParseError):
    """The text contains no recognizable action call."""


class MalformedArguments(ActionParseError):
    def __init__(self, name: str, detail: str):
        super().__init__(f"{name}: {detail}")
        self.name = name
        self.detail = detail


class SafetyError(ValueError):
    pass


class OutOfBounds(SafetyError):
    def __init__(self, x: int, y: int, bounds: "ScreenBounds"):
        super().__init__(f"({x}, {y}) outside {bounds.width}x{bounds.height} screen")
        self.x, self.y, self.bounds = x, y, bounds


@dataclass(frozen=True)
class ScreenBounds:
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"invalid screen bounds {self.width}x{self.height}")

    def contains(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height


@dataclass(frozen=True)
class Click:
    x: int
    y: int
    kind = "click"


@dataclass(frozen=True)
class Type:
    text: str
    kind = "type"


@dataclass(frozen=True)
class Hotkey:
    keys: tuple[str, ...]
    kind = "hotkey"

    def __post_init__(self) -> None:
        if len(self.keys) < 2:
            raise ValueError("hotkey needs at least two keys")
        for k in self.keys:
            if k not in KEY_NAMES:
                raise ValueError(f"unknown key {k!r}")


@dataclass(frozen=True)
class Press:
    key: str
    kind = "press"

    def __post_init__(self) -> None:
        if self.key not in KEY_NAMES:
            raise ValueError(f"unknown key {self.key!r}")


@dataclass(frozen=True)
class Scroll:
    x: int
    y: int
    direction: str
    kind = "scroll"

    def __post_init__(self) -> None:
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown scroll direction {self.direction!r}")


@dataclass(frozen=True)
class Wait:
    seconds: float
    kind = "wait"

    def __post_init__(self) -> None:
        if not (math.isfinite(self.seconds) and 0 < self.seconds <= MAX_WAIT_SECONDS):
            raise ValueError(f"wait duration must be in (0, {MAX_WAIT_SECONDS}], got {self.seconds}")


@dataclass(frozen=True)
class Finish:
    outcome: str
    kind = "finish"

    def __post_init__(self) -> None:
        if self.outcome not in OUTCOMES:
            raise ValueError(f"finish outcome must be success or failure, got {self.outcome!r}")


Action = Union[Click, Type, Hotkey, Press, Scroll, Wait, Finish]

_CALL_RE = re.compile(r"\b(click|type|hotkey|press|scroll|wait|finish)\s*\(", re.IGNORECASE)
_TOKEN_RE = re.compile(
    r"""\s*(?:
        (?P<dq>"(?:[^"\\]|\\.)*")
      | (?P<sq>'(?:[^'\\]|\\.)*')
      | (?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)(?![\w.])
      | (?P<word>[A-Za-z_][A-Za-z0-9_+\-]*)
    )\s*""",
    re.VERBOSE | re.DOTALL,
)
_SQ_ESCAPES = re.compile(r"\\(.)", re.DOTALL)


@dataclass(frozen=True)
class _Arg:
    kind: str  # "str", "num", "word"
    raw: str
    value: object


def _split_args(text: str, start: int, name: str) -> list[_Arg]:
    """Tokenize the argument list that begins right after ``(``."""
    args: list[_Arg] = []
    pos = start
    if re.match(r"\s*\)", text[pos:]):
        return args
    while True:
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise MalformedArguments(name, f"unreadable argument at offset {pos}")
        if m.group("dq") is not None:
            try:
                value = json.loads(m.group("dq"), strict=False)
            except json.JSONDecodeError as exc:
                raise MalformedArguments(name, f"bad string escape: {exc.msg}") from None
            args.append(_Arg("str", m.group("dq"), value))
        elif m.group("sq") is not None:
            value = _SQ_ESCAPES.sub(r"\1", m.group("sq")[1:-1])
            args.append(_Arg("str", m.group("sq"), value))
        elif m.group("num") is not None:
            args.append(_Arg("num", m.group("num"), m.group("num")))
        else:
            args.append(_Arg("word", m.group("word"), m.group("word")))
        pos = m.end()
        if pos >= len(text):
            raise MalformedArguments(name, "unterminated argument list")
        if text[pos] == ")":
            return args
        if text[pos] != ",":
            raise MalformedArguments(name, f"expected ',' or ')' at offset {pos}")
        pos += 1


def _as_int(name: str, arg: _Arg) -> int:
    if arg.kind != "num" or not re.fullmatch(r"[-+]?\d+", arg.raw):
        raise MalformedArguments(name, f"expected an integer, got {arg.raw}")
    return int(arg.raw)


def _as_text(arg: _Arg) -> str:
    return str(arg.value)


def _as_key(name: str, arg: _Arg) -> str:
    key = _as_text(arg).strip().lower()
    if key not in KEY_NAMES:
        raise MalformedArguments(name, f"unknown key {key!r}")
    return key


def _arity(name: str, args: list[_Arg], n: int) -> None:
    if len(args) != n:
        raise MalformedArguments(name, f"expected {n} argument(s), got {len(args)}")


def _build(name: str, args: list[_Arg]) -> Action:
    if name == "click":
        _arity(name, args, 2)
        return Click(_as_int(name, args[0]), _as_int(name, args[1]))
    if name == "type":
        _arity(name, args, 1)
        return Type(_as_text(args[0]))
    if name == "hotkey":
        if len(args) < 2:
            raise MalformedArguments(name, "needs at least two keys")
        return Hotkey(tuple(_as_key(name, a) for a in args))
    if name == "press":
        _arity(name, args, 1)
        return Press(_as_key(name, args[0]))
    if name == "scroll":
        _arity(name, args, 3)
        direction = _as_text(args[2]).strip().lower()
        if direction not in DIRECTIONS:
            raise MalformedArguments(name, f"unknown direction {direction!r}")
        return Scroll(_as_int(name, args[0]), _as_int(name, args[1]), direction)
    if name == "wait":
        _arity(name, args, 1)
        if args[0].kind != "num":
            raise MalformedArguments(name, f"expected a duration, got {args[0].raw}")
        seconds = float(args[0].raw)
        if not (math.isfinite(seconds) and 0 < seconds <= MAX_WAIT_SECONDS):
            raise MalformedArguments(name, f"duration {args[0].raw} outside (0, {MAX_WAIT_SECONDS:g}]")
        return Wait(seconds)
    # finish
    _arity(name, args, 1)
    outcome = _as_text(args[0]).strip().lower()
    if outcome not in OUTCOMES:
        raise MalformedArguments(name, f"unknown outcome {outcome!r}")
    return Finish(outcome)


def parse_action(text: str) -> Action:
    """Extract the first action call from free-form model output.

    Raises :class:`NoAction` when no action name is followed by ``(`` and
    :class:`MalformedArguments` when the first such call has bad arguments.
    """
    m = _CALL_RE.search(text)
    if m is None:
        raise NoAction("no action call found")
    name = m.group(1).lower()
    return _build(name, _split_args(text, m.end(), name))


def render_action(cmd: Action) -> str:
    """Canonical lowercase call form; :func:`parse_action` inverts it."""
    if isinstance(cmd, Click):
        return f"click({cmd.x}, {cmd.y})"
    if isinstance(cmd, Type):
        return f"type({json.dumps(cmd.text, ensure_ascii=False)})"
    if isinstance(cmd, Hotkey):
        return f"hotkey({', '.join(cmd.keys)})"
    if isinstance(cmd, Press):
        return f"press({cmd.key})"
    if isinstance(cmd, Scroll):
        return f"scroll({cmd.x}, {cmd.y}, {cmd.direction})"
    if isinstance(cmd, Wait):
        return f"wait({float(cmd.seconds)!r})"
    if isinstance(cmd, Finish):
        return f"finish({cmd.outcome})"
    raise TypeError(f"not an action: {cmd!r}")


def validate_action(cmd: Action, bounds: ScreenBounds) -> None:
    """Raise :class:`OutOfBounds` for pointer actions off the screen."""
    if isinstance(cmd, (Click, Scroll)) and not bounds.contains(cmd.x, cmd.y):
        raise OutOfBounds(cmd.x, cmd.y, bounds)


def is_input(cmd: Action) -> bool:
    return cmd.kind in INPUT_KINDS
