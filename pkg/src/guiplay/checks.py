"""Behavioral constraint checks evaluated over a test session's evidence."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .observer import ANIMATION_THRESHOLD, Frame, diff
from .sandbox import parse_playlog
from .targets import render

OK, VIOLATED = "ok", "violated"
BUILTIN_CHECKS = ("no_crash", "no_freeze")
FREEZE_CAPTURES = 3


@dataclass
class Observation:
    """A post-action capture with the target's state probe at that moment.

    Probes are oracle data for the checks below; they never reach the model.
    """

    frame_ref: str
    frame: Frame
    probe: dict | None = None
    action: str | None = None
    after_input: bool = False
    _change: tuple[int, float] | None = field(default=None, repr=False, compare=False)

    def change_from(self, prev: "Observation") -> float:
        """Changed-pixel fraction relative to ``prev``, cached per predecessor."""
        if self._change is None or self._change[0] != id(prev.frame):
            self._change = (id(prev.frame), diff(prev.frame, self.frame).changed_fraction)
        return self._change[1]


@dataclass
class Evidence:
    observations: list[Observation] = field(default_factory=list)
    logs: list[str] = field(default_factory=list)
    exit_status: int | None = None
    animation_threshold: float = ANIMATION_THRESHOLD


@dataclass(frozen=True)
class ConstraintResult:
    name: str
    status: str
    evidence: str

    @property
    def ok(self) -> bool:
        return self.status == OK

    def to_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "evidence": self.evidence}


Check = Callable[[Evidence], tuple[bool, str]]
CHECKS: dict[str, Check] = {}


def register(name: str) -> Callable[[Check], Check]:
    def deco(fn: Check) -> Check:
        CHECKS[name] = fn
        return fn

    return deco


@register("no_crash")
def no_crash(ev: Evidence) -> tuple[bool, str]:
    for e in parse_playlog(ev.logs):
        if e.is_crash:
            return False, f"log:{e.line_no}"
    if ev.exit_status not in (None, 0):
        return False, f"exit_status:{ev.exit_status}"
    last = ev.observations[-1].frame_ref if ev.observations else ""
    return True, last


@register("no_freeze")
def no_freeze(ev: Evidence) -> tuple[bool, str]:
    """Three consecutive captures after inputs that show no change."""
    static: list[str] = []
    obs = ev.observations
    for prev, cur in zip(obs, obs[1:]):
        if not cur.after_input:
            continue
        if cur.change_from(prev) > ev.animation_threshold:
            static = []
            continue
        static.append(cur.frame_ref)
        if len(static) >= FREEZE_CAPTURES:
            return False, ",".join(static)
    return True, obs[-1].frame_ref if obs else ""


def _last_probe(ev: Evidence, game: str) -> tuple[Observation | None, dict | None]:
    for o in reversed(ev.observations):
        if o.probe is not None and o.probe.get("game") == game:
            return o, o.probe
    return None, None


@register("collision_ends_game")
def collision_ends_game(ev: Evidence) -> tuple[bool, str]:
    """The bird must not survive any tick on which it overlaps a pipe."""
    obs, probe = _last_probe(ev, "flappy")
    if probe is None:
        return False, "no flappy state probe available"
    for tick, alive in probe.get("contacts", []):
        if alive:
            first = next(
                (o.frame_ref for o in ev.observations if o.probe and o.probe.get("tick", -1) >= tick),
                obs.frame_ref,
            )
            return False, f"{first} (pipe contact survived at tick {tick})"
    return True, obs.frame_ref


@register("visible_feedback")
def visible_feedback(ev: Evidence) -> tuple[bool, str]:
    """Every cell whose value changes on a merging move must change its drawn digits."""
    pairs = [
        (a, b)
        for a, b in zip(ev.observations, ev.observations[1:])
        if a.probe and b.probe and a.probe.get("game") == "2048" and b.probe.get("game") == "2048"
    ]
    if not pairs:
        return False, "no 2048 state probe available"
    for a, b in pairs:
        if b.probe["score"] <= a.probe["score"]:
            continue
        ga, gb = a.probe["grid"], b.probe["grid"]
        for r, row in enumerate(gb):
            for c, v in enumerate(row):
                if not v or v == ga[r][c]:
                    continue
                box = render.glyph_box(r, c)
                before = render.glyph_mask(a.frame.pixels, box)
                after = render.glyph_mask(b.frame.pixels, box)
                if np.array_equal(before, after):
                    return False, f"{b.frame_ref} (r{r + 1}c{c + 1} became {v} with no visible digit change)"
    return True, pairs[-1][1].frame_ref


def evaluate(names: list[str], ev: Evidence) -> list[ConstraintResult]:
    results = []
    for name in names:
        if name not in CHECKS:
            raise KeyError(f"unknown constraint {name!r}")
        ok, evidence = CHECKS[name](ev)
        results.append(ConstraintResult(name, OK if ok else VIOLATED, evidence))
    return results
