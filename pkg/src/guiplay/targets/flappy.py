"""A minimal Flappy-style game with an optional collision defect."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

from . import rng

CANVAS_W, CANVAS_H = 288, 512
GROUND_Y = 462
GRAVITY = 1
FLAP_VELOCITY = -8
PIPE_SPEED = 2
PIPE_WIDTH = 52
PIPE_GAP = 130
PIPE_INTERVAL = 90
GAP_TOP_MIN, GAP_TOP_MAX = 60, 260
BIRD_X = 60
BIRD_SIZE = 24
BIRD_START_Y = 236

VARIANTS = ("flappy_ok", "flappy_passthrough")

Rect = tuple[int, int, int, int]  # x, y, width, height
Pipe = tuple[int, int, int]  # x, gap_top, gap_bottom


@dataclass(frozen=True)
class FlappyState:
    y: int
    velocity: int
    pipes: tuple[Pipe, ...]
    score: int = 0
    alive: bool = True
    tick: int = 0
    rng_state: int = 1


def _new_pipe(state: int, x: int) -> tuple[Pipe, int]:
    state, offset = rng.next_below(state, GAP_TOP_MAX - GAP_TOP_MIN + 1)
    top = GAP_TOP_MIN + offset
    return (x, top, top + PIPE_GAP), state


def new_game(seed: int) -> FlappyState:
    pipe, state = _new_pipe(rng.seed_state(seed), CANVAS_W)
    return FlappyState(BIRD_START_Y, 0, (pipe,), rng_state=state)


def bird_rect(state: FlappyState) -> Rect:
    return (BIRD_X, state.y, BIRD_SIZE, BIRD_SIZE)


def pipe_rects(pipe: Pipe) -> tuple[Rect, Rect]:
    x, top, bottom = pipe
    return (x, 0, PIPE_WIDTH, top), (x, bottom, PIPE_WIDTH, GROUND_Y - bottom)


def rects_overlap(a: Rect, b: Rect) -> bool:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return ax < bx + bw and bx < ax + aw and ay < by + bh and by < ay + ah


def touching_pipe(state: FlappyState) -> bool:
    bird = bird_rect(state)
    return any(rects_overlap(bird, r) for p in state.pipes for r in pipe_rects(p))


def step_flappy(
    state: FlappyState,
    flap: bool,
    variant: str = "flappy_ok",
    collide: Callable[[Rect, Rect], bool] | None = None,
) -> FlappyState:
    """Advance one tick.

    ``collide`` replaces the rectangle test used for pipe collisions; the
    passthrough variant skips pipe collisions entirely. The ground always kills.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown flappy variant {variant!r}")
    if not state.alive:
        return state
    velocity = FLAP_VELOCITY if flap else state.velocity + GRAVITY
    y = max(0, state.y + velocity)
    score = state.score
    pipes: list[Pipe] = []
    for x, top, bottom in state.pipes:
        nx = x - PIPE_SPEED
        if x + PIPE_WIDTH >= BIRD_X > nx + PIPE_WIDTH:
            score += 1
        if nx + PIPE_WIDTH > 0:
            pipes.append((nx, top, bottom))
    tick = state.tick + 1
    rng_state = state.rng_state
    if tick % PIPE_INTERVAL == 0:
        pipe, rng_state = _new_pipe(rng_state, CANVAS_W)
        pipes.append(pipe)

    alive = True
    if y + BIRD_SIZE >= GROUND_Y:
        y, alive = GROUND_Y - BIRD_SIZE, False
    nxt = replace(state, y=y, velocity=velocity, pipes=tuple(pipes), score=score, tick=tick, rng_state=rng_state)
    if variant == "flappy_ok" and alive:
        test = collide or rects_overlap
        bird = bird_rect(nxt)
        if any(test(bird, r) for p in nxt.pipes for r in pipe_rects(p)):
            alive = False
    return replace(nxt, alive=alive)


def probe(state: FlappyState) -> dict:
    return {
        "game": "flappy",
        "bird": {"y": state.y, "velocity": state.velocity},
        "pipes": [list(p) for p in state.pipes],
        "score": state.score,
        "alive": state.alive,
        "tick": state.tick,
    }
