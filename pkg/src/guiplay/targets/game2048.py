"""2048 rules on an immutable 4x4 board."""

from __future__ import annotations

from dataclasses import dataclass, replace

from . import rng

SIZE = 4
MOVES = ("up", "down", "left", "right")
SPAWN_TWO_PROBABILITY = 0.9

Grid = tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class Board2048:
    grid: Grid
    score: int = 0
    rng_state: int = 1
    over: bool = False

    def __post_init__(self) -> None:
        if len(self.grid) != SIZE or any(len(row) != SIZE for row in self.grid):
            raise ValueError("2048 grid must be 4x4")
        for row in self.grid:
            for v in row:
                if v != 0 and (v < 2 or v & (v - 1)):
                    raise ValueError(f"tile value {v} is not a power of two")
        if self.score < 0:
            raise ValueError("score must be non-negative")


def empty_grid() -> Grid:
    return tuple((0,) * SIZE for _ in range(SIZE))


def merge_line(line: tuple[int, ...]) -> tuple[tuple[int, ...], int]:
    """Slide a line toward index 0, merging each equal pair once.

    Returns the new line and the sum of merged tile values.
    """
    tiles = [v for v in line if v]
    out: list[int] = []
    gained = 0
    i = 0
    while i < len(tiles):
        if i + 1 < len(tiles) and tiles[i] == tiles[i + 1]:
            out.append(tiles[i] * 2)
            gained += tiles[i] * 2
            i += 2
        else:
            out.append(tiles[i])
            i += 1
    return tuple(out + [0] * (len(line) - len(out))), gained


def _lines(direction: str) -> list[list[tuple[int, int]]]:
    """Cell coordinates of each line, ordered from the edge tiles slide toward."""
    idx = range(SIZE)
    if direction == "left":
        return [[(r, c) for c in idx] for r in idx]
    if direction == "right":
        return [[(r, c) for c in reversed(idx)] for r in idx]
    if direction == "up":
        return [[(r, c) for r in idx] for c in idx]
    if direction == "down":
        return [[(r, c) for r in reversed(idx)] for c in idx]
    raise ValueError(f"unknown direction {direction!r}")


def slide(grid: Grid, direction: str) -> tuple[Grid, int]:
    """Move without spawning; returns ``(grid, score_delta)``."""
    cells = [list(row) for row in grid]
    gained = 0
    for coords in _lines(direction):
        merged, g = merge_line(tuple(grid[r][c] for r, c in coords))
        gained += g
        for (r, c), v in zip(coords, merged):
            cells[r][c] = v
    return tuple(tuple(row) for row in cells), gained


def can_move(grid: Grid) -> bool:
    return any(slide(grid, d)[0] != grid for d in MOVES)


def spawn(grid: Grid, state: int) -> tuple[Grid, int]:
    """Place a 2 (p = 0.9) or a 4 on a uniformly chosen empty cell, row-major."""
    empties = [(r, c) for r in range(SIZE) for c in range(SIZE) if grid[r][c] == 0]
    if not empties:
        return grid, state
    state, pick = rng.next_below(state, len(empties))
    state, u = rng.next_float(state)
    value = 2 if u < SPAWN_TWO_PROBABILITY else 4
    r, c = empties[pick]
    cells = [list(row) for row in grid]
    cells[r][c] = value
    return tuple(tuple(row) for row in cells), state


def new_board(seed: int) -> Board2048:
    grid, state = empty_grid(), rng.seed_state(seed)
    for _ in range(2):
        grid, state = spawn(grid, state)
    return Board2048(grid, 0, state, not can_move(grid))


def step_2048(board: Board2048, direction: str) -> Board2048:
    if board.over:
        raise ValueError("the game is over")
    moved, gained = slide(board.grid, direction)
    if moved == board.grid:
        return board
    grid, state = spawn(moved, board.rng_state)
    return replace(board, grid=grid, score=board.score + gained, rng_state=state, over=not can_move(grid))


def probe(board: Board2048) -> dict:
    return {
        "game": "2048",
        "grid": [list(row) for row in board.grid],
        "score": board.score,
        "over": board.over,
    }
