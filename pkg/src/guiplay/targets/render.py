"""Fixed-palette rasterizers for the virtual games."""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import flappy
from .game2048 import SIZE, Board2048

RGB = tuple[int, int, int]

# 3x5 block digits, rows top to bottom.
DIGITS = {
    "0": ("111", "101", "101", "101", "111"),
    "1": ("010", "110", "010", "010", "111"),
    "2": ("111", "001", "111", "100", "111"),
    "3": ("111", "001", "111", "001", "111"),
    "4": ("101", "101", "111", "001", "001"),
    "5": ("111", "100", "111", "001", "111"),
    "6": ("111", "100", "111", "101", "111"),
    "7": ("111", "001", "010", "010", "010"),
    "8": ("111", "101", "111", "101", "111"),
    "9": ("111", "101", "111", "001", "111"),
}

BOARD_PX = 400
CELL_GAP = 8
CELL_PX = 90
GLYPH_INSET = 10

BOARD_BG: RGB = (187, 173, 160)
EMPTY_CELL: RGB = (205, 193, 180)
WHITE: RGB = (255, 255, 255)
DARK_TEXT: RGB = (119, 110, 101)
LIGHT_TEXT: RGB = (249, 246, 242)
TILE_COLORS: dict[int, RGB] = {
    2: (238, 228, 218),
    4: (237, 224, 200),
    8: (242, 177, 121),
    16: (245, 149, 99),
    32: (246, 124, 95),
    64: (246, 94, 59),
    128: (237, 207, 114),
    256: (237, 204, 97),
    512: (237, 200, 80),
    1024: (237, 197, 63),
    2048: (237, 194, 46),
}
BIG_TILE: RGB = (60, 58, 50)

SKY: RGB = (112, 197, 206)
PIPE: RGB = (83, 160, 60)
GROUND: RGB = (222, 216, 149)
BIRD: RGB = (250, 200, 40)
DEATH_BAND: RGB = (200, 40, 40)

GlyphColor = Callable[[int, RGB], RGB]


def canvas(width: int, height: int, color: RGB) -> np.ndarray:
    px = np.empty((height, width, 4), dtype=np.uint8)
    px[..., :3] = color
    px[..., 3] = 255
    return px


def fill(px: np.ndarray, x: int, y: int, w: int, h: int, color: RGB) -> None:
    H, W = px.shape[:2]
    x0, y0 = max(0, x), max(0, y)
    x1, y1 = min(W, x + w), min(H, y + h)
    if x1 > x0 and y1 > y0:
        px[y0:y1, x0:x1, :3] = color


def draw_number(px: np.ndarray, text: str, box: tuple[int, int, int, int], color: RGB, max_scale: int = 10) -> None:
    """Centre block digits inside ``box`` at the largest scale that fits."""
    bx, by, bw, bh = box
    cols = 4 * len(text) - 1
    scale = max(1, min(max_scale, bw // cols, bh // 5))
    x = bx + (bw - cols * scale) // 2
    y = by + (bh - 5 * scale) // 2
    for ch in text:
        for r, bits in enumerate(DIGITS[ch]):
            for c, bit in enumerate(bits):
                if bit == "1":
                    fill(px, x + c * scale, y + r * scale, scale, scale, color)
        x += 4 * scale


def cell_rect(row: int, col: int) -> tuple[int, int, int, int]:
    return (CELL_GAP + col * (CELL_PX + CELL_GAP), CELL_GAP + row * (CELL_PX + CELL_GAP), CELL_PX, CELL_PX)


def glyph_box(row: int, col: int) -> tuple[int, int, int, int]:
    x, y, w, h = cell_rect(row, col)
    return (x + GLYPH_INSET, y + GLYPH_INSET, w - 2 * GLYPH_INSET, h - 2 * GLYPH_INSET)


def default_glyph_color(value: int, tile: RGB) -> RGB:
    return DARK_TEXT if value <= 4 else LIGHT_TEXT


def render_2048(board: Board2048, variant: str = "game2048_ok", glyph_color: GlyphColor | None = None) -> np.ndarray:
    """``game2048_white_on_white`` paints every tile white and its digits in
    the tile colour, so numbers vanish while tile rectangles remain."""
    px = canvas(BOARD_PX, BOARD_PX, BOARD_BG)
    invisible = variant == "game2048_white_on_white"
    for r in range(SIZE):
        for c in range(SIZE):
            v = board.grid[r][c]
            x, y, w, h = cell_rect(r, c)
            if not v:
                fill(px, x, y, w, h, EMPTY_CELL)
                continue
            tile = WHITE if invisible else TILE_COLORS.get(v, BIG_TILE)
            fill(px, x, y, w, h, tile)
            if invisible:
                ink = tile
            else:
                ink = (glyph_color or default_glyph_color)(v, tile)
            draw_number(px, str(v), glyph_box(r, c), tuple(int(t) for t in ink))
    return px


def render_flappy(state: flappy.FlappyState) -> np.ndarray:
    px = canvas(flappy.CANVAS_W, flappy.CANVAS_H, SKY)
    for pipe in state.pipes:
        for rect in flappy.pipe_rects(pipe):
            fill(px, *rect, PIPE)
    fill(px, 0, flappy.GROUND_Y, flappy.CANVAS_W, flappy.CANVAS_H - flappy.GROUND_Y, GROUND)
    fill(px, *flappy.bird_rect(state), BIRD)
    draw_number(px, str(state.score), (0, 12, flappy.CANVAS_W, 30), WHITE, max_scale=6)
    if not state.alive:
        fill(px, 0, 220, flappy.CANVAS_W, 48, DEATH_BAND)
    return px


# Minimum luma gap between ink and fill for a pixel to count as legible ink.
# The default palette's tightest pair (digits on 128) sits at about 41.
LEGIBLE_LUMA_GAP = 32.0


def luma(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114


def glyph_mask(pixels: np.ndarray, box: tuple[int, int, int, int], min_gap: float = LEGIBLE_LUMA_GAP) -> np.ndarray:
    """Legible ink in ``box``: pixels whose luma differs from the corner colour
    (the tile fill) by at least ``min_gap``."""
    x, y, w, h = box
    region = pixels[y : y + h, x : x + w, :3]
    return np.abs(luma(region) - luma(region[0, 0])) >= min_gap
