"""Tile styling."""


def tile_label(value):
    return str(value) if value else ""


def glyph_color(value, tile_rgb):
    """Colour of the digits drawn on a tile holding ``value`` filled with ``tile_rgb``."""
    raise NotImplementedError
