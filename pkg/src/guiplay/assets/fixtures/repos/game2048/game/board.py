"""Board moves, delegating to the reference rules."""

from guiplay.targets.game2048 import slide


def swipe(grid, direction):
    """Slide and merge ``grid`` toward ``direction``; returns (grid, points)."""
    return slide(tuple(tuple(row) for row in grid), direction)
