"""Collision rules for the bird and the pipes."""

# Rectangles are (x, y, width, height) in canvas pixels, y growing downward.


def clamp(value, lo, hi):
    return max(lo, min(hi, value))


def hits_pipe(bird, pipe):
    """Return True when the bird rectangle overlaps the pipe rectangle."""
    raise NotImplementedError


def falling(velocity):
    return velocity > 0
