"""Serve the game over stdin/stdout, or run a short headless smoke check."""

import argparse
import os
import sys

from guiplay.targets.apps import Game2048App
from guiplay.targets.serve import HANDSHAKE_VAR, serve, smoke

from game.tiles import glyph_color


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--smoke", action="store_true")
    args = parser.parse_args()
    app = Game2048App(int(os.environ.get("PLAY_SEED", "0")), "game2048_ok", glyph_color=glyph_color)
    if args.smoke:
        try:
            return smoke(app)
        except Exception as exc:
            print(f"PLAYLOG ERROR crash error={type(exc).__name__}", file=sys.stderr)
            raise
    return serve(app, os.environ.get(HANDSHAKE_VAR, "frames"))


if __name__ == "__main__":
    sys.exit(main())
