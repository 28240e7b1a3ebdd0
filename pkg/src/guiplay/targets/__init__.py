"""Deterministic virtual GUI targets used as headless test fixtures."""

from .apps import TARGET_IDS, FlappyApp, Game2048App, TargetApp, VirtualBackend, make_app

__all__ = ["TARGET_IDS", "FlappyApp", "Game2048App", "TargetApp", "VirtualBackend", "make_app"]
