from __future__ import annotations

import shutil
from pathlib import Path

import pytest

from guiplay.tester import bundled_asset

FIXTURES = bundled_asset("fixtures")


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def flappy_repo(tmp_path: Path) -> Path:
    dst = tmp_path / "flappy"
    shutil.copytree(FIXTURES / "repos" / "flappy", dst)
    return dst


@pytest.fixture
def game2048_repo(tmp_path: Path) -> Path:
    dst = tmp_path / "game2048"
    shutil.copytree(FIXTURES / "repos" / "game2048", dst)
    return dst


@pytest.fixture
def broken_repo(tmp_path: Path) -> Path:
    dst = tmp_path / "broken"
    shutil.copytree(FIXTURES / "repair" / "repo", dst)
    return dst
