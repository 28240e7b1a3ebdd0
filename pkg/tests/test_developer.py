from __future__ import annotations

import json
import re

import pytest

from guiplay.developer import TaskSpec, context_search, generate_candidates, insert_candidate, run_shell_tool
from guiplay.llm import LLMSession, MockBackend, MockEntry
from guiplay.trajectory import Trajectory, load

CODE = "```python\ndef glyph_color(value, tile_rgb):\n    return (0, 0, 0)\n```"


def task_for(repo):
    return TaskSpec("g", "def glyph_color(value, tile_rgb)", "pick a digit colour", repo, "game/tiles.py", "glyph_color")


def session(replies):
    return LLMSession(MockBackend([MockEntry(r, tokens_in=10, tokens_out=5) for r in replies]))


def test_context_search_finds_definition(game2048_repo):
    hits = context_search("def swipe", game2048_repo)
    assert [(h.path, h.line) for h in hits] == [("game/board.py", 6)]
    assert "slide(" in hits[0].snippet


def test_context_search_empty_and_stable(game2048_repo):
    assert context_search("no such text anywhere", game2048_repo) == []
    assert context_search("def", game2048_repo) == context_search("def", game2048_repo)
    hits = context_search("def", game2048_repo, max_hits=50)
    assert [(h.path, h.line) for h in hits] == sorted((h.path, h.line) for h in hits)


def test_context_search_regex_and_errors(game2048_repo):
    assert context_search(r"def \w+_color", game2048_repo, regex=True)[0].path == "game/tiles.py"
    with pytest.raises(re.error):
        context_search("(", game2048_repo, regex=True)
    (game2048_repo / "blob.bin").write_bytes(b"\xff\xfe\x00def")
    skipped = []
    context_search("def", game2048_repo, skipped=skipped)
    assert skipped == ["blob.bin"]


def test_task_spec_anchor_must_be_unique(game2048_repo):
    task_for(game2048_repo).validate()
    bad = TaskSpec("g", "", "", game2048_repo, "game/tiles.py", "nope")
    with pytest.raises(ValueError):
        bad.validate()
    with pytest.raises(FileNotFoundError):
        TaskSpec("g", "", "", game2048_repo, "game/missing.py", "x").validate()


def test_three_candidates(game2048_repo):
    cands = generate_candidates(task_for(game2048_repo), session([CODE] * 3), 3)
    assert [c.index for c in cands] == [0, 1, 2]
    assert all("return (0, 0, 0)" in c.code for c in cands)
    assert all(c.tokens == 15 for c in cands)


def test_prose_twice_gives_empty_candidate(game2048_repo):
    cands = generate_candidates(task_for(game2048_repo), session([CODE, "Thinking.", "Still thinking.", CODE]), 3)
    assert [c.empty for c in cands] == [False, True, False]


def test_tool_calls_are_counted_and_recorded(game2048_repo, tmp_path):
    # the final entry only matches if the refused shell call was reported back
    entries = [
        MockEntry("tool: search def swipe\ntool: read game/tiles.py"),
        MockEntry("tool: shell rm -rf game", match="def swipe"),
        MockEntry(CODE, match="refused"),
    ]
    with Trajectory(tmp_path) as t:
        (cand,) = generate_candidates(task_for(game2048_repo), LLMSession(MockBackend(entries)), 1, t)
    uses = [e for e in load(tmp_path) if e.kind == "tool_use"]
    assert cand.tool_calls == len(uses) == 3
    assert (game2048_repo / "game").is_dir()


def test_shell_tool_is_read_only(game2048_repo):
    assert run_shell_tool("rm -rf .", game2048_repo).startswith("refused")
    assert run_shell_tool("cat ../../etc/passwd", game2048_repo).startswith("refused")
    assert "tiles.py" in run_shell_tool("ls game", game2048_repo)


def test_generation_is_deterministic(game2048_repo):
    a = generate_candidates(task_for(game2048_repo), session(["tool: search glyph", CODE, CODE]), 2)
    b = generate_candidates(task_for(game2048_repo), session(["tool: search glyph", CODE, CODE]), 2)
    assert [(c.code, c.tool_calls, c.tokens) for c in a] == [(c.code, c.tool_calls, c.tokens) for c in b]


def test_insert_touches_only_the_anchor(game2048_repo):
    path = game2048_repo / "game" / "tiles.py"
    before = path.read_text()
    board = (game2048_repo / "game" / "board.py").read_bytes()
    insert_candidate(task_for(game2048_repo), "def glyph_color(value, tile_rgb):\n    return (1, 2, 3)\n")
    after = path.read_text()
    head = before.split("def glyph_color")[0]
    assert after.startswith(head)
    assert after.endswith("    return (1, 2, 3)\n")
    assert (game2048_repo / "game" / "board.py").read_bytes() == board


def test_insert_reindents_methods(tmp_path):
    (tmp_path / "m.py").write_text("class A:\n    def f(self):\n        return 1\n\n    def g(self):\n        return 2\n")
    task = TaskSpec("t", "", "", tmp_path, "m.py", "f")
    insert_candidate(task, "def f(self):\n    return 10\n")
    assert (tmp_path / "m.py").read_text() == "class A:\n    def f(self):\n        return 10\n\n    def g(self):\n        return 2\n"
