from __future__ import annotations

import sys

import pytest

from guiplay.sandbox import LaunchError, SandboxConfig, launch, parse_playlog, run, wait_or_kill

PY = "{python}"


def test_environment_is_scrubbed_and_seeded():
    cfg = SandboxConfig(".", "true", seed=9, env_extra={"EXTRA": "1"})
    env = cfg.environment({"PATH": "/bin", "SECRET_TOKEN": "x", "HOME": "/root"})
    assert env == {"PATH": "/bin", "HOME": "/root", "EXTRA": "1", "PLAY_SEED": "9"}


def test_python_placeholder():
    assert SandboxConfig(".", "{python} -c pass").argv()[0] == sys.executable


def test_invalid_timeout():
    with pytest.raises(ValueError):
        SandboxConfig(".", "true", timeout=0)


def test_run_captures_output_and_playlog(tmp_path, monkeypatch):
    monkeypatch.setenv("SECRET_TOKEN", "hunter2")
    script = (
        "import os, sys; print(os.environ.get('PLAY_SEED'), os.environ.get('SECRET_TOKEN'));"
        "print('noise', file=sys.stderr); print('PLAYLOG ERROR crash error=Boom', file=sys.stderr)"
    )
    rec = run(SandboxConfig(tmp_path, [sys.executable, "-c", script], seed=4, capture_dir=tmp_path / "c"))
    assert rec.ok and not rec.timed_out
    assert rec.stdout().strip() == "4 None"
    assert rec.log_lines() == ["PLAYLOG ERROR crash error=Boom"]
    (event,) = parse_playlog(rec.log_lines())
    assert event.is_crash and event.fields == {"error": "Boom"}


def test_timeout_kills_process_group(tmp_path):
    cfg = SandboxConfig(tmp_path, [sys.executable, "-c", "import time; time.sleep(30)"], timeout=0.5, capture_dir=tmp_path / "c")
    rec = run(cfg)
    assert rec.timed_out
    assert rec.wall_time < 10
    assert rec.exit_status != 0


def test_nonzero_exit(tmp_path):
    rec = run(SandboxConfig(tmp_path, [sys.executable, "-c", "raise SystemExit(3)"], capture_dir=tmp_path / "c"))
    assert rec.exit_status == 3 and not rec.ok


def test_launch_errors(tmp_path):
    with pytest.raises(LaunchError):
        launch(SandboxConfig(tmp_path / "missing", "true"))
    with pytest.raises(LaunchError):
        launch(SandboxConfig(tmp_path, "definitely-not-a-command-xyz", capture_dir=tmp_path / "c"))


def test_interactive_round_trip(tmp_path):
    code = "import sys\nfor line in sys.stdin:\n    print(line.strip().upper(), flush=True)"
    h = launch(SandboxConfig(tmp_path, [sys.executable, "-c", code], capture_dir=tmp_path / "c"), interactive=True)
    h.send("hello")
    assert h.readline().strip() == "HELLO"
    rec = wait_or_kill(h, timeout=5)
    assert rec.exit_status == 0
    assert "HELLO" in rec.stdout()


def test_parse_playlog_ignores_other_lines():
    events = parse_playlog(["hello", "PLAYLOG INFO start seed=1", "PLAYLOG", "PLAYLOG warn tick"])
    assert [(e.line_no, e.level, e.event) for e in events] == [(2, "INFO", "start"), (4, "WARN", "tick")]
    assert not events[0].is_crash
