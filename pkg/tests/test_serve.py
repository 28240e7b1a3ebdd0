from __future__ import annotations

import json

import numpy as np

from guiplay.actions import Press

from guiplay.cli import main as cli_main
from guiplay.sandbox import SandboxConfig, launch, wait_or_kill
from guiplay.targets import Game2048App
from guiplay.targets.serve import HANDSHAKE_VAR, ProcessBackend


def test_process_backend_drives_served_target(tmp_path):
    hs = tmp_path / "hs"
    cfg = SandboxConfig(
        tmp_path,
        "{python} -m guiplay.targets --target game2048_ok",
        seed=7,
        timeout=60,
        env_extra={HANDSHAKE_VAR: str(hs)},
        capture_dir=tmp_path / "cap",
    )
    handle = launch(cfg, interactive=True)
    try:
        be = ProcessBackend(handle, hs)
        assert be.screen_size() == (400, 400)
        ref = Game2048App(7)
        assert np.array_equal(be.grab(None), ref.frame())
        be.press("right")
        ref.handle(Press("right"))
        assert be.probe() == json.loads(json.dumps(ref.probe()))
        assert be.locate_window("2048") is not None
        be.close()
    finally:
        rec = wait_or_kill(handle, timeout=10)
    assert rec.exit_status == 0
    assert any("start" in line for line in rec.log_lines())


def test_fixtures_smoke(capsys):
    assert cli_main(["fixtures", "--target", "flappy_ok", "--seed", "3", "--smoke"]) == 0
