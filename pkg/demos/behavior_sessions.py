"""Drive the bundled virtual games with scripted agents and read the verdicts.

The buggy variants compile and run fine. Only interaction exposes them: the
bird flies through pipes, and the 2048 digits are painted in the tile colour.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

from guiplay.llm import LLMProvider
from guiplay.tester import bundled_asset, load_profile, run_profile

scripts = {
    "flappy": bundled_asset("scripts", "flappy_probe.jsonl"),
    "game2048": bundled_asset("scripts", "game2048_play.jsonl"),
}

out_root = Path(tempfile.mkdtemp(prefix="guiplay-demo-"))
for name in ("flappy_ok", "flappy_passthrough", "game2048_ok", "game2048_white_on_white"):
    provider = LLMProvider(f"mock:{scripts[name.split('_')[0]]}")
    report = run_profile(load_profile(name), provider, seed=7, out_dir=out_root / name)
    print(f"{name:26s} {report.verdict:4s} steps={report.steps_used:2d} reason={report.reason}")
    for res in report.violated():
        print(f"{'':26s} violated {res.name}: {res.evidence}")

# Frames, prompts and every decision are kept next to each trajectory.
print("trajectories under", out_root)
