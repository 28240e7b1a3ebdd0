"""Repair a broken Flappy repository with a scripted two-patch conversation.

The first patch removes a syntax error but keeps a collision check that never
fires; the behavioral re-test catches that and the second patch fixes it.
"""

from __future__ import annotations

import shutil
import tempfile
from pathlib import Path

from guiplay.harness import ProjectManifest
from guiplay.llm import LLMProvider
from guiplay.refiner import repair_loop
from guiplay.tester import bundled_asset
from guiplay.trajectory import Trajectory, load

fixtures = bundled_asset("fixtures", "repair")
work = Path(tempfile.mkdtemp(prefix="guiplay-repair-"))
repo = work / "repo"
shutil.copytree(fixtures / "repo", repo)

project = ProjectManifest.load(fixtures / "project.json")
provider = LLMProvider(f"mock:{fixtures / 'mock_two_stage'}")

with Trajectory(work / "trajectory") as traj:
    llm = provider.session("refiner", None, 0, traj)
    outcome = repair_loop(repo, None, llm, project.profile, provider, project.refiner_config(), 0, work / "trajectory")

print("status:", outcome.status, "after", outcome.iterations_used, "iterations")
for event in load(work / "trajectory"):
    if event.kind in ("phase", "decision"):
        print(f"  {event.seq:3d} {event.kind:8s}", {k: v for k, v in event.payload.items() if k in ("name", "text", "iteration")})

print((repo / "game" / "physics.py").read_text())
