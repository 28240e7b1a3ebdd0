from __future__ import annotations

import json
import shutil

import pytest

from guiplay.developer import Candidate
from guiplay.harness import (
    BenchmarkManifest,
    SampleRecord,
    evaluate_sample,
    recompute,
    run_benchmark,
    run_metrics,
)
from guiplay.llm import LLMProvider

GOOD = "def hits_pipe(bird, pipe):\n    bx, by, bw, bh = bird\n    px, py, pw, ph = pipe\n    return bx < px + pw and px < bx + bw and by < py + ph and py < by + bh\n"


@pytest.fixture
def manifest(fixtures_dir):
    return BenchmarkManifest.load(fixtures_dir / "benchmark.json")


@pytest.fixture
def provider(fixtures_dir):
    return LLMProvider(f"mock:{fixtures_dir / 'mock'}")


def flappy(manifest):
    return next(t for t in manifest.tasks if t.id == "flappy_collision")


def test_manifest_loads_bundled_benchmark(manifest):
    assert [t.id for t in manifest.tasks] == ["flappy_collision", "game2048_glyphs"]
    assert (manifest.n, manifest.ks, manifest.runs, manifest.seeds) == (3, [1, 3], 5, [0, 1, 2, 3, 4])
    assert manifest.skipped == {}


@pytest.mark.parametrize("kwargs", [dict(n=2, ks=[3]), dict(runs=2, seeds=[0, 0]), dict(runs=2, seeds=[0]), dict(n=0)])
def test_manifest_validation(kwargs):
    with pytest.raises(ValueError):
        BenchmarkManifest([], **kwargs)


def test_overrides_reseed(manifest):
    m = manifest.with_overrides(runs=2, seed_base=10)
    assert (m.runs, m.seeds) == (2, [10, 11])


def test_record_gating_invariant():
    with pytest.raises(ValueError):
        SampleRecord("t", 0, 0, 0, "fail", "pass", "fail", 1, "x")
    with pytest.raises(ValueError):
        SampleRecord("t", 0, 0, 0, "pass", "fail", "pass", 1, "x")
    r = SampleRecord("t", 0, 0, 0, "pass", "pass", "fail", 1, "x", "play: crash")
    assert SampleRecord.from_dict(r.to_dict()) == r


def test_syntax_error_fails_every_stage(manifest, provider, tmp_path):
    rec = evaluate_sample(flappy(manifest), Candidate(0, "def hits_pipe(bird, pipe)\n    return True\n"), tmp_path / "s", provider, 0)
    assert (rec.exec, rec.passed, rec.play) == ("fail", "fail", "fail")
    assert rec.reason == "exec: validator failed"
    assert not (tmp_path / "s" / "unit").exists()
    assert not (tmp_path / "s" / "play").exists()


def test_passthrough_passes_unit_tests_but_not_play(manifest, provider, tmp_path):
    rec = evaluate_sample(flappy(manifest), Candidate(0, "def hits_pipe(bird, pipe):\n    return False\n"), tmp_path / "s", provider, 0)
    assert (rec.exec, rec.passed, rec.play) == ("pass", "pass", "fail")
    assert rec.reason.startswith("play:")
    report = json.loads((tmp_path / "s" / "behavior.json").read_text())
    assert [c["name"] for c in report["constraint_results"] if c["status"] == "violated"] == ["collision_ends_game"]


def test_correct_candidate_passes_all(manifest, provider, tmp_path):
    rec = evaluate_sample(flappy(manifest), Candidate(0, GOOD, tokens=7), tmp_path / "s", provider, 0)
    assert (rec.exec, rec.passed, rec.play, rec.tokens) == ("pass", "pass", "pass", 7)
    # the task repository itself is never modified
    assert "NotImplementedError" in (flappy(manifest).spec.repo_root / "game/physics.py").read_text()


def test_empty_candidate_fails_exec(manifest, provider, tmp_path):
    rec = evaluate_sample(flappy(manifest), Candidate(0, ""), tmp_path / "s", provider, 0)
    assert (rec.exec, rec.reason) == ("fail", "exec: empty candidate")


def test_run_metrics_counts_tokens_of_first_k():
    recs = [SampleRecord("a", i, 0, 0, "pass", "pass", "pass" if i == 0 else "fail", 100, "x") for i in range(3)]
    m = run_metrics(recs, 3, [1, 3])
    assert m["play@1"] == pytest.approx(1 / 3)
    # Play% / (tokens / (N * 1000)) with N = 1 task
    assert m["efficiency@1"] == pytest.approx((100 / 3) / (100 / 1000))
    assert m["efficiency@3"] == pytest.approx(100 / (300 / 1000))


@pytest.fixture
def mixed_fixtures(fixtures_dir, tmp_path):
    root = tmp_path / "fixtures"
    shutil.copytree(fixtures_dir, root)
    white = json.dumps({"reply": "```python\ndef glyph_color(value, tile_rgb):\n    return (255, 255, 255)\n```", "tokens_in": 100, "tokens_out": 20})
    (root / "mock" / "game2048_glyphs" / "developer.jsonl").write_text((white + "\n") * 3)
    return root


def test_mixed_suite_scores_half(mixed_fixtures, tmp_path):
    m = BenchmarkManifest.load(mixed_fixtures / "benchmark.json").with_overrides(runs=1)
    result = run_benchmark(m, LLMProvider(m.llm), tmp_path / "out")
    play = result.report.metrics["play@1"]
    assert play.mean == pytest.approx(0.5)
    assert result.report.metrics["pass@1"].mean == pytest.approx(1.0)
    assert not result.all_passed and result.infra_failures == 0
    stored, fresh = recompute(tmp_path / "out")
    assert stored == fresh


def test_missing_fixture_is_skipped(mixed_fixtures, tmp_path):
    data = json.loads((mixed_fixtures / "benchmark.json").read_text())
    data["tasks"][1]["repo"] = "repos/nowhere"
    (mixed_fixtures / "broken.json").write_text(json.dumps(data))
    m = BenchmarkManifest.load(mixed_fixtures / "broken.json")
    assert [t.id for t in m.tasks] == ["flappy_collision"]
    assert list(m.skipped) == ["game2048_glyphs"]
    result = run_benchmark(m.with_overrides(runs=1), LLMProvider(m.llm), tmp_path / "out")
    summary = json.loads((tmp_path / "out" / "records.jsonl").read_text().splitlines()[-1])
    assert summary["N"] == 1 and list(summary["skipped"]) == ["game2048_glyphs"]
    assert result.report.metrics["play@1"].mean == pytest.approx(1.0)


def test_missing_mock_script_is_an_infra_failure(mixed_fixtures, tmp_path):
    (mixed_fixtures / "mock" / "flappy_collision" / "developer.jsonl").unlink()
    m = BenchmarkManifest.load(mixed_fixtures / "benchmark.json").with_overrides(runs=1)
    result = run_benchmark(m, LLMProvider(m.llm), tmp_path / "out")
    assert result.infra_failures == 3
