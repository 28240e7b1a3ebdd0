"""Benchmark orchestration: generate, gate through three stages, score, report."""

from __future__ import annotations

import json
import os
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .developer import Candidate, TaskSpec, generate_candidates, insert_candidate
from .llm import LLMError, LLMProvider
from .metrics import (
    STAGES,
    MetricDomainError,
    MetricReport,
    MetricSummary,
    SampleOutcomes,
    TokenLedger,
    aggregate_stage,
    efficiency_at_k,
)
from .refiner import RefinerConfig, smoke_run
from .sandbox import LaunchError, SandboxConfig, run
from .tester import AppProfile, load_profile, run_profile
from .trajectory import Trajectory, TrajectoryWriteError

SMOKE_SECONDS = 5.0
RECORDS_FILE = "records.jsonl"
SUMMARY_FILE = "summary.txt"
TIMESTAMPS_FILE = "timestamps.json"
_COPY_IGNORE = shutil.ignore_patterns(".sandbox", "__pycache__", ".git")


@dataclass
class ProjectManifest:
    validator_cmd: str
    run_cmd: str = ""
    test_cmd: str = ""
    launch_cmd: str = ""
    profile: AppProfile | None = None
    focus_files: list[str] = field(default_factory=list)

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | os.PathLike = ".") -> "ProjectManifest":
        prof = data.get("profile")
        if isinstance(prof, dict):
            profile = AppProfile.from_dict(prof)
        elif isinstance(prof, str):
            p = Path(prof)
            profile = load_profile(p if p.is_absolute() else Path(base_dir) / p)
        else:
            profile = None
        return cls(
            validator_cmd=data.get("validator_cmd", ""),
            run_cmd=data.get("run_cmd", ""),
            test_cmd=data.get("test_cmd", ""),
            launch_cmd=data.get("launch_cmd", ""),
            profile=profile,
            focus_files=list(data.get("focus_files", [])),
        )

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ProjectManifest":
        p = Path(path)
        return cls.from_dict(json.loads(p.read_text(encoding="utf-8")), p.parent)

    def refiner_config(self, max_iterations: int = 6) -> RefinerConfig:
        return RefinerConfig(
            max_iterations=max_iterations,
            validator_cmd=self.validator_cmd,
            run_cmd=self.run_cmd,
            launch_cmd=self.launch_cmd,
            focus_files=list(self.focus_files),
            smoke_timeout=SMOKE_SECONDS,
        )


@dataclass
class BenchmarkTask:
    spec: TaskSpec
    project: ProjectManifest

    @property
    def id(self) -> str:
        return self.spec.task_id


@dataclass
class BenchmarkManifest:
    tasks: list[BenchmarkTask]
    n: int = 3
    ks: list[int] = field(default_factory=lambda: [1, 3])
    runs: int = 5
    seeds: list[int] = field(default_factory=lambda: list(range(5)))
    llm: str | None = None
    skipped: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.ks or any(k < 1 or k > self.n for k in self.ks):
            raise ValueError(f"every k must lie in [1, n={self.n}], got {self.ks}")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if len(self.seeds) != self.runs:
            raise ValueError(f"need one seed per run: {len(self.seeds)} seeds for {self.runs} runs")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "BenchmarkManifest":
        p = Path(path)
        data = json.loads(p.read_text(encoding="utf-8"))
        base = p.parent
        tasks, skipped = [], {}
        for t in data["tasks"]:
            repo = Path(t["repo"])
            repo = repo if repo.is_absolute() else base / repo
            spec = TaskSpec(t["id"], t.get("signature", ""), t.get("requirement", ""), repo, t["target_file"], t["anchor"])
            try:
                spec.validate()
                project = ProjectManifest.from_dict(t.get("project", {}), base)
            except (OSError, ValueError) as exc:
                skipped[t["id"]] = str(exc)
                continue
            tasks.append(BenchmarkTask(spec, project))
        runs = int(data.get("runs", 5))
        seeds = data.get("seeds")
        if seeds is None:
            start = int(data.get("seed_base", 0))
            seeds = list(range(start, start + runs))
        llm = data.get("llm")
        if llm and llm.startswith("mock:") and not Path(llm[5:]).is_absolute():
            llm = "mock:" + str(base / llm[5:])
        return cls(tasks, int(data.get("n", 3)), list(data.get("ks", [1, 3])), runs, list(seeds), llm, skipped)

    def with_overrides(
        self,
        runs: int | None = None,
        n: int | None = None,
        ks: Sequence[int] | None = None,
        seed_base: int | None = None,
    ) -> "BenchmarkManifest":
        runs = self.runs if runs is None else runs
        if seed_base is not None:
            seeds = list(range(seed_base, seed_base + runs))
        elif runs == self.runs:
            seeds = list(self.seeds)
        else:
            seeds = list(range(self.seeds[0], self.seeds[0] + runs))
        return replace(
            self,
            n=self.n if n is None else n,
            ks=list(self.ks if ks is None else ks),
            runs=runs,
            seeds=seeds,
        )


PASS, FAIL = "pass", "fail"


@dataclass(frozen=True)
class SampleRecord:
    task_id: str
    sample_index: int
    run: int
    seed: int
    exec: str
    passed: str
    play: str
    tokens: int
    trajectory: str
    reason: str = ""

    def __post_init__(self) -> None:
        for v in (self.exec, self.passed, self.play):
            if v not in (PASS, FAIL):
                raise ValueError(f"stage outcome must be pass or fail, got {v!r}")
        if self.play == PASS and self.passed != PASS:
            raise ValueError("play cannot pass when unit tests did not")
        if self.passed == PASS and self.exec != PASS:
            raise ValueError("unit tests cannot pass when execution did not")

    @property
    def infra(self) -> bool:
        return self.reason.startswith("infra")

    def stage(self, name: str) -> bool:
        return {"exec": self.exec, "pass": self.passed, "play": self.play}[name] == PASS

    def to_dict(self) -> dict:
        return {
            "type": "sample",
            "task_id": self.task_id,
            "sample_index": self.sample_index,
            "run": self.run,
            "seed": self.seed,
            "exec": self.exec,
            "pass": self.passed,
            "play": self.play,
            "tokens": self.tokens,
            "trajectory": self.trajectory,
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SampleRecord":
        return cls(
            d["task_id"], d["sample_index"], d["run"], d["seed"], d["exec"], d["pass"], d["play"],
            d["tokens"], d["trajectory"], d.get("reason", ""),
        )


def _outcome(ok: bool) -> str:
    return PASS if ok else FAIL


def evaluate_sample(
    task: BenchmarkTask,
    candidate: Candidate,
    work_dir: str | os.PathLike,
    provider: LLMProvider,
    seed: int,
    run_index: int = 0,
    out_root: str | os.PathLike | None = None,
) -> SampleRecord:
    """Score one candidate through exec, unit tests and behavioral play.

    The candidate goes into a fresh copy of the task repository under
    ``work_dir``. A stage runs only when the previous one passed; skipped
    stages are recorded as fail.
    """
    work = Path(work_dir)
    root = Path(out_root) if out_root is not None else work
    ref = work.relative_to(root).as_posix() if work.is_relative_to(root) else str(work)
    stages = {"exec": False, "pass": False, "play": False}

    def record(reason: str) -> SampleRecord:
        return SampleRecord(
            task.id, candidate.index, run_index, seed,
            _outcome(stages["exec"]), _outcome(stages["pass"]), _outcome(stages["play"]),
            candidate.tokens, ref, reason,
        )

    if candidate.empty:
        return record("exec: empty candidate")
    repo = work / "repo"
    try:
        if repo.exists():
            shutil.rmtree(repo)
        shutil.copytree(task.spec.repo_root, repo, ignore=_COPY_IGNORE)
        insert_candidate(task.spec, candidate.code, repo)
    except (OSError, ValueError) as exc:
        return record(f"infra: cannot prepare working copy: {exc}")

    proj = task.project
    try:
        val = run(SandboxConfig(repo, proj.validator_cmd, seed, 120.0, capture_dir=work / "validate"))
        if not val.ok:
            return record("exec: validator failed")
        failure = smoke_run(repo, proj.refiner_config(), seed, work / "smoke")
        if failure:
            return record("exec: smoke run failed")
        stages["exec"] = True
        if proj.test_cmd:
            tests = run(SandboxConfig(repo, proj.test_cmd, seed, 300.0, capture_dir=work / "unit"))
            if not tests.ok:
                return record("pass: unit tests failed")
        stages["pass"] = True
        if proj.profile is None:
            return record("infra: no app profile")
        profile = replace(proj.profile, launch=proj.launch_cmd or proj.profile.launch)
        report = run_profile(profile, provider, seed, work / "play", repo, task.id)
        (work / "behavior.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        stages["play"] = report.passed
        return record("" if report.passed else f"play: {report.reason}")
    except (LaunchError, TrajectoryWriteError, LLMError, OSError) as exc:
        stages["play"] = False
        return record(f"infra: {type(exc).__name__}: {exc}")


def _run_task(
    task: BenchmarkTask,
    n: int,
    provider: LLMProvider,
    seed: int,
    run_index: int,
    out: Path,
) -> list[SampleRecord]:
    task_dir = out / f"run_{run_index:02d}" / task.id
    try:
        with Trajectory(task_dir / "generation") as traj:
            session = provider.session("developer", task.id, seed, traj)
            candidates = generate_candidates(task.spec, session, n, traj)
    except (LLMError, TrajectoryWriteError, OSError, ValueError) as exc:
        reason = f"infra: generation failed: {type(exc).__name__}: {exc}"
        ref = (task_dir / "generation").relative_to(out).as_posix()
        return [SampleRecord(task.id, i, run_index, seed, FAIL, FAIL, FAIL, 0, ref, reason) for i in range(n)]
    return [
        evaluate_sample(task, cand, task_dir / f"sample_{cand.index}", provider, seed, run_index, out)
        for cand in candidates
    ]


def fold_outcomes(records: Sequence[SampleRecord], n: int) -> list[SampleOutcomes]:
    by_task: dict[str, list[SampleRecord]] = {}
    for r in records:
        by_task.setdefault(r.task_id, []).append(r)
    out = []
    for task_id, recs in by_task.items():
        if len(recs) != n:
            raise MetricDomainError(f"task {task_id} has {len(recs)} samples, expected {n}")
        out.append(SampleOutcomes(task_id, n, *(sum(r.stage(s) for r in recs) for s in STAGES)))
    return out


def run_metrics(records: Sequence[SampleRecord], n: int, ks: Sequence[int]) -> dict[str, float]:
    """@k per stage and Efficiency@k for the records of one run."""
    outcomes = fold_outcomes(records, n)
    values: dict[str, float] = {}
    for k in ks:
        for stage in STAGES:
            values[f"{stage}@{k}"] = aggregate_stage(outcomes, stage, k)
    for k in ks:
        ledger = TokenLedger([(f"{r.task_id}#{r.sample_index}", r.tokens, 0) for r in records if r.sample_index < k], len(outcomes))
        try:
            values[f"efficiency@{k}"] = efficiency_at_k(100.0 * values[f"play@{k}"], ledger, k)
        except MetricDomainError:
            pass
    return values


def build_report(records: Sequence[SampleRecord], n: int, ks: Sequence[int], runs: int) -> MetricReport:
    per_run: dict[str, list[float]] = {}
    for r in range(runs):
        for name, v in run_metrics([x for x in records if x.run == r], n, ks).items():
            per_run.setdefault(name, []).append(v)
    metrics = {name: MetricSummary.from_runs(name, vals) for name, vals in per_run.items() if len(vals) == runs}
    return MetricReport(list(ks), runs, metrics)


@dataclass
class BenchmarkResult:
    report: MetricReport
    records: list[SampleRecord]
    skipped: dict[str, str]
    out_dir: Path

    @property
    def infra_failures(self) -> int:
        return sum(r.infra for r in self.records)

    @property
    def all_passed(self) -> bool:
        return all(r.play == PASS for r in self.records)


def _summary_record(manifest: BenchmarkManifest, report: MetricReport, records: Sequence[SampleRecord]) -> dict:
    return {
        "type": "summary",
        "n": manifest.n,
        "ks": list(manifest.ks),
        "runs": manifest.runs,
        "seeds": list(manifest.seeds),
        "tasks": [t.id for t in manifest.tasks],
        "N": len(manifest.tasks),
        "skipped": dict(sorted(manifest.skipped.items())),
        "infra_failures": sum(r.infra for r in records),
        "report": report.to_dict(),
    }


def summary_text(summary: dict) -> str:
    report = MetricReport.from_dict(summary["report"])
    head = [
        f"tasks = {summary['N']}",
        f"n = {summary['n']}",
        f"seeds = {','.join(map(str, summary['seeds']))}",
        f"skipped = {','.join(summary['skipped']) or '-'}",
        f"infra_failures = {summary['infra_failures']}",
    ]
    return "\n".join(head) + "\n" + report.format_text()


def run_benchmark(
    manifest: BenchmarkManifest,
    provider: LLMProvider,
    out_dir: str | os.PathLike,
    jobs: int = 1,
) -> BenchmarkResult:
    """Run every (seed, task) and persist records, summary and timestamps.

    ``records.jsonl`` holds one line per sample in (run, task, sample) order
    followed by a summary record; it contains no wall-clock data, so equal
    inputs give byte-identical files. Timestamps go to ``timestamps.json``.
    """
    if not manifest.tasks:
        raise ValueError("no runnable tasks in the manifest")
    out = Path(out_dir).resolve()
    out.mkdir(parents=True, exist_ok=True)
    stamps: dict[str, float] = {"started": time.time()}
    records: list[SampleRecord] = []
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        for r, seed in enumerate(manifest.seeds):
            futures = [pool.submit(_run_task, t, manifest.n, provider, seed, r, out) for t in manifest.tasks]
            for fut in futures:
                records.extend(fut.result())
            stamps[f"run_{r:02d}_finished"] = time.time()
    report = build_report(records, manifest.n, manifest.ks, manifest.runs)
    summary = _summary_record(manifest, report, records)
    with open(out / RECORDS_FILE, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
        fh.write(json.dumps(summary, sort_keys=True) + "\n")
    (out / SUMMARY_FILE).write_text(summary_text(summary), encoding="utf-8")
    stamps["finished"] = time.time()
    (out / TIMESTAMPS_FILE).write_text(json.dumps(stamps, indent=2) + "\n", encoding="utf-8")
    return BenchmarkResult(report, records, dict(manifest.skipped), out)


def load_records(in_dir: str | os.PathLike) -> tuple[list[SampleRecord], dict]:
    path = Path(in_dir) / RECORDS_FILE
    records, summary = [], None
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        obj = json.loads(line)
        if obj.get("type") == "summary":
            summary = obj
        else:
            records.append(SampleRecord.from_dict(obj))
    if summary is None:
        raise ValueError(f"{path}: no summary record")
    return records, summary


def recompute(in_dir: str | os.PathLike) -> tuple[dict, dict]:
    """Rebuild the summary from stored sample records; returns (stored, recomputed)."""
    records, stored = load_records(in_dir)
    report = build_report(records, stored["n"], stored["ks"], stored["runs"])
    fresh = dict(stored)
    fresh["infra_failures"] = sum(r.infra for r in records)
    fresh["report"] = report.to_dict()
    return stored, fresh
