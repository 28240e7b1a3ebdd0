"""Test Manager: strategy choice, the observe-decide-act loop, and the verdict."""

from __future__ import annotations

import json
import os
import string
import tempfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

from . import checks
from .actions import (
    ActionParseError,
    Finish,
    SafetyError,
    is_input,
    parse_action,
    render_action,
    validate_action,
)
from .checks import BUILTIN_CHECKS, ConstraintResult, Evidence, Observation
from .executor import Executor
from .llm import LLMProvider, LLMSession, Message
from .observer import ANIMATION_THRESHOLD, Observer, frame_filename
from .sandbox import LaunchError, SandboxConfig, launch, wait_or_kill
from .targets import VirtualBackend, make_app
from .targets.serve import HANDSHAKE_VAR, ProcessBackend, TargetExited
from .trajectory import Trajectory

GOAL_DRIVEN = "goal_driven"
COVERAGE_DRIVEN = "coverage_driven"
DEFAULT_STEP_BUDGET = 40
CAPTURE_DELAY = 1.0
HISTORY_WINDOW = 10
VIRTUAL_PREFIX = "virtual:"


@dataclass
class AppProfile:
    name: str
    kind: str  # "game" | "application"
    objective: str
    constraints: list[str] = field(default_factory=list)
    launch: str = ""
    step_budget: int = DEFAULT_STEP_BUDGET

    def __post_init__(self) -> None:
        if self.kind not in ("game", "application"):
            raise ValueError(f"profile kind must be 'game' or 'application', got {self.kind!r}")
        if self.step_budget < 1:
            raise ValueError("step_budget must be >= 1")
        unknown = [c for c in self.constraints if c not in checks.CHECKS]
        if unknown:
            raise ValueError(f"unknown constraints: {', '.join(unknown)}")

    @property
    def all_constraints(self) -> list[str]:
        return list(BUILTIN_CHECKS) + [c for c in self.constraints if c not in BUILTIN_CHECKS]

    @classmethod
    def from_dict(cls, data: dict) -> "AppProfile":
        return cls(
            name=data["name"],
            kind=data["kind"],
            objective=data.get("objective", ""),
            constraints=list(data.get("constraints", [])),
            launch=data.get("launch", ""),
            step_budget=int(data.get("step_budget", DEFAULT_STEP_BUDGET)),
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "objective": self.objective,
            "constraints": list(self.constraints),
            "launch": self.launch,
            "step_budget": self.step_budget,
        }


def bundled_asset(*parts: str) -> Path:
    return Path(str(resources.files("guiplay").joinpath("assets", *parts)))


def load_profile(path: str | os.PathLike) -> AppProfile:
    p = Path(path)
    if not p.exists():
        bundled = bundled_asset("profiles", f"{p.name}.json" if p.suffix != ".json" else p.name)
        if bundled.exists():
            p = bundled
    return AppProfile.from_dict(json.loads(p.read_text(encoding="utf-8")))


@dataclass
class BehaviorReport:
    verdict: str  # "pass" | "fail"
    reason: str
    steps_used: int
    constraint_results: list[ConstraintResult]
    final_frame: str | None
    action_trace: list[str]
    strategy: str = ""
    trajectory: str | None = None

    def __post_init__(self) -> None:
        if self.verdict == "pass":
            if not all(r.ok for r in self.constraint_results):
                raise ValueError("a passing report cannot carry a violated constraint")
            if "finish(success)" not in self.action_trace:
                raise ValueError("a passing report needs finish(success) in its action trace")

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def violated(self) -> list[ConstraintResult]:
        return [r for r in self.constraint_results if not r.ok]

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "reason": self.reason,
            "steps_used": self.steps_used,
            "strategy": self.strategy,
            "constraint_results": [r.to_dict() for r in self.constraint_results],
            "final_frame": self.final_frame,
            "action_trace": list(self.action_trace),
        }

    def format_text(self) -> str:
        lines = [
            f"verdict = {self.verdict}",
            f"reason = {self.reason}",
            f"strategy = {self.strategy}",
            f"steps_used = {self.steps_used}",
        ]
        for r in self.constraint_results:
            lines.append(f"constraint.{r.name} = {r.status} [{r.evidence}]")
        lines.append(f"final_frame = {self.final_frame}")
        if self.trajectory:
            lines.append(f"trajectory = {self.trajectory}")
        return "\n".join(lines) + "\n"


def choose_strategy(profile: AppProfile) -> str:
    return GOAL_DRIVEN if profile.kind == "game" else COVERAGE_DRIVEN


def load_template(name: str, template_dir: str | os.PathLike | None = None) -> string.Template:
    if template_dir is not None and (Path(template_dir) / f"{name}.txt").exists():
        text = (Path(template_dir) / f"{name}.txt").read_text(encoding="utf-8")
    else:
        text = bundled_asset("templates", f"{name}.txt").read_text(encoding="utf-8")
    return string.Template(text)


def verify_constraints(
    profile: AppProfile,
    sandbox_logs: Sequence[str],
    final_frame: str | None,
    probes: Sequence[Observation],
    exit_status: int | None = None,
    animation_threshold: float = ANIMATION_THRESHOLD,
) -> list[ConstraintResult]:
    """Run the built-in and declared checks over a finished session.

    ``probes`` are the session's observations (frames paired with state
    probes); ``final_frame`` is only used as evidence when nothing else is.
    """
    ev = Evidence(list(probes), list(sandbox_logs), exit_status, animation_threshold)
    results = checks.evaluate(profile.all_constraints, ev)
    if final_frame:
        results = [r if r.evidence else ConstraintResult(r.name, r.status, final_frame) for r in results]
    return results


def _history_text(trace: list[str]) -> str:
    recent = trace[-HISTORY_WINDOW:]
    if not recent:
        return "(none yet)"
    start = len(trace) - len(recent) + 1
    return "\n".join(f"{start + i}. {a}" for i, a in enumerate(recent))


def _results_text(results: list[ConstraintResult]) -> str:
    if not results:
        return "(not evaluated yet)"
    return "\n".join(f"- {r.name}: {r.status}" for r in results)


def _probe(backend) -> dict | None:
    fn = getattr(backend, "probe", None)
    return fn() if fn is not None else None


def _logs(backend) -> list[str]:
    fn = getattr(backend, "logs", None)
    return list(fn()) if fn is not None else []


def run_session(
    profile: AppProfile,
    llm: LLMSession,
    observer_backend,
    executor_backend=None,
    seed: int = 0,
    trajectory: Trajectory | None = None,
    template_dir: str | os.PathLike | None = None,
    capture_delay: float = CAPTURE_DELAY,
    animation_threshold: float = ANIMATION_THRESHOLD,
) -> BehaviorReport:
    """Drive one behavioral test session to a verdict.

    Each step: build the prompt from the strategy template, the newest frame
    and a summary of recent actions; ask the model; parse and bounds-check the
    action (one re-prompt on failure); execute it; capture a frame after the
    settle delay; and evaluate every constraint. The session ends on
    ``finish``, a violated constraint, a crash, or an exhausted step budget.
    """
    executor_backend = executor_backend or observer_backend
    strategy = choose_strategy(profile)
    if trajectory is not None:
        trajectory.record("phase", name="behavioral_test")
        trajectory.record(
            "decision",
            text=f"strategy={strategy}",
            seed=seed,
            animation_threshold=animation_threshold,
            step_budget=profile.step_budget,
        )
    analysis = load_template("gui_analysis", template_dir).safe_substitute()
    system_text = load_template(strategy, template_dir).safe_substitute(
        analysis=analysis.strip(),
        name=profile.name,
        objective=profile.objective,
        constraints=", ".join(profile.all_constraints),
    )
    decide = load_template("action_decision", template_dir)

    observer = Observer(observer_backend)
    executor = Executor(executor_backend)
    observations: list[Observation] = []

    def snap(action: str | None, after_input: bool) -> Observation:
        frame = observer.capture()
        ref = frame_filename(frame.seq)
        if trajectory is not None:
            frame.save_png(trajectory.dir / ref)
            trajectory.record("screenshot", file=ref, seq=frame.seq)
        obs = Observation(ref, frame, _probe(observer_backend), action, after_input)
        observations.append(obs)
        return obs

    def evidence() -> Evidence:
        return Evidence(
            observations,
            _logs(executor_backend),
            getattr(executor_backend, "exit_status", None),
            animation_threshold,
        )

    snap(None, False)
    trace: list[str] = []
    results: list[ConstraintResult] = []
    steps_used = 0
    reason = "budget"
    finish: Finish | None = None
    finish_text = ""

    while steps_used < profile.step_budget:
        steps_used += 1
        user_text = decide.safe_substitute(
            step=steps_used,
            budget=profile.step_budget,
            history=_history_text(trace),
            constraint_results=_results_text(results),
        )
        messages = [Message("system", system_text), Message("user", user_text, (observations[-1].frame,))]
        action = None
        text = ""
        for attempt in range(2):
            text = llm.complete(messages).text
            try:
                action = parse_action(text)
                validate_action(action, executor.bounds)
                break
            except (ActionParseError, SafetyError) as exc:
                action = None
                if trajectory is not None:
                    trajectory.record("decision", text=f"rejected model action: {exc}", step=steps_used)
                messages = messages + [
                    Message("assistant", text),
                    Message("user", f"Your reply could not be used ({exc}). Reply with exactly one valid action."),
                ]
        if action is None:
            continue

        result = executor.execute(action)
        canonical = render_action(action)
        trace.append(canonical)
        if trajectory is not None:
            trajectory.record("action", action=canonical, status=result.status, note=result.note, step=steps_used)
        if result.status == "aborted":
            reason = "aborted"
            break
        if isinstance(action, Finish):
            finish, finish_text = action, text
            break
        if result.status == "backend_error" and getattr(executor_backend, "exit_status", None) is None:
            if trajectory is not None:
                trajectory.record("decision", text=f"backend error: {result.note}", step=steps_used)

        crashed = getattr(executor_backend, "exit_status", None) not in (None, 0)
        if not crashed:
            try:
                observer_backend.settle(capture_delay)
                snap(canonical, is_input(action))
            except (TargetExited, RuntimeError):
                crashed = True
        results = checks.evaluate(profile.all_constraints, evidence())
        if crashed or any(not r.ok for r in results):
            reason = "crash" if crashed else "constraint"
            break

    results = verify_constraints(
        profile,
        _logs(executor_backend),
        observations[-1].frame_ref if observations else None,
        observations,
        getattr(executor_backend, "exit_status", None),
        animation_threshold,
    )
    violated = [r.name for r in results if not r.ok]
    if violated:
        verdict, reason = "fail", ("crash" if "no_crash" in violated else "constraint:" + ",".join(violated))
    elif finish is not None and finish.outcome == "success":
        verdict, reason = "pass", "finish(success)"
    elif finish is not None:
        verdict, reason = "fail", "agent reported failure: " + " ".join(finish_text.split())[:300]
    else:
        verdict = "fail"
    report = BehaviorReport(
        verdict,
        reason,
        steps_used,
        results,
        observations[-1].frame_ref if observations else None,
        trace,
        strategy,
        str(trajectory.dir) if trajectory is not None else None,
    )
    if trajectory is not None:
        trajectory.record("decision", text=f"verdict={verdict}", reason=reason, steps_used=steps_used)
    return report


def launch_failure(profile: AppProfile, detail: str, trajectory: Trajectory | None = None) -> BehaviorReport:
    if trajectory is not None:
        trajectory.record("decision", text=f"launch failed: {detail}")
    return BehaviorReport(
        "fail",
        "launch",
        0,
        [ConstraintResult("no_crash", checks.VIOLATED, f"launch: {detail}")],
        None,
        [],
        choose_strategy(profile),
        str(trajectory.dir) if trajectory is not None else None,
    )


def run_profile(
    profile: AppProfile,
    provider: LLMProvider,
    seed: int,
    out_dir: str | os.PathLike | None = None,
    workdir: str | os.PathLike | None = None,
    task: str | None = None,
    template_dir: str | os.PathLike | None = None,
) -> BehaviorReport:
    """Launch the profile's target (virtual id or sandboxed command) and test it."""
    out = Path(out_dir) if out_dir is not None else Path(tempfile.mkdtemp(prefix="guiplay-test-"))
    with Trajectory(out) as traj:
        llm = provider.session("tester", task, seed, traj)
        if profile.launch.startswith(VIRTUAL_PREFIX):
            target_id = profile.launch[len(VIRTUAL_PREFIX):]
            try:
                backend = VirtualBackend(make_app(target_id, seed))
            except ValueError as exc:
                return launch_failure(profile, str(exc), traj)
            return run_session(profile, llm, backend, seed=seed, trajectory=traj, template_dir=template_dir)

        handshake = out / "handshake"
        config = SandboxConfig(
            workdir=Path(workdir or "."),
            command=profile.launch,
            seed=seed,
            timeout=600.0,
            env_extra={HANDSHAKE_VAR: str(handshake.resolve())},
            capture_dir=out / "sandbox",
        )
        try:
            handle = launch(config, interactive=True)
        except LaunchError as exc:
            return launch_failure(profile, str(exc), traj)
        try:
            try:
                backend = ProcessBackend(handle, handshake)
            except TargetExited as exc:
                return launch_failure(profile, str(exc), traj)
            report = run_session(profile, llm, backend, seed=seed, trajectory=traj, template_dir=template_dir)
            backend.close()
            return report
        finally:
            wait_or_kill(handle, timeout=5.0)
