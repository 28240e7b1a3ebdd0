"""Diagnose, patch, apply, validate, re-test: the bounded repair loop."""

from __future__ import annotations

import os
import re
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

from .developer import context_search, safe_path
from .llm import LLMError, LLMProvider, LLMSession, Message
from .sandbox import LaunchError, SandboxConfig, parse_playlog, run
from .tester import AppProfile, BehaviorReport, load_template, run_profile
from .trajectory import Trajectory, digest

MAX_ITERATIONS = 6
EXCERPT_LINES = 40
SITE_CONTEXT = 3

_FILE_BLOCK_RE = re.compile(r"^file:\s*(\S+)\s*\n+```[^\n]*\n(.*?)```", re.MULTILINE | re.DOTALL)
_SITE_PATTERNS = (
    re.compile(r'File "([^"]+)", line (\d+)'),
    re.compile(r"([\w./\\-]+\.\w+):(\d+)(?::\d+)?"),
    re.compile(r"([\w./\\-]+\.\w+)\((\d+)\)"),
)


class NothingToDiagnose(ValueError):
    pass


class ProposalFailed(RuntimeError):
    pass


class PatchError(RuntimeError):
    pass


class StaleHash(PatchError):
    pass


class IoFailure(PatchError):
    pass


class ConfigError(ValueError):
    pass


class ValidationError(RuntimeError):
    def __init__(self, diagnostics: str):
        super().__init__("build validation failed")
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class BehaviorEvidence:
    constraint: str
    frame_ref: str | None
    action_ref: str | None
    detail: str = ""


@dataclass
class FailureSummary:
    source: str  # compile | runtime | behavior
    excerpts: list[tuple[str, str]]
    suspected_files: list[str] = field(default_factory=list)
    sites: list[tuple[str, int]] = field(default_factory=list)
    behavior: BehaviorEvidence | None = None

    def __post_init__(self) -> None:
        if self.source not in ("compile", "runtime", "behavior"):
            raise ValueError(f"unknown failure source {self.source!r}")
        if not self.excerpts:
            raise ValueError("a failure summary needs at least one excerpt")

    def with_note(self, origin: str, text: str) -> "FailureSummary":
        return replace(self, excerpts=self.excerpts + [(origin, text)])

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "excerpts": [list(e) for e in self.excerpts],
            "suspected_files": list(self.suspected_files),
            "behavior": None if self.behavior is None else vars(self.behavior).copy(),
        }


@dataclass(frozen=True)
class FileEdit:
    path: str
    expected_before_hash: str | None  # None: the file must not exist yet
    new_content: bytes


@dataclass(frozen=True)
class PatchSet:
    edits: tuple[FileEdit, ...]

    def __post_init__(self) -> None:
        paths = [e.path for e in self.edits]
        if len(set(paths)) != len(paths):
            raise ValueError("a patch set may edit each path only once")

    @property
    def paths(self) -> list[str]:
        return [e.path for e in self.edits]


@dataclass
class RefinerConfig:
    max_iterations: int = MAX_ITERATIONS
    validator_cmd: str = ""
    run_cmd: str = ""
    launch_cmd: str = ""
    focus_files: list[str] = field(default_factory=list)
    smoke_timeout: float = 5.0
    validate_timeout: float = 120.0

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class RepairOutcome:
    status: str  # fixed | exhausted
    iterations_used: int
    trajectory: str
    final_report: BehaviorReport | None = None

    @property
    def fixed(self) -> bool:
        return self.status == "fixed"


def content_hash(data: bytes) -> str:
    return digest(data)


def _tail(text: str, lines: int = EXCERPT_LINES) -> str:
    return "\n".join(text.strip("\n").splitlines()[-lines:])


def _scan_sites(text: str, repo_root: Path | None) -> list[tuple[str, int]]:
    root = repo_root.resolve() if repo_root is not None else None
    found: list[tuple[str, int]] = []
    for pat in _SITE_PATTERNS:
        for m in pat.finditer(text):
            raw, line = m.group(1), int(m.group(2))
            rel = raw.replace("\\", "/")
            if root is not None:
                p = Path(raw)
                p = (p if p.is_absolute() else root / p).resolve()
                if root not in p.parents or not p.is_file():
                    continue
                rel = p.relative_to(root).as_posix()
            if (rel, line) not in found:
                found.append((rel, line))
    return found


def diagnose(
    compile_out: str = "",
    runtime_logs: str | Sequence[str] = "",
    behavior_report: BehaviorReport | None = None,
    repo_root: str | os.PathLike | None = None,
    focus_files: Sequence[str] = (),
) -> FailureSummary:
    """Fold build output, runtime logs and a behavior report into one summary.

    Precedence is compile > runtime > behavior. File and line references are
    scanned out of the diagnostics; ``focus_files`` are appended as suspects.
    """
    runtime = runtime_logs if isinstance(runtime_logs, str) else "\n".join(runtime_logs)
    failing_report = behavior_report is not None and not behavior_report.passed
    root = Path(repo_root) if repo_root is not None else None
    if compile_out.strip():
        source, excerpts = "compile", [("compiler", _tail(compile_out))]
        sites = _scan_sites(compile_out, root)
    elif runtime.strip():
        crash = [f"{e.level} {e.event} " + " ".join(f"{k}={v}" for k, v in e.fields.items())
                 for e in parse_playlog(runtime.splitlines()) if e.is_crash]
        excerpts = [("runtime", _tail(runtime))]
        if crash:
            excerpts.insert(0, ("playlog", "\n".join(crash)))
        source, sites = "runtime", _scan_sites(runtime, root)
    elif failing_report:
        source, sites = "behavior", []
    else:
        raise NothingToDiagnose("no compiler output, runtime log or failing behavior report to diagnose")

    behavior = None
    if source == "behavior":
        assert behavior_report is not None
        bad = behavior_report.violated()
        first = bad[0] if bad else None
        behavior = BehaviorEvidence(
            constraint=first.name if first else behavior_report.reason,
            frame_ref=behavior_report.final_frame,
            action_ref=behavior_report.action_trace[-1] if behavior_report.action_trace else None,
            detail=first.evidence if first else behavior_report.reason,
        )
        excerpts = [("behavior", f"verdict {behavior_report.verdict}: {behavior_report.reason}")]
        excerpts += [(f"constraint:{r.name}", r.evidence) for r in bad]
        if behavior_report.action_trace:
            excerpts.append(("actions", "\n".join(behavior_report.action_trace[-10:])))
    suspects = [p for p, _ in sites]
    for f in focus_files:
        if f not in suspects:
            suspects.append(f)
    return FailureSummary(source, excerpts, list(dict.fromkeys(suspects)), sites, behavior)


def _site_context(repo_root: Path, summary: FailureSummary) -> list[str]:
    chunks = []
    for path, line in summary.sites:
        try:
            lines = (repo_root / path).read_text(encoding="utf-8").splitlines()
        except (OSError, UnicodeDecodeError):
            continue
        lo, hi = max(0, line - 1 - SITE_CONTEXT), min(len(lines), line + SITE_CONTEXT)
        chunks.append(f"{path}:{line}\n" + "\n".join(lines[lo:hi]))
    if summary.behavior is not None:
        for hit in context_search(summary.behavior.constraint.split("_")[0], repo_root, 3):
            chunks.append(f"{hit.path}:{hit.line}\n{hit.snippet}")
    return chunks


def parse_patch(text: str, repo_root: Path, read_hashes: dict[str, str | None]) -> PatchSet:
    blocks = _FILE_BLOCK_RE.findall(text)
    if not blocks:
        raise ProposalFailed("completion holds no `file:` marked code block")
    edits = []
    for raw, body in blocks:
        try:
            p = safe_path(repo_root, raw)
        except ValueError as exc:
            raise ProposalFailed(str(exc)) from None
        rel = p.relative_to(repo_root.resolve()).as_posix()
        if rel in read_hashes:
            before = read_hashes[rel]
        else:
            before = content_hash(p.read_bytes()) if p.exists() else None
        edits.append(FileEdit(rel, before, body.encode("utf-8")))
    try:
        return PatchSet(tuple(edits))
    except ValueError as exc:
        raise ProposalFailed(str(exc)) from None


def propose_patch(
    summary: FailureSummary,
    repo_root: str | os.PathLike,
    llm: LLMSession,
    template_dir: str | os.PathLike | None = None,
) -> PatchSet:
    """Ask the model for whole-file replacements; one re-prompt on a bad reply."""
    root = Path(repo_root)
    read_hashes: dict[str, str | None] = {}
    files = []
    for rel in summary.suspected_files:
        p = root / rel
        if p.is_file():
            data = p.read_bytes()
            read_hashes[rel] = content_hash(data)
            files.append(f"file: {rel}\n```\n{data.decode('utf-8', errors='replace')}```")
    behavior = ""
    if summary.behavior is not None:
        b = summary.behavior
        behavior = f"Violated constraint: {b.constraint}\nEvidence: {b.detail}\nLast action: {b.action_ref}"
    diagnosis = load_template("diagnosis", template_dir).safe_substitute(
        source=summary.source,
        excerpts="\n\n".join(f"[{o}]\n{t}" for o, t in summary.excerpts),
        suspects=", ".join(summary.suspected_files) or "(none identified)",
        behavior=behavior,
    )
    prompt = load_template("patch_generation", template_dir).safe_substitute(
        diagnosis=diagnosis.strip(),
        context="\n\n".join(_site_context(root, summary)) or "(none)",
        files="\n\n".join(files) or "(none)",
    )
    messages = [Message("system", "You repair applications with minimal edits."), Message("user", prompt)]
    reply = llm.complete(messages).text
    try:
        return parse_patch(reply, root, read_hashes)
    except ProposalFailed as exc:
        if "escapes" in str(exc):
            raise
        messages += [
            Message("assistant", reply),
            Message("user", f"That reply could not be applied ({exc}). Use `file: <path>` followed by a fenced block."),
        ]
    return parse_patch(llm.complete(messages).text, root, read_hashes)


Writer = Callable[[Path, bytes], None]


def atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def apply_patch(repo_root: str | os.PathLike, patch: PatchSet, writer: Writer = atomic_write) -> str:
    """Apply all edits or none.

    Raises :class:`StaleHash` before touching anything when a file changed
    since it was read; raises :class:`IoFailure` after restoring every file
    from its pre-apply snapshot when a write fails. Returns ``"ok"``.
    """
    root = Path(repo_root)
    snapshots: dict[Path, bytes | None] = {}
    for edit in patch.edits:
        try:
            p = safe_path(root, edit.path)
        except ValueError as exc:
            raise StaleHash(str(exc)) from None
        current = p.read_bytes() if p.exists() else None
        actual = None if current is None else content_hash(current)
        if actual != edit.expected_before_hash:
            raise StaleHash(f"{edit.path} changed since it was read")
        snapshots[p] = current

    touched: list[Path] = []
    try:
        for edit in patch.edits:
            p = safe_path(root, edit.path)
            touched.append(p)
            writer(p, edit.new_content)
    except Exception as exc:
        for p in touched:
            before = snapshots[p]
            if before is None:
                if p.exists():
                    p.unlink()
            else:
                atomic_write(p, before)
        raise IoFailure(f"write failed, patch rolled back: {exc}") from exc
    return "ok"


def _sandboxed(cmd: str, repo_root: Path, seed: int, timeout: float, capture: Path):
    return run(SandboxConfig(workdir=repo_root, command=cmd, seed=seed, timeout=timeout, capture_dir=capture))


def validate_build(
    repo_root: str | os.PathLike,
    config: RefinerConfig,
    seed: int = 0,
    capture_dir: str | os.PathLike | None = None,
) -> str:
    """Run the validator command; ``"ok"`` on exit 0, else ValidationError."""
    if not config.validator_cmd:
        raise ConfigError("no validator command configured")
    capture = Path(capture_dir) if capture_dir is not None else Path(tempfile.mkdtemp(prefix="guiplay-validate-"))
    rec = _sandboxed(config.validator_cmd, Path(repo_root), seed, config.validate_timeout, capture)
    if rec.ok:
        return "ok"
    out = (rec.stdout() + rec.stderr()).strip()
    if rec.timed_out:
        out += f"\nvalidator timed out after {config.validate_timeout}s"
    raise ValidationError(out or f"validator exited with status {rec.exit_status}")


def smoke_run(repo_root: Path, config: RefinerConfig, seed: int, capture: Path) -> str:
    """Launch-time check; returns failure text, empty when the run looks healthy.

    A run still alive at the timeout counts as healthy (GUI loops never exit).
    """
    if not config.run_cmd:
        return ""
    rec = _sandboxed(config.run_cmd, repo_root, seed, config.smoke_timeout, capture)
    crashes = [e for e in parse_playlog(rec.log_lines()) if e.is_crash]
    if crashes or (not rec.timed_out and rec.exit_status != 0):
        return rec.stderr().strip() or f"exit status {rec.exit_status}"
    return ""


def evaluate_repo(
    repo_root: Path,
    config: RefinerConfig,
    profile: AppProfile,
    provider: LLMProvider,
    seed: int,
    out: Path,
    task: str | None = None,
) -> tuple[FailureSummary | None, BehaviorReport | None]:
    """Validate, smoke-run and behavior-test ``repo_root``; None when all pass."""
    try:
        validate_build(repo_root, config, seed, out / "validate")
    except ValidationError as exc:
        return diagnose(exc.diagnostics, repo_root=repo_root, focus_files=config.focus_files), None
    failure = smoke_run(repo_root, config, seed, out / "smoke")
    if failure:
        return diagnose("", failure, repo_root=repo_root, focus_files=config.focus_files), None
    launch = config.launch_cmd or profile.launch
    report = run_profile(replace(profile, launch=launch), provider, seed, out / "behavior", repo_root, task)
    if report.passed:
        return None, report
    return diagnose("", "", report, repo_root, config.focus_files), report


def repair_loop(
    repo_root: str | os.PathLike,
    initial: FailureSummary | None,
    llm: LLMSession,
    profile: AppProfile,
    provider: LLMProvider,
    config: RefinerConfig,
    seed: int = 0,
    out_dir: str | os.PathLike | None = None,
    task: str | None = None,
    template_dir: str | os.PathLike | None = None,
) -> RepairOutcome:
    """Iterate diagnose, propose, apply, validate, run and re-test.

    Stops ``fixed`` on the first iteration whose behavior verdict is pass and
    ``exhausted`` after ``config.max_iterations``. A phase error (bad
    proposal, stale hash, failed write) consumes the iteration and is added
    to the summary that feeds the next one. ``initial=None`` evaluates the
    repository first to obtain the starting diagnosis.
    """
    if not config.validator_cmd:
        raise ConfigError("no validator command configured")
    root = Path(repo_root)
    out = Path(out_dir) if out_dir is not None else Path(tempfile.mkdtemp(prefix="guiplay-repair-"))
    traj = llm.trajectory or Trajectory(out)
    if llm.trajectory is None:
        llm.trajectory = traj
    traj.record("phase", name="repair", max_iterations=config.max_iterations, seed=seed)

    failure = initial
    if failure is None:
        failure, report = evaluate_repo(root, config, profile, provider, seed, out / "iter_00", task)
        if failure is None:
            traj.record("decision", text="nothing to repair: initial evaluation passed")
            return RepairOutcome("fixed", 0, str(traj.path), report)

    for iteration in range(1, config.max_iterations + 1):
        traj.record("phase", name="diagnose", iteration=iteration, source=failure.source,
                    suspects=failure.suspected_files)
        try:
            patch = propose_patch(failure, root, llm, template_dir)
        except (ProposalFailed, LLMError) as exc:
            traj.record("decision", text=f"proposal failed: {exc}", iteration=iteration)
            failure = failure.with_note("proposal", str(exc))
            continue
        traj.record("phase", name="apply", iteration=iteration, files=patch.paths)
        try:
            apply_patch(root, patch)
        except PatchError as exc:
            traj.record("decision", text=f"apply failed: {exc}", iteration=iteration)
            failure = failure.with_note("apply", str(exc))
            continue
        traj.record("phase", name="validate", iteration=iteration)
        try:
            new_failure, report = evaluate_repo(
                root, config, profile, provider, seed, out / f"iter_{iteration:02d}", task
            )
        except LaunchError as exc:
            failure = failure.with_note("sandbox", str(exc))
            continue
        if new_failure is None:
            traj.record("decision", text="behavior verdict pass", iteration=iteration)
            return RepairOutcome("fixed", iteration, str(traj.path), report)
        traj.record("decision", text=f"still failing at {new_failure.source}", iteration=iteration)
        failure = new_failure
    traj.record("decision", text="iteration budget exhausted", iterations=config.max_iterations)
    return RepairOutcome("exhausted", config.max_iterations, str(traj.path))
