"""Repository-aware candidate generation with grep-style context tools."""

from __future__ import annotations

import os
import re
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .llm import LLMSession, Message
from .tester import bundled_asset, load_template
from .trajectory import Trajectory, digest

SNIPPET_CONTEXT = 3
MAX_SNIPPETS = 5
N_EXEMPLARS = 2
MAX_TOOL_ROUNDS = 4
READ_ONLY_COMMANDS = ("ls", "cat", "grep", "find", "head", "tail", "wc")
SKIP_DIRS = {".git", "__pycache__", ".sandbox", ".pytest_cache", "node_modules"}

_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)
_TOOL_RE = re.compile(r"^\s*tool:\s*(search|read|shell)\s+(.+?)\s*$", re.MULTILINE)


@dataclass
class TaskSpec:
    task_id: str
    function_signature: str
    requirement: str
    repo_root: Path
    target_file: str
    anchor: str

    def __post_init__(self) -> None:
        self.repo_root = Path(self.repo_root)

    def validate(self) -> None:
        path = self.repo_root / self.target_file
        if not path.is_file():
            raise FileNotFoundError(f"target file {self.target_file} missing under {self.repo_root}")
        hits = len(re.findall(rf"^\s*def\s+{re.escape(self.anchor)}\s*\(", path.read_text(encoding="utf-8"), re.M))
        if hits != 1:
            raise ValueError(f"anchor {self.anchor!r} occurs {hits} times in {self.target_file}")


@dataclass
class Candidate:
    index: int
    code: str
    tool_calls: int = 0
    tokens: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.code.strip()


@dataclass(frozen=True)
class SearchHit:
    path: str
    line: int
    snippet: str


def _text_files(root: Path):
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames[:] = sorted(d for d in dirnames if d not in SKIP_DIRS)
        for name in sorted(filenames):
            yield Path(dirpath) / name


def context_search(
    query: str,
    repo_root: str | os.PathLike,
    max_hits: int = MAX_SNIPPETS,
    regex: bool = False,
    skipped: list[str] | None = None,
) -> list[SearchHit]:
    """Grep the repository; hits ordered by (path, line), each with +-3 lines."""
    pattern = re.compile(query) if regex else None
    root = Path(repo_root)
    hits: list[SearchHit] = []
    for path in sorted(_text_files(root), key=lambda p: p.relative_to(root).as_posix()):
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except (UnicodeDecodeError, OSError):
            if skipped is not None:
                skipped.append(path.relative_to(root).as_posix())
            continue
        for i, line in enumerate(lines):
            found = pattern.search(line) if pattern else query in line
            if not found:
                continue
            lo, hi = max(0, i - SNIPPET_CONTEXT), min(len(lines), i + SNIPPET_CONTEXT + 1)
            hits.append(SearchHit(path.relative_to(root).as_posix(), i + 1, "\n".join(lines[lo:hi])))
            if len(hits) >= max_hits:
                return hits
    return hits


def extract_code_block(text: str) -> str | None:
    m = _FENCE_RE.search(text)
    return m.group(1) if m else None


def safe_path(repo_root: Path, rel: str) -> Path:
    root = repo_root.resolve()
    p = (root / rel).resolve()
    if p != root and root not in p.parents:
        raise ValueError(f"path {rel!r} escapes the repository")
    return p


def run_shell_tool(command: str, repo_root: Path, timeout: float = 10.0) -> str:
    argv = shlex.split(command)
    if not argv or argv[0] not in READ_ONLY_COMMANDS:
        return f"refused: only {', '.join(READ_ONLY_COMMANDS)} are allowed"
    for arg in argv[1:]:
        if not arg.startswith("-"):
            try:
                safe_path(repo_root, arg)
            except ValueError as exc:
                return f"refused: {exc}"
    try:
        out = subprocess.run(argv, cwd=repo_root, capture_output=True, text=True, timeout=timeout)
    except (OSError, subprocess.TimeoutExpired) as exc:
        return f"error: {exc}"
    return (out.stdout + out.stderr)[:4000]


def load_exemplars(count: int = N_EXEMPLARS) -> list[str]:
    files = sorted(bundled_asset("fewshot").glob("*.txt"))[:count]
    return [f.read_text(encoding="utf-8") for f in files]


class ToolBox:
    """File read, context search and read-only shell, recorded per call."""

    def __init__(self, repo_root: Path, trajectory: Trajectory | None = None, max_snippets: int = MAX_SNIPPETS):
        self.repo_root = Path(repo_root)
        self.trajectory = trajectory
        self.max_snippets = max_snippets
        self.calls = 0

    def run(self, tool: str, arg: str) -> str:
        self.calls += 1
        if self.trajectory is not None:
            self.trajectory.record("tool_use", tool=tool, args_digest=digest(arg), args=arg[:200])
        if tool == "search":
            skipped: list[str] = []
            try:
                hits = context_search(arg, self.repo_root, self.max_snippets, skipped=skipped)
            except re.error as exc:
                return f"invalid pattern: {exc}"
            if skipped and self.trajectory is not None:
                self.trajectory.record("decision", text="unreadable files skipped", files=skipped)
            if not hits:
                return "no matches"
            return "\n\n".join(f"{h.path}:{h.line}\n{h.snippet}" for h in hits)
        if tool == "read":
            try:
                return safe_path(self.repo_root, arg).read_text(encoding="utf-8")[:8000]
            except (ValueError, OSError, UnicodeDecodeError) as exc:
                return f"cannot read {arg}: {exc}"
        if tool == "shell":
            return run_shell_tool(arg, self.repo_root)
        return f"unknown tool {tool}"


def generate_candidates(
    task: TaskSpec,
    llm: LLMSession,
    n: int = 3,
    trajectory: Trajectory | None = None,
    max_snippets: int = MAX_SNIPPETS,
    n_exemplars: int = N_EXEMPLARS,
    template_dir: str | os.PathLike | None = None,
) -> list[Candidate]:
    """Generate ``n`` candidates in one conversation.

    Replies may request tools (``tool: search|read|shell <arg>``); tool output
    is fed back. The first fenced block of a reply becomes the candidate. A
    reply with neither gets one re-prompt, after which the candidate is empty.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if trajectory is not None:
        trajectory.record("phase", name="generation", task=task.task_id)
    examples = "\n".join(f"Example:\n{e}" for e in load_exemplars(n_exemplars))
    prompt = load_template("generation", template_dir).safe_substitute(
        signature=task.function_signature,
        requirement=task.requirement,
        examples=examples,
    )
    tools = ToolBox(task.repo_root, trajectory, max_snippets)
    conversation: list[Message] = [Message("system", "You write code for an existing repository.")]
    candidates: list[Candidate] = []
    for index in range(n):
        calls_before = tools.calls
        tokens_before = llm.total_tokens
        conversation.append(Message("user", f"{prompt}\nSample {index + 1} of {n}."))
        code: str | None = None
        reprompted = False
        rounds = 0
        notes: list[str] = []
        while True:
            reply = llm.complete(conversation).text
            conversation.append(Message("assistant", reply))
            code = extract_code_block(reply)
            if code is not None:
                break
            requests = _TOOL_RE.findall(reply)
            if requests and rounds < MAX_TOOL_ROUNDS:
                rounds += 1
                outputs = [f"[{tool} {arg}]\n{tools.run(tool, arg)}" for tool, arg in requests]
                conversation.append(Message("user", "Tool results:\n" + "\n\n".join(outputs)))
                continue
            if reprompted:
                notes.append("no code block after re-prompt")
                break
            reprompted = True
            conversation.append(Message("user", "Reply with the complete function in one fenced code block."))
        cand = Candidate(index, code or "", tools.calls - calls_before, llm.total_tokens - tokens_before, notes)
        if trajectory is not None:
            trajectory.record(
                "decision",
                text=f"candidate {index} {'empty' if cand.empty else 'extracted'}",
                candidate=index,
                tool_calls=cand.tool_calls,
                code_digest=digest(cand.code),
            )
        candidates.append(cand)
    return candidates


def _function_span(lines: Sequence[str], anchor: str) -> tuple[int, int, str]:
    pat = re.compile(rf"^(\s*)def\s+{re.escape(anchor)}\s*\(")
    for i, line in enumerate(lines):
        m = pat.match(line)
        if not m:
            continue
        indent = m.group(1)
        j = i + 1
        # Signature may continue over several lines until the colon.
        while j < len(lines) and not lines[i:j][-1].rstrip().endswith(":"):
            j += 1
        end = j
        for k in range(j, len(lines)):
            stripped = lines[k].strip()
            if not stripped:
                continue
            if len(lines[k]) - len(lines[k].lstrip()) <= len(indent):
                break
            end = k + 1
        # Pull back decorators directly above the def.
        start = i
        while start > 0 and lines[start - 1].strip().startswith("@"):
            start -= 1
        return start, end, indent
    raise ValueError(f"anchor {anchor!r} not found")


def insert_candidate(task: TaskSpec, code: str, repo_root: str | os.PathLike | None = None) -> Path:
    """Replace the anchor function in ``target_file`` with ``code``.

    Every byte outside the replaced function is preserved.
    """
    root = Path(repo_root or task.repo_root)
    path = root / task.target_file
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines(keepends=True)
    start, end, indent = _function_span([l.rstrip("\n") for l in lines], task.anchor)
    body = code.strip("\n").splitlines()
    common = min((len(l) - len(l.lstrip()) for l in body if l.strip()), default=0)
    new = [(indent + l[common:]).rstrip() + "\n" if l.strip() else "\n" for l in body]
    path.write_text("".join(lines[:start] + new + lines[end:]), encoding="utf-8")
    return path
