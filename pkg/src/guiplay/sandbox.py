"""Process sandbox: scrubbed environment, PLAY_SEED, timeouts, log capture.

Targets may write standardized log lines to stderr::

    PLAYLOG <level> <event> <key=value>...

Only those lines are parsed for crash and event markers.
"""

from __future__ import annotations

import os
import shlex
import signal
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

DEFAULT_ENV_ALLOW = ("PATH", "HOME", "LANG", "LC_ALL", "TMPDIR", "SYSTEMROOT")
SEED_VAR = "PLAY_SEED"
PLAYLOG_PREFIX = "PLAYLOG "
CRASH_EVENTS = ("crash", "panic", "uncaught_exception")


class LaunchError(RuntimeError):
    pass


@dataclass
class SandboxConfig:
    workdir: Path
    command: str | Sequence[str]
    seed: int = 0
    timeout: float = 30.0
    env_allow: tuple[str, ...] = DEFAULT_ENV_ALLOW
    env_extra: dict[str, str] = field(default_factory=dict)
    capture_dir: Path | None = None

    def __post_init__(self) -> None:
        self.workdir = Path(self.workdir)
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")

    def argv(self) -> list[str]:
        parts = shlex.split(self.command) if isinstance(self.command, str) else list(self.command)
        return [p.replace("{python}", sys.executable) for p in parts]

    def environment(self, parent: dict[str, str] | None = None) -> dict[str, str]:
        parent = os.environ if parent is None else parent
        env = {k: parent[k] for k in self.env_allow if k in parent}
        env.update(self.env_extra)
        env[SEED_VAR] = str(int(self.seed))
        return env


@dataclass
class RunRecord:
    exit_status: int | None
    timed_out: bool
    stdout_path: Path
    stderr_path: Path
    log_path: Path
    wall_time: float

    @property
    def ok(self) -> bool:
        return not self.timed_out and self.exit_status == 0

    def stdout(self) -> str:
        return self.stdout_path.read_text(encoding="utf-8", errors="replace")

    def stderr(self) -> str:
        return self.stderr_path.read_text(encoding="utf-8", errors="replace")

    def log_lines(self) -> list[str]:
        return self.log_path.read_text(encoding="utf-8").splitlines() if self.log_path.exists() else []


@dataclass(frozen=True)
class LogEvent:
    line_no: int
    level: str
    event: str
    fields: dict[str, str]

    @property
    def is_crash(self) -> bool:
        return self.level in ("ERROR", "FATAL") and self.event in CRASH_EVENTS


def parse_playlog(lines: Iterable[str]) -> list[LogEvent]:
    """Standardized log events; ``line_no`` counts within ``lines`` from 1."""
    events = []
    for n, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line.startswith(PLAYLOG_PREFIX):
            continue
        parts = line.split()
        if len(parts) < 3:
            continue
        fields = {}
        for kv in parts[3:]:
            k, sep, v = kv.partition("=")
            if sep:
                fields[k] = v
        events.append(LogEvent(n, parts[1].upper(), parts[2], fields))
    return events


class ProcessHandle:
    def __init__(self, popen: subprocess.Popen, config: SandboxConfig, capture_dir: Path, stdout_fh: IO, stderr_fh: IO):
        self.popen = popen
        self.config = config
        self.capture_dir = capture_dir
        self.started = time.monotonic()
        self._stdout_fh = stdout_fh
        self._stderr_fh = stderr_fh

    @property
    def stdout_path(self) -> Path:
        return self.capture_dir / "stdout.txt"

    @property
    def stderr_path(self) -> Path:
        return self.capture_dir / "stderr.txt"

    @property
    def log_path(self) -> Path:
        return self.capture_dir / "playlog.txt"

    @property
    def pid(self) -> int:
        return self.popen.pid

    def poll(self) -> int | None:
        return self.popen.poll()

    # interactive mode: stdin/stdout are pipes, stdout lines are tee'd by the reader
    def send(self, line: str) -> None:
        assert self.popen.stdin is not None, "not launched interactively"
        self.popen.stdin.write(line + "\n")
        self.popen.stdin.flush()

    def readline(self) -> str:
        assert self.popen.stdout is not None, "not launched interactively"
        line = self.popen.stdout.readline()
        if line and self._stdout_fh is not None:
            self._stdout_fh.write(line)
            self._stdout_fh.flush()
        return line

    def playlog(self) -> list[str]:
        """Standardized log lines emitted so far."""
        try:
            text = self.stderr_path.read_text(encoding="utf-8", errors="replace")
        except FileNotFoundError:
            return []
        return [l for l in text.splitlines() if l.startswith(PLAYLOG_PREFIX)]

    def _close_files(self) -> None:
        for fh in (self._stdout_fh, self._stderr_fh):
            if fh is not None and not fh.closed:
                fh.close()


def launch(config: SandboxConfig, interactive: bool = False) -> ProcessHandle:
    if not config.workdir.is_dir():
        raise LaunchError(f"working directory {config.workdir} does not exist")
    capture_dir = Path(config.capture_dir or config.workdir / ".sandbox")
    capture_dir.mkdir(parents=True, exist_ok=True)
    stdout_fh = open(capture_dir / "stdout.txt", "w", encoding="utf-8")
    stderr_fh = open(capture_dir / "stderr.txt", "w", encoding="utf-8")
    try:
        popen = subprocess.Popen(
            config.argv(),
            cwd=config.workdir,
            env=config.environment(),
            stdin=subprocess.PIPE if interactive else subprocess.DEVNULL,
            stdout=subprocess.PIPE if interactive else stdout_fh,
            stderr=stderr_fh,
            text=True,
            bufsize=1 if interactive else -1,
            start_new_session=True,
        )
    except (OSError, ValueError) as exc:
        stdout_fh.close()
        stderr_fh.close()
        raise LaunchError(f"cannot start {config.command!r}: {exc}") from exc
    return ProcessHandle(popen, config, capture_dir, stdout_fh, stderr_fh)


def _kill(handle: ProcessHandle) -> None:
    try:
        os.killpg(handle.popen.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        handle.popen.kill()


def wait_or_kill(handle: ProcessHandle, timeout: float | None = None) -> RunRecord:
    """Wait for exit, killing the process group on timeout.

    Without ``timeout`` the config's budget applies from launch time; an
    explicit ``timeout`` counts from now.
    """
    if timeout is None:
        remaining = max(0.0, handle.config.timeout - (time.monotonic() - handle.started))
    else:
        remaining = timeout
    timed_out = False
    if handle.popen.stdin is not None and not handle.popen.stdin.closed:
        try:
            handle.popen.stdin.close()
        except OSError:
            pass
    try:
        handle.popen.wait(timeout=remaining)
    except subprocess.TimeoutExpired:
        timed_out = True
        _kill(handle)
        handle.popen.wait()
    if handle.popen.stdout is not None:
        rest = handle.popen.stdout.read()
        if rest:
            handle._stdout_fh.write(rest)
        handle.popen.stdout.close()
    wall = time.monotonic() - handle.started
    handle._close_files()
    handle.log_path.write_text("".join(l + "\n" for l in handle.playlog()), encoding="utf-8")
    status = handle.popen.returncode
    return RunRecord(status, timed_out, handle.stdout_path, handle.stderr_path, handle.log_path, wall)


def run(config: SandboxConfig) -> RunRecord:
    return wait_or_kill(launch(config))
