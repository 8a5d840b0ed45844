"""Run one solver invocation under wall-clock and memory supervision.

The command line is wrapped as ``{time_command} -p {command}`` and executed
through ``bash -c`` in its own session (= its own process group) under the
POSIX locale, so the time report always uses a period decimal separator and
a limit breach can kill the whole solver process tree at once.

Three duties run during a job without blocking each other: output draining
(stdout/stderr are redirected straight into files by the kernel), limit
timing, and memory sampling (both in the supervisor's poll loop).
"""

from __future__ import annotations

import logging
import os
import signal
import subprocess
import time
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Callable

import psutil

from ..errors import TimeParseError, ValidationError
from .times import TimeRecord, parse_posix_time

logger = logging.getLogger("casbench.runner")

WAITING = "waiting"
RUNNING = "running"
COMPLETED = "completed"
ERROR = "error"
TIMEOUT = "timeout"
MEMOUT = "memout"
KILLED_BY_USER = "killed-by-user"

TERMINAL_STATUSES = frozenset({COMPLETED, ERROR, TIMEOUT, MEMOUT, KILLED_BY_USER})
ALL_STATUSES = TERMINAL_STATUSES | {WAITING, RUNNING}

_POLL_INTERVAL = 0.05
_MEM_SAMPLE_INTERVAL = 0.1
_STDERR_TAIL_BYTES = 65536


@dataclass(frozen=True)
class RunLimits:
    """Optional wall/memory caps plus the grace period between SIGTERM and SIGKILL."""

    wall_seconds: Decimal | None = None
    memory_bytes: int | None = None
    grace_seconds: Decimal = Decimal(5)

    def __post_init__(self):
        if self.wall_seconds is not None and self.wall_seconds <= 0:
            raise ValidationError("wall limit must be positive")
        if self.memory_bytes is not None and self.memory_bytes <= 0:
            raise ValidationError("memory limit must be positive")
        if self.grace_seconds <= 0:
            raise ValidationError("grace period must be positive")


@dataclass(frozen=True)
class JobResult:
    """Outcome of one supervised job."""

    job_id: str
    termination: str
    exit_code: int | None
    times: TimeRecord | None
    peak_rss_bytes: int
    stdout_path: Path
    stderr_path: Path
    started_at: float
    ended_at: float
    resumed: bool = False

    def __post_init__(self):
        if self.termination not in TERMINAL_STATUSES:
            raise ValidationError(f"'{self.termination}' is not a terminal status")
        if self.termination == COMPLETED and (self.exit_code is None or self.times is None):
            raise ValidationError("completed jobs must carry an exit code and times")

    @property
    def wall_duration(self) -> float:
        return self.ended_at - self.started_at


def supervise(
    command: str,
    limits: RunLimits,
    *,
    stdout_path: Path,
    stderr_path: Path,
    job_id: str = "",
    time_command: str = "time",
    env: dict[str, str] | None = None,
    cwd: Path | None = None,
    kill_check: Callable[[], str | None] | None = None,
) -> JobResult:
    """Execute one fully expanded command under the configured limits.

    ``kill_check`` is polled between samples; returning a terminal status
    kills the process group and becomes the job's termination reason.
    """
    shell_line = f"{time_command} -p {command}"
    full_env = dict(os.environ)
    if env:
        full_env.update(env)
    full_env["LC_ALL"] = "POSIX"

    stdout_path.parent.mkdir(parents=True, exist_ok=True)
    started_at = time.time()
    started_mono = time.monotonic()
    with open(stdout_path, "wb") as out, open(stderr_path, "wb") as err:
        try:
            proc = subprocess.Popen(
                ["bash", "-c", shell_line],
                stdout=out,
                stderr=err,
                stdin=subprocess.DEVNULL,
                start_new_session=True,
                env=full_env,
                cwd=cwd,
            )
        except OSError as exc:
            err.write(f"casbench: failed to start job: {exc}\n".encode())
            ended = time.time()
            return JobResult(
                job_id=job_id,
                termination=ERROR,
                exit_code=None,
                times=None,
                peak_rss_bytes=0,
                stdout_path=stdout_path,
                stderr_path=stderr_path,
                started_at=started_at,
                ended_at=ended,
            )

        deadline = started_mono + float(limits.wall_seconds) if limits.wall_seconds is not None else None
        grace = float(limits.grace_seconds)
        peak_rss = 0
        sampling_ok = True
        next_sample = started_mono
        termination: str | None = None
        exit_code: int | None = None

        try:
            ps_proc = psutil.Process(proc.pid)
        except psutil.Error:
            ps_proc = None

        while True:
            rc = proc.poll()
            if rc is not None:
                termination = COMPLETED if rc == 0 else ERROR
                exit_code = rc
                break
            now = time.monotonic()
            if kill_check is not None:
                requested = kill_check()
                if requested is not None:
                    _kill_group(proc, grace)
                    termination = requested
                    break
            if deadline is not None and now >= deadline:
                _kill_group(proc, grace)
                termination = TIMEOUT
                break
            if sampling_ok and ps_proc is not None and now >= next_sample:
                next_sample = now + _MEM_SAMPLE_INTERVAL
                try:
                    rss = _tree_rss(ps_proc)
                except psutil.Error:
                    rss = None  # racing against process exit; try again next tick
                except Exception as exc:
                    sampling_ok = False
                    rss = None
                    logger.warning(
                        "memory sampling failed for job '%s' (%s); memory limit not enforced", job_id, exc
                    )
                if rss is not None:
                    peak_rss = max(peak_rss, rss)
                    if limits.memory_bytes is not None and rss > limits.memory_bytes:
                        _kill_group(proc, grace)
                        termination = MEMOUT
                        break
            time.sleep(_POLL_INTERVAL)

    ended_at = time.time()
    times: TimeRecord | None = None
    if termination in (COMPLETED, ERROR) and exit_code is not None:
        try:
            times = parse_posix_time(_tail(stderr_path))
        except TimeParseError as exc:
            times = None
            if termination == COMPLETED:
                # a completed job must have a time record; without one the
                # result is not trustworthy
                termination = ERROR
                with open(stderr_path, "ab") as err:
                    err.write(f"casbench: no POSIX time record found: {exc}\n".encode())
    return JobResult(
        job_id=job_id,
        termination=termination,
        exit_code=exit_code if termination in (COMPLETED, ERROR) else None,
        times=times,
        peak_rss_bytes=peak_rss,
        stdout_path=stdout_path,
        stderr_path=stderr_path,
        started_at=started_at,
        ended_at=ended_at,
    )


def _tree_rss(root: psutil.Process) -> int:
    """Resident set of the process and all its descendants, in bytes."""
    total = 0
    for proc in [root] + root.children(recursive=True):
        try:
            total += proc.memory_info().rss
        except psutil.NoSuchProcess:
            continue
    return total


def _kill_group(proc: subprocess.Popen, grace: float) -> None:
    """SIGTERM the whole process group, escalate to SIGKILL after the grace period."""
    _signal_group(proc.pid, signal.SIGTERM)
    deadline = time.monotonic() + grace
    while proc.poll() is None and time.monotonic() < deadline:
        time.sleep(0.05)
    if proc.poll() is None:
        _signal_group(proc.pid, signal.SIGKILL)
    try:
        proc.wait(timeout=10)
    except subprocess.TimeoutExpired:  # pragma: no cover - SIGKILL cannot be ignored
        logger.error("process group %d survived SIGKILL", proc.pid)
    # sweep stragglers that re-parented but stayed in the group
    _signal_group(proc.pid, signal.SIGKILL)


def _signal_group(pgid: int, sig: signal.Signals) -> None:
    try:
        os.killpg(pgid, sig)
    except ProcessLookupError:
        pass
    except PermissionError:  # pragma: no cover - unexpected on owned groups
        logger.warning("no permission to signal process group %d", pgid)


def _tail(path: Path, limit: int = _STDERR_TAIL_BYTES) -> str:
    try:
        with open(path, "rb") as handle:
            handle.seek(0, os.SEEK_END)
            size = handle.tell()
            handle.seek(max(0, size - limit))
            return handle.read().decode("utf-8", errors="replace")
    except OSError:
        return ""
