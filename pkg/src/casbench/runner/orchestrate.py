"""Run every job of a loaded taskfolder and keep results on disk up to date.

Results live in ``<taskfolder>/results/<YYYY-MM-DD_HH-MM-SS>/``:

    <job-instance>/<job-backend>/stdout.txt, stderr.txt
    manifest.json        terminal status + script checksum per finished job
    results.xml          machine-readable report, regenerated per event
    index.html           human-readable report, regenerated per event
    control              append ``kill <instance>/<backend>`` lines here

Jobs run in instance-major, backend-minor order, one at a time unless a
worker count is given (parallel timings are flagged in the report).  A
first SIGINT kills the running job(s) and the run continues; a second
SIGINT within two seconds aborts the run.  An aborted in-flight job gets no
manifest entry, so a later resume will re-run it; a job killed one-off by
the user keeps its killed-by-user status across resumes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shlex
import signal
import sys
import threading
import time
from collections import deque
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from .. import reporting
from ..errors import ConfigurationError, NotFoundError, RunAborted
from ..taskfolder import TaskFolderLayout
from .supervise import (
    COMPLETED,
    KILLED_BY_USER,
    RUNNING,
    TERMINAL_STATUSES,
    WAITING,
    JobResult,
    RunLimits,
    supervise,
)
from .times import TimeRecord

logger = logging.getLogger("casbench.runner")

MANIFEST_NAME = "manifest.json"
CONTROL_NAME = "control"
RESULTS_XML_NAME = "results.xml"
RESULTS_HTML_NAME = "index.html"

_INTERRUPT_WINDOW = 2.0
_CONTROL_POLL_SECONDS = 1.0


@dataclass(frozen=True)
class Job:
    job_id: str
    instance: str
    backend: str
    script: Path
    command: str
    checksum: str


class ControlChannel:
    """Kill-request intake: a ``control`` file in the live results directory
    plus a programmatic entry point with the same semantics."""

    def __init__(self):
        self._session: "RunSession | None" = None
        self._path: Path | None = None
        self._offset = 0
        self._last_poll = 0.0

    def attach(self, session: "RunSession") -> None:
        self._session = session
        self._path = session.results_dir / CONTROL_NAME
        self._path.touch(exist_ok=True)
        self._offset = self._path.stat().st_size

    def request_kill(self, job_id: str) -> str:
        """Ask for one job's termination; unknown ids are rejected by name."""
        if self._session is None:
            raise ConfigurationError("control channel is not attached to a run")
        return self._session.request_kill(job_id)

    def poll(self) -> None:
        """Read new ``kill <job-id>`` lines; throttled to one file read per second."""
        if self._session is None or self._path is None:
            return
        now = time.monotonic()
        if now - self._last_poll < _CONTROL_POLL_SECONDS:
            return
        self._last_poll = now
        try:
            with open(self._path, "rb") as handle:
                handle.seek(self._offset)
                chunk = handle.read()
        except OSError:
            return
        if not chunk:
            return
        text = chunk.decode("utf-8", errors="replace")
        lines, _, partial = text.rpartition("\n")
        self._offset += len(chunk) - len(partial.encode())
        for line in lines.splitlines():
            line = line.strip()
            if not line:
                continue
            words = line.split(None, 1)
            if words[0] != "kill" or len(words) != 2:
                logger.warning("control: unrecognized line %r", line)
                continue
            try:
                ack = self.request_kill(words[1].strip())
            except NotFoundError as exc:
                logger.warning("control: %s", exc)
            else:
                logger.info("control: %s", ack)


class RunSession:
    """One supervised pass over a taskfolder's jobs (fresh or resumed)."""

    def __init__(
        self,
        folder: TaskFolderLayout,
        limits: RunLimits,
        *,
        jobs: int = 1,
        control: ControlChannel | None = None,
        resume_dir: Path | None = None,
    ):
        if jobs < 1:
            raise ConfigurationError("worker count must be at least 1")
        self.folder = folder
        self.limits = limits
        self.workers = jobs
        self.control = control or ControlChannel()
        self.jobs: list[Job] = self._expand_jobs()
        self.results_dir = self._prepare_results_dir(resume_dir)

        # RLock: the SIGINT handler may fire while this thread holds the lock
        self._lock = threading.RLock()
        self._status: dict[str, str] = {job.job_id: WAITING for job in self.jobs}
        self._results: dict[str, JobResult] = {}
        self._carried: dict[str, reporting.JobReportEntry] = {}
        self._queue: deque[str] = deque(job.job_id for job in self.jobs)
        self._kill_requests: set[str] = set()
        self._interrupt_origin: set[str] = set()
        self._interrupt_killed: set[str] = set()
        self._abort = threading.Event()
        self._interrupted = False
        self._last_interrupt: float | None = None
        self._machine = reporting.machine_description(parallel=jobs if jobs > 1 else None)

        if jobs > 1:
            logger.warning("running %d jobs in parallel; timings are not publication-grade", jobs)
        if resume_dir is not None:
            self._adopt_previous_run()
        self.control.attach(self)

    # -- setup ------------------------------------------------------------

    def _expand_jobs(self) -> list[Job]:
        jobs = []
        settings = self.folder.settings
        for tname, iname in self.folder.task.instances:
            for bname in self.folder.task.backends:
                script = self.folder.script_path(iname, bname)
                template = settings.invocations.get(bname)
                if template is None:
                    raise ConfigurationError(
                        f"machinesettings has no invocation command for backend '{bname}'"
                    )
                command = template.replace("{script}", shlex.quote(str(script.resolve())))
                jobs.append(
                    Job(
                        job_id=f"{iname}/{bname}",
                        instance=iname,
                        backend=bname,
                        script=script,
                        command=command,
                        checksum=_sha256(script),
                    )
                )
        return jobs

    def _prepare_results_dir(self, resume_dir: Path | None) -> Path:
        if resume_dir is not None:
            resume_dir = Path(resume_dir)
            if not (resume_dir / MANIFEST_NAME).is_file():
                raise ConfigurationError(f"'{resume_dir}' has no {MANIFEST_NAME}; cannot resume")
            return resume_dir
        root = self.folder.root / "results"
        stamp = datetime.now().strftime("%Y-%m-%d_%H-%M-%S")
        candidate = root / stamp
        suffix = 1
        while candidate.exists():
            suffix += 1
            candidate = root / f"{stamp}_{suffix}"
        try:
            candidate.mkdir(parents=True)
        except OSError as exc:
            raise RunAborted(f"cannot create results directory '{candidate}': {exc}") from exc
        return candidate

    def _adopt_previous_run(self) -> None:
        """Skip jobs already finished with an unchanged script; queue the rest."""
        try:
            manifest = json.loads((self.results_dir / MANIFEST_NAME).read_text(encoding="utf-8"))
            entries = manifest["jobs"]
            previous = reporting.parse_results_xml(self.results_dir / RESULTS_XML_NAME)
        except Exception as exc:
            logger.warning("previous run state unreadable (%s); re-running all jobs", exc)
            return
        report_entries = {entry.job_id: entry for entry in previous.jobs}
        for job in self.jobs:
            entry = entries.get(job.job_id)
            if not isinstance(entry, dict):
                continue
            status = entry.get("status")
            if status not in TERMINAL_STATUSES or entry.get("checksum") != job.checksum:
                continue
            report_entry = report_entries.get(job.job_id)
            if report_entry is None or report_entry.status != status:
                continue
            times = None
            if report_entry.real is not None:
                times = TimeRecord(real=report_entry.real, user=report_entry.user, sys=report_entry.sys)
            exit_code = entry.get("exit_code")
            if status == COMPLETED and (times is None or exit_code is None):
                continue  # prior record incomplete; safer to re-run
            job_dir = self.results_dir / job.instance / job.backend
            self._carried[job.job_id] = report_entry
            self._results[job.job_id] = JobResult(
                job_id=job.job_id,
                termination=status,
                exit_code=exit_code,
                times=times,
                peak_rss_bytes=report_entry.peak_rss_bytes or 0,
                stdout_path=job_dir / "stdout.txt",
                stderr_path=job_dir / "stderr.txt",
                started_at=0.0,
                ended_at=0.0,
                resumed=True,
            )
            self._status[job.job_id] = status
            self._queue.remove(job.job_id)

    # -- public control surface -------------------------------------------

    def request_kill(self, job_id: str) -> str:
        with self._lock:
            if job_id not in self._status:
                valid = ", ".join(sorted(self._status))
                raise NotFoundError(f"unknown job '{job_id}' (valid ids: {valid})")
            status = self._status[job_id]
            if status in TERMINAL_STATUSES:
                return f"job '{job_id}' already finished ({status}); nothing to do"
            if status == WAITING:
                self._queue.remove(job_id)
                self._record_locked(job_id, self._dequeued_result(job_id))
                return f"job '{job_id}' removed from the queue"
            self._kill_requests.add(job_id)
            return f"kill requested for running job '{job_id}'"

    def abort(self) -> None:
        self._abort.set()
        with self._lock:
            self._queue.clear()
            # jobs killed by the interrupt that escalated into this abort
            # are part of the abort: drop their records so a resume re-runs
            # them (a standalone kill stays terminal)
            if self._interrupt_killed:
                for job_id in self._interrupt_killed:
                    self._results.pop(job_id, None)
                    self._status[job_id] = WAITING
                self._interrupt_killed.clear()
                self._write_manifest()

    # -- run loop -----------------------------------------------------------

    def run(self) -> list[JobResult]:
        with self._lock:
            # even a run that dies mid-job leaves a manifest to resume from
            self._write_manifest()
            self._write_reports()
        previous_handler = None
        in_main = threading.current_thread() is threading.main_thread()
        if in_main:
            try:
                previous_handler = signal.signal(signal.SIGINT, self._on_interrupt)
            except ValueError:  # pragma: no cover - raced thread switch
                previous_handler = None
        workers = [
            threading.Thread(target=self._worker, name=f"casbench-worker-{i}", daemon=True)
            for i in range(self.workers)
        ]
        try:
            for worker in workers:
                worker.start()
            while any(worker.is_alive() for worker in workers):
                self.control.poll()
                time.sleep(0.1)
        finally:
            for worker in workers:
                worker.join()
            if in_main and previous_handler is not None:
                signal.signal(signal.SIGINT, previous_handler)
        if self._abort.is_set():
            raise RunAborted(
                "run aborted by interrupt" if self._interrupted else "run aborted",
                interrupted=self._interrupted,
            )
        self._write_reports_locked_entry()
        return [self._results[job.job_id] for job in self.jobs]

    def _worker(self) -> None:
        while True:
            with self._lock:
                if self._abort.is_set() or not self._queue:
                    return
                job_id = self._queue.popleft()
                self._status[job_id] = RUNNING
                self._write_reports()
            job = next(j for j in self.jobs if j.job_id == job_id)
            job_dir = self.results_dir / job.instance / job.backend
            job_dir.mkdir(parents=True, exist_ok=True)
            result = supervise(
                job.command,
                self.limits,
                stdout_path=job_dir / "stdout.txt",
                stderr_path=job_dir / "stderr.txt",
                job_id=job.job_id,
                time_command=self.folder.settings.time_command,
                env=self.folder.settings.environment,
                cwd=job_dir,
                kill_check=lambda: self._kill_wanted(job_id),
            )
            with self._lock:
                if self._abort.is_set():
                    # no terminal record: a resume must re-run this job
                    self._status[job_id] = WAITING
                    return
                self._kill_requests.discard(job_id)
                self._record_locked(job_id, result)

    def _kill_wanted(self, job_id: str) -> str | None:
        if self._abort.is_set() or job_id in self._kill_requests:
            return KILLED_BY_USER
        return None

    def _on_interrupt(self, signum, frame) -> None:
        now = time.monotonic()
        if self._last_interrupt is not None and now - self._last_interrupt <= _INTERRUPT_WINDOW:
            self._interrupted = True
            self.abort()
            sys.stderr.write("casbench: aborting run\n")
        else:
            self._last_interrupt = now
            with self._lock:
                # a previous interrupt outside the window is final now
                self._interrupt_killed.clear()
                running = [jid for jid, st in self._status.items() if st == RUNNING]
                self._interrupt_origin.update(running)
                self._kill_requests.update(running)
            sys.stderr.write(
                "casbench: killing current job; press Ctrl-C again within 2 s to abort the run\n"
            )

    # -- bookkeeping --------------------------------------------------------

    def _dequeued_result(self, job_id: str) -> JobResult:
        job = next(j for j in self.jobs if j.job_id == job_id)
        job_dir = self.results_dir / job.instance / job.backend
        job_dir.mkdir(parents=True, exist_ok=True)
        stdout = job_dir / "stdout.txt"
        stderr = job_dir / "stderr.txt"
        stdout.touch()
        stderr.touch()
        now = time.time()
        return JobResult(
            job_id=job_id,
            termination=KILLED_BY_USER,
            exit_code=None,
            times=None,
            peak_rss_bytes=0,
            stdout_path=stdout,
            stderr_path=stderr,
            started_at=now,
            ended_at=now,
        )

    def _record_locked(self, job_id: str, result: JobResult) -> None:
        self._results[job_id] = result
        self._status[job_id] = result.termination
        if job_id in self._interrupt_origin:
            self._interrupt_origin.discard(job_id)
            if result.termination == KILLED_BY_USER:
                self._interrupt_killed.add(job_id)
        self._write_manifest()
        self._write_reports()

    def _write_manifest(self) -> None:
        data = {
            "version": 1,
            "task": self.folder.task.name,
            "jobs": {
                job.job_id: {
                    "checksum": job.checksum,
                    "status": self._results[job.job_id].termination,
                    "exit_code": self._results[job.job_id].exit_code,
                }
                for job in self.jobs
                if job.job_id in self._results
            },
        }
        path = self.results_dir / MANIFEST_NAME
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        os.replace(tmp, path)

    def _write_reports_locked_entry(self) -> None:
        with self._lock:
            self._write_reports()

    def _write_reports(self) -> None:
        report = self._build_report()
        reporting.write_results_xml(report, self.results_dir / RESULTS_XML_NAME)
        reporting.write_results_html(report, self.results_dir / RESULTS_HTML_NAME)

    def _build_report(self) -> reporting.RunReport:
        entries = []
        for job in self.jobs:
            carried = self._carried.get(job.job_id)
            if carried is not None:
                entries.append(carried)
                continue
            status = self._status[job.job_id]
            result = self._results.get(job.job_id)
            entries.append(reporting.entry_from_result(job.job_id, status, result))
        return reporting.RunReport(
            task=self.folder.task.name,
            timestamp=self.results_dir.name,
            machine=self._machine,
            limits=self.limits,
            jobs=tuple(entries),
        )


def run_all(
    folder: TaskFolderLayout,
    limits: RunLimits,
    control: ControlChannel | None = None,
    *,
    jobs: int = 1,
) -> list[JobResult]:
    """Run every job of the folder; one JobResult per job, in job order."""
    return RunSession(folder, limits, control=control, jobs=jobs).run()


def resume(
    folder: TaskFolderLayout,
    previous_results_dir: Path | str,
    limits: RunLimits,
    control: ControlChannel | None = None,
    *,
    jobs: int = 1,
) -> list[JobResult]:
    """Continue an interrupted run in place, skipping unchanged finished jobs."""
    session = RunSession(
        folder, limits, control=control, jobs=jobs, resume_dir=Path(previous_results_dir)
    )
    return session.run()


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()
