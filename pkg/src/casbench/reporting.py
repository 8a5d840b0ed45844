"""Machine-readable (XML) and human-readable (HTML) run reports.

Both documents are regenerated whole and written atomically, so a reader
over plain file transfer never sees a partial file.  The XML schema is the
stable automation interface:

    <Run task=".." timestamp=".." machine="..">
      <limits wall=".." memoryBytes=".." grace=".."/>
      <job id=".." status=".." real=".." user=".." sys=".." peakRSS=".."
           verdict=".." stdout=".." stderr=".."/>
    </Run>

Timings carry two decimals; optional attributes are omitted when unknown
(e.g. on waiting or killed jobs).  File references are relative to the
results directory.
"""

from __future__ import annotations

import csv
import html
import io
import logging
import os
import platform
import shlex
import subprocess
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from decimal import Decimal, InvalidOperation
from pathlib import Path

from .errors import ConflictError, ReportError
from .runner.supervise import JobResult, RunLimits, TERMINAL_STATUSES, TIMEOUT

logger = logging.getLogger("casbench.reporting")

UNCHECKED = "unchecked"
ACCEPTED = "accepted"
REJECTED = "rejected"
VERDICTS = (UNCHECKED, ACCEPTED, REJECTED)

_STATUS_COLORS = {
    "completed": "#2e7d32",
    "error": "#c62828",
    "timeout": "#e65100",
    "memout": "#6a1b9a",
    "killed-by-user": "#546e7a",
    "running": "#1565c0",
    "waiting": "#757575",
}


@dataclass(frozen=True)
class JobReportEntry:
    """One row of a run report; times absent until the job completes."""

    job_id: str
    status: str
    real: Decimal | None = None
    user: Decimal | None = None
    sys: Decimal | None = None
    peak_rss_bytes: int | None = None
    stdout_ref: str | None = None
    stderr_ref: str | None = None
    verdict: str = UNCHECKED


@dataclass(frozen=True)
class RunReport:
    """Snapshot of one run: identification, limits, and one entry per job."""

    task: str
    timestamp: str
    machine: str
    limits: RunLimits
    jobs: tuple[JobReportEntry, ...] = field(default_factory=tuple)

    def with_verdict(self, job_id: str, verdict: str) -> "RunReport":
        jobs = tuple(
            replace(entry, verdict=verdict) if entry.job_id == job_id else entry for entry in self.jobs
        )
        return replace(self, jobs=jobs)


def machine_description(parallel: int | None = None) -> str:
    parts = (
        f"{platform.node()} {platform.system()} {platform.release()} {platform.machine()}, "
        f"Python {platform.python_version()}"
    )
    if parallel:
        parts += f", parallel jobs={parallel} (timings not publication-grade)"
    return parts


def entry_from_result(job_id: str, status: str, result: JobResult | None) -> JobReportEntry:
    """Report row for a job in its current state; live jobs have no timings yet."""
    if result is None or status not in TERMINAL_STATUSES:
        return JobReportEntry(job_id=job_id, status=status)
    times = result.times
    return JobReportEntry(
        job_id=job_id,
        status=status,
        real=times.real if times else None,
        user=times.user if times else None,
        sys=times.sys if times else None,
        peak_rss_bytes=result.peak_rss_bytes,
        stdout_ref=f"{job_id}/stdout.txt",
        stderr_ref=f"{job_id}/stderr.txt",
    )


# --------------------------------------------------------------------------
# XML
# --------------------------------------------------------------------------


def write_results_xml(report: RunReport, path: Path | str) -> Path:
    """Serialize a report; the write is atomic (temp file + rename)."""
    path = Path(path)
    root = ET.Element("Run", task=report.task, timestamp=report.timestamp, machine=report.machine)
    limits = ET.SubElement(root, "limits")
    if report.limits.wall_seconds is not None:
        limits.set("wall", f"{report.limits.wall_seconds:.2f}")
    if report.limits.memory_bytes is not None:
        limits.set("memoryBytes", str(report.limits.memory_bytes))
    limits.set("grace", f"{report.limits.grace_seconds:.2f}")
    for entry in report.jobs:
        job = ET.SubElement(root, "job", id=entry.job_id, status=entry.status)
        for attr, value in (("real", entry.real), ("user", entry.user), ("sys", entry.sys)):
            if value is not None:
                job.set(attr, f"{value:.2f}")
        if entry.peak_rss_bytes is not None:
            job.set("peakRSS", str(entry.peak_rss_bytes))
        job.set("verdict", entry.verdict)
        if entry.stdout_ref is not None:
            job.set("stdout", entry.stdout_ref)
        if entry.stderr_ref is not None:
            job.set("stderr", entry.stderr_ref)
    tree = ET.ElementTree(root)
    ET.indent(tree, space="  ")
    text = ET.tostring(root, encoding="unicode") + "\n"
    _atomic_write(path, text)
    return path


def parse_results_xml(path: Path | str) -> RunReport:
    """Read a results document back into a RunReport."""
    path = Path(path)
    try:
        root = ET.fromstring(path.read_text(encoding="utf-8"))
    except (OSError, ET.ParseError) as exc:
        raise ReportError(f"cannot read results XML '{path}': {exc}") from exc
    if root.tag != "Run":
        raise ReportError(f"expected root element 'Run' in '{path}', found '{root.tag}'")
    limits_el = root.find("limits")
    if limits_el is None:
        raise ReportError(f"missing 'limits' element in '{path}'")
    try:
        limits = RunLimits(
            wall_seconds=_opt_decimal(limits_el.get("wall")),
            memory_bytes=int(limits_el.get("memoryBytes")) if limits_el.get("memoryBytes") else None,
            grace_seconds=_opt_decimal(limits_el.get("grace")) or Decimal(5),
        )
        jobs = tuple(
            JobReportEntry(
                job_id=el.get("id", ""),
                status=el.get("status", ""),
                real=_opt_decimal(el.get("real")),
                user=_opt_decimal(el.get("user")),
                sys=_opt_decimal(el.get("sys")),
                peak_rss_bytes=int(el.get("peakRSS")) if el.get("peakRSS") else None,
                stdout_ref=el.get("stdout"),
                stderr_ref=el.get("stderr"),
                verdict=el.get("verdict", UNCHECKED),
            )
            for el in root.findall("job")
        )
    except (ValueError, InvalidOperation) as exc:
        raise ReportError(f"bad value in results XML '{path}': {exc}") from exc
    return RunReport(
        task=root.get("task", ""),
        timestamp=root.get("timestamp", ""),
        machine=root.get("machine", ""),
        limits=limits,
        jobs=jobs,
    )


def _opt_decimal(text: str | None) -> Decimal | None:
    return Decimal(text) if text else None


# --------------------------------------------------------------------------
# HTML
# --------------------------------------------------------------------------


def write_results_html(report: RunReport, path: Path | str) -> Path:
    """Render a dependency-free static page; regenerated whole on each update."""
    path = Path(path)
    rows = []
    for entry in report.jobs:
        color = _STATUS_COLORS.get(entry.status, "#000000")
        real = _time_cell(entry, report.limits)
        user = f"{entry.user:.2f}" if entry.user is not None else "&mdash;"
        sys_ = f"{entry.sys:.2f}" if entry.sys is not None else "&mdash;"
        memory = (
            f"{entry.peak_rss_bytes / 1048576:.1f} MiB" if entry.peak_rss_bytes is not None else "&mdash;"
        )
        stdout = _link(entry.stdout_ref, "stdout")
        stderr = _link(entry.stderr_ref, "stderr")
        rows.append(
            "<tr>"
            f"<td><code>{html.escape(entry.job_id)}</code></td>"
            f'<td style="color:{color};font-weight:bold">{html.escape(entry.status)}</td>'
            f"<td>{real}</td><td>{user}</td><td>{sys_}</td><td>{memory}</td>"
            f"<td>{stdout} {stderr}</td>"
            f"<td>{html.escape(entry.verdict)}</td>"
            "</tr>"
        )
    counts: dict[str, int] = {}
    for entry in report.jobs:
        counts[entry.status] = counts.get(entry.status, 0) + 1
    summary = ", ".join(f"{name}: {count}" for name, count in sorted(counts.items()))
    limit_bits = []
    if report.limits.wall_seconds is not None:
        limit_bits.append(f"wall {report.limits.wall_seconds:.2f} s")
    if report.limits.memory_bytes is not None:
        limit_bits.append(f"memory {report.limits.memory_bytes / 1048576:.1f} MiB")
    limit_bits.append(f"grace {report.limits.grace_seconds:.2f} s")
    rows_text = "\n".join(rows)
    text = f"""<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>Run {html.escape(report.task)} &ndash; {html.escape(report.timestamp)}</title>
<style>
body {{ font-family: sans-serif; margin: 2em; }}
table {{ border-collapse: collapse; }}
td, th {{ border: 1px solid #bbb; padding: 0.3em 0.7em; text-align: left; }}
th {{ background: #eee; }}
code {{ font-size: 0.95em; }}
</style>
</head>
<body>
<h1>Task {html.escape(report.task)}</h1>
<p>Run started {html.escape(report.timestamp)} on {html.escape(report.machine)}.<br>
Limits: {html.escape("; ".join(limit_bits))}.<br>
Jobs: {summary}.</p>
<table>
<tr><th>job</th><th>status</th><th>real [s]</th><th>user [s]</th><th>sys [s]</th>
<th>peak memory</th><th>output</th><th>verdict</th></tr>
{rows_text}
</table>
</body>
</html>
"""
    _atomic_write(path, text)
    return path


def _time_cell(entry: JobReportEntry, limits: RunLimits) -> str:
    if entry.real is not None:
        return f"{entry.real:.2f}"
    if entry.status == TIMEOUT and limits.wall_seconds is not None:
        return f"&ge; {limits.wall_seconds:.2f} (limit)"
    return "&mdash;"


def _link(ref: str | None, label: str) -> str:
    if not ref:
        return ""
    return f'<a href="{html.escape(ref, quote=True)}">{label}</a>'


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as exc:
        raise ReportError(f"cannot write report '{path}': {exc}") from exc


# --------------------------------------------------------------------------
# Timings export
# --------------------------------------------------------------------------


def timings_table(reports: list[RunReport]) -> str:
    """CSV matrix: one row per instance, one column per backend (per run).

    Cells hold real seconds for completed jobs and the terminal status token
    otherwise.  With several reports of the same task the backend columns
    repeat, grouped by run timestamp.
    """
    if not reports:
        raise ReportError("no reports given")
    tasks = {report.task for report in reports}
    if len(tasks) != 1:
        raise ReportError(f"reports mix different tasks: {', '.join(sorted(tasks))}")

    instances: list[str] = []
    backends: list[str] = []
    for entry in reports[0].jobs:
        instance, _, backend = entry.job_id.partition("/")
        if instance not in instances:
            instances.append(instance)
        if backend not in backends:
            backends.append(backend)

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    header = ["instance"]
    for report in reports:
        for backend in backends:
            header.append(backend if len(reports) == 1 else f"{backend} {report.timestamp}")
    writer.writerow(header)
    for instance in instances:
        row = [instance]
        for report in reports:
            by_id = {entry.job_id: entry for entry in report.jobs}
            for backend in backends:
                entry = by_id.get(f"{instance}/{backend}")
                if entry is None:
                    row.append("")
                elif entry.real is not None:
                    row.append(f"{entry.real:.2f}")
                else:
                    row.append(entry.status)
        writer.writerow(row)
    return buffer.getvalue()


# --------------------------------------------------------------------------
# Verification hooks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Verifier:
    """External decision routine for one computation problem.

    ``command`` is a template with ``{instance}`` and ``{output}``
    placeholders; exit 0 means accepted, 1 rejected, anything else leaves
    the job unchecked.
    """

    problem: str
    command: str


class VerifierSet:
    """At most one verifier per computation problem."""

    def __init__(self):
        self._by_problem: dict[str, Verifier] = {}

    def register(self, verifier: Verifier) -> None:
        if verifier.problem in self._by_problem:
            raise ConflictError(f"problem '{verifier.problem}' already has a verifier")
        self._by_problem[verifier.problem] = verifier

    def lookup(self, problem: str) -> Verifier | None:
        return self._by_problem.get(problem)


def verify_job(verifier: Verifier, instance_file: Path | str, output_file: Path | str) -> str:
    """Run the decision routine on one job's output; never raises.

    The verifier runs after the job, on the supervisor's own time, so its
    runtime never contaminates the job's timings.
    """
    command = verifier.command.replace("{instance}", shlex.quote(str(instance_file))).replace(
        "{output}", shlex.quote(str(output_file))
    )
    try:
        proc = subprocess.run(["bash", "-c", command], capture_output=True)
    except OSError as exc:
        logger.warning("verifier for '%s' could not run (%s); leaving job unchecked", verifier.problem, exc)
        return UNCHECKED
    if proc.returncode == 0:
        return ACCEPTED
    if proc.returncode == 1:
        return REJECTED
    logger.warning(
        "verifier for '%s' exited %d; leaving job unchecked", verifier.problem, proc.returncode
    )
    return UNCHECKED
