"""Supervised execution of taskfolder jobs with POSIX time accounting."""

from .times import TimeRecord, format_posix_time, parse_posix_time
from .supervise import (
    ALL_STATUSES,
    COMPLETED,
    ERROR,
    KILLED_BY_USER,
    MEMOUT,
    RUNNING,
    TERMINAL_STATUSES,
    TIMEOUT,
    WAITING,
    JobResult,
    RunLimits,
    supervise,
)
from .orchestrate import (
    CONTROL_NAME,
    MANIFEST_NAME,
    RESULTS_HTML_NAME,
    RESULTS_XML_NAME,
    ControlChannel,
    Job,
    RunSession,
    resume,
    run_all,
)

__all__ = [
    "ALL_STATUSES",
    "COMPLETED",
    "CONTROL_NAME",
    "ControlChannel",
    "ERROR",
    "Job",
    "JobResult",
    "KILLED_BY_USER",
    "MANIFEST_NAME",
    "MEMOUT",
    "RESULTS_HTML_NAME",
    "RESULTS_XML_NAME",
    "RUNNING",
    "RunLimits",
    "RunSession",
    "TERMINAL_STATUSES",
    "TIMEOUT",
    "TimeRecord",
    "WAITING",
    "format_posix_time",
    "parse_posix_time",
    "resume",
    "run_all",
    "supervise",
]
