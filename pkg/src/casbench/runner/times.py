"""POSIX.2 time accounting: the three-line ``real/user/sys`` format of ``time -p``."""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation

from ..errors import TimeParseError, ValidationError

_TIME_LINE_RE = re.compile(r"^(real|user|sys)[ \t]+([0-9]+(?:\.[0-9]*)?)[ \t]*$", re.MULTILINE)
_NEGATIVE_LINE_RE = re.compile(r"^(real|user|sys)[ \t]+-", re.MULTILINE)


@dataclass(frozen=True)
class TimeRecord:
    """Wall, user, and system CPU seconds as exact decimals."""

    real: Decimal
    user: Decimal
    sys: Decimal

    def __post_init__(self):
        for name in ("real", "user", "sys"):
            value = getattr(self, name)
            if not isinstance(value, Decimal):
                raise ValidationError(f"{name} time must be a Decimal")
            if value < 0:
                raise ValidationError(f"{name} time must be nonnegative")


def format_posix_time(record: TimeRecord) -> str:
    """Render the ``time -p`` shape with two decimal places."""
    return f"real {record.real:.2f}\nuser {record.user:.2f}\nsys {record.sys:.2f}\n"


def parse_posix_time(text: str) -> TimeRecord:
    """Extract the last real/user/sys lines from a job's error stream.

    Solver output on the same stream is ignored; only well-formed time
    lines count.  ``parse_posix_time(format_posix_time(t)) == t`` for
    records with at most two decimal places.
    """
    negative = _NEGATIVE_LINE_RE.search(text)
    if negative:
        raise TimeParseError(f"negative value in '{negative.group(1)}' time line")
    values: dict[str, Decimal] = {}
    for match in _TIME_LINE_RE.finditer(text):
        try:
            values[match.group(1)] = Decimal(match.group(2))
        except InvalidOperation as exc:  # pragma: no cover - regex precludes this
            raise TimeParseError(f"bad decimal '{match.group(2)}'") from exc
    for name in ("real", "user", "sys"):
        if name not in values:
            raise TimeParseError(f"missing '{name}' line in time output")
    return TimeRecord(real=values["real"], user=values["user"], sys=values["sys"])
