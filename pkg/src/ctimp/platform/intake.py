"""Line-oriented log intake: classic syslog and ISO-timestamped lines.

Classic syslog lines carry no year; replay supplies a default so fixtures
stay stable across wall-clock years.
"""

from __future__ import annotations

import re
from datetime import datetime, timezone
from typing import Optional

from ..detection import LogEvent
from ..util import TimestampError, parse_rfc3339

_MONTHS = {
    "Jan": 1, "Feb": 2, "Mar": 3, "Apr": 4, "May": 5, "Jun": 6,
    "Jul": 7, "Aug": 8, "Sep": 9, "Oct": 10, "Nov": 11, "Dec": 12,
}

_CLASSIC_RE = re.compile(
    r"^(?P<mon>[A-Z][a-z]{2})\s+(?P<day>\d{1,2})\s(?P<time>\d{2}:\d{2}:\d{2})\s"
    r"(?P<host>\S+)\s(?P<prog>[^:\s\[]+)(?:\[\d+\])?:\s(?P<msg>.*)$"
)
_ISO_RE = re.compile(
    r"^(?P<ts>\d{4}-\d{2}-\d{2}T[0-9:.+-]+(?:Z|[+-]\d{2}:\d{2})?)\s"
    r"(?P<host>\S+)\s(?P<prog>[^:\s\[]+)(?:\[\d+\])?:\s(?P<msg>.*)$"
)


class LineParseError(ValueError):
    pass


def parse_log_line(line: str, default_year: int = 2026) -> LogEvent:
    line = line.rstrip("\r\n")
    matched = _ISO_RE.match(line)
    if matched:
        try:
            moment = parse_rfc3339(matched.group("ts"))
        except TimestampError as exc:
            raise LineParseError(f"bad ISO timestamp in line: {exc}") from exc
        return LogEvent(
            received_at=moment,
            source_host=matched.group("host"),
            message=matched.group("msg"),
            program=matched.group("prog"),
        )
    matched = _CLASSIC_RE.match(line)
    if matched:
        month = _MONTHS.get(matched.group("mon"))
        if month is None:
            raise LineParseError(f"unknown month {matched.group('mon')!r}")
        hh, mm, ss = (int(part) for part in matched.group("time").split(":"))
        try:
            moment = datetime(default_year, month, int(matched.group("day")),
                              hh, mm, ss, tzinfo=timezone.utc)
        except ValueError as exc:
            raise LineParseError(f"bad classic timestamp: {exc}") from exc
        return LogEvent(
            received_at=moment,
            source_host=matched.group("host"),
            message=matched.group("msg"),
            program=matched.group("prog"),
        )
    raise LineParseError(f"line matches neither syslog form: {line[:80]!r}")


def iter_log_file(path, default_year: int = 2026):
    """Yields (line_number, LogEvent | LineParseError) for every non-empty line."""
    with open(path, encoding="utf-8", errors="replace") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                yield number, parse_log_line(line, default_year)
            except LineParseError as exc:
                yield number, exc
