"""Shared helpers: RFC 3339 timestamps and canonical JSON."""

from __future__ import annotations

import json
import re
from datetime import datetime, timezone

_SECFRAC_RE = re.compile(r"(?<=\d)\.(\d+)")


class TimestampError(ValueError):
    """Raised for strings that do not parse as RFC 3339 timestamps."""


def parse_rfc3339(text: str) -> datetime:
    """Parse an RFC 3339 timestamp into an aware UTC datetime."""
    if not isinstance(text, str) or not text:
        raise TimestampError(f"not a timestamp: {text!r}")
    normalized = text.strip()
    if normalized.endswith(("Z", "z")):
        normalized = normalized[:-1] + "+00:00"
    # RFC 3339 permits any number of fractional-second digits, but
    # datetime.fromisoformat on 3.10 insists on exactly 3 or 6: pad/truncate.
    matched = _SECFRAC_RE.search(normalized)
    if matched:
        digits = matched.group(1)[:6].ljust(6, "0")
        normalized = normalized[: matched.start(1)] + digits + normalized[matched.end(1):]
    try:
        parsed = datetime.fromisoformat(normalized)
    except ValueError as exc:
        raise TimestampError(f"invalid RFC 3339 timestamp {text!r}") from exc
    if parsed.tzinfo is None:
        raise TimestampError(f"timestamp {text!r} has no UTC offset")
    return parsed.astimezone(timezone.utc)


def format_rfc3339(moment: datetime) -> str:
    """Render an aware datetime in canonical UTC form (Z suffix, no trailing zeros)."""
    if moment.tzinfo is None:
        raise TimestampError("naive datetime cannot be rendered as RFC 3339")
    utc = moment.astimezone(timezone.utc)
    base = utc.strftime("%Y-%m-%dT%H:%M:%S")
    if utc.microsecond:
        base += f".{utc.microsecond:06d}".rstrip("0")
    return base + "Z"


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


def canonical_json_bytes(document: object) -> bytes:
    """Serialize to the canonical on-disk JSON form: sorted keys, 2-space indent."""
    return (json.dumps(document, sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode("utf-8")
