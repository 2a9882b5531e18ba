"""Threat-feed ingestion: fetch, parse, validate, and deduplicate indicators.

Feeds are either a single STIX 2.x bundle (file or URL) or a directory of
`.json` bundle files.  Bundle parsing is total: any object-level problem
becomes a skip diagnostic, never an exception; only a broken bundle envelope
raises.
"""

from __future__ import annotations

import json
import re
import threading
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

import requests

from .stix_patterns import Expr, PatternError, parse_pattern
from .util import TimestampError, parse_rfc3339

DEFAULT_TRUST_TIER = 3
MIN_POLL_INTERVAL = 30

_STIX_ID_RE = re.compile(r"indicator--[0-9a-fA-F-]{36}\Z")


class FeedKind(str, Enum):
    STIX_BUNDLE = "stix_bundle"
    IOC_DIRECTORY = "ioc_directory"


class FeedConfigError(ValueError):
    """Invalid feed source definition."""


class FetchError(Exception):
    """A feed could not be fetched; `retryable` distinguishes transient failures."""

    def __init__(self, source_id: str, message: str, retryable: bool = True):
        super().__init__(f"feed {source_id}: {message}")
        self.source_id = source_id
        self.retryable = retryable


class BundleParseError(ValueError):
    """Document is not a STIX bundle envelope."""


@dataclass(frozen=True)
class FeedSource:
    source_id: str
    location: str
    kind: FeedKind
    trust_tier: int = DEFAULT_TRUST_TIER
    poll_interval: int = 300
    enabled: bool = True

    def __post_init__(self):
        if not self.source_id:
            raise FeedConfigError("source_id must be non-empty")
        if not 1 <= self.trust_tier <= 5:
            raise FeedConfigError(f"feed {self.source_id}: trust_tier must be 1..5, got {self.trust_tier}")
        if self.poll_interval < MIN_POLL_INTERVAL:
            raise FeedConfigError(
                f"feed {self.source_id}: poll_interval must be >= {MIN_POLL_INTERVAL}s, got {self.poll_interval}"
            )


@dataclass(frozen=True)
class RawDocument:
    content: bytes
    origin: str


@dataclass(frozen=True)
class IndicatorRecord:
    stix_id: str
    created: datetime
    modified: datetime
    valid_from: datetime
    pattern_text: str
    expr: Expr
    labels: tuple[str, ...]
    source_id: str
    trust_tier: int
    valid_until: Optional[datetime] = None
    revoked: bool = False


@dataclass(frozen=True)
class SkipDiagnostic:
    """One skipped bundle object and why."""

    stix_id: Optional[str]
    object_index: int
    reason: str


@dataclass
class MergeDelta:
    added: int = 0
    updated: int = 0
    unchanged: int = 0


def fetch_feed(source: FeedSource, timeout: float = 10.0) -> list[RawDocument]:
    """Fetch the raw documents for one enabled feed source."""
    if not source.enabled:
        raise FeedConfigError(f"feed {source.source_id} is disabled")
    if source.kind is FeedKind.IOC_DIRECTORY:
        directory = Path(source.location)
        if not directory.is_dir():
            raise FetchError(source.source_id, f"directory {source.location} is unreachable")
        documents = []
        for path in sorted(directory.glob("*.json"), key=lambda p: p.name):
            try:
                documents.append(RawDocument(path.read_bytes(), str(path)))
            except OSError as exc:
                raise FetchError(source.source_id, f"cannot read {path}: {exc}") from exc
        return documents
    if source.location.startswith(("http://", "https://")):
        try:
            response = requests.get(source.location, timeout=timeout)
            response.raise_for_status()
        except requests.RequestException as exc:
            raise FetchError(source.source_id, f"unreachable: {exc}") from exc
        return [RawDocument(response.content, source.location)]
    path = Path(source.location)
    try:
        return [RawDocument(path.read_bytes(), str(path))]
    except OSError as exc:
        raise FetchError(source.source_id, f"cannot read {path}: {exc}") from exc


def parse_stix_bundle(
    document: bytes, source: FeedSource
) -> tuple[list[IndicatorRecord], list[SkipDiagnostic]]:
    """Parse one bundle into indicator records plus per-object skip diagnostics."""
    try:
        payload = json.loads(document)
    except (ValueError, UnicodeDecodeError) as exc:
        raise BundleParseError(f"document is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("type") != "bundle":
        raise BundleParseError('document is missing the top-level "type": "bundle" envelope')
    objects = payload.get("objects", [])
    if not isinstance(objects, list):
        raise BundleParseError('bundle "objects" is not a list')

    records: list[IndicatorRecord] = []
    diagnostics: list[SkipDiagnostic] = []
    for index, obj in enumerate(objects):
        if not isinstance(obj, dict):
            diagnostics.append(SkipDiagnostic(None, index, "object is not a JSON object"))
            continue
        stix_id = obj.get("id") if isinstance(obj.get("id"), str) else None
        if obj.get("type") != "indicator":
            diagnostics.append(
                SkipDiagnostic(stix_id, index, f"unsupported object type {obj.get('type')!r}")
            )
            continue
        try:
            records.append(_parse_indicator(obj, source))
        except _IndicatorSkip as skip:
            diagnostics.append(SkipDiagnostic(stix_id, index, str(skip)))
    return records, diagnostics


class _IndicatorSkip(Exception):
    pass


def _parse_indicator(obj: dict, source: FeedSource) -> IndicatorRecord:
    stix_id = obj.get("id")
    if not isinstance(stix_id, str) or not _STIX_ID_RE.match(stix_id):
        raise _IndicatorSkip(f"malformed indicator id {stix_id!r}")
    try:
        uuid.UUID(stix_id.split("--", 1)[1])
    except ValueError:
        raise _IndicatorSkip(f"indicator id {stix_id!r} does not carry a UUID") from None
    if obj.get("revoked") is True:
        raise _IndicatorSkip("indicator is revoked")
    pattern_type = obj.get("pattern_type", "stix")
    if pattern_type != "stix":
        raise _IndicatorSkip(f"unsupported pattern_type {pattern_type!r}")
    pattern_text = obj.get("pattern")
    if not isinstance(pattern_text, str) or not pattern_text:
        raise _IndicatorSkip("indicator has no pattern")
    try:
        expr = parse_pattern(pattern_text)
    except PatternError as exc:
        raise _IndicatorSkip(f"pattern not parseable: {exc}") from None

    def timestamp(name: str, required: bool = True) -> Optional[datetime]:
        raw = obj.get(name)
        if raw is None:
            if required:
                raise _IndicatorSkip(f"missing timestamp {name!r}")
            return None
        try:
            return parse_rfc3339(raw)
        except TimestampError as exc:
            raise _IndicatorSkip(f"bad timestamp {name!r}: {exc}") from None

    created = timestamp("created")
    modified = timestamp("modified")
    valid_from = timestamp("valid_from")
    valid_until = timestamp("valid_until", required=False)
    if modified < created:
        raise _IndicatorSkip("modified timestamp precedes created")
    if valid_until is not None and valid_until <= valid_from:
        raise _IndicatorSkip("valid_until does not follow valid_from")
    labels = obj.get("labels", [])
    if not isinstance(labels, list) or not all(isinstance(label, str) for label in labels):
        raise _IndicatorSkip("labels must be a list of strings")
    return IndicatorRecord(
        stix_id=stix_id,
        created=created,
        modified=modified,
        valid_from=valid_from,
        valid_until=valid_until,
        pattern_text=pattern_text,
        expr=expr,
        labels=tuple(labels),
        source_id=source.source_id,
        trust_tier=source.trust_tier,
        revoked=False,
    )


class IndicatorStore:
    """In-memory indicator store: concurrent readers, serialized atomic writes.

    Readers get immutable snapshots; a merge replaces the backing dict in one
    assignment, so a snapshot never observes a partial merge.
    """

    def __init__(self):
        self._records: dict[str, IndicatorRecord] = {}
        self._write_lock = threading.Lock()

    def get(self, stix_id: str) -> Optional[IndicatorRecord]:
        return self._records.get(stix_id)

    def snapshot(self) -> list[IndicatorRecord]:
        records = self._records
        return [records[key] for key in sorted(records)]

    def __len__(self) -> int:
        return len(self._records)

    def merge(self, incoming: Iterable[IndicatorRecord]) -> MergeDelta:
        with self._write_lock:
            staged = dict(self._records)
            delta = _merge_into(staged, incoming)
            self._records = staged
            return delta


def _merge_into(records: dict[str, IndicatorRecord], incoming: Iterable[IndicatorRecord]) -> MergeDelta:
    delta = MergeDelta()
    for record in incoming:
        existing = records.get(record.stix_id)
        if existing is None:
            records[record.stix_id] = record
            delta.added += 1
        elif record.modified > existing.modified:
            records[record.stix_id] = record
            delta.updated += 1
        else:
            delta.unchanged += 1
    return delta


def dedupe_and_merge(incoming: Iterable[IndicatorRecord], store: IndicatorStore) -> MergeDelta:
    """Merge records into the store; identity is stix_id, newest `modified` wins."""
    return store.merge(incoming)


def with_source(record: IndicatorRecord, source: FeedSource) -> IndicatorRecord:
    """Re-tag a record with a different source's identity and trust tier."""
    return replace(record, source_id=source.source_id, trust_tier=source.trust_tier)
