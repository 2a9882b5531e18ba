"""Embedded persistence (sqlite, WAL) plus the in-process event bus.

Entities are serialized as JSON documents in the same shapes the HTTP API
serves, so the API can return store rows verbatim.
"""

from __future__ import annotations

import json
import logging
import sqlite3
import threading
from pathlib import Path
from typing import Callable, Optional

from ..cti_ingest import IndicatorRecord
from ..detection import Alert, AlertStatus, DecodedEvent, LogEvent
from ..selfheal import CommandRecord, CommandState, Mode
from ..stix_patterns import parse_pattern
from ..util import format_rfc3339, parse_rfc3339

log = logging.getLogger(__name__)


class EventBus:
    """Synchronous fan-out; subscriber errors are logged, never propagated."""

    def __init__(self):
        self._subscribers: list[Callable[[str, dict], None]] = []
        self._lock = threading.Lock()

    def subscribe(self, callback: Callable[[str, dict], None]) -> Callable[[], None]:
        with self._lock:
            self._subscribers.append(callback)

        def unsubscribe() -> None:
            with self._lock:
                if callback in self._subscribers:
                    self._subscribers.remove(callback)

        return unsubscribe

    def publish(self, event: str, payload: dict) -> None:
        with self._lock:
            subscribers = list(self._subscribers)
        for callback in subscribers:
            try:
                callback(event, payload)
            except Exception:
                log.exception("event subscriber failed for %s", event)


# --- serializers -------------------------------------------------------------

def _iso(moment) -> Optional[str]:
    return None if moment is None else format_rfc3339(moment)


def _tuplize(value):
    if isinstance(value, list):
        return tuple(_tuplize(item) for item in value)
    return value


def alert_to_doc(alert: Alert) -> dict:
    event = alert.event
    return {
        "alert_id": alert.alert_id,
        "raised_at": _iso(alert.raised_at),
        "rule_id": alert.rule_id,
        "level": alert.level,
        "threat_type": alert.threat_type,
        "threat_group": alert.threat_group,
        "event": {
            "received_at": _iso(event.base.received_at),
            "source_host": event.base.source_host,
            "program": event.base.program,
            "message": event.base.message,
            "decoder": event.decoder,
            "fields": dict(event.fields),
        },
        "count": alert.count,
        "status": alert.status.value,
        "assignee": alert.assignee,
        "last_event_at": _iso(alert.last_event_at),
        "signature": alert.signature,
    }


def alert_from_doc(doc: dict) -> Alert:
    raw_event = doc["event"]
    event = DecodedEvent(
        base=LogEvent(
            received_at=parse_rfc3339(raw_event["received_at"]),
            source_host=raw_event["source_host"],
            message=raw_event["message"],
            program=raw_event.get("program"),
        ),
        decoder=raw_event["decoder"],
        fields=dict(raw_event["fields"]),
    )
    return Alert(
        alert_id=doc["alert_id"],
        raised_at=parse_rfc3339(doc["raised_at"]),
        rule_id=doc["rule_id"],
        level=doc["level"],
        threat_type=doc["threat_type"],
        threat_group=doc["threat_group"],
        event=event,
        count=doc["count"],
        status=AlertStatus(doc["status"]),
        assignee=doc.get("assignee"),
        last_event_at=parse_rfc3339(doc["last_event_at"]) if doc.get("last_event_at") else None,
        signature=_tuplize(doc.get("signature", [])),
    )


def command_to_doc(record: CommandRecord) -> dict:
    return {
        "command_id": record.command_id,
        "alert_id": record.alert_id,
        "policy_id": record.policy_id,
        "rendered_cli": record.rendered_cli,
        "target_node": record.target_node,
        "mode": record.mode.value,
        "state": record.state.value,
        "created_at": _iso(record.created_at),
        "decided_at": _iso(record.decided_at),
        "decided_by": record.decided_by,
        "executed_at": _iso(record.executed_at),
        "transcript": record.transcript,
    }


def command_from_doc(doc: dict) -> CommandRecord:
    return CommandRecord(
        command_id=doc["command_id"],
        alert_id=doc["alert_id"],
        policy_id=doc["policy_id"],
        rendered_cli=doc["rendered_cli"],
        target_node=doc["target_node"],
        mode=Mode(doc["mode"]),
        state=CommandState(doc["state"]),
        created_at=parse_rfc3339(doc["created_at"]),
        decided_at=parse_rfc3339(doc["decided_at"]) if doc.get("decided_at") else None,
        decided_by=doc.get("decided_by"),
        executed_at=parse_rfc3339(doc["executed_at"]) if doc.get("executed_at") else None,
        transcript=doc.get("transcript"),
    )


def indicator_to_doc(record: IndicatorRecord) -> dict:
    return {
        "stix_id": record.stix_id,
        "created": _iso(record.created),
        "modified": _iso(record.modified),
        "valid_from": _iso(record.valid_from),
        "valid_until": _iso(record.valid_until),
        "pattern_text": record.pattern_text,
        "labels": list(record.labels),
        "source_id": record.source_id,
        "trust_tier": record.trust_tier,
        "revoked": record.revoked,
    }


def indicator_from_doc(doc: dict) -> IndicatorRecord:
    return IndicatorRecord(
        stix_id=doc["stix_id"],
        created=parse_rfc3339(doc["created"]),
        modified=parse_rfc3339(doc["modified"]),
        valid_from=parse_rfc3339(doc["valid_from"]),
        valid_until=parse_rfc3339(doc["valid_until"]) if doc.get("valid_until") else None,
        pattern_text=doc["pattern_text"],
        expr=parse_pattern(doc["pattern_text"]),
        labels=tuple(doc.get("labels", [])),
        source_id=doc["source_id"],
        trust_tier=doc["trust_tier"],
        revoked=doc.get("revoked", False),
    )


# --- sqlite ------------------------------------------------------------------

_SCHEMA = """
CREATE TABLE IF NOT EXISTS indicators (stix_id TEXT PRIMARY KEY, doc TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS alerts (alert_id TEXT PRIMARY KEY, doc TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS commands (command_id TEXT PRIMARY KEY, doc TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
"""


class SqliteStore:
    """One write-ahead-logged database file under data_dir."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._conn = sqlite3.connect(str(self.path), check_same_thread=False)
        self._lock = threading.Lock()
        with self._lock:
            self._conn.execute("PRAGMA journal_mode=WAL")
            self._conn.execute("PRAGMA synchronous=NORMAL")
            self._conn.executescript(_SCHEMA)
            self._conn.commit()

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    def _upsert(self, table: str, key_column: str, key: str, doc: dict) -> None:
        with self._lock:
            self._conn.execute(
                f"INSERT INTO {table} ({key_column}, doc) VALUES (?, ?) "
                f"ON CONFLICT({key_column}) DO UPDATE SET doc = excluded.doc",
                (key, json.dumps(doc, sort_keys=True)),
            )
            self._conn.commit()

    def _load_docs(self, table: str) -> list[dict]:
        with self._lock:
            rows = self._conn.execute(f"SELECT doc FROM {table}").fetchall()
        return [json.loads(row[0]) for row in rows]

    def save_alert(self, alert: Alert) -> None:
        self._upsert("alerts", "alert_id", alert.alert_id, alert_to_doc(alert))

    def load_alerts(self) -> list[Alert]:
        alerts = [alert_from_doc(doc) for doc in self._load_docs("alerts")]
        alerts.sort(key=lambda a: (a.raised_at, a.alert_id))
        return alerts

    def save_command(self, record: CommandRecord) -> None:
        self._upsert("commands", "command_id", record.command_id, command_to_doc(record))

    def load_commands(self) -> list[CommandRecord]:
        records = [command_from_doc(doc) for doc in self._load_docs("commands")]
        records.sort(key=lambda r: (r.created_at, r.command_id))
        return records

    def save_indicator(self, record: IndicatorRecord) -> None:
        self._upsert("indicators", "stix_id", record.stix_id, indicator_to_doc(record))

    def load_indicators(self) -> list[IndicatorRecord]:
        return [indicator_from_doc(doc) for doc in self._load_docs("indicators")]

    def set_meta(self, key: str, value: str) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT INTO meta (key, value) VALUES (?, ?) "
                "ON CONFLICT(key) DO UPDATE SET value = excluded.value",
                (key, value),
            )
            self._conn.commit()

    def get_meta(self, key: str) -> Optional[str]:
        with self._lock:
            row = self._conn.execute("SELECT value FROM meta WHERE key = ?", (key,)).fetchone()
        return None if row is None else row[0]
