"""Rule evaluation over decoded events, frequency windows, and the alert store.

All time arithmetic uses event received_at, never the wall clock, so replaying
a log file produces the same matches and the same alert ids every run.
"""

from __future__ import annotations

import threading
import uuid
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Callable, Optional, Sequence

from .decoders import DecodedEvent
from .rules import DetectionRule, eval_condition

_ALERT_NAMESPACE = uuid.uuid5(uuid.NAMESPACE_DNS, "ctimp-alert")

DEFAULT_SUPPRESSION_WINDOW = 300.0


class IllegalTransition(ValueError):
    def __init__(self, current: "AlertStatus", requested: "AlertStatus"):
        super().__init__(f"cannot move alert status {current.value} -> {requested.value}")
        self.current = current
        self.requested = requested


class AlertStatus(str, Enum):
    NEW = "new"
    ONGOING = "ongoing"
    COMPLETE = "complete"


_STATUS_RANK = {AlertStatus.NEW: 0, AlertStatus.ONGOING: 1, AlertStatus.COMPLETE: 2}


@dataclass(frozen=True)
class RuleMatch:
    rule: DetectionRule
    event: DecodedEvent
    count: int = 1
    key_value: Optional[str] = None

    @property
    def signature(self) -> tuple:
        # Frequency matches aggregate by key; plain matches by the exact
        # captured fields, so a repeat of the same offender is one alert.
        if self.rule.frequency is not None:
            return (self.rule.rule_id, ("key", self.key_value))
        return (self.rule.rule_id, tuple(sorted(self.event.fields.items())))


class FrequencyState:
    """Sliding windows keyed by (rule_id, key field value)."""

    def __init__(self):
        self.windows: dict[tuple[str, str], deque[datetime]] = {}

    def observe(self, rule: DetectionRule, key: str, moment: datetime) -> Optional[int]:
        """Record a base match; return the window count when the threshold fires."""
        assert rule.frequency is not None
        window = self.windows.setdefault((rule.rule_id, key), deque())
        # The window covers (moment - window, moment]: an event exactly
        # window seconds old has aged out.
        while window and (moment - window[0]).total_seconds() >= rule.frequency.window:
            window.popleft()
        window.append(moment)
        if len(window) >= rule.frequency.count:
            fired = len(window)
            window.clear()
            return fired
        return None


def evaluate(
    event: DecodedEvent,
    rules: Sequence[DetectionRule],
    state: Optional[FrequencyState] = None,
) -> list[RuleMatch]:
    """Run every rule against one decoded event, in rule order."""
    by_id = {rule.rule_id: rule for rule in rules}
    base_memo: dict[str, bool] = {}

    def base_match(rule: DetectionRule) -> bool:
        cached = base_memo.get(rule.rule_id)
        if cached is not None:
            return cached
        verdict = True
        if rule.required_decoder is not None and event.decoder != rule.required_decoder:
            verdict = False
        # Parent gating is on the parent's base match; a frequency parent does
        # not need to have crossed its threshold for children to fire.
        if verdict and rule.parent_rule is not None:
            verdict = base_match(by_id[rule.parent_rule])
        if verdict:
            verdict = eval_condition(rule.conditions, event.fields)
        base_memo[rule.rule_id] = verdict
        return verdict

    matches = []
    for rule in rules:
        if not base_match(rule):
            continue
        if rule.frequency is not None:
            key = event.fields.get(rule.frequency.key_field)
            if key is None:
                continue
            if state is None:
                continue
            fired = state.observe(rule, key, event.base.received_at)
            if fired is not None:
                matches.append(RuleMatch(rule=rule, event=event, count=fired, key_value=key))
        else:
            matches.append(RuleMatch(rule=rule, event=event))
    return matches


@dataclass
class Alert:
    alert_id: str
    raised_at: datetime
    rule_id: str
    level: int
    threat_type: str
    threat_group: str
    event: DecodedEvent
    count: int = 1
    status: AlertStatus = AlertStatus.NEW
    assignee: Optional[str] = None
    last_event_at: Optional[datetime] = None
    signature: tuple = field(default=(), repr=False)


class AlertStore:
    """In-memory alert registry with suppression and a monotone lifecycle."""

    def __init__(self, suppression_window: float = DEFAULT_SUPPRESSION_WINDOW):
        self.suppression_window = suppression_window
        self._alerts: dict[str, Alert] = {}
        self._latest_by_signature: dict[tuple, str] = {}
        self._listeners: list[Callable[[Alert, bool], None]] = []
        self._sequence = 0
        self._lock = threading.Lock()

    def subscribe(self, listener: Callable[[Alert, bool], None]) -> None:
        self._listeners.append(listener)

    def _notify(self, alert: Alert, created: bool) -> None:
        for listener in self._listeners:
            listener(alert, created)

    def raise_alert(self, match: RuleMatch) -> tuple[Alert, bool]:
        """Returns (alert, created); created is False on suppression."""
        moment = match.event.base.received_at
        signature = match.signature
        with self._lock:
            prior_id = self._latest_by_signature.get(signature)
            if prior_id is not None:
                prior = self._alerts[prior_id]
                if (moment - prior.raised_at).total_seconds() <= self.suppression_window:
                    prior.count += match.count
                    prior.last_event_at = moment
                    self._notify(prior, False)
                    return prior, False
            self._sequence += 1
            alert = Alert(
                alert_id=str(uuid.uuid5(_ALERT_NAMESPACE, str(self._sequence))),
                raised_at=moment,
                rule_id=match.rule.rule_id,
                level=match.rule.level,
                threat_type=match.rule.threat_type,
                threat_group=match.rule.threat_group,
                event=match.event,
                count=match.count,
                last_event_at=moment,
                signature=signature,
            )
            self._alerts[alert.alert_id] = alert
            self._latest_by_signature[signature] = alert.alert_id
            self._notify(alert, True)
            return alert, True

    def restore(self, alert: Alert) -> None:
        """Preload a persisted alert without notifying listeners.

        Call in raised_at order so the newest alert owns each signature;
        the sequence counter resumes past every restored creation.
        """
        with self._lock:
            self._alerts[alert.alert_id] = alert
            if alert.signature:
                self._latest_by_signature[alert.signature] = alert.alert_id
            self._sequence = len(self._alerts)

    def get(self, alert_id: str) -> Alert:
        return self._alerts[alert_id]

    def set_status(self, alert_id: str, status: AlertStatus) -> Alert:
        with self._lock:
            alert = self._alerts[alert_id]
            if _STATUS_RANK[status] < _STATUS_RANK[alert.status]:
                raise IllegalTransition(alert.status, status)
            if status is not alert.status:
                alert.status = status
                self._notify(alert, False)
            return alert

    def assign(self, alert_id: str, assignee: Optional[str]) -> Alert:
        with self._lock:
            alert = self._alerts[alert_id]
            alert.assignee = assignee
            self._notify(alert, False)
            return alert

    def list_alerts(self, status: Optional[AlertStatus] = None) -> list[Alert]:
        alerts = list(self._alerts.values())
        if status is not None:
            alerts = [a for a in alerts if a.status is status]
        alerts.sort(key=lambda a: (a.raised_at, a.alert_id))
        return alerts


def raise_alert(match: RuleMatch, store: AlertStore) -> Alert:
    alert, _ = store.raise_alert(match)
    return alert
