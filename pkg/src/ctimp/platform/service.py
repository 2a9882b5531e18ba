"""PlatformService: wires ingest, tailoring, compilation, detection and healing.

Pipeline cycles are mutually exclusive; detection intake and the API touch
the same stores, which serialize internally.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable, Optional

from ..asset_inventory import AssetMap, AssetMapError, build_feature_index, load_map, save_map
from ..cti_ingest import (
    BundleParseError,
    FeedSource,
    FetchError,
    IndicatorStore,
    dedupe_and_merge,
    fetch_feed,
    parse_stix_bundle,
)
from ..defaults import load_default
from ..detection import (
    Alert,
    AlertStore,
    DecodedEvent,
    DecoderSet,
    DetectionRule,
    FrequencyState,
    LogEvent,
    RuleMatch,
    RuleOrigin,
    decode,
    evaluate,
    load_decoders_toml,
    load_native_rules_toml,
    load_sigma_rules,
    validate_rules,
)
from ..relevance import tailor_bundle, tailored_filename
from ..selfheal import (
    AuditLog,
    CommandRecord,
    CommandStore,
    FakeExecutor,
    SelfHealEngine,
    SSHExecutor,
    load_policies_toml,
    load_threats_toml,
)
from ..sigma_compiler import compile_ruleset
from ..util import utcnow
from .config import PlatformConfig
from .pipeline import CycleReport, read_active_ruleset, swap_rules
from .store import EventBus, SqliteStore, alert_to_doc, command_to_doc

log = logging.getLogger(__name__)


@dataclass
class ReplayReport:
    lines: int = 0
    parsed: int = 0
    skipped: int = 0
    decoded: int = 0
    matches: int = 0
    alerts_created: int = 0
    alerts_suppressed: int = 0
    commands: int = 0


class PlatformService:
    def __init__(self, config: PlatformConfig, executor=None,
                 clock: Callable[[], datetime] = utcnow):
        self.config = config
        self.clock = clock
        config.data_dir.mkdir(parents=True, exist_ok=True)
        config.rules_dir.mkdir(parents=True, exist_ok=True)

        self.bus = EventBus()
        self.db = SqliteStore(config.data_dir / "state.db")
        self._cycle_lock = threading.Lock()

        self.asset_map = self._load_asset_map()

        self.indicators = IndicatorStore()
        restored = self.db.load_indicators()
        if restored:
            dedupe_and_merge(restored, self.indicators)

        self.alerts = AlertStore(suppression_window=config.detect.suppression_window)
        for alert in self.db.load_alerts():
            self.alerts.restore(alert)
        self.alerts.subscribe(self._on_alert_change)

        self.commands = CommandStore()
        for record in self.db.load_commands():
            self.commands.restore(record)
        self.commands.subscribe(self._on_command_change)

        decoders_doc = (
            config.detect.decoders_path.read_bytes()
            if config.detect.decoders_path else load_default("decoders.toml")
        )
        self.decoders = DecoderSet(load_decoders_toml(decoders_doc))

        native_doc = (
            config.detect.native_rules_path.read_bytes()
            if config.detect.native_rules_path else load_default("native_rules.toml")
        )
        self.native_rules = load_native_rules_toml(native_doc)

        policies_doc = (
            config.selfheal.policies_path.read_bytes()
            if config.selfheal.policies_path else load_default("policies.toml")
        )
        threats_doc = (
            config.selfheal.threats_path.read_bytes()
            if config.selfheal.threats_path else load_default("threats.toml")
        )
        if executor is None:
            executor = (
                SSHExecutor(user=config.selfheal.ssh_user)
                if config.selfheal.executor == "ssh" else FakeExecutor()
            )
        self.executor = executor
        self.selfheal = SelfHealEngine(
            policies=load_policies_toml(policies_doc),
            threats=load_threats_toml(threats_doc),
            asset_map=self.asset_map,
            audit=AuditLog(config.data_dir / "selfheal-audit.log"),
            executor=executor,
            command_store=self.commands,
            node_addresses=dict(config.selfheal.node_addresses),
            timeout=config.selfheal.timeout,
            clock=clock,
        )

        self.frequency = FrequencyState()
        self.rules: list[DetectionRule] = []
        self.rules_version: Optional[str] = None
        self.last_report: Optional[CycleReport] = None
        self.feed_status: dict[str, dict] = {}
        self.reload_rules()

    # --- asset map ---------------------------------------------------------

    def _load_asset_map(self) -> AssetMap:
        try:
            document = json.loads(self.config.asset_map_path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise AssetMapError(
                f"cannot read asset map {self.config.asset_map_path}: {exc}") from exc
        return load_map(document)

    def replace_asset_map(self, document: dict) -> AssetMap:
        """Validate, persist canonically, and hand the new map to self-healing."""
        candidate = load_map(document)
        self.config.asset_map_path.write_bytes(save_map(candidate))
        self.asset_map = candidate
        self.selfheal.set_asset_map(candidate)
        return candidate

    # --- change listeners ----------------------------------------------------

    def _on_alert_change(self, alert: Alert, created: bool) -> None:
        self.db.save_alert(alert)
        self.bus.publish("alert.created" if created else "alert.updated", alert_to_doc(alert))

    def command_doc(self, record: CommandRecord) -> dict:
        """Wire form of a command record plus the policy's human-readable summary."""
        doc = command_to_doc(record)
        policy = self.selfheal.policies.by_id(record.policy_id)
        doc["command_human"] = policy.command_human if policy else None
        return doc

    def _on_command_change(self, record: CommandRecord, created: bool) -> None:
        self.db.save_command(record)
        self.bus.publish(
            "command.created" if created else "command.updated", self.command_doc(record)
        )

    # --- pipeline ------------------------------------------------------------

    def run_cycle(self, now: Optional[datetime] = None,
                  only_feed: Optional[str] = None, fetch: bool = True) -> CycleReport:
        with self._cycle_lock:
            return self._run_cycle_locked(now, only_feed, fetch)

    def _run_cycle_locked(self, now, only_feed, fetch) -> CycleReport:
        now = now or self.clock()
        report = CycleReport(started_at=now)
        try:
            self.asset_map = self._load_asset_map()
            self.selfheal.set_asset_map(self.asset_map)
        except (OSError, ValueError, AssetMapError) as exc:
            report.aborted = f"asset map unloadable: {exc}"
            self.last_report = report
            return report

        for feed in self.config.feeds if fetch else ():
            if not feed.enabled or (only_feed is not None and feed.source_id != only_feed):
                continue
            try:
                documents = fetch_feed(feed)
                records = []
                for document in documents:
                    parsed, diagnostics = parse_stix_bundle(document.content, feed)
                    records.extend(parsed)
                    for diag in diagnostics:
                        log.info("feed %s: skipped %s: %s", feed.source_id,
                                 diag.stix_id or f"object[{diag.object_index}]", diag.reason)
                delta = dedupe_and_merge(records, self.indicators)
                report.feeds_fetched += 1
                report.indicators_added += delta.added
                report.indicators_updated += delta.updated
                report.indicators_unchanged += delta.unchanged
                self.feed_status[feed.source_id] = {
                    "last_sync": now.isoformat(),
                    "indicators": len(records),
                    "added": delta.added,
                    "updated": delta.updated,
                    "error": None,
                }
            except (FetchError, BundleParseError) as exc:
                report.feed_errors[feed.source_id] = str(exc)
                self.feed_status[feed.source_id] = {
                    "last_sync": now.isoformat(),
                    "indicators": 0, "added": 0, "updated": 0,
                    "error": str(exc),
                }
                log.warning("feed %s failed: %s", feed.source_id, exc)

        for record in self.indicators.snapshot():
            self.db.save_indicator(record)

        tailored = tailor_bundle(
            self.indicators.snapshot(),
            build_feature_index(self.asset_map),
            self.config.relevance,
            now,
        )
        report.retained = len(tailored.retained)
        self._write_tailored(tailored, now)
        ruleset = compile_ruleset(tailored)
        for diag in ruleset.diagnostics:
            log.info("compile %s: %s", diag.stix_id, diag.message)
        report.rules_written = len(ruleset.rules)
        report.rules_version = swap_rules(self.config.rules_dir, ruleset)
        self.db.set_meta("rules_version", report.rules_version)
        self.reload_rules()
        self.last_report = report
        return report

    def _write_tailored(self, tailored, now: datetime) -> None:
        directory = self.config.data_dir / "tailored"
        directory.mkdir(parents=True, exist_ok=True)
        name = tailored_filename(self.asset_map.revision, now)
        (directory / name).write_bytes(tailored.document)
        self.db.set_meta("tailored_latest", name)

    def latest_tailored(self) -> Optional[tuple[str, dict]]:
        """(filename, bundle document) of the newest tailored bundle, if any."""
        name = self.db.get_meta("tailored_latest")
        if name is None:
            return None
        path = self.config.data_dir / "tailored" / name
        if not path.exists():
            return None
        return name, json.loads(path.read_text(encoding="utf-8"))

    def reload_rules(self) -> None:
        version, documents, _manifest = read_active_ruleset(self.config.rules_dir)
        sigma = load_sigma_rules(documents) if documents else []
        combined = list(self.native_rules) + sigma
        validate_rules(combined)
        self.rules = combined
        self.rules_version = version

    # --- detection ----------------------------------------------------------

    def ingest_event(self, event: LogEvent, drive_selfheal: bool = True,
                     report: Optional[ReplayReport] = None) -> list[Alert]:
        decoded = decode(event, self.decoders)
        if report is not None and decoded.decoder != "unmatched":
            report.decoded += 1
        matches = evaluate(decoded, self.rules, self.frequency)
        created_alerts = []
        for match in matches:
            alert, created = self.alerts.raise_alert(match)
            if report is not None:
                report.matches += 1
                if created:
                    report.alerts_created += 1
                else:
                    report.alerts_suppressed += 1
            if created:
                created_alerts.append(alert)
                if drive_selfheal:
                    records = self.selfheal.handle_alert(alert)
                    if report is not None:
                        report.commands += len(records)
        return created_alerts

    def replay_file(self, path: Path, drive_selfheal: bool = False,
                    default_year: int = 2026) -> ReplayReport:
        from .intake import LineParseError, iter_log_file

        report = ReplayReport()
        for _number, item in iter_log_file(path, default_year):
            report.lines += 1
            if isinstance(item, LineParseError):
                report.skipped += 1
                continue
            report.parsed += 1
            self.ingest_event(item, drive_selfheal=drive_selfheal, report=report)
        return report

    # --- synthetic alerts ------------------------------------------------------

    def simulate_alert(self, threat_type: str, threat_group: str,
                       srcip: str) -> tuple[Alert, list[CommandRecord]]:
        """Raise a synthetic alert and drive self-healing end to end."""
        now = self.clock()
        synthetic_rule = DetectionRule(
            rule_id=f"simulated:{threat_type}",
            origin=RuleOrigin.NATIVE,
            level=10,
            threat_type=threat_type,
            threat_group=threat_group,
        )
        event = DecodedEvent(
            base=LogEvent(received_at=now, source_host="simulator",
                          message=f"simulated alert for {threat_type}", program="ctimp"),
            decoder="simulated",
            fields={"srcip": srcip},
        )
        alert, _created = self.alerts.raise_alert(RuleMatch(rule=synthetic_rule, event=event))
        records = self.selfheal.handle_alert(alert)
        return alert, records

    def close(self) -> None:
        self.db.close()
