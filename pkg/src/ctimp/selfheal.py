"""Self-healing: policy lookup, command rendering, approval protocol, execution, audit.

Alerts map to healing policies by exact threat-type match first, then by the
broader threat-group. Rendered commands run under one of three modes:
recommend (never executed), approve (parked until an operator verdict), and
auto (executed immediately). Every record that reaches a terminal state is
appended to an audit log with a fixed line grammar.
"""

from __future__ import annotations

import logging
import re
import subprocess
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Callable, Optional, Protocol

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .asset_inventory import AssetMap, FeatureIndex, build_feature_index
from .util import format_rfc3339, utcnow

log = logging.getLogger(__name__)

PLACEHOLDER_VOCABULARY = frozenset({"srcip", "dstip", "node", "user"})
DEFAULT_EXECUTION_TIMEOUT = 30.0

_COMMAND_NAMESPACE = uuid.uuid5(uuid.NAMESPACE_DNS, "ctimp-command")
_PLACEHOLDER_RE = re.compile(r"\{(\w+)\}")


class PolicyError(ValueError):
    pass


class RenderError(ValueError):
    pass


class IllegalCommandTransition(ValueError):
    pass


class Mode(str, Enum):
    RECOMMEND = "recommend"
    APPROVE = "approve"
    AUTO = "auto"


class CommandState(str, Enum):
    RECOMMENDED = "recommended"
    PENDING_APPROVAL = "pending_approval"
    APPROVED = "approved"
    REJECTED_AS_RECOMMENDATION = "rejected_as_recommendation"
    EXECUTED = "executed"
    FAILED = "failed"


TERMINAL_STATES = frozenset({
    CommandState.RECOMMENDED,
    CommandState.REJECTED_AS_RECOMMENDATION,
    CommandState.EXECUTED,
    CommandState.FAILED,
})

_INITIAL_STATES = {
    Mode.RECOMMEND: frozenset({CommandState.RECOMMENDED}),
    Mode.APPROVE: frozenset({CommandState.PENDING_APPROVAL}),
    Mode.AUTO: frozenset({CommandState.EXECUTED, CommandState.FAILED}),
}

_LEGAL_EDGES = frozenset({
    (CommandState.PENDING_APPROVAL, CommandState.APPROVED),
    (CommandState.PENDING_APPROVAL, CommandState.REJECTED_AS_RECOMMENDATION),
    (CommandState.APPROVED, CommandState.EXECUTED),
    (CommandState.APPROVED, CommandState.FAILED),
})


class MatchedBy(str, Enum):
    TYPE = "type"
    GROUP = "group"
    NONE = "none"


class TargetKind(str, Enum):
    NODE_OF_EVENT = "node_of_event"
    NAMED = "named"
    ALL_OF_GROUP = "all_of_group"


@dataclass(frozen=True)
class TargetSpec:
    kind: TargetKind
    value: Optional[str] = None

    @classmethod
    def parse(cls, raw: str) -> "TargetSpec":
        if raw == "node_of_event":
            return cls(TargetKind.NODE_OF_EVENT)
        if raw.startswith("group:"):
            name = raw[len("group:"):]
            if not name:
                raise PolicyError("target 'group:' needs a group name")
            return cls(TargetKind.ALL_OF_GROUP, name)
        if raw.startswith("node:"):
            name = raw[len("node:"):]
            if not name:
                raise PolicyError("target 'node:' needs a node id")
            return cls(TargetKind.NAMED, name)
        raise PolicyError(
            f"target must be 'node_of_event', 'node:<node_id>' or 'group:<group>', got {raw!r}"
        )


@dataclass(frozen=True)
class ThreatEntry:
    threat_id: str
    threat_type: str
    threat_group: str


class ThreatTable:
    def __init__(self, entries: list[ThreatEntry]):
        ids = [e.threat_id for e in entries]
        if len(set(ids)) != len(ids):
            raise PolicyError("duplicate threat_id in threat table")
        types = [e.threat_type for e in entries]
        if len(set(types)) != len(types):
            raise PolicyError("duplicate threat_type in threat table")
        self.entries = list(entries)
        self._by_type = {e.threat_type: e for e in entries}

    def knows_type(self, threat_type: str) -> bool:
        return threat_type in self._by_type


@dataclass(frozen=True)
class HealingPolicy:
    policy_id: str
    command_cli: str
    command_human: str
    target: TargetSpec
    mode: Mode
    threat_type: Optional[str] = None
    threat_group: Optional[str] = None

    def __post_init__(self):
        if (self.threat_type is None) == (self.threat_group is None):
            raise PolicyError(
                f"policy {self.policy_id}: selector must be exactly one of threat_type or threat_group"
            )
        for name in _PLACEHOLDER_RE.findall(self.command_cli):
            if name not in PLACEHOLDER_VOCABULARY:
                raise PolicyError(
                    f"policy {self.policy_id}: unknown placeholder {{{name}}} in command_cli"
                )


class PolicyStore:
    """Validated policy set: at most one policy per type value and per group value."""

    def __init__(self, policies: list[HealingPolicy]):
        self._by_type: dict[str, HealingPolicy] = {}
        self._by_group: dict[str, HealingPolicy] = {}
        seen_ids = set()
        for policy in policies:
            if policy.policy_id in seen_ids:
                raise PolicyError(f"duplicate policy_id {policy.policy_id!r}")
            seen_ids.add(policy.policy_id)
            if policy.threat_type is not None:
                if policy.threat_type in self._by_type:
                    raise PolicyError(f"two policies select threat_type {policy.threat_type!r}")
                self._by_type[policy.threat_type] = policy
            else:
                if policy.threat_group in self._by_group:
                    raise PolicyError(f"two policies select threat_group {policy.threat_group!r}")
                self._by_group[policy.threat_group] = policy
        self.policies = list(policies)

    def by_type(self, threat_type: str) -> Optional[HealingPolicy]:
        return self._by_type.get(threat_type)

    def by_group(self, threat_group: str) -> Optional[HealingPolicy]:
        return self._by_group.get(threat_group)

    def by_id(self, policy_id: str) -> Optional[HealingPolicy]:
        return next((p for p in self.policies if p.policy_id == policy_id), None)


def load_threats_toml(document: bytes) -> ThreatTable:
    payload = tomllib.loads(document.decode("utf-8"))
    entries = []
    for index, raw in enumerate(payload.get("threat", [])):
        for key in ("threat_id", "threat_type", "threat_group"):
            if key not in raw:
                raise PolicyError(f"threat[{index}]: missing {key}")
        entries.append(ThreatEntry(
            threat_id=str(raw["threat_id"]),
            threat_type=str(raw["threat_type"]),
            threat_group=str(raw["threat_group"]),
        ))
    return ThreatTable(entries)


def load_policies_toml(document: bytes) -> PolicyStore:
    payload = tomllib.loads(document.decode("utf-8"))
    policies = []
    for index, raw in enumerate(payload.get("policy", [])):
        for key in ("policy_id", "command_cli", "command_human", "target", "mode"):
            if key not in raw:
                raise PolicyError(f"policy[{index}]: missing {key}")
        try:
            mode = Mode(raw["mode"])
        except ValueError:
            raise PolicyError(f"policy[{index}]: unknown mode {raw['mode']!r}") from None
        policies.append(HealingPolicy(
            policy_id=str(raw["policy_id"]),
            command_cli=str(raw["command_cli"]),
            command_human=str(raw["command_human"]),
            target=TargetSpec.parse(str(raw["target"])),
            mode=mode,
            threat_type=raw.get("threat_type"),
            threat_group=raw.get("threat_group"),
        ))
    return PolicyStore(policies)


# --- decision -----------------------------------------------------------------

@dataclass(frozen=True)
class DecisionOutcome:
    policy: Optional[HealingPolicy]
    matched_by: MatchedBy


def decide(alert, policies: PolicyStore, threats: Optional[ThreatTable] = None) -> DecisionOutcome:
    """Exact threat-type policy wins; otherwise threat-group; otherwise none."""
    if threats is not None and not threats.knows_type(alert.threat_type):
        log.warning("alert %s carries threat_type %r not present in the threat table",
                    getattr(alert, "alert_id", "?"), alert.threat_type)
    policy = policies.by_type(alert.threat_type)
    if policy is not None:
        return DecisionOutcome(policy, MatchedBy.TYPE)
    policy = policies.by_group(alert.threat_group)
    if policy is not None:
        return DecisionOutcome(policy, MatchedBy.GROUP)
    return DecisionOutcome(None, MatchedBy.NONE)


# --- rendering ----------------------------------------------------------------

@dataclass(frozen=True)
class RenderedCommand:
    rendered_cli: str
    target_node: str


def _resolve_targets(policy: HealingPolicy, alert, asset_map: AssetMap,
                     index: FeatureIndex) -> list[str]:
    target = policy.target
    if target.kind is TargetKind.NODE_OF_EVENT:
        fields = alert.event.fields
        for field_name in ("dstip", "srcip"):
            address = fields.get(field_name)
            if address is not None and address in index.node_by_ip:
                return [index.node_by_ip[address]]
        raise RenderError(
            f"policy {policy.policy_id}: no asset node owns the event's dstip/srcip"
        )
    if target.kind is TargetKind.NAMED:
        if asset_map.node(target.value) is None:
            raise RenderError(f"policy {policy.policy_id}: no node {target.value!r} in the asset map")
        return [target.value]
    members = sorted(n.node_id for n in asset_map.nodes if n.group == target.value)
    if not members:
        raise RenderError(f"policy {policy.policy_id}: no nodes in group {target.value!r}")
    return members


def render_command(policy: HealingPolicy, alert, asset_map: AssetMap,
                   index: Optional[FeatureIndex] = None) -> list[RenderedCommand]:
    """Substitute placeholders for each resolved target node.

    all_of_group targets yield one rendered command per member node, in
    node_id order; the other target kinds yield exactly one.
    """
    if index is None:
        index = build_feature_index(asset_map)
    fields = alert.event.fields
    rendered = []
    for node_id in _resolve_targets(policy, alert, asset_map, index):
        values = {
            "srcip": fields.get("srcip"),
            "dstip": fields.get("dstip"),
            "user": fields.get("user"),
            "node": node_id,
        }

        def substitute(match: re.Match) -> str:
            value = values.get(match.group(1))
            if value is None:
                raise RenderError(
                    f"policy {policy.policy_id}: placeholder {{{match.group(1)}}} has no value"
                )
            return value

        rendered.append(RenderedCommand(
            rendered_cli=_PLACEHOLDER_RE.sub(substitute, policy.command_cli),
            target_node=node_id,
        ))
    return rendered


# --- executors ------------------------------------------------------------------

@dataclass(frozen=True)
class ExecutionResult:
    exit_status: int
    output: str


class Executor(Protocol):
    def run(self, address: str, command: str, timeout: float) -> ExecutionResult: ...


class FakeExecutor:
    """Records every invocation verbatim; scriptable result."""

    def __init__(self, script: Optional[Callable[[str, str, float], ExecutionResult]] = None):
        self.invocations: list[tuple[str, str, float]] = []
        self.script = script

    def run(self, address: str, command: str, timeout: float) -> ExecutionResult:
        self.invocations.append((address, command, timeout))
        if self.script is not None:
            return self.script(address, command, timeout)
        return ExecutionResult(0, "ok")


class SSHExecutor:
    def __init__(self, user: Optional[str] = None, extra_options: tuple[str, ...] = ()):
        self.user = user
        self.extra_options = extra_options

    def run(self, address: str, command: str, timeout: float) -> ExecutionResult:
        destination = f"{self.user}@{address}" if self.user else address
        argv = ["ssh", "-o", "BatchMode=yes", *self.extra_options, destination, command]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
        except subprocess.TimeoutExpired:
            raise TimeoutError(f"ssh to {destination} exceeded {timeout}s") from None
        return ExecutionResult(proc.returncode, proc.stdout + proc.stderr)


# --- command records and audit ---------------------------------------------------

@dataclass
class CommandRecord:
    command_id: str
    alert_id: str
    policy_id: str
    rendered_cli: str
    target_node: str
    mode: Mode
    state: CommandState
    created_at: datetime
    decided_at: Optional[datetime] = None
    decided_by: Optional[str] = None
    executed_at: Optional[datetime] = None
    transcript: Optional[str] = None


class CommandStore:
    """Registry of command records; transitions are validated and serialized."""

    def __init__(self):
        self._records: dict[str, CommandRecord] = {}
        self._listeners: list[Callable[[CommandRecord, bool], None]] = []
        self._sequence = 0
        self._lock = threading.Lock()

    def subscribe(self, listener: Callable[[CommandRecord, bool], None]) -> None:
        self._listeners.append(listener)

    def _notify(self, record: CommandRecord, created: bool) -> None:
        for listener in self._listeners:
            listener(record, created)

    def allocate_id(self) -> str:
        with self._lock:
            self._sequence += 1
            return str(uuid.uuid5(_COMMAND_NAMESPACE, str(self._sequence)))

    def add(self, record: CommandRecord) -> CommandRecord:
        with self._lock:
            if record.state not in _INITIAL_STATES[record.mode]:
                raise IllegalCommandTransition(
                    f"mode {record.mode.value} cannot start in state {record.state.value}"
                )
            if record.command_id in self._records:
                raise IllegalCommandTransition(f"duplicate command_id {record.command_id}")
            self._records[record.command_id] = record
            self._notify(record, True)
            return record

    def transition(self, command_id: str, state: CommandState) -> CommandRecord:
        with self._lock:
            record = self._records[command_id]
            if (record.state, state) not in _LEGAL_EDGES:
                raise IllegalCommandTransition(
                    f"command {command_id}: cannot move {record.state.value} -> {state.value}"
                )
            record.state = state
            self._notify(record, False)
            return record

    def restore(self, record: CommandRecord) -> None:
        """Preload a persisted record without notifying listeners."""
        with self._lock:
            self._records[record.command_id] = record
            self._sequence = len(self._records)

    def get(self, command_id: str) -> CommandRecord:
        return self._records[command_id]

    def list_records(self, state: Optional[CommandState] = None) -> list[CommandRecord]:
        records = list(self._records.values())
        if state is not None:
            records = [r for r in records if r.state is state]
        records.sort(key=lambda r: (r.created_at, r.command_id))
        return records


def _escape_audit_field(text: str) -> str:
    return text.replace("\\", "\\\\").replace("|", "\\|")


def _unescape_audit_field(text: str) -> str:
    out = []
    pending_escape = False
    for ch in text:
        if pending_escape:
            out.append(ch)
            pending_escape = False
        elif ch == "\\":
            pending_escape = True
        else:
            out.append(ch)
    return "".join(out)


def format_audit_line(moment: datetime, record: CommandRecord) -> str:
    fields = (
        format_rfc3339(moment),
        record.command_id,
        record.alert_id,
        record.policy_id,
        record.mode.value,
        record.state.value,
        record.target_node,
        record.rendered_cli,
    )
    return "|".join(_escape_audit_field(f) for f in fields)


def parse_audit_line(line: str) -> dict[str, str]:
    parts: list[str] = []
    current: list[str] = []
    pending_escape = False
    for ch in line:
        if pending_escape:
            current.append(ch)
            pending_escape = False
        elif ch == "\\":
            current.append(ch)
            pending_escape = True
        elif ch == "|":
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
    parts.append("".join(current))
    if pending_escape or len(parts) != 8:
        raise ValueError(f"audit line does not have 8 unescaped-pipe fields: {line!r}")
    keys = ("timestamp", "command_id", "alert_id", "policy_id", "mode",
            "state", "target_node", "rendered_cli")
    return {k: _unescape_audit_field(v) for k, v in zip(keys, parts)}


class AuditLog:
    """Append-only log; exactly one line per record reaching a terminal state."""

    def __init__(self, path):
        self.path = path
        self._lock = threading.Lock()

    def append(self, moment: datetime, record: CommandRecord) -> None:
        if record.state not in TERMINAL_STATES:
            raise IllegalCommandTransition(
                f"audit only records terminal states, got {record.state.value}"
            )
        line = format_audit_line(moment, record)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(line + "\n")

    def read_entries(self) -> list[dict[str, str]]:
        try:
            with open(self.path, encoding="utf-8") as handle:
                return [parse_audit_line(line.rstrip("\n")) for line in handle if line.strip()]
        except FileNotFoundError:
            return []


# --- engine ----------------------------------------------------------------

class SelfHealEngine:
    """Wires decision, rendering, the approval protocol, execution and audit."""

    def __init__(
        self,
        policies: PolicyStore,
        threats: Optional[ThreatTable],
        asset_map: AssetMap,
        audit: AuditLog,
        executor: Executor,
        command_store: Optional[CommandStore] = None,
        node_addresses: Optional[dict[str, str]] = None,
        timeout: float = DEFAULT_EXECUTION_TIMEOUT,
        clock: Callable[[], datetime] = utcnow,
    ):
        self.policies = policies
        self.threats = threats
        self.asset_map = asset_map
        self.index = build_feature_index(asset_map)
        self.audit = audit
        self.executor = executor
        self.commands = command_store if command_store is not None else CommandStore()
        self.node_addresses = dict(node_addresses or {})
        self.timeout = timeout
        self.clock = clock
        self._node_locks: dict[str, threading.Lock] = {}
        self._node_locks_guard = threading.Lock()

    def set_asset_map(self, asset_map: AssetMap) -> None:
        self.asset_map = asset_map
        self.index = build_feature_index(asset_map)

    def _node_lock(self, node_id: str) -> threading.Lock:
        with self._node_locks_guard:
            return self._node_locks.setdefault(node_id, threading.Lock())

    def _address_for(self, node_id: str) -> Optional[str]:
        if node_id in self.node_addresses:
            return self.node_addresses[node_id]
        node = self.asset_map.node(node_id)
        if node is not None and node.addresses:
            return node.addresses[0]
        return None

    def _run(self, rendered_cli: str, target_node: str) -> tuple[CommandState, str]:
        address = self._address_for(target_node)
        if address is None:
            return CommandState.FAILED, f"no transport address for node {target_node}"
        with self._node_lock(target_node):
            try:
                result = self.executor.run(address, rendered_cli, self.timeout)
            except TimeoutError as exc:
                return CommandState.FAILED, f"timeout: {exc}"
            except Exception as exc:
                return CommandState.FAILED, f"transport failure: {exc}"
        state = CommandState.EXECUTED if result.exit_status == 0 else CommandState.FAILED
        return state, result.output

    def handle_alert(self, alert) -> list[CommandRecord]:
        """decide -> render -> submit; render failures log and heal nothing."""
        outcome = decide(alert, self.policies, self.threats)
        if outcome.policy is None:
            return []
        try:
            rendered = render_command(outcome.policy, alert, self.asset_map, self.index)
        except RenderError as exc:
            log.warning("alert %s: %s", alert.alert_id, exc)
            return []
        return [self.submit(outcome, item, alert.alert_id) for item in rendered]

    def submit(self, outcome: DecisionOutcome, rendered: RenderedCommand,
               alert_id: str) -> CommandRecord:
        policy = outcome.policy
        assert policy is not None
        now = self.clock()
        base = dict(
            command_id=self.commands.allocate_id(),
            alert_id=alert_id,
            policy_id=policy.policy_id,
            rendered_cli=rendered.rendered_cli,
            target_node=rendered.target_node,
            mode=policy.mode,
            created_at=now,
        )
        if policy.mode is Mode.RECOMMEND:
            record = CommandRecord(state=CommandState.RECOMMENDED, **base)
            self.commands.add(record)
            self.audit.append(self.clock(), record)
            return record
        if policy.mode is Mode.APPROVE:
            record = CommandRecord(state=CommandState.PENDING_APPROVAL, **base)
            return self.commands.add(record)
        state, transcript = self._run(rendered.rendered_cli, rendered.target_node)
        record = CommandRecord(
            state=state, executed_at=self.clock(), transcript=transcript, **base
        )
        self.commands.add(record)
        self.audit.append(self.clock(), record)
        return record

    def apply_verdict(self, command_id: str, verdict: str, actor: str) -> CommandRecord:
        if verdict not in ("approved", "rejected"):
            raise ValueError(f"verdict must be 'approved' or 'rejected', got {verdict!r}")
        now = self.clock()
        if verdict == "rejected":
            record = self.commands.transition(command_id, CommandState.REJECTED_AS_RECOMMENDATION)
            record.decided_at = now
            record.decided_by = actor
            self.audit.append(self.clock(), record)
            return record
        record = self.commands.transition(command_id, CommandState.APPROVED)
        record.decided_at = now
        record.decided_by = actor
        return self.execute(record)

    def execute(self, record: CommandRecord) -> CommandRecord:
        if record.state is not CommandState.APPROVED:
            raise IllegalCommandTransition(
                f"command {record.command_id}: execute requires state approved, got {record.state.value}"
            )
        state, transcript = self._run(record.rendered_cli, record.target_node)
        record.transcript = transcript
        record.executed_at = self.clock()
        record = self.commands.transition(record.command_id, state)
        self.audit.append(self.clock(), record)
        return record
