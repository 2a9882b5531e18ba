"""Healing policies: decision, rendering, approval protocol, execution, audit."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctimp.asset_inventory import load_map
from ctimp.selfheal import (
    AuditLog,
    CommandRecord,
    CommandState,
    CommandStore,
    ExecutionResult,
    FakeExecutor,
    HealingPolicy,
    IllegalCommandTransition,
    MatchedBy,
    Mode,
    PolicyError,
    PolicyStore,
    RenderError,
    SelfHealEngine,
    TargetKind,
    TargetSpec,
    ThreatEntry,
    ThreatTable,
    decide,
    format_audit_line,
    load_policies_toml,
    load_threats_toml,
    parse_audit_line,
    render_command,
)

from .conftest import FIXTURES
from .oracles import decide_reference

T0 = datetime(2026, 8, 15, 12, 0, 0, tzinfo=timezone.utc)


@dataclass
class EventStub:
    fields: dict


@dataclass
class AlertStub:
    alert_id: str = "alert-1"
    threat_type: str = "ssh-bruteforce"
    threat_group: str = "authentication"
    event: EventStub = field(default_factory=lambda: EventStub(
        {"srcip": "203.0.113.9", "user": "root", "dstip": "198.51.100.7"}))


def policy(policy_id="p1", *, threat_type="ssh-bruteforce", threat_group=None,
           target="node_of_event", mode=Mode.AUTO,
           command_cli="block {srcip}") -> HealingPolicy:
    return HealingPolicy(
        policy_id=policy_id,
        command_cli=command_cli,
        command_human=f"human text for {policy_id}",
        target=TargetSpec.parse(target),
        mode=mode,
        threat_type=threat_type,
        threat_group=threat_group,
    )


def ticking_clock(start: datetime = T0):
    state = {"now": start}

    def clock() -> datetime:
        state["now"] += timedelta(seconds=1)
        return state["now"]

    return clock


@pytest.fixture()
def asset_map():
    return load_map((FIXTURES / "map.json").read_bytes())


@pytest.fixture()
def engine_parts(asset_map, tmp_path):
    executor = FakeExecutor()
    audit = AuditLog(tmp_path / "selfheal-audit.log")
    policies = load_policies_toml((FIXTURES / "policies.toml").read_bytes())
    threats = load_threats_toml((FIXTURES / "threats.toml").read_bytes())
    engine = SelfHealEngine(
        policies=policies,
        threats=threats,
        asset_map=asset_map,
        audit=audit,
        executor=executor,
        node_addresses={"fw1": "192.0.2.1", "web1": "198.51.100.7", "db1": "10.0.0.12"},
        timeout=5.0,
        clock=ticking_clock(),
    )
    return engine, executor, audit


class TestTargetSpec:
    def test_parse_forms(self):
        assert TargetSpec.parse("node_of_event") == TargetSpec(TargetKind.NODE_OF_EVENT)
        assert TargetSpec.parse("node:fw1") == TargetSpec(TargetKind.NAMED, "fw1")
        assert TargetSpec.parse("group:edge") == TargetSpec(TargetKind.ALL_OF_GROUP, "edge")

    @pytest.mark.parametrize("raw", ["node:", "group:", "everything", ""])
    def test_rejects(self, raw):
        with pytest.raises(PolicyError):
            TargetSpec.parse(raw)


class TestPolicyValidation:
    def test_selector_must_be_exactly_one(self):
        with pytest.raises(PolicyError, match="exactly one"):
            policy(threat_type="t", threat_group="g")
        with pytest.raises(PolicyError, match="exactly one"):
            policy(threat_type=None, threat_group=None)

    def test_unknown_placeholder(self):
        with pytest.raises(PolicyError, match="placeholder"):
            policy(command_cli="rm -rf {volume}")

    def test_duplicate_policy_id(self):
        with pytest.raises(PolicyError, match="duplicate policy_id"):
            PolicyStore([policy(), policy(threat_type="other")])

    def test_one_policy_per_type(self):
        with pytest.raises(PolicyError, match="threat_type"):
            PolicyStore([policy("a"), policy("b")])

    def test_one_policy_per_group(self):
        with pytest.raises(PolicyError, match="threat_group"):
            PolicyStore([
                policy("a", threat_type=None, threat_group="g"),
                policy("b", threat_type=None, threat_group="g"),
            ])

    def test_threat_table_uniqueness(self):
        entry = ThreatEntry("T-1", "ssh-bruteforce", "authentication")
        with pytest.raises(PolicyError):
            ThreatTable([entry, entry])
        with pytest.raises(PolicyError):
            ThreatTable([entry, ThreatEntry("T-2", "ssh-bruteforce", "other")])


class TestTomlLoading:
    def test_fixture_policies(self):
        store = load_policies_toml((FIXTURES / "policies.toml").read_bytes())
        assert {p.policy_id for p in store.policies} == {
            "pol-block-bruteforce", "pol-auth-lockout", "pol-cti-block"}
        block = store.by_type("ssh-bruteforce")
        assert block.mode is Mode.AUTO
        assert block.target == TargetSpec(TargetKind.ALL_OF_GROUP, "edge")

    def test_fixture_threats(self):
        table = load_threats_toml((FIXTURES / "threats.toml").read_bytes())
        assert table.knows_type("ssh-bruteforce")
        assert not table.knows_type("made-up")

    def test_unknown_mode_rejected(self):
        doc = (
            '[[policy]]\npolicy_id = "x"\ncommand_cli = "c"\ncommand_human = "h"\n'
            'target = "node:fw1"\nmode = "yolo"\nthreat_type = "t"\n'
        ).encode()
        with pytest.raises(PolicyError, match="unknown mode"):
            load_policies_toml(doc)

    def test_missing_key_rejected(self):
        with pytest.raises(PolicyError, match="missing"):
            load_policies_toml(b'[[policy]]\npolicy_id = "x"\n')


class TestDecide:
    def build_store(self):
        return PolicyStore([
            policy("by-type", threat_type="ssh-bruteforce"),
            policy("by-group", threat_type=None, threat_group="authentication",
                   mode=Mode.RECOMMEND, command_cli="lock {user}"),
        ])

    def test_type_beats_group(self):
        outcome = decide(AlertStub(), self.build_store())
        assert outcome.policy.policy_id == "by-type"
        assert outcome.matched_by is MatchedBy.TYPE

    def test_group_fallback(self):
        alert = AlertStub(threat_type="ssh-failed-login")
        outcome = decide(alert, self.build_store())
        assert outcome.policy.policy_id == "by-group"
        assert outcome.matched_by is MatchedBy.GROUP

    def test_no_match(self):
        alert = AlertStub(threat_type="other", threat_group="other-group")
        outcome = decide(alert, self.build_store())
        assert outcome.policy is None
        assert outcome.matched_by is MatchedBy.NONE

    def test_unknown_type_only_warns(self, caplog):
        table = ThreatTable([ThreatEntry("T-1", "known", "authentication")])
        alert = AlertStub(threat_type="unknown-type")
        with caplog.at_level("WARNING"):
            outcome = decide(alert, self.build_store(), table)
        assert outcome.matched_by is MatchedBy.GROUP
        assert any("threat table" in message for message in caplog.messages)

    def test_matches_reference_on_random_populations(self):
        rng = random.Random(20260815)
        types = [f"type-{i}" for i in range(6)]
        groups = [f"group-{i}" for i in range(4)]
        for _ in range(300):
            policies = []
            used_types, used_groups = set(), set()
            for serial in range(rng.randint(0, 6)):
                if rng.random() < 0.5:
                    choice = rng.choice(types)
                    if choice in used_types:
                        continue
                    used_types.add(choice)
                    policies.append(policy(f"p{serial}", threat_type=choice))
                else:
                    choice = rng.choice(groups)
                    if choice in used_groups:
                        continue
                    used_groups.add(choice)
                    policies.append(policy(
                        f"p{serial}", threat_type=None, threat_group=choice,
                        command_cli="noop {node}"))
            store = PolicyStore(policies)
            alert = AlertStub(threat_type=rng.choice(types),
                              threat_group=rng.choice(groups))
            outcome = decide(alert, store)
            expected_id, expected_by = decide_reference(
                alert.threat_type, alert.threat_group, policies)
            assert (outcome.policy.policy_id if outcome.policy else None) == expected_id
            assert outcome.matched_by.value == expected_by


class TestRenderCommand:
    def test_node_of_event_prefers_dstip(self, asset_map):
        alert = AlertStub()  # dstip 198.51.100.7 = web1, srcip foreign
        (rendered,) = render_command(policy(), alert, asset_map)
        assert rendered.target_node == "web1"
        assert rendered.rendered_cli == "block 203.0.113.9"

    def test_node_of_event_falls_back_to_srcip(self, asset_map):
        alert = AlertStub(event=EventStub({"srcip": "10.0.0.12"}))
        (rendered,) = render_command(policy(command_cli="lock {node}"), alert, asset_map)
        assert rendered.target_node == "db1"
        assert rendered.rendered_cli == "lock db1"

    def test_node_of_event_without_owner_fails(self, asset_map):
        alert = AlertStub(event=EventStub({"srcip": "203.0.113.9"}))
        with pytest.raises(RenderError, match="no asset node owns"):
            render_command(policy(), alert, asset_map)

    def test_named_node(self, asset_map):
        (rendered,) = render_command(policy(target="node:fw1", command_cli="reload {node}"),
                                     AlertStub(), asset_map)
        assert rendered.target_node == "fw1"
        assert rendered.rendered_cli == "reload fw1"

    def test_named_node_must_exist(self, asset_map):
        with pytest.raises(RenderError, match="no node"):
            render_command(policy(target="node:ghost"), AlertStub(), asset_map)

    def test_group_renders_one_command_per_member_sorted(self, asset_map):
        # All three fixture nodes are in distinct groups; grow one group.
        from ctimp.asset_inventory import AssetNode, RiskLevel, UpsertNode, apply_edit

        grown = apply_edit(asset_map, UpsertNode(AssetNode(
            node_id="fw0", label="second fw", risk_level=RiskLevel.HIGH, group="edge")))
        rendered = render_command(policy(target="group:edge", command_cli="sync {node}"),
                                  AlertStub(), grown)
        assert [r.target_node for r in rendered] == ["fw0", "fw1"]
        assert [r.rendered_cli for r in rendered] == ["sync fw0", "sync fw1"]

    def test_empty_group_fails(self, asset_map):
        with pytest.raises(RenderError, match="no nodes in group"):
            render_command(policy(target="group:ghosts"), AlertStub(), asset_map)

    def test_missing_placeholder_value_fails(self, asset_map):
        alert = AlertStub(event=EventStub({"dstip": "198.51.100.7"}))  # no user field
        with pytest.raises(RenderError, match="placeholder"):
            render_command(policy(command_cli="usermod -L {user}"), alert, asset_map)


class TestCommandStore:
    def record(self, mode: Mode, state: CommandState, command_id="c1") -> CommandRecord:
        return CommandRecord(
            command_id=command_id, alert_id="a1", policy_id="p1",
            rendered_cli="cmd", target_node="fw1", mode=mode, state=state,
            created_at=T0)

    @pytest.mark.parametrize("mode,state,legal", [
        (Mode.RECOMMEND, CommandState.RECOMMENDED, True),
        (Mode.RECOMMEND, CommandState.PENDING_APPROVAL, False),
        (Mode.APPROVE, CommandState.PENDING_APPROVAL, True),
        (Mode.APPROVE, CommandState.EXECUTED, False),
        (Mode.AUTO, CommandState.EXECUTED, True),
        (Mode.AUTO, CommandState.FAILED, True),
        (Mode.AUTO, CommandState.PENDING_APPROVAL, False),
    ])
    def test_initial_state_by_mode(self, mode, state, legal):
        store = CommandStore()
        if legal:
            store.add(self.record(mode, state))
        else:
            with pytest.raises(IllegalCommandTransition):
                store.add(self.record(mode, state))

    def test_duplicate_command_id(self):
        store = CommandStore()
        store.add(self.record(Mode.APPROVE, CommandState.PENDING_APPROVAL))
        with pytest.raises(IllegalCommandTransition, match="duplicate"):
            store.add(self.record(Mode.APPROVE, CommandState.PENDING_APPROVAL))

    def test_legal_transitions(self):
        store = CommandStore()
        store.add(self.record(Mode.APPROVE, CommandState.PENDING_APPROVAL, "c1"))
        assert store.transition("c1", CommandState.APPROVED).state is CommandState.APPROVED
        assert store.transition("c1", CommandState.EXECUTED).state is CommandState.EXECUTED

    @pytest.mark.parametrize("target", [
        CommandState.EXECUTED,          # must pass through approved
        CommandState.RECOMMENDED,
        CommandState.PENDING_APPROVAL,  # self-loop
    ])
    def test_illegal_transitions_from_pending(self, target):
        store = CommandStore()
        store.add(self.record(Mode.APPROVE, CommandState.PENDING_APPROVAL))
        with pytest.raises(IllegalCommandTransition):
            store.transition("c1", target)

    def test_terminal_states_are_frozen(self):
        store = CommandStore()
        store.add(self.record(Mode.AUTO, CommandState.EXECUTED))
        for target in CommandState:
            with pytest.raises(IllegalCommandTransition):
                store.transition("c1", target)

    def test_list_records_sorted_and_filtered(self):
        store = CommandStore()
        for i, offset in enumerate([5, 1, 3]):
            record = self.record(Mode.APPROVE, CommandState.PENDING_APPROVAL, f"c{i}")
            record.created_at = T0 + timedelta(seconds=offset)
            store.add(record)
        listed = store.list_records()
        assert [r.command_id for r in listed] == ["c1", "c2", "c0"]
        assert store.list_records(CommandState.EXECUTED) == []

    def test_allocate_id_deterministic_sequence(self):
        assert CommandStore().allocate_id() == CommandStore().allocate_id()
        store = CommandStore()
        assert store.allocate_id() != store.allocate_id()


class TestAuditGrammar:
    def record(self, cli="iptables -I INPUT -s 1.2.3.4 -j DROP") -> CommandRecord:
        return CommandRecord(
            command_id="cmd-1", alert_id="alert-1", policy_id="pol-1",
            rendered_cli=cli, target_node="fw1", mode=Mode.AUTO,
            state=CommandState.EXECUTED, created_at=T0)

    def test_line_shape(self):
        line = format_audit_line(T0, self.record())
        assert line == ("2026-08-15T12:00:00Z|cmd-1|alert-1|pol-1|auto|executed|fw1|"
                        "iptables -I INPUT -s 1.2.3.4 -j DROP")

    def test_round_trip(self):
        parsed = parse_audit_line(format_audit_line(T0, self.record()))
        assert parsed == {
            "timestamp": "2026-08-15T12:00:00Z", "command_id": "cmd-1",
            "alert_id": "alert-1", "policy_id": "pol-1", "mode": "auto",
            "state": "executed", "target_node": "fw1",
            "rendered_cli": "iptables -I INPUT -s 1.2.3.4 -j DROP",
        }

    @settings(max_examples=200, deadline=None)
    @given(cli=st.text(
        alphabet=st.characters(blacklist_categories=("Cs", "Cc")), max_size=60))
    def test_escaping_round_trips_any_command(self, cli):
        line = format_audit_line(T0, self.record(cli=cli))
        assert "\n" not in line
        assert parse_audit_line(line)["rendered_cli"] == cli

    def test_pipes_and_backslashes(self):
        cli = r"grep -v '\|' /etc/passwd | wc -l \\"
        assert parse_audit_line(format_audit_line(T0, self.record(cli=cli)))["rendered_cli"] == cli

    @pytest.mark.parametrize("line", [
        "a|b|c",                      # too few fields
        "a|b|c|d|e|f|g|h|i",          # too many
        "a|b|c|d|e|f|g|h\\",          # dangling escape
    ])
    def test_malformed_lines_rejected(self, line):
        with pytest.raises(ValueError):
            parse_audit_line(line)

    def test_audit_refuses_non_terminal_states(self, tmp_path):
        audit = AuditLog(tmp_path / "audit.log")
        record = self.record()
        record.state = CommandState.PENDING_APPROVAL
        with pytest.raises(IllegalCommandTransition):
            audit.append(T0, record)

    def test_read_entries_on_missing_file(self, tmp_path):
        assert AuditLog(tmp_path / "nope.log").read_entries() == []


class TestEngineModes:
    def test_auto_executes_immediately(self, engine_parts):
        engine, executor, audit = engine_parts
        records = engine.handle_alert(AlertStub())  # type-match: auto, group:edge
        (record,) = records
        assert record.state is CommandState.EXECUTED
        assert record.mode is Mode.AUTO
        assert record.target_node == "fw1"
        assert record.transcript == "ok"
        assert executor.invocations == [
            ("192.0.2.1", "iptables -I INPUT -s 203.0.113.9 -j DROP", 5.0)]
        entries = audit.read_entries()
        assert len(entries) == 1
        assert entries[0]["state"] == "executed"
        assert entries[0]["command_id"] == record.command_id

    def test_recommend_never_executes(self, engine_parts):
        engine, executor, audit = engine_parts
        alert = AlertStub(threat_type="ssh-failed-login")  # group: authentication
        (record,) = engine.handle_alert(alert)
        assert record.state is CommandState.RECOMMENDED
        assert executor.invocations == []
        entries = audit.read_entries()
        assert len(entries) == 1
        assert entries[0]["state"] == "recommended"
        assert entries[0]["rendered_cli"] == "usermod -L root"

    def test_approve_parks_until_verdict(self, engine_parts):
        engine, executor, audit = engine_parts
        alert = AlertStub(threat_type="sigma:network_connection", threat_group="cti-match")
        (record,) = engine.handle_alert(alert)
        assert record.state is CommandState.PENDING_APPROVAL
        assert executor.invocations == []
        assert audit.read_entries() == []  # nothing terminal yet

        done = engine.apply_verdict(record.command_id, "approved", actor="analyst")
        assert done.state is CommandState.EXECUTED
        assert done.decided_by == "analyst"
        assert len(executor.invocations) == 1
        entries = audit.read_entries()
        assert len(entries) == 1 and entries[0]["state"] == "executed"

    def test_rejection_becomes_recommendation(self, engine_parts):
        engine, executor, audit = engine_parts
        alert = AlertStub(threat_type="sigma:network_connection", threat_group="cti-match")
        (record,) = engine.handle_alert(alert)
        done = engine.apply_verdict(record.command_id, "rejected", actor="analyst")
        assert done.state is CommandState.REJECTED_AS_RECOMMENDATION
        assert executor.invocations == []
        entries = audit.read_entries()
        assert len(entries) == 1
        assert entries[0]["state"] == "rejected_as_recommendation"

    def test_verdict_must_be_known(self, engine_parts):
        engine, _, _ = engine_parts
        alert = AlertStub(threat_type="sigma:network_connection", threat_group="cti-match")
        (record,) = engine.handle_alert(alert)
        with pytest.raises(ValueError, match="verdict"):
            engine.apply_verdict(record.command_id, "maybe", actor="x")

    def test_double_verdict_rejected(self, engine_parts):
        engine, _, _ = engine_parts
        alert = AlertStub(threat_type="sigma:network_connection", threat_group="cti-match")
        (record,) = engine.handle_alert(alert)
        engine.apply_verdict(record.command_id, "rejected", actor="x")
        with pytest.raises(IllegalCommandTransition):
            engine.apply_verdict(record.command_id, "approved", actor="y")

    def test_no_policy_heals_nothing(self, engine_parts):
        engine, executor, audit = engine_parts
        assert engine.handle_alert(AlertStub(threat_type="x", threat_group="y")) == []
        assert executor.invocations == []
        assert audit.read_entries() == []

    def test_render_failure_heals_nothing(self, engine_parts, caplog):
        engine, executor, _ = engine_parts
        alert = AlertStub(threat_type="ssh-failed-login",
                          event=EventStub({"srcip": "203.0.113.9"}))  # {user} missing
        with caplog.at_level("WARNING"):
            assert engine.handle_alert(alert) == []
        assert executor.invocations == []

    def test_nonzero_exit_marks_failed(self, asset_map, tmp_path):
        executor = FakeExecutor(script=lambda *_: ExecutionResult(1, "denied"))
        audit = AuditLog(tmp_path / "audit.log")
        engine = SelfHealEngine(
            policies=load_policies_toml((FIXTURES / "policies.toml").read_bytes()),
            threats=None, asset_map=asset_map, audit=audit, executor=executor,
            node_addresses={"fw1": "192.0.2.1"}, clock=ticking_clock())
        (record,) = engine.handle_alert(AlertStub())
        assert record.state is CommandState.FAILED
        assert record.transcript == "denied"
        assert audit.read_entries()[0]["state"] == "failed"

    def test_transport_exception_marks_failed(self, asset_map, tmp_path):
        def boom(*_):
            raise ConnectionError("unreachable")
        engine = SelfHealEngine(
            policies=load_policies_toml((FIXTURES / "policies.toml").read_bytes()),
            threats=None, asset_map=asset_map,
            audit=AuditLog(tmp_path / "audit.log"),
            executor=FakeExecutor(script=boom),
            node_addresses={"fw1": "192.0.2.1"}, clock=ticking_clock())
        (record,) = engine.handle_alert(AlertStub())
        assert record.state is CommandState.FAILED
        assert "transport failure" in record.transcript

    def test_missing_transport_address_marks_failed(self, asset_map, tmp_path):
        from ctimp.asset_inventory import AssetNode, RiskLevel, UpsertNode, apply_edit

        # A node with no addresses and no configured transport.
        grown = apply_edit(asset_map, UpsertNode(AssetNode(
            node_id="bare", label="no addr", risk_level=RiskLevel.LOW, group="edge")))
        executor = FakeExecutor()
        engine = SelfHealEngine(
            policies=load_policies_toml((FIXTURES / "policies.toml").read_bytes()),
            threats=None, asset_map=grown,
            audit=AuditLog(tmp_path / "audit.log"),
            executor=executor, node_addresses={}, clock=ticking_clock())
        records = engine.handle_alert(AlertStub())
        by_node = {r.target_node: r for r in records}
        assert by_node["bare"].state is CommandState.FAILED
        assert "no transport address" in by_node["bare"].transcript
        # fw1 still executed via its map address.
        assert by_node["fw1"].state is CommandState.EXECUTED
        assert executor.invocations == [
            ("192.0.2.1", "iptables -I INPUT -s 203.0.113.9 -j DROP", 30.0)]

    def test_group_target_one_record_per_member(self, engine_parts):
        engine, executor, audit = engine_parts
        from ctimp.asset_inventory import AssetNode, RiskLevel, UpsertNode, apply_edit

        engine.set_asset_map(apply_edit(engine.asset_map, UpsertNode(AssetNode(
            node_id="fw0", label="fw0", risk_level=RiskLevel.HIGH, group="edge",
            addresses=("192.0.2.2",)))))
        records = engine.handle_alert(AlertStub())
        assert [r.target_node for r in records] == ["fw0", "fw1"]
        assert len(executor.invocations) == 2
        assert len(audit.read_entries()) == 2

    def test_audit_lines_equal_terminal_records(self, engine_parts):
        engine, _, audit = engine_parts
        engine.handle_alert(AlertStub())                                   # auto -> executed
        engine.handle_alert(AlertStub(threat_type="ssh-failed-login"))     # recommend
        alert = AlertStub(threat_type="sigma:network_connection", threat_group="cti-match")
        (pending,) = engine.handle_alert(alert)                            # approve -> parked
        engine.handle_alert(AlertStub(threat_type="none", threat_group="none"))

        terminal = [r for r in engine.commands.list_records()
                    if r.state.value in ("recommended", "rejected_as_recommendation",
                                         "executed", "failed")]
        entries = audit.read_entries()
        assert len(entries) == len(terminal) == 2

        engine.apply_verdict(pending.command_id, "rejected", actor="ops")
        entries = audit.read_entries()
        assert len(entries) == 3
        assert {e["command_id"] for e in entries} == \
            {r.command_id for r in engine.commands.list_records()
             if r.state.value != "pending_approval"}
        for entry in entries:
            assert entry["timestamp"].endswith("Z")
            record = engine.commands.get(entry["command_id"])
            assert entry["state"] == record.state.value
            assert entry["policy_id"] == record.policy_id
            assert entry["rendered_cli"] == record.rendered_cli
