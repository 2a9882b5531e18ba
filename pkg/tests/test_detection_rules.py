"""Rule loading (native TOML + rendered SIGMA) and condition evaluation."""

from __future__ import annotations

import random
from datetime import timedelta

import pytest

from ctimp.cti_ingest import IndicatorRecord
from ctimp.detection.rules import (
    AllOf,
    AnyOf,
    CondOp,
    DetectionRule,
    FieldTest,
    Frequency,
    NotOf,
    RuleLoadError,
    RuleOrigin,
    eval_condition,
    load_native_rules_toml,
    load_sigma_rule,
    load_sigma_rules,
    validate_rules,
)
from ctimp.sigma_compiler import compile_indicator, render_yaml
from ctimp.stix_patterns import parse_pattern

from .conftest import FIXTURES, REPO_ROOT
from .oracles import condition_reference
from .strategies import BASE_TIME


def sigma_doc(pattern: str, tier: int = 4) -> bytes:
    indicator = IndicatorRecord(
        stix_id="indicator--00000000-0000-4000-8000-000000000000",
        created=BASE_TIME - timedelta(days=2),
        modified=BASE_TIME - timedelta(days=1),
        valid_from=BASE_TIME - timedelta(days=2),
        pattern_text=pattern,
        expr=parse_pattern(pattern),
        labels=(),
        source_id="feed",
        trust_tier=tier,
    )
    rules, _ = compile_indicator(indicator)
    return render_yaml(rules[0])


class TestEvalCondition:
    FIELDS = {"srcip": "10.0.0.1", "user": "root", "status": "200"}

    @pytest.mark.parametrize("test,expected", [
        (FieldTest("srcip", CondOp.EQUALS, ("10.0.0.1",)), True),
        (FieldTest("srcip", CondOp.EQUALS, ("10.0.0.2",)), False),
        (FieldTest("dstip", CondOp.EQUALS, ("10.0.0.1",)), False),  # absent field
        (FieldTest("user", CondOp.CONTAINS, ("oo", "xx")), True),
        (FieldTest("user", CondOp.CONTAINS, ("xx",)), False),
        (FieldTest("status", CondOp.IN_SET, ("200", "301")), True),
        (FieldTest("status", CondOp.IN_SET, ("301",)), False),
        (FieldTest("srcip", CondOp.PRESENT), True),
        (FieldTest("dstip", CondOp.PRESENT), False),
    ])
    def test_field_tests(self, test, expected):
        assert eval_condition(test, self.FIELDS) is expected

    def test_boolean_combinators(self):
        a = FieldTest("srcip", CondOp.EQUALS, ("10.0.0.1",))
        b = FieldTest("user", CondOp.EQUALS, ("nobody",))
        assert eval_condition(AllOf((a, a)), self.FIELDS)
        assert not eval_condition(AllOf((a, b)), self.FIELDS)
        assert eval_condition(AnyOf((a, b)), self.FIELDS)
        assert not eval_condition(AnyOf((b, b)), self.FIELDS)
        assert eval_condition(NotOf(b), self.FIELDS)
        assert not eval_condition(NotOf(a), self.FIELDS)

    def test_empty_allof_matches_everything(self):
        assert eval_condition(AllOf(()), {})

    def test_random_trees_match_reference(self):
        rng = random.Random(424242)
        field_names = ["srcip", "dstip", "user", "status", "query"]
        values = ["a", "b", "c"]

        def random_tree(depth):
            if depth == 0 or rng.random() < 0.4:
                op = rng.choice([CondOp.EQUALS, CondOp.CONTAINS, CondOp.IN_SET, CondOp.PRESENT])
                if op is CondOp.PRESENT:
                    return FieldTest(rng.choice(field_names), op)
                if op is CondOp.EQUALS:
                    return FieldTest(rng.choice(field_names), op, (rng.choice(values),))
                picks = tuple(rng.sample(values, rng.randint(1, 3)))
                return FieldTest(rng.choice(field_names), op, picks)
            kind = rng.choice(["all", "any", "not"])
            if kind == "not":
                return NotOf(random_tree(depth - 1))
            children = tuple(random_tree(depth - 1) for _ in range(rng.randint(1, 3)))
            return AllOf(children) if kind == "all" else AnyOf(children)

        for _ in range(300):
            tree = random_tree(3)
            fields = {
                name: rng.choice(values)
                for name in field_names if rng.random() < 0.6
            }
            assert eval_condition(tree, fields) == condition_reference(tree, fields)


class TestRuleValidation:
    def make(self, rule_id="r1", **kwargs) -> DetectionRule:
        defaults = dict(origin=RuleOrigin.NATIVE, level=5,
                        threat_type="t", threat_group="g")
        defaults.update(kwargs)
        return DetectionRule(rule_id=rule_id, **defaults)

    def test_level_bounds(self):
        self.make(level=0)
        self.make(level=15)
        with pytest.raises(RuleLoadError):
            self.make(level=16)
        with pytest.raises(RuleLoadError):
            self.make(level=-1)

    def test_duplicate_rule_ids(self):
        with pytest.raises(RuleLoadError, match="duplicate"):
            validate_rules([self.make(), self.make()])

    def test_unknown_parent(self):
        with pytest.raises(RuleLoadError, match="unknown parent"):
            validate_rules([self.make(parent_rule="ghost")])

    def test_parent_cycle(self):
        with pytest.raises(RuleLoadError, match="cycle"):
            validate_rules([
                self.make(rule_id="a", parent_rule="b"),
                self.make(rule_id="b", parent_rule="a"),
            ])

    def test_frequency_bounds(self):
        Frequency(count=2, window=1.0, key_field="srcip")
        with pytest.raises(RuleLoadError):
            Frequency(count=1, window=60, key_field="srcip")
        with pytest.raises(RuleLoadError):
            Frequency(count=5, window=0, key_field="srcip")
        with pytest.raises(RuleLoadError):
            Frequency(count=5, window=60, key_field="banana")


class TestNativeToml:
    def test_fixture_rules(self):
        rules = load_native_rules_toml((FIXTURES / "native_rules.toml").read_bytes())
        (brute,) = [r for r in rules if r.rule_id == "ssh-bruteforce"]
        assert brute.origin is RuleOrigin.NATIVE
        assert brute.level == 10
        assert brute.required_decoder == "sshd-failed-password"
        assert brute.frequency == Frequency(count=5, window=60, key_field="srcip")

    def test_bundled_defaults_load(self):
        raw = (REPO_ROOT / "src" / "ctimp" / "defaults" / "native_rules.toml").read_bytes()
        rules = load_native_rules_toml(raw)
        assert rules
        validate_rules(rules)

    def test_missing_required_key(self):
        with pytest.raises(RuleLoadError, match="missing level"):
            load_native_rules_toml(
                b'[[rule]]\nrule_id = "x"\nthreat_type = "t"\nthreat_group = "g"\n')

    def test_conditions_parse(self):
        raw = b"""
[[rule]]
rule_id = "cond"
level = 5
threat_type = "t"
threat_group = "g"
[rule.conditions]
any = [
  { field = "srcip", op = "equals", values = ["10.0.0.1"] },
  { not = { field = "user", op = "in_set", values = ["root", "admin"] } },
]
"""
        (rule,) = load_native_rules_toml(raw)
        assert isinstance(rule.conditions, AnyOf)
        assert eval_condition(rule.conditions, {"srcip": "10.0.0.1"})
        assert not eval_condition(rule.conditions, {"user": "root"})
        assert eval_condition(rule.conditions, {"user": "guest"})

    @pytest.mark.parametrize("body,fragment", [
        ('{ field = "banana", values = ["x"] }', "vocabulary"),
        ('{ field = "srcip", op = "regex", values = ["x"] }', "unknown op"),
        ('{ field = "srcip", op = "present", values = ["x"] }', "reserved"),
        ('{ field = "srcip", op = "equals", values = ["a", "b"] }', "exactly one"),
        ('{ field = "srcip", op = "equals", values = [] }', "non-empty"),
        ('{ banana = 1 }', "unexpected keys"),
    ])
    def test_bad_conditions(self, body, fragment):
        raw = (
            '[[rule]]\nrule_id = "x"\nlevel = 5\nthreat_type = "t"\n'
            f'threat_group = "g"\nconditions = {body}\n'
        ).encode()
        with pytest.raises(RuleLoadError, match=fragment):
            load_native_rules_toml(raw)

    def test_incomplete_frequency(self):
        raw = (
            '[[rule]]\nrule_id = "x"\nlevel = 5\nthreat_type = "t"\nthreat_group = "g"\n'
            '[rule.frequency]\ncount = 5\n'
        ).encode()
        with pytest.raises(RuleLoadError, match="frequency"):
            load_native_rules_toml(raw)

    def test_invalid_toml(self):
        with pytest.raises(RuleLoadError, match="not valid TOML"):
            load_native_rules_toml(b"[[rule")


class TestSigmaLoading:
    def test_compiled_ipv4_rule_round_trips(self):
        rule = load_sigma_rule(sigma_doc("[ipv4-addr:value = '198.51.100.7']"))
        assert rule.origin is RuleOrigin.SIGMA
        assert rule.threat_type == "sigma:network_connection"
        assert rule.threat_group == "cti-match"
        assert rule.level == 10  # trust tier 4 -> high -> 10
        assert eval_condition(rule.conditions, {"dstip": "198.51.100.7"})
        assert eval_condition(rule.conditions, {"srcip": "198.51.100.7"})
        assert not eval_condition(rule.conditions, {"dstip": "10.0.0.1"})

    def test_category_gate_blocks_foreign_events(self):
        rule = load_sigma_rule(sigma_doc("[domain-name:value = 'evil.example']"))
        assert eval_condition(rule.conditions, {"query": "evil.example"})
        # Same value in a non-dns field: the category gate keeps it out.
        assert not eval_condition(rule.conditions, {"url": "evil.example"})

    @pytest.mark.parametrize("tier,level", [(5, 13), (4, 10), (3, 7), (2, 5)])
    def test_level_mapping(self, tier, level):
        rule = load_sigma_rule(sigma_doc("[domain-name:value = 'a.example']", tier=tier))
        assert rule.level == level

    def test_informational_level(self):
        doc = sigma_doc("[domain-name:value = 'a.example']").replace(
            b"level: high", b"level: informational")
        assert load_sigma_rule(doc).level == 3

    def test_hash_rules_compare_one_hash_field(self):
        md5 = "0123456789abcdef0123456789abcdef"
        rule = load_sigma_rule(sigma_doc(f"[file:hashes.MD5 = '{md5}']"))
        assert eval_condition(rule.conditions, {"hash": md5})
        sha = "ab" * 32
        rule = load_sigma_rule(sigma_doc(f"[file:hashes.'SHA-256' = '{sha}']"))
        assert eval_condition(rule.conditions, {"hash": sha})

    def test_condition_parser_precedence(self):
        doc = b"""
title: t
id: t-1
logsource:
  category: dns
detection:
  a:
    query: one.example
  b:
    query: two.example
  c:
    query: three.example
  condition: a and b or c
level: low
"""
        rule = load_sigma_rule(doc)
        # "a and b or c" == (a and b) or c; a and b can't both hold for the
        # same single-valued field, so only c fires.
        assert eval_condition(rule.conditions, {"query": "three.example"})
        assert not eval_condition(rule.conditions, {"query": "one.example"})

    def test_not_operator(self):
        doc = b"""
title: t
id: t-2
logsource:
  category: dns
detection:
  bad:
    query: evil.example
  condition: not bad
level: low
"""
        rule = load_sigma_rule(doc)
        assert eval_condition(rule.conditions, {"query": "fine.example"})
        assert not eval_condition(rule.conditions, {"query": "evil.example"})
        # The category gate still requires a dns field.
        assert not eval_condition(rule.conditions, {"srcip": "10.0.0.1"})

    def test_value_list_becomes_set_membership(self):
        doc = b"""
title: t
id: t-3
logsource:
  category: dns
detection:
  sel:
    query:
      - one.example
      - two.example
  condition: sel
level: low
"""
        rule = load_sigma_rule(doc)
        assert eval_condition(rule.conditions, {"query": "two.example"})
        assert not eval_condition(rule.conditions, {"query": "three.example"})

    @pytest.mark.parametrize("mutate,fragment", [
        (lambda d: d.replace(b"logsource:\n  category: network_connection\n", b""),
         "logsource.category"),
        (lambda d: d.replace(b"category: network_connection", b"category: registry"),
         "unsupported logsource category"),
        (lambda d: d.replace(b"  condition: sel_dst or sel_src\n", b""),
         "missing detection.condition"),
        (lambda d: d.replace(b"sel_dst or sel_src", b"sel_dst or sel_ghost"),
         "undefined selection"),
        (lambda d: d.replace(b"sel_dst or sel_src", b"sel_dst or or"),
         "malformed"),
        (lambda d: d.replace(b"sel_dst or sel_src", b"(sel_dst or sel_src"),
         "unbalanced"),
        (lambda d: d.replace(b"sel_dst or sel_src", b"sel_dst sel_src"),
         "trailing"),
        (lambda d: d.replace(b"level: high", b"level: apocalyptic"),
         "unknown level"),
        (lambda d: d.replace(b"destination_ip", b"dest_port"),
         "unsupported SIGMA field"),
    ])
    def test_malformed_documents(self, mutate, fragment):
        doc = mutate(sigma_doc("[ipv4-addr:value = '198.51.100.7']"))
        with pytest.raises(RuleLoadError, match=fragment):
            load_sigma_rule(doc)

    def test_not_yaml(self):
        with pytest.raises(RuleLoadError):
            load_sigma_rule(b"\t{unparseable")
        with pytest.raises(RuleLoadError, match="not a mapping"):
            load_sigma_rule(b"- just\n- a list\n")

    def test_load_many_validates_uniqueness(self):
        doc = sigma_doc("[ipv4-addr:value = '198.51.100.7']")
        with pytest.raises(RuleLoadError, match="duplicate"):
            load_sigma_rules([doc, doc])
