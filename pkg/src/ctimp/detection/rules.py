"""Detection rules: native TOML rules and loaded SIGMA rules, one evaluator.

Conditions are boolean trees over field tests.  A comparison on a field the
event did not capture is false, never an error — logs are adversarial input.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import yaml

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .decoders import CAPTURE_VOCABULARY

# SIGMA field names -> capture vocabulary.
SIGMA_FIELD_MAP = {
    "destination_ip": "dstip",
    "source_ip": "srcip",
    "query": "query",
    "url": "url",
    "md5": "hash",
    "sha256": "hash",
}

# A SIGMA rule only applies to events carrying at least one field of its
# log-source category.
CATEGORY_FIELDS = {
    "network_connection": ("dstip", "srcip"),
    "dns": ("query",),
    "proxy": ("url",),
    "file_event": ("hash",),
}

SIGMA_LEVEL_TO_INT = {"informational": 3, "low": 5, "medium": 7, "high": 10, "critical": 13}


class RuleLoadError(ValueError):
    pass


class RuleOrigin(str, Enum):
    NATIVE = "native"
    SIGMA = "sigma"


class CondOp(str, Enum):
    EQUALS = "equals"
    CONTAINS = "contains"
    IN_SET = "in_set"
    PRESENT = "present"  # internal: used for the SIGMA category gate


@dataclass(frozen=True)
class FieldTest:
    field: str
    op: CondOp
    values: tuple[str, ...] = ()


@dataclass(frozen=True)
class AllOf:
    children: tuple["CondExpr", ...]


@dataclass(frozen=True)
class AnyOf:
    children: tuple["CondExpr", ...]


@dataclass(frozen=True)
class NotOf:
    child: "CondExpr"


CondExpr = Union[FieldTest, AllOf, AnyOf, NotOf]

MATCH_ALL = AllOf(())


def eval_condition(expr: CondExpr, fields: dict[str, str]) -> bool:
    if isinstance(expr, FieldTest):
        value = fields.get(expr.field)
        if expr.op is CondOp.PRESENT:
            return value is not None
        if value is None:
            return False
        if expr.op is CondOp.EQUALS:
            return value == expr.values[0]
        if expr.op is CondOp.CONTAINS:
            return any(needle in value for needle in expr.values)
        return value in expr.values
    if isinstance(expr, AllOf):
        return all(eval_condition(child, fields) for child in expr.children)
    if isinstance(expr, AnyOf):
        return any(eval_condition(child, fields) for child in expr.children)
    return not eval_condition(expr.child, fields)


@dataclass(frozen=True)
class Frequency:
    count: int
    window: float  # seconds
    key_field: str

    def __post_init__(self):
        if self.count < 2:
            raise RuleLoadError(f"frequency count must be >= 2, got {self.count}")
        if self.window <= 0:
            raise RuleLoadError(f"frequency window must be positive, got {self.window}")
        if self.key_field not in CAPTURE_VOCABULARY:
            raise RuleLoadError(f"frequency key_field {self.key_field!r} is outside the capture vocabulary")


@dataclass(frozen=True)
class DetectionRule:
    rule_id: str
    origin: RuleOrigin
    level: int
    threat_type: str
    threat_group: str
    conditions: CondExpr = MATCH_ALL
    required_decoder: Optional[str] = None
    frequency: Optional[Frequency] = None
    parent_rule: Optional[str] = None

    def __post_init__(self):
        if not 0 <= self.level <= 15:
            raise RuleLoadError(f"rule {self.rule_id}: level must be 0..15, got {self.level}")


def validate_rules(rules: list[DetectionRule]) -> None:
    """Check id uniqueness and that parent chains resolve without cycles."""
    by_id: dict[str, DetectionRule] = {}
    for rule in rules:
        if rule.rule_id in by_id:
            raise RuleLoadError(f"duplicate rule_id {rule.rule_id!r}")
        by_id[rule.rule_id] = rule
    for rule in rules:
        seen = {rule.rule_id}
        cursor = rule.parent_rule
        while cursor is not None:
            if cursor not in by_id:
                raise RuleLoadError(f"rule {rule.rule_id}: unknown parent_rule {cursor!r}")
            if cursor in seen:
                raise RuleLoadError(f"rule parent cycle through {cursor!r}")
            seen.add(cursor)
            cursor = by_id[cursor].parent_rule


# --- SIGMA loading -------------------------------------------------------------

class _ConditionParser:
    """Parses `x`, `x or y`, `x and y`, `not x`, with parentheses."""

    _TOKEN_RE = re.compile(r"\s*(\(|\)|[A-Za-z_][A-Za-z0-9_]*)")

    def __init__(self, text: str, selections: dict[str, CondExpr], rule_name: str):
        self.selections = selections
        self.rule_name = rule_name
        self.tokens = self._tokenize(text)
        self.index = 0

    def _tokenize(self, text: str) -> list[str]:
        tokens = []
        pos = 0
        while pos < len(text):
            matched = self._TOKEN_RE.match(text, pos)
            if not matched:
                if text[pos:].strip():
                    raise RuleLoadError(f"rule {self.rule_name}: bad condition syntax near {text[pos:]!r}")
                break
            tokens.append(matched.group(1))
            pos = matched.end()
        return tokens

    def _peek(self) -> Optional[str]:
        return self.tokens[self.index] if self.index < len(self.tokens) else None

    def parse(self) -> CondExpr:
        expr = self._parse_or()
        if self._peek() is not None:
            raise RuleLoadError(f"rule {self.rule_name}: trailing tokens in condition")
        return expr

    def _parse_or(self) -> CondExpr:
        children = [self._parse_and()]
        while self._peek() == "or":
            self.index += 1
            children.append(self._parse_and())
        return children[0] if len(children) == 1 else AnyOf(tuple(children))

    def _parse_and(self) -> CondExpr:
        children = [self._parse_unary()]
        while self._peek() == "and":
            self.index += 1
            children.append(self._parse_unary())
        return children[0] if len(children) == 1 else AllOf(tuple(children))

    def _parse_unary(self) -> CondExpr:
        token = self._peek()
        if token == "not":
            self.index += 1
            return NotOf(self._parse_unary())
        if token == "(":
            self.index += 1
            inner = self._parse_or()
            if self._peek() != ")":
                raise RuleLoadError(f"rule {self.rule_name}: unbalanced parentheses in condition")
            self.index += 1
            return inner
        if token is None or token in (")", "and", "or"):
            raise RuleLoadError(f"rule {self.rule_name}: malformed condition")
        self.index += 1
        if token not in self.selections:
            raise RuleLoadError(
                f"rule {self.rule_name}: condition references undefined selection {token!r}"
            )
        return self.selections[token]


def _selection_expr(name: str, body, rule_name: str) -> CondExpr:
    if not isinstance(body, dict) or not body:
        raise RuleLoadError(f"rule {rule_name}: selection {name!r} must be a non-empty mapping")
    tests: list[CondExpr] = []
    for sigma_field, raw_values in body.items():
        mapped = SIGMA_FIELD_MAP.get(str(sigma_field))
        if mapped is None:
            raise RuleLoadError(f"rule {rule_name}: unsupported SIGMA field {sigma_field!r}")
        if isinstance(raw_values, (str, int, float)):
            values = (str(raw_values),)
        elif isinstance(raw_values, list) and raw_values:
            values = tuple(str(v) for v in raw_values)
        else:
            raise RuleLoadError(f"rule {rule_name}: selection {name!r} field {sigma_field!r} has no values")
        op = CondOp.EQUALS if len(values) == 1 else CondOp.IN_SET
        tests.append(FieldTest(field=mapped, op=op, values=values))
    return tests[0] if len(tests) == 1 else AllOf(tuple(tests))


def load_sigma_rule(document: Union[bytes, str]) -> DetectionRule:
    """Load one rendered SIGMA rule into a DetectionRule."""
    try:
        payload = yaml.safe_load(document)
    except yaml.YAMLError as exc:
        raise RuleLoadError(f"SIGMA document is not valid YAML: {exc}") from exc
    if not isinstance(payload, dict):
        raise RuleLoadError("SIGMA document is not a mapping")
    rule_name = str(payload.get("id") or payload.get("title") or "<unnamed>")
    logsource = payload.get("logsource")
    if not isinstance(logsource, dict) or "category" not in logsource:
        raise RuleLoadError(f"rule {rule_name}: missing logsource.category")
    category = str(logsource["category"])
    if category not in CATEGORY_FIELDS:
        raise RuleLoadError(f"rule {rule_name}: unsupported logsource category {category!r}")
    detection = payload.get("detection")
    if not isinstance(detection, dict) or "condition" not in detection:
        raise RuleLoadError(f"rule {rule_name}: missing detection.condition")
    selections = {
        str(name): _selection_expr(str(name), body, rule_name)
        for name, body in detection.items()
        if name != "condition"
    }
    if not selections:
        raise RuleLoadError(f"rule {rule_name}: no selections defined")
    condition = _ConditionParser(str(detection["condition"]), selections, rule_name).parse()
    gate = AnyOf(tuple(FieldTest(field=f, op=CondOp.PRESENT) for f in CATEGORY_FIELDS[category]))
    level = SIGMA_LEVEL_TO_INT.get(str(payload.get("level", "low")).lower())
    if level is None:
        raise RuleLoadError(f"rule {rule_name}: unknown level {payload.get('level')!r}")
    return DetectionRule(
        rule_id=rule_name,
        origin=RuleOrigin.SIGMA,
        level=level,
        threat_type=f"sigma:{category}",
        threat_group="cti-match",
        conditions=AllOf((gate, condition)),
    )


def load_sigma_rules(documents: list[Union[bytes, str]]) -> list[DetectionRule]:
    rules = [load_sigma_rule(document) for document in documents]
    validate_rules(rules)
    return rules


# --- native rule loading ---------------------------------------------------------

def _native_condition(raw, context: str) -> CondExpr:
    if not isinstance(raw, dict):
        raise RuleLoadError(f"{context}: condition must be a table")
    keys = set(raw)
    if keys == {"all"} or keys == {"any"}:
        kind, children = next(iter(raw.items()))
        if not isinstance(children, list):
            raise RuleLoadError(f"{context}: {kind} must be a list")
        parsed = tuple(_native_condition(child, context) for child in children)
        return AllOf(parsed) if kind == "all" else AnyOf(parsed)
    if keys == {"not"}:
        return NotOf(_native_condition(raw["not"], context))
    if keys <= {"field", "op", "values"} and "field" in raw:
        field_name = raw["field"]
        if field_name not in CAPTURE_VOCABULARY:
            raise RuleLoadError(f"{context}: field {field_name!r} is outside the capture vocabulary")
        op_raw = raw.get("op", "equals")
        try:
            op = CondOp(op_raw)
        except ValueError:
            raise RuleLoadError(f"{context}: unknown op {op_raw!r}") from None
        if op is CondOp.PRESENT:
            raise RuleLoadError(f"{context}: op 'present' is reserved for internal use")
        values = raw.get("values", [])
        if not isinstance(values, list) or not values:
            raise RuleLoadError(f"{context}: values must be a non-empty list")
        if op is CondOp.EQUALS and len(values) != 1:
            raise RuleLoadError(f"{context}: equals takes exactly one value")
        return FieldTest(field=field_name, op=op, values=tuple(str(v) for v in values))
    raise RuleLoadError(f"{context}: condition table has unexpected keys {sorted(keys)}")


def load_native_rules_toml(document: bytes) -> list[DetectionRule]:
    """Load `[[rule]]` tables from a TOML document."""
    try:
        payload = tomllib.loads(document.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise RuleLoadError(f"rule file is not valid TOML: {exc}") from exc
    rules = []
    for index, raw in enumerate(payload.get("rule", [])):
        context = f"rule[{index}]"
        if not isinstance(raw, dict):
            raise RuleLoadError(f"{context}: expected a table")
        for key in ("rule_id", "level", "threat_type", "threat_group"):
            if key not in raw:
                raise RuleLoadError(f"{context}: missing {key}")
        frequency = None
        if "frequency" in raw:
            freq = raw["frequency"]
            if not isinstance(freq, dict) or not {"count", "window", "key_field"} <= set(freq):
                raise RuleLoadError(f"{context}: frequency needs count, window, key_field")
            frequency = Frequency(
                count=int(freq["count"]), window=float(freq["window"]), key_field=freq["key_field"]
            )
        conditions = MATCH_ALL
        if "conditions" in raw:
            conditions = _native_condition(raw["conditions"], context)
        rules.append(DetectionRule(
            rule_id=str(raw["rule_id"]),
            origin=RuleOrigin.NATIVE,
            level=int(raw["level"]),
            threat_type=str(raw["threat_type"]),
            threat_group=str(raw["threat_group"]),
            conditions=conditions,
            required_decoder=raw.get("required_decoder"),
            frequency=frequency,
            parent_rule=raw.get("parent_rule"),
        ))
    validate_rules(rules)
    return rules
