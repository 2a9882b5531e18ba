"""Compile tailored indicators into SIGMA detection rules.

The observable expression is rewritten to disjunctive normal form; conjuncts
are grouped by log-source category (one rule per category per indicator).
A conjunct spanning categories is split, which over-approximates the AND; a
diagnostic records the weakening.  Rendering is byte-deterministic canonical
YAML so recompilation never churns rule files.
"""

from __future__ import annotations

import re
import uuid
from dataclasses import dataclass, field
from typing import Iterable

from .cti_ingest import IndicatorRecord
from .relevance import TailoredBundle
from .stix_patterns import And, Expr, Leaf, ObservableKind, Or

RULE_NAMESPACE = uuid.uuid5(uuid.NAMESPACE_DNS, "ctimp-sigma")

# kind -> (logsource category, selection base name, event fields)
CATEGORY_BY_KIND = {
    ObservableKind.IPV4: "network_connection",
    ObservableKind.DOMAIN: "dns",
    ObservableKind.URL: "proxy",
    ObservableKind.MD5: "file_event",
    ObservableKind.SHA256: "file_event",
}
_SELECTION_FIELDS = {
    ObservableKind.IPV4: (("dst", "destination_ip"), ("src", "source_ip")),
    ObservableKind.DOMAIN: (("query", "query"),),
    ObservableKind.URL: (("url", "url"),),
    ObservableKind.MD5: (("md5", "md5"),),
    ObservableKind.SHA256: (("sha256", "sha256"),),
}

LEVEL_BY_TRUST_TIER = {5: "critical", 4: "high", 3: "medium"}


class SigmaCompileError(ValueError):
    pass


@dataclass(frozen=True)
class SigmaSelection:
    name: str
    field: str
    values: tuple[str, ...]


@dataclass(frozen=True)
class SigmaRule:
    rule_id: str
    title: str
    description: str
    references: tuple[str, ...]
    date: str
    logsource_category: str
    selections: tuple[SigmaSelection, ...]
    condition: str
    level: str
    tags: tuple[str, ...] = ("cti-match",)
    status: str = "experimental"


@dataclass(frozen=True)
class CompileDiagnostic:
    stix_id: str
    message: str


@dataclass
class RuleSet:
    rules: list[SigmaRule] = field(default_factory=list)
    diagnostics: list[CompileDiagnostic] = field(default_factory=list)


def validate_rule(rule: SigmaRule) -> None:
    if not rule.selections:
        raise SigmaCompileError(f"rule {rule.rule_id}: no selections")
    names = {selection.name for selection in rule.selections}
    referenced = set(re.findall(r"[A-Za-z_][A-Za-z0-9_]*", rule.condition)) - {"and", "or", "not"}
    undefined = referenced - names
    if undefined:
        raise SigmaCompileError(f"rule {rule.rule_id}: condition references undefined selections {sorted(undefined)}")
    for selection in rule.selections:
        if not selection.values or any(not value for value in selection.values):
            raise SigmaCompileError(f"rule {rule.rule_id}: selection {selection.name} has an empty value")


def to_dnf(expr: Expr) -> list[tuple[Leaf, ...]]:
    """Rewrite to a disjunction of leaf conjunctions."""
    if isinstance(expr, Leaf):
        return [(expr,)]
    if isinstance(expr, Or):
        disjuncts: list[tuple[Leaf, ...]] = []
        for child in expr.children:
            disjuncts.extend(to_dnf(child))
        return disjuncts
    if isinstance(expr, And):
        product: list[tuple[Leaf, ...]] = [()]
        for child in expr.children:
            product = [combo + conj for combo in product for conj in to_dnf(child)]
        return product
    raise SigmaCompileError(f"unknown expression node {type(expr).__name__}")


class _SelectionAllocator:
    """Deterministic selection naming: sel_<base>, then sel_<base>_2, ..."""

    def __init__(self):
        self.counts: dict[str, int] = {}
        self.selections: list[SigmaSelection] = []

    def allocate(self, leaf: Leaf) -> str:
        specs = _SELECTION_FIELDS[leaf.observable.kind]
        self.counts[leaf.observable.kind.value] = self.counts.get(leaf.observable.kind.value, 0) + 1
        ordinal = self.counts[leaf.observable.kind.value]
        suffix = "" if ordinal == 1 else f"_{ordinal}"
        names = []
        for base, field_name in specs:
            name = f"sel_{base}{suffix}"
            self.selections.append(SigmaSelection(name=name, field=field_name, values=(leaf.observable.value,)))
            names.append(name)
        return " or ".join(names)


def compile_indicator(indicator: IndicatorRecord) -> tuple[list[SigmaRule], list[CompileDiagnostic]]:
    """Compile one indicator's expression into per-category SIGMA rules."""
    conjuncts = to_dnf(indicator.expr)
    if not conjuncts:
        raise SigmaCompileError(f"{indicator.stix_id}: empty expression")

    diagnostics: list[CompileDiagnostic] = []
    categories: list[str] = []
    by_category: dict[str, list[tuple[Leaf, ...]]] = {}
    for position, conjunct in enumerate(conjuncts):
        conjunct_categories: list[str] = []
        for current in conjunct:
            category = CATEGORY_BY_KIND[current.observable.kind]
            if category not in conjunct_categories:
                conjunct_categories.append(category)
        if len(conjunct_categories) > 1:
            diagnostics.append(CompileDiagnostic(
                indicator.stix_id,
                f"conjunct {position} spans log sources {', '.join(conjunct_categories)}; "
                "split per category, so the AND across categories is over-approximated",
            ))
        for category in conjunct_categories:
            projected = tuple(c for c in conjunct if CATEGORY_BY_KIND[c.observable.kind] == category)
            if category not in by_category:
                by_category[category] = []
                categories.append(category)
            by_category[category].append(projected)

    level = LEVEL_BY_TRUST_TIER.get(indicator.trust_tier, "low")
    short_id = indicator.stix_id.split("--", 1)[1][:8]
    rules: list[SigmaRule] = []
    for ordinal, category in enumerate(categories):
        allocator = _SelectionAllocator()
        conjunct_terms: list[str] = []
        category_conjuncts = by_category[category]
        for conjunct in category_conjuncts:
            leaf_terms: list[str] = []
            for current in conjunct:
                term = allocator.allocate(current)
                if " or " in term and (len(conjunct) > 1 or len(category_conjuncts) > 1):
                    term = f"({term})"
                leaf_terms.append(term)
            conj_term = " and ".join(leaf_terms)
            if len(leaf_terms) > 1 and len(category_conjuncts) > 1:
                conj_term = f"({conj_term})"
            conjunct_terms.append(conj_term)
        rule = SigmaRule(
            rule_id=str(uuid.uuid5(RULE_NAMESPACE, f"{indicator.stix_id}:{ordinal}")),
            title=f"CTI {category} match {short_id}",
            description=(
                f"Observable match compiled from {indicator.stix_id} "
                f"(source {indicator.source_id}, trust tier {indicator.trust_tier})."
            ),
            references=(indicator.stix_id,),
            date=indicator.modified.strftime("%Y-%m-%d"),
            logsource_category=category,
            selections=tuple(allocator.selections),
            condition=" or ".join(conjunct_terms),
            level=level,
        )
        validate_rule(rule)
        rules.append(rule)
    return rules, diagnostics


def compile_ruleset(bundle: TailoredBundle) -> RuleSet:
    """Compile every retained indicator; rules come out sorted by rule_id."""
    ruleset = RuleSet()
    for record in bundle.retained:
        rules, diagnostics = compile_indicator(record)
        ruleset.rules.extend(rules)
        ruleset.diagnostics.extend(diagnostics)
    ruleset.rules.sort(key=lambda rule: rule.rule_id)
    return ruleset


# --- canonical YAML -----------------------------------------------------------

_SPECIAL_CHARS = set(":#,[]{}&*!|>'\"%@`\\\t")
_LEADING_SPECIAL = set("-?:,[]{}#&*!|>'\"%@` ")
_BOOL_NULL_RE = re.compile(r"(?i)(?:true|false|yes|no|on|off|null|none|~)\Z")
_NUMBER_RE = re.compile(
    r"[-+]?(?:"
    r"\d[\d_]*(?:\.[\d_]*)?(?:[eE][-+]?\d+)?"
    r"|\.[\d_]+(?:[eE][-+]?\d+)?"
    r"|0x[0-9a-fA-F_]+|0o[0-7_]+|0b[01_]+"
    r"|\.inf|\.nan"
    r")\Z",
    re.IGNORECASE,
)
_DATE_RE = re.compile(r"\d{4}-\d{1,2}-\d{1,2}")


def _needs_quote(value: str) -> bool:
    if value == "" or value != value.strip():
        return True
    if any(ch in _SPECIAL_CHARS for ch in value):
        return True
    if value[0] in _LEADING_SPECIAL:
        return True
    if _BOOL_NULL_RE.match(value) or _NUMBER_RE.match(value) or _DATE_RE.match(value):
        return True
    return False


def _scalar(value: str) -> str:
    if "\n" in value:
        raise SigmaCompileError("newlines are not representable in rule scalars")
    if _needs_quote(value):
        return "'" + value.replace("'", "''") + "'"
    return value


def render_yaml(rule: SigmaRule) -> bytes:
    """Render canonical YAML: fixed key order, 2-space indent, minimal quoting."""
    validate_rule(rule)
    lines = [
        f"title: {_scalar(rule.title)}",
        f"id: {_scalar(rule.rule_id)}",
        f"status: {_scalar(rule.status)}",
        f"description: {_scalar(rule.description)}",
        "references:",
    ]
    lines.extend(f"  - {_scalar(ref)}" for ref in rule.references)
    lines.append(f"date: {_scalar(rule.date)}")
    lines.append("logsource:")
    lines.append(f"  category: {_scalar(rule.logsource_category)}")
    lines.append("detection:")
    for selection in rule.selections:
        lines.append(f"  {selection.name}:")
        lines.append(f"    {selection.field}:")
        lines.extend(f"      - {_scalar(value)}" for value in selection.values)
    lines.append(f"  condition: {_scalar(rule.condition)}")
    lines.append(f"level: {_scalar(rule.level)}")
    lines.append("tags:")
    lines.extend(f"  - {_scalar(tag)}" for tag in rule.tags)
    return ("\n".join(lines) + "\n").encode("utf-8")


def ruleset_manifest(ruleset: RuleSet) -> dict[str, str]:
    return {rule.rule_id: rule.references[0] for rule in ruleset.rules}


def write_ruleset(ruleset: RuleSet, directory) -> int:
    """Write `generated/<rule_id>.yml` per rule plus `manifest.json` under `directory`."""
    from pathlib import Path

    from .util import canonical_json_bytes

    target = Path(directory)
    (target / "generated").mkdir(parents=True, exist_ok=True)
    for rule in ruleset.rules:
        (target / "generated" / f"{rule.rule_id}.yml").write_bytes(render_yaml(rule))
    (target / "manifest.json").write_bytes(canonical_json_bytes(ruleset_manifest(ruleset)))
    return len(ruleset.rules)
