"""OSSEC-style log decoders: anchored patterns that extract named fields.

A decoder tree classifies raw lines.  Root decoders are tried in
(order_hint, name) order; the first whose program_pattern and prematch both
match wins, then its children are tried the same way on the remainder after
the prematch, recursively — the deepest match wins.  Captured fields
accumulate down the chain, children overriding parents on collision.  Capture
names come from a fixed vocabulary so rule fields stay a closed namespace.
A chain that captures nothing falls through to the next candidate, keeping
"fields empty iff unmatched" true by construction.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

CAPTURE_VOCABULARY = frozenset({"srcip", "dstip", "user", "url", "hash", "status", "port", "query"})

UNMATCHED = "unmatched"


class DecoderError(ValueError):
    """Invalid decoder definition or decoder set."""


@dataclass(frozen=True)
class LogEvent:
    received_at: datetime
    source_host: str
    message: str
    program: Optional[str] = None

    def __post_init__(self):
        if not self.message:
            raise ValueError("log event message must be non-empty")


@dataclass(frozen=True)
class DecodedEvent:
    base: LogEvent
    decoder: str
    fields: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Decoder:
    name: str
    parent: Optional[str] = None
    program_pattern: Optional[str] = None
    prematch: Optional[str] = None
    extract: Optional[str] = None
    order_hint: int = 50


class _CompiledDecoder:
    __slots__ = ("spec", "program_re", "prematch_re", "extract_re", "children")

    def __init__(self, spec: Decoder):
        self.spec = spec
        try:
            self.program_re = re.compile(spec.program_pattern) if spec.program_pattern else None
            self.prematch_re = re.compile(spec.prematch) if spec.prematch else None
            self.extract_re = re.compile(spec.extract) if spec.extract else None
        except re.error as exc:
            raise DecoderError(f"decoder {spec.name}: bad pattern: {exc}") from exc
        self.children: list["_CompiledDecoder"] = []


class DecoderSet:
    """A validated, compiled decoder tree."""

    def __init__(self, decoders: list[Decoder]):
        by_name: dict[str, _CompiledDecoder] = {}
        for spec in decoders:
            if not spec.name or spec.name == UNMATCHED:
                raise DecoderError(f"invalid decoder name {spec.name!r}")
            if spec.name in by_name:
                raise DecoderError(f"duplicate decoder name {spec.name!r}")
            compiled = _CompiledDecoder(spec)
            if compiled.extract_re:
                captures = set(compiled.extract_re.groupindex)
                if not captures:
                    raise DecoderError(f"decoder {spec.name}: extract pattern has no named captures")
                unknown = captures - CAPTURE_VOCABULARY
                if unknown:
                    raise DecoderError(
                        f"decoder {spec.name}: captures outside vocabulary: {', '.join(sorted(unknown))}"
                    )
            by_name[spec.name] = compiled

        for compiled in by_name.values():
            parent = compiled.spec.parent
            if parent is not None:
                if parent not in by_name:
                    raise DecoderError(f"decoder {compiled.spec.name}: unknown parent {parent!r}")
                by_name[parent].children.append(compiled)

        # Parent chains must be acyclic.
        for compiled in by_name.values():
            seen = {compiled.spec.name}
            cursor = compiled.spec.parent
            while cursor is not None:
                if cursor in seen:
                    raise DecoderError(f"decoder parent cycle through {cursor!r}")
                seen.add(cursor)
                cursor = by_name[cursor].spec.parent

        for compiled in by_name.values():
            if compiled.extract_re is None and not compiled.children:
                raise DecoderError(
                    f"decoder {compiled.spec.name}: needs an extract pattern or at least one child"
                )
            compiled.children.sort(key=lambda c: (c.spec.order_hint, c.spec.name))

        self._by_name = by_name
        self.roots = sorted(
            (c for c in by_name.values() if c.spec.parent is None),
            key=lambda c: (c.spec.order_hint, c.spec.name),
        )

    def __len__(self) -> int:
        return len(self._by_name)

    def names(self) -> list[str]:
        return sorted(self._by_name)


def _try_decoder(compiled: _CompiledDecoder, program: Optional[str], text: str):
    spec = compiled.spec
    if compiled.program_re is not None:
        if program is None or not compiled.program_re.fullmatch(program):
            return None
    remainder = text
    if compiled.prematch_re is not None:
        matched = compiled.prematch_re.match(text)
        if not matched:
            return None
        remainder = text[matched.end():]
    fields: dict[str, str] = {}
    if compiled.extract_re is not None:
        extracted = compiled.extract_re.match(remainder)
        if not extracted:
            return None
        fields = {name: value for name, value in extracted.groupdict().items() if value is not None}
    for child in compiled.children:
        result = _try_decoder(child, program, remainder)
        if result is not None:
            child_name, child_fields = result
            return child_name, {**fields, **child_fields}
    if fields:
        return spec.name, fields
    return None


def decode(event: LogEvent, decoders: DecoderSet) -> DecodedEvent:
    """Decode one event; pure function of (event, decoder set)."""
    for root in decoders.roots:
        result = _try_decoder(root, event.program, event.message)
        if result is not None:
            name, fields = result
            return DecodedEvent(base=event, decoder=name, fields=fields)
    return DecodedEvent(base=event, decoder=UNMATCHED, fields={})


def load_decoders_toml(document: bytes) -> list[Decoder]:
    """Load `[[decoder]]` tables from a TOML document."""
    try:
        payload = tomllib.loads(document.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise DecoderError(f"decoder file is not valid TOML: {exc}") from exc
    decoders = []
    for index, raw in enumerate(payload.get("decoder", [])):
        if not isinstance(raw, dict):
            raise DecoderError(f"decoder[{index}]: expected a table")
        known = {"name", "parent", "program_pattern", "prematch", "extract", "order_hint"}
        unknown = set(raw) - known
        if unknown:
            raise DecoderError(f"decoder[{index}]: unknown keys {sorted(unknown)}")
        if "name" not in raw:
            raise DecoderError(f"decoder[{index}]: missing name")
        decoders.append(Decoder(
            name=raw["name"],
            parent=raw.get("parent"),
            program_pattern=raw.get("program_pattern"),
            prematch=raw.get("prematch"),
            extract=raw.get("extract"),
            order_hint=int(raw.get("order_hint", 50)),
        ))
    return decoders
