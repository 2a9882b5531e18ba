"""Tailor indicators to the supervised infrastructure.

An indicator is kept when its observable expression evaluates true against
the asset feature index (IPs, hostnames with parent-domain matching, URL host
components), or when it carries host-agnostic observables (hashes, URLs) and
the policy keeps those.  The retained set is emitted as a canonical STIX 2.x
bundle.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Optional
from urllib.parse import urlsplit

from .asset_inventory import FeatureIndex
from .cti_ingest import IndicatorRecord
from .stix_patterns import (
    HOST_AGNOSTIC_KINDS,
    Expr,
    Leaf,
    ObservableKind,
    canonicalize_domain,
    evaluate_expr,
    iter_leaves,
)
from .util import canonical_json_bytes, format_rfc3339

_BUNDLE_NAMESPACE = uuid.uuid5(uuid.NAMESPACE_DNS, "ctimp-tailored-bundle")


class VerdictReason(str, Enum):
    FEATURE_MATCH = "feature_match"
    HOST_AGNOSTIC_KEEP = "host_agnostic_keep"
    BELOW_TRUST = "below_trust"
    EXPIRED = "expired"
    NO_MATCH = "no_match"
    REVOKED = "revoked"


RETAINED_REASONS = frozenset({VerdictReason.FEATURE_MATCH, VerdictReason.HOST_AGNOSTIC_KEEP})


@dataclass(frozen=True)
class RelevancePolicy:
    min_trust_tier: int = 2
    keep_host_agnostic: bool = True

    def __post_init__(self):
        if not 1 <= self.min_trust_tier <= 5:
            raise ValueError(f"min_trust_tier must be 1..5, got {self.min_trust_tier}")


@dataclass(frozen=True)
class MatchedFeature:
    observable_kind: ObservableKind
    observable_value: str
    feature_kind: str  # "ip" | "hostname"
    node_id: str


@dataclass(frozen=True)
class RelevanceVerdict:
    stix_id: str
    retained: bool
    reason: VerdictReason
    matched_features: tuple[MatchedFeature, ...] = ()


def domain_matches_hostname(indicator_domain: str, asset_hostname: str) -> bool:
    """Exact or parent-domain match: 'example.com' covers 'mail.example.com'."""
    return asset_hostname == indicator_domain or asset_hostname.endswith("." + indicator_domain)


def url_host(value: str) -> Optional[str]:
    host = urlsplit(value).hostname
    if not host:
        return None
    return canonicalize_domain(host)


def _leaf_features(leaf: Leaf, index: FeatureIndex) -> list[MatchedFeature]:
    observable = leaf.observable
    if observable.kind is ObservableKind.IPV4:
        if observable.value in index.ip_set:
            return [MatchedFeature(observable.kind, observable.value, "ip", index.node_by_ip[observable.value])]
        return []
    if observable.kind in (ObservableKind.DOMAIN, ObservableKind.URL):
        domain = observable.value if observable.kind is ObservableKind.DOMAIN else url_host(observable.value)
        if not domain:
            return []
        return [
            MatchedFeature(observable.kind, observable.value, "hostname", index.node_by_hostname[hostname])
            for hostname in sorted(index.hostname_set)
            if domain_matches_hostname(domain, hostname)
        ]
    # Hashes never match topology features.
    return []


def match_indicator(
    indicator: IndicatorRecord,
    index: FeatureIndex,
    policy: RelevancePolicy,
    now: datetime,
) -> RelevanceVerdict:
    """Decide retention for one indicator against one feature-index snapshot."""
    if indicator.revoked:
        return RelevanceVerdict(indicator.stix_id, False, VerdictReason.REVOKED)
    if indicator.valid_until is not None and indicator.valid_until < now:
        return RelevanceVerdict(indicator.stix_id, False, VerdictReason.EXPIRED)
    if indicator.trust_tier < policy.min_trust_tier:
        return RelevanceVerdict(indicator.stix_id, False, VerdictReason.BELOW_TRUST)

    # Identical leaves share one verdict: match results are a pure function
    # of (observable, index), so keying by the leaf itself is safe.
    truth_by_leaf: dict[Leaf, bool] = {}
    matched: list[MatchedFeature] = []
    seen: set[MatchedFeature] = set()
    for current in iter_leaves(indicator.expr):
        features = _leaf_features(current, index)
        truth_by_leaf[current] = bool(features)
        for feature in features:
            if feature not in seen:
                seen.add(feature)
                matched.append(feature)

    if evaluate_expr(indicator.expr, truth_by_leaf.__getitem__):
        return RelevanceVerdict(indicator.stix_id, True, VerdictReason.FEATURE_MATCH, tuple(matched))
    if policy.keep_host_agnostic and any(
        current.observable.kind in HOST_AGNOSTIC_KINDS for current in iter_leaves(indicator.expr)
    ):
        return RelevanceVerdict(indicator.stix_id, True, VerdictReason.HOST_AGNOSTIC_KEEP, tuple(matched))
    return RelevanceVerdict(indicator.stix_id, False, VerdictReason.NO_MATCH, tuple(matched))


def indicator_stix_object(record: IndicatorRecord) -> dict:
    """Rebuild the STIX indicator object; content is untouched beyond the envelope."""
    obj = {
        "type": "indicator",
        "spec_version": "2.1",
        "id": record.stix_id,
        "created": format_rfc3339(record.created),
        "modified": format_rfc3339(record.modified),
        "pattern": record.pattern_text,
        "pattern_type": "stix",
        "valid_from": format_rfc3339(record.valid_from),
    }
    if record.valid_until is not None:
        obj["valid_until"] = format_rfc3339(record.valid_until)
    if record.labels:
        obj["labels"] = list(record.labels)
    return obj


@dataclass
class TailoredBundle:
    document: bytes
    verdicts: list[RelevanceVerdict]
    retained: list[IndicatorRecord] = field(default_factory=list)

    @property
    def retained_ids(self) -> list[str]:
        return [record.stix_id for record in self.retained]


def tailor_bundle(
    indicators: list[IndicatorRecord],
    index: FeatureIndex,
    policy: RelevancePolicy,
    now: datetime,
) -> TailoredBundle:
    """Filter indicators and emit the tailored STIX bundle plus all verdicts."""
    verdicts = [match_indicator(record, index, policy, now) for record in indicators]
    retained = sorted(
        (record for record, verdict in zip(indicators, verdicts) if verdict.retained),
        key=lambda record: record.stix_id,
    )
    bundle_id = "bundle--" + str(uuid.uuid5(_BUNDLE_NAMESPACE, ",".join(r.stix_id for r in retained)))
    document = canonical_json_bytes({
        "type": "bundle",
        "id": bundle_id,
        "objects": [indicator_stix_object(record) for record in retained],
    })
    return TailoredBundle(document=document, verdicts=verdicts, retained=retained)


def tailored_filename(map_revision: int, now: datetime) -> str:
    stamp = now.strftime("%Y%m%dT%H%M%SZ")
    return f"tailored-{map_revision}-{stamp}.json"
