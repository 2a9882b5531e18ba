"""Deployment model of the supervised infrastructure and its feature index.

The map is exchanged as canonical JSON (schema id "ctimp-assetmap/1",
documented in docs/asset-map-schema.md).  Loading validates and rejects;
nothing is repaired.  Saving is deterministic: sorted keys, nodes ordered by
node_id, edges by (source, target, relation).
"""

from __future__ import annotations

import ipaddress
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Union

from .stix_patterns import canonicalize_domain
from .util import canonical_json_bytes

SCHEMA_ID = "ctimp-assetmap/1"


class AssetMapError(ValueError):
    """Base class for map validation failures."""


class SchemaError(AssetMapError):
    """A field violates the map schema; names the offending JSON path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class ReferentialIntegrityError(AssetMapError):
    """Edges or dependencies reference node ids that do not exist."""

    def __init__(self, missing_ids: list[str], context: str):
        super().__init__(f"{context} references missing node ids: {', '.join(sorted(set(missing_ids)))}")
        self.missing_ids = sorted(set(missing_ids))


class RiskLevel(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"


class DependencyKind(str, Enum):
    STRUCTURAL = "structural"
    PROCEDURAL = "procedural"
    DATA = "data"


class EdgeRelation(str, Enum):
    LINK = "link"
    DEPENDS_ON = "depends_on"


@dataclass(frozen=True)
class Service:
    name: str
    version: Optional[str] = None
    ports: tuple[int, ...] = ()


@dataclass(frozen=True)
class Dependency:
    target: str
    kind: DependencyKind


@dataclass(frozen=True)
class Geolocation:
    country_code: str
    site_label: str


@dataclass(frozen=True)
class AssetNode:
    node_id: str
    label: str
    risk_level: RiskLevel
    group: Optional[str] = None
    tags: tuple[str, ...] = ()
    function: str = ""
    services: tuple[Service, ...] = ()
    addresses: tuple[str, ...] = ()
    hostnames: tuple[str, ...] = ()
    geolocation: Optional[Geolocation] = None
    dependencies: tuple[Dependency, ...] = ()


@dataclass(frozen=True)
class AssetEdge:
    source: str
    target: str
    relation: EdgeRelation


@dataclass(frozen=True)
class AssetMap:
    map_id: str
    revision: int
    nodes: tuple[AssetNode, ...] = ()
    edges: tuple[AssetEdge, ...] = ()

    def node(self, node_id: str) -> Optional[AssetNode]:
        for node in self.nodes:
            if node.node_id == node_id:
                return node
        return None


# --- validation --------------------------------------------------------------

def _require(doc: dict, key: str, expected, path: str):
    if key not in doc:
        raise SchemaError(f"{path}.{key}" if path else key, "required field is missing")
    value = doc[key]
    if not isinstance(value, expected):
        raise SchemaError(f"{path}.{key}" if path else key, f"expected {expected.__name__}, got {type(value).__name__}")
    return value


def _string_list(raw, path: str) -> tuple[str, ...]:
    if not isinstance(raw, list):
        raise SchemaError(path, f"expected list, got {type(raw).__name__}")
    out = []
    for i, item in enumerate(raw):
        if not isinstance(item, str) or not item:
            raise SchemaError(f"{path}[{i}]", "expected a non-empty string")
        out.append(item)
    return tuple(out)


def _parse_node(doc: dict, path: str) -> AssetNode:
    if not isinstance(doc, dict):
        raise SchemaError(path, f"expected object, got {type(doc).__name__}")
    node_id = _require(doc, "node_id", str, path)
    if not node_id:
        raise SchemaError(f"{path}.node_id", "must be non-empty")
    label = _require(doc, "label", str, path)
    risk_raw = _require(doc, "risk_level", str, path)
    try:
        risk = RiskLevel(risk_raw)
    except ValueError:
        raise SchemaError(f"{path}.risk_level", f"not one of low/medium/high/critical: {risk_raw!r}") from None

    group = doc.get("group")
    if group is not None and not isinstance(group, str):
        raise SchemaError(f"{path}.group", "expected a string")
    function = doc.get("function", "")
    if not isinstance(function, str):
        raise SchemaError(f"{path}.function", "expected a string")

    addresses = _string_list(doc.get("addresses", []), f"{path}.addresses")
    for i, addr in enumerate(addresses):
        try:
            ipaddress.IPv4Address(addr)
        except ipaddress.AddressValueError:
            raise SchemaError(f"{path}.addresses[{i}]", f"not a valid IPv4 address: {addr!r}") from None
    hostnames = _string_list(doc.get("hostnames", []), f"{path}.hostnames")

    services = []
    raw_services = doc.get("services", [])
    if not isinstance(raw_services, list):
        raise SchemaError(f"{path}.services", "expected a list")
    for i, raw in enumerate(raw_services):
        spath = f"{path}.services[{i}]"
        if not isinstance(raw, dict):
            raise SchemaError(spath, "expected an object")
        name = _require(raw, "name", str, spath)
        version = raw.get("version")
        if version is not None and not isinstance(version, str):
            raise SchemaError(f"{spath}.version", "expected a string")
        ports = raw.get("ports", [])
        if not isinstance(ports, list):
            raise SchemaError(f"{spath}.ports", "expected a list")
        for j, port in enumerate(ports):
            if not isinstance(port, int) or isinstance(port, bool) or not 1 <= port <= 65535:
                raise SchemaError(f"{spath}.ports[{j}]", f"port must be an integer in 1..65535, got {port!r}")
        services.append(Service(name=name, version=version, ports=tuple(ports)))

    geolocation = None
    raw_geo = doc.get("geolocation")
    if raw_geo is not None:
        gpath = f"{path}.geolocation"
        if not isinstance(raw_geo, dict):
            raise SchemaError(gpath, "expected an object")
        geolocation = Geolocation(
            country_code=_require(raw_geo, "country_code", str, gpath),
            site_label=_require(raw_geo, "site_label", str, gpath),
        )

    dependencies = []
    raw_deps = doc.get("dependencies", [])
    if not isinstance(raw_deps, list):
        raise SchemaError(f"{path}.dependencies", "expected a list")
    for i, raw in enumerate(raw_deps):
        dpath = f"{path}.dependencies[{i}]"
        if not isinstance(raw, dict):
            raise SchemaError(dpath, "expected an object")
        target = _require(raw, "target", str, dpath)
        kind_raw = _require(raw, "kind", str, dpath)
        try:
            kind = DependencyKind(kind_raw)
        except ValueError:
            raise SchemaError(f"{dpath}.kind", f"not one of structural/procedural/data: {kind_raw!r}") from None
        dependencies.append(Dependency(target=target, kind=kind))

    return AssetNode(
        node_id=node_id,
        label=label,
        risk_level=risk,
        group=group,
        tags=_string_list(doc.get("tags", []), f"{path}.tags"),
        function=function,
        services=tuple(services),
        addresses=addresses,
        hostnames=hostnames,
        geolocation=geolocation,
        dependencies=tuple(dependencies),
    )


def _parse_edge(doc: dict, path: str) -> AssetEdge:
    if not isinstance(doc, dict):
        raise SchemaError(path, f"expected object, got {type(doc).__name__}")
    source = _require(doc, "source", str, path)
    target = _require(doc, "target", str, path)
    relation_raw = _require(doc, "relation", str, path)
    try:
        relation = EdgeRelation(relation_raw)
    except ValueError:
        raise SchemaError(f"{path}.relation", f"not one of link/depends_on: {relation_raw!r}") from None
    return AssetEdge(source=source, target=target, relation=relation)


def validate_map(asset_map: AssetMap) -> None:
    """Check node-id uniqueness, referential integrity, and edge constraints."""
    seen: set[str] = set()
    for node in asset_map.nodes:
        if node.node_id in seen:
            raise SchemaError("nodes", f"duplicate node_id {node.node_id!r}")
        seen.add(node.node_id)
    missing: list[str] = []
    for node in asset_map.nodes:
        for dep in node.dependencies:
            if dep.target not in seen:
                missing.append(dep.target)
    if missing:
        raise ReferentialIntegrityError(missing, "node dependencies")
    missing = []
    edge_keys: set[tuple[str, str, EdgeRelation]] = set()
    for edge in asset_map.edges:
        for endpoint in (edge.source, edge.target):
            if endpoint not in seen:
                missing.append(endpoint)
        if edge.relation is EdgeRelation.LINK and edge.source == edge.target:
            raise SchemaError("edges", f"self-loop link on node {edge.source!r}")
        key = (edge.source, edge.target, edge.relation)
        if key in edge_keys:
            raise SchemaError("edges", f"duplicate edge {edge.source!r} -> {edge.target!r} ({edge.relation.value})")
        edge_keys.add(key)
    if missing:
        raise ReferentialIntegrityError(missing, "edges")


def load_map(document) -> AssetMap:
    """Parse and fully validate a map document (bytes, str, or parsed object);
    rejects rather than repairs."""
    if isinstance(document, (bytes, str)):
        try:
            payload = json.loads(document)
        except (ValueError, UnicodeDecodeError) as exc:
            raise SchemaError("$", f"not valid JSON: {exc}") from exc
    else:
        payload = document
    if not isinstance(payload, dict):
        raise SchemaError("$", "top level must be an object")
    schema = payload.get("schema", SCHEMA_ID)
    if schema != SCHEMA_ID:
        raise SchemaError("schema", f"unsupported schema {schema!r}, expected {SCHEMA_ID!r}")
    map_id = _require(payload, "map_id", str, "")
    revision = _require(payload, "revision", int, "")
    if isinstance(revision, bool) or revision < 1:
        raise SchemaError("revision", f"must be a positive integer, got {revision!r}")
    raw_nodes = _require(payload, "nodes", list, "")
    raw_edges = _require(payload, "edges", list, "")
    nodes = tuple(_parse_node(raw, f"nodes[{i}]") for i, raw in enumerate(raw_nodes))
    edges = tuple(_parse_edge(raw, f"edges[{i}]") for i, raw in enumerate(raw_edges))
    asset_map = AssetMap(map_id=map_id, revision=revision, nodes=nodes, edges=edges)
    validate_map(asset_map)
    return asset_map


# --- canonical serialization --------------------------------------------------

def _node_doc(node: AssetNode) -> dict:
    doc: dict = {
        "node_id": node.node_id,
        "label": node.label,
        "risk_level": node.risk_level.value,
    }
    if node.group is not None:
        doc["group"] = node.group
    if node.tags:
        doc["tags"] = list(node.tags)
    if node.function:
        doc["function"] = node.function
    if node.services:
        doc["services"] = [
            {"name": s.name, **({"version": s.version} if s.version is not None else {}),
             **({"ports": list(s.ports)} if s.ports else {})}
            for s in node.services
        ]
    if node.addresses:
        doc["addresses"] = list(node.addresses)
    if node.hostnames:
        doc["hostnames"] = list(node.hostnames)
    if node.geolocation is not None:
        doc["geolocation"] = {
            "country_code": node.geolocation.country_code,
            "site_label": node.geolocation.site_label,
        }
    if node.dependencies:
        doc["dependencies"] = [{"target": d.target, "kind": d.kind.value} for d in node.dependencies]
    return doc


def save_map(asset_map: AssetMap) -> bytes:
    """Serialize to the canonical document; load_map(save_map(m)) == m."""
    validate_map(asset_map)
    document = {
        "schema": SCHEMA_ID,
        "map_id": asset_map.map_id,
        "revision": asset_map.revision,
        "nodes": [_node_doc(n) for n in sorted(asset_map.nodes, key=lambda n: n.node_id)],
        "edges": [
            {"source": e.source, "target": e.target, "relation": e.relation.value}
            for e in sorted(asset_map.edges, key=lambda e: (e.source, e.target, e.relation.value))
        ],
    }
    return canonical_json_bytes(document)


# --- feature index -------------------------------------------------------------

@dataclass
class FeatureIndex:
    """Asset features keyed for indicator comparison, bound to one map revision."""

    map_revision: int
    ip_set: set[str] = field(default_factory=set)
    hostname_set: set[str] = field(default_factory=set)
    service_set: set[tuple[str, Optional[str]]] = field(default_factory=set)
    tag_set: set[str] = field(default_factory=set)
    node_by_ip: dict[str, str] = field(default_factory=dict)
    node_by_hostname: dict[str, str] = field(default_factory=dict)


def build_feature_index(asset_map: AssetMap) -> FeatureIndex:
    """Derive the feature index; deterministic in the map revision.

    When two nodes share an address or hostname the node with the smaller
    node_id owns the index entry.
    """
    index = FeatureIndex(map_revision=asset_map.revision)
    for node in sorted(asset_map.nodes, key=lambda n: n.node_id):
        for address in node.addresses:
            index.ip_set.add(address)
            index.node_by_ip.setdefault(address, node.node_id)
        for hostname in node.hostnames:
            canonical = canonicalize_domain(hostname)
            index.hostname_set.add(canonical)
            index.node_by_hostname.setdefault(canonical, node.node_id)
        for service in node.services:
            index.service_set.add((service.name.lower(), service.version))
        index.tag_set.update(node.tags)
    return index


# --- edits ---------------------------------------------------------------------

@dataclass(frozen=True)
class UpsertNode:
    node: AssetNode


@dataclass(frozen=True)
class RemoveNode:
    node_id: str


@dataclass(frozen=True)
class UpsertEdge:
    edge: AssetEdge


@dataclass(frozen=True)
class RemoveEdge:
    source: str
    target: str
    relation: EdgeRelation


MapEdit = Union[UpsertNode, RemoveNode, UpsertEdge, RemoveEdge]


class EditRejected(AssetMapError):
    """The edit would violate map invariants; the map is unchanged."""


def apply_edit(asset_map: AssetMap, edit: MapEdit) -> AssetMap:
    """Apply one edit, returning a new map with revision + 1."""
    if isinstance(edit, UpsertNode):
        others = tuple(n for n in asset_map.nodes if n.node_id != edit.node.node_id)
        candidate = replace(asset_map, nodes=others + (edit.node,), revision=asset_map.revision + 1)
    elif isinstance(edit, RemoveNode):
        if asset_map.node(edit.node_id) is None:
            raise EditRejected(f"node {edit.node_id!r} does not exist")
        referenced_by = [e for e in asset_map.edges if edit.node_id in (e.source, e.target)]
        dependents = [
            n.node_id for n in asset_map.nodes
            if n.node_id != edit.node_id and any(d.target == edit.node_id for d in n.dependencies)
        ]
        if referenced_by or dependents:
            raise EditRejected(
                f"node {edit.node_id!r} is referenced by "
                f"{len(referenced_by)} edge(s) and {len(dependents)} dependent node(s)"
            )
        nodes = tuple(n for n in asset_map.nodes if n.node_id != edit.node_id)
        candidate = replace(asset_map, nodes=nodes, revision=asset_map.revision + 1)
    elif isinstance(edit, UpsertEdge):
        key = (edit.edge.source, edit.edge.target, edit.edge.relation)
        others = tuple(e for e in asset_map.edges if (e.source, e.target, e.relation) != key)
        candidate = replace(asset_map, edges=others + (edit.edge,), revision=asset_map.revision + 1)
    elif isinstance(edit, RemoveEdge):
        key = (edit.source, edit.target, edit.relation)
        kept = tuple(e for e in asset_map.edges if (e.source, e.target, e.relation) != key)
        if len(kept) == len(asset_map.edges):
            raise EditRejected(f"edge {edit.source!r} -> {edit.target!r} ({edit.relation.value}) does not exist")
        candidate = replace(asset_map, edges=kept, revision=asset_map.revision + 1)
    else:
        raise EditRejected(f"unknown edit type {type(edit).__name__}")
    try:
        validate_map(candidate)
    except AssetMapError as exc:
        raise EditRejected(str(exc)) from exc
    return candidate
