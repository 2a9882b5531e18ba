"""Platform configuration: one TOML document, path from --config or CTIMP_CONFIG.

Relative paths in the document resolve against the config file's directory,
so a config travels with its fixtures.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from ..cti_ingest import FeedConfigError, FeedKind, FeedSource
from ..relevance import RelevancePolicy

CONFIG_ENV_VAR = "CTIMP_CONFIG"

ROLES = ("admin", "analyst")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TokenEntry:
    token: str
    role: str

    def __post_init__(self):
        if not self.token:
            raise ConfigError("api token must be non-empty")
        if self.role not in ROLES:
            raise ConfigError(f"api token role must be one of {ROLES}, got {self.role!r}")


@dataclass(frozen=True)
class ApiConfig:
    host: str = "127.0.0.1"
    port: int = 8787
    tokens: tuple[TokenEntry, ...] = ()

    def role_for(self, token: str) -> Optional[str]:
        for entry in self.tokens:
            if entry.token == token:
                return entry.role
        return None


@dataclass(frozen=True)
class DetectConfig:
    intake: str = "none"  # none | replay | socket
    replay_path: Optional[Path] = None
    suppression_window: float = 300.0
    decoders_path: Optional[Path] = None
    native_rules_path: Optional[Path] = None

    def __post_init__(self):
        if self.intake not in ("none", "replay", "socket"):
            raise ConfigError(f"detect.intake must be none, replay or socket, got {self.intake!r}")
        if self.suppression_window <= 0:
            raise ConfigError("detect.suppression_window must be positive")


@dataclass(frozen=True)
class SelfHealConfig:
    executor: str = "fake"  # fake | ssh
    timeout: float = 30.0
    policies_path: Optional[Path] = None
    threats_path: Optional[Path] = None
    node_addresses: tuple[tuple[str, str], ...] = ()
    ssh_user: Optional[str] = None

    def __post_init__(self):
        if self.executor not in ("fake", "ssh"):
            raise ConfigError(f"selfheal.executor must be fake or ssh, got {self.executor!r}")
        if self.timeout <= 0:
            raise ConfigError("selfheal.timeout must be positive")


@dataclass(frozen=True)
class PlatformConfig:
    base_dir: Path
    data_dir: Path
    asset_map_path: Path
    rules_dir: Path
    feeds: tuple[FeedSource, ...] = ()
    relevance: RelevancePolicy = field(default_factory=RelevancePolicy)
    detect: DetectConfig = field(default_factory=DetectConfig)
    selfheal: SelfHealConfig = field(default_factory=SelfHealConfig)
    api: ApiConfig = field(default_factory=ApiConfig)


def resolve_config_path(explicit: Optional[str]) -> Path:
    """--config wins; CTIMP_CONFIG is the fallback."""
    if explicit:
        return Path(explicit)
    from_env = os.environ.get(CONFIG_ENV_VAR)
    if from_env:
        return Path(from_env)
    raise ConfigError(f"no config file: pass --config or set {CONFIG_ENV_VAR}")


def _resolve(base: Path, raw: Optional[str]) -> Optional[Path]:
    if raw is None or raw == "":
        return None
    path = Path(raw)
    return path if path.is_absolute() else base / path


def _parse_bind(raw: str) -> tuple[str, int]:
    host, sep, port = raw.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigError(f"api.bind must look like host:port, got {raw!r}")
    return host, int(port)


def _parse_feed(index: int, raw: dict, base: Path) -> FeedSource:
    if "source_id" not in raw or "location" not in raw or "kind" not in raw:
        raise ConfigError(f"feed[{index}]: source_id, location and kind are required")
    try:
        kind = FeedKind(raw["kind"])
    except ValueError:
        raise ConfigError(f"feed[{index}]: unknown kind {raw['kind']!r}") from None
    location = str(raw["location"])
    if "://" not in location:
        location = str(_resolve(base, location))
    try:
        return FeedSource(
            source_id=str(raw["source_id"]),
            location=location,
            kind=kind,
            trust_tier=int(raw.get("trust_tier", 3)),
            poll_interval=int(raw.get("poll_interval", 300)),
            enabled=bool(raw.get("enabled", True)),
        )
    except FeedConfigError as exc:
        raise ConfigError(f"feed[{index}]: {exc}") from exc


def load_config(path: Path) -> PlatformConfig:
    path = Path(path)
    try:
        payload = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file is not valid TOML: {exc}") from exc
    base = path.resolve().parent

    for key in ("data_dir", "asset_map_path", "rules_dir"):
        if key not in payload:
            raise ConfigError(f"config is missing {key}")

    feeds = tuple(
        _parse_feed(i, raw, base) for i, raw in enumerate(payload.get("feed", []))
    )
    source_ids = [f.source_id for f in feeds]
    if len(set(source_ids)) != len(source_ids):
        raise ConfigError("feed source_ids must be unique")

    relevance_raw = payload.get("relevance", {})
    relevance = RelevancePolicy(
        min_trust_tier=int(relevance_raw.get("min_trust_tier", 2)),
        keep_host_agnostic=bool(relevance_raw.get("keep_host_agnostic", True)),
    )

    detect_raw = payload.get("detect", {})
    detect = DetectConfig(
        intake=detect_raw.get("intake", "none"),
        replay_path=_resolve(base, detect_raw.get("replay_path")),
        suppression_window=float(detect_raw.get("suppression_window", 300)),
        decoders_path=_resolve(base, detect_raw.get("decoders_path")),
        native_rules_path=_resolve(base, detect_raw.get("native_rules_path")),
    )

    heal_raw = payload.get("selfheal", {})
    addresses = heal_raw.get("node_addresses", {})
    if not isinstance(addresses, dict):
        raise ConfigError("selfheal.node_addresses must be a table of node_id = address")
    selfheal = SelfHealConfig(
        executor=heal_raw.get("executor", "fake"),
        timeout=float(heal_raw.get("timeout", 30)),
        policies_path=_resolve(base, heal_raw.get("policies_path")),
        threats_path=_resolve(base, heal_raw.get("threats_path")),
        node_addresses=tuple(sorted((str(k), str(v)) for k, v in addresses.items())),
        ssh_user=heal_raw.get("ssh_user"),
    )

    api_raw = payload.get("api", {})
    host, port = _parse_bind(api_raw.get("bind", "127.0.0.1:8787"))
    tokens = []
    for raw in api_raw.get("tokens", []):
        if not isinstance(raw, dict) or "token" not in raw or "role" not in raw:
            raise ConfigError("api.tokens entries need token and role")
        tokens.append(TokenEntry(token=str(raw["token"]), role=str(raw["role"])))
    if "auth_token" in api_raw:  # shorthand: one admin token
        tokens.append(TokenEntry(token=str(api_raw["auth_token"]), role="admin"))
    api = ApiConfig(host=host, port=port, tokens=tuple(tokens))

    asset_map_path = _resolve(base, str(payload["asset_map_path"]))
    if not asset_map_path.exists():
        raise ConfigError(f"asset_map_path does not exist: {asset_map_path}")

    return PlatformConfig(
        base_dir=base,
        data_dir=_resolve(base, str(payload["data_dir"])),
        asset_map_path=asset_map_path,
        rules_dir=_resolve(base, str(payload["rules_dir"])),
        feeds=feeds,
        relevance=relevance,
        detect=detect,
        selfheal=selfheal,
        api=api,
    )
