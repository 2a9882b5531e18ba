"""Ingest -> tailor -> compile -> atomic rule swap.

The rules directory is content-addressed: each compiled rule set lands in
rules_dir/versions/v-<hash>/ (generated/*.yml + manifest.json) and one
symlink, rules_dir/current, names the live version. rules_dir/generated and
rules_dir/manifest.json are fixed symlinks that resolve through current, so
flipping current with os.replace swaps both views in a single atomic step:
a reader (or a crashed-and-restarted process) sees the old set or the new
set, never a mix.

CTIMP_CRASH_POINT names a labeled point at which the process hard-exits;
the crash-consistency tests drive a child process through every point.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Optional

from ..sigma_compiler import RuleSet, render_yaml, ruleset_manifest

log = logging.getLogger(__name__)

CRASH_ENV_VAR = "CTIMP_CRASH_POINT"

CRASH_POINTS = (
    "swap:start",
    "swap:version-dir-created",
    "swap:rules-partially-written",
    "swap:rules-written",
    "swap:manifest-written",
    "swap:version-ready",
    "swap:symlink-staged",
    "swap:done",
)

KEEP_VERSIONS = 5


def crash_point(label: str) -> None:
    if os.environ.get(CRASH_ENV_VAR) == label:
        os._exit(137)


@dataclass
class CycleReport:
    started_at: datetime
    feeds_fetched: int = 0
    feed_errors: dict = field(default_factory=dict)
    indicators_added: int = 0
    indicators_updated: int = 0
    indicators_unchanged: int = 0
    retained: int = 0
    rules_written: int = 0
    rules_version: Optional[str] = None
    aborted: Optional[str] = None

    def to_doc(self) -> dict:
        from ..util import format_rfc3339

        return {
            "started_at": format_rfc3339(self.started_at),
            "feeds_fetched": self.feeds_fetched,
            "feed_errors": dict(self.feed_errors),
            "indicators_added": self.indicators_added,
            "indicators_updated": self.indicators_updated,
            "indicators_unchanged": self.indicators_unchanged,
            "retained": self.retained,
            "rules_written": self.rules_written,
            "rules_version": self.rules_version,
            "aborted": self.aborted,
        }


def ruleset_version_id(ruleset: RuleSet) -> str:
    digest = hashlib.sha256()
    for rule in ruleset.rules:
        digest.update(rule.rule_id.encode())
        digest.update(render_yaml(rule))
    return "v-" + digest.hexdigest()[:12]


def _ensure_fixed_links(rules_dir: Path) -> None:
    for name, inner in (("generated", "current/generated"), ("manifest.json", "current/manifest.json")):
        link = rules_dir / name
        if link.is_symlink():
            if os.readlink(link) == inner:
                continue
            link.unlink()
        elif link.exists():
            raise RuntimeError(f"{link} exists and is not a symlink; refusing to manage this rules_dir")
        os.symlink(inner, link)


def swap_rules(rules_dir: Path, ruleset: RuleSet) -> str:
    """Publish the compiled rule set atomically; returns the version id."""
    rules_dir = Path(rules_dir)
    versions = rules_dir / "versions"
    versions.mkdir(parents=True, exist_ok=True)
    _ensure_fixed_links(rules_dir)
    version_id = ruleset_version_id(ruleset)
    final = versions / version_id

    crash_point("swap:start")
    if not final.exists():
        staging = versions / f".tmp-{version_id}-{os.getpid()}"
        if staging.exists():
            shutil.rmtree(staging)
        (staging / "generated").mkdir(parents=True)
        crash_point("swap:version-dir-created")
        from ..util import canonical_json_bytes

        for index, rule in enumerate(ruleset.rules):
            (staging / "generated" / f"{rule.rule_id}.yml").write_bytes(render_yaml(rule))
            if index == 0:
                crash_point("swap:rules-partially-written")
        crash_point("swap:rules-written")
        (staging / "manifest.json").write_bytes(canonical_json_bytes(ruleset_manifest(ruleset)))
        crash_point("swap:manifest-written")
        try:
            os.rename(staging, final)
        except OSError:
            if final.exists():  # a concurrent writer landed the same content
                shutil.rmtree(staging, ignore_errors=True)
            else:
                raise
    crash_point("swap:version-ready")

    staged_link = rules_dir / f".current-staged-{os.getpid()}"
    if staged_link.is_symlink() or staged_link.exists():
        staged_link.unlink()
    os.symlink(os.path.join("versions", version_id), staged_link)
    crash_point("swap:symlink-staged")
    os.replace(staged_link, rules_dir / "current")
    crash_point("swap:done")

    _prune_versions(rules_dir, keep=KEEP_VERSIONS)
    return version_id


def _prune_versions(rules_dir: Path, keep: int) -> None:
    versions = rules_dir / "versions"
    current = active_version(rules_dir)
    entries = sorted(
        (p for p in versions.iterdir() if p.is_dir() and not p.name.startswith(".")),
        key=lambda p: p.stat().st_mtime,
        reverse=True,
    )
    for stale in entries[keep:]:
        if stale.name != current:
            shutil.rmtree(stale, ignore_errors=True)
    for leftover in versions.glob(".tmp-*"):
        if f"-{os.getpid()}" not in leftover.name:
            shutil.rmtree(leftover, ignore_errors=True)
    for stale_link in Path(rules_dir).glob(".current-staged-*"):
        stale_link.unlink(missing_ok=True)


def active_version(rules_dir: Path) -> Optional[str]:
    link = Path(rules_dir) / "current"
    if not link.is_symlink():
        return None
    return os.path.basename(os.readlink(link))


def read_active_ruleset(rules_dir: Path) -> tuple[Optional[str], list[bytes], dict]:
    """Returns (version_id, sigma documents, manifest) for the live rule set."""
    rules_dir = Path(rules_dir)
    version = active_version(rules_dir)
    if version is None:
        return None, [], {}
    generated = rules_dir / "generated"
    documents = [p.read_bytes() for p in sorted(generated.glob("*.yml"))]
    manifest = json.loads((rules_dir / "manifest.json").read_text(encoding="utf-8"))
    return version, documents, manifest


def verify_rules_dir(rules_dir: Path) -> dict:
    """Crash-recovery check: the live view must be internally consistent.

    Returns the manifest when the rule files visible through generated/
    exactly match the manifest's rule ids; raises otherwise.
    """
    version, documents, manifest = read_active_ruleset(rules_dir)
    if version is None:
        if (Path(rules_dir) / "generated").is_symlink() and (Path(rules_dir) / "generated").exists():
            raise RuntimeError("generated/ resolves but no current version is set")
        return {}
    on_disk = {p.stem for p in (Path(rules_dir) / "generated").glob("*.yml")}
    listed = set(manifest.keys())
    if on_disk != listed:
        raise RuntimeError(
            f"rules_dir {rules_dir} is inconsistent: files {sorted(on_disk)} vs manifest {sorted(listed)}"
        )
    return manifest
