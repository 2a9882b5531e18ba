#!/usr/bin/env python3
"""Regenerate the deterministic fixtures under fixtures/.

Everything here is hand-designed data; this script only formats it
canonically so the checked-in files never churn. Run from the repo root:

    python scripts/make_fixtures.py
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone
from pathlib import Path

from ctimp.asset_inventory import load_map, save_map
from ctimp.util import canonical_json_bytes

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"


# --- asset map -----------------------------------------------------------------

MAP_DOCUMENT = {
    "schema": "ctimp-assetmap/1",
    "map_id": "fixture-lan",
    "revision": 3,
    "nodes": [
        {
            "node_id": "web1",
            "label": "Shop web server",
            "risk_level": "medium",
            "group": "dmz",
            "tags": ["internet-facing"],
            "function": "web",
            "services": [
                {"name": "nginx", "version": "1.24", "ports": [80, 443]},
                {"name": "openssh", "version": "8.9", "ports": [22]},
            ],
            "addresses": ["198.51.100.7"],
            "hostnames": ["www.shop.example"],
            "geolocation": {"country_code": "PT", "site_label": "lisbon-dc"},
            "dependencies": [{"target": "db1", "kind": "data"}],
        },
        {
            "node_id": "db1",
            "label": "Customer database",
            "risk_level": "high",
            "group": "core",
            "tags": ["pii"],
            "function": "database",
            "services": [
                {"name": "postgres", "version": "15.3", "ports": [5432]},
                {"name": "openssh", "version": "9.6", "ports": [22]},
            ],
            "addresses": ["10.0.0.12"],
            "hostnames": ["db.internal.example"],
        },
        {
            "node_id": "fw1",
            "label": "Edge firewall",
            "risk_level": "critical",
            "group": "edge",
            "tags": ["gateway"],
            "function": "firewall",
            "addresses": ["192.0.2.1", "10.0.0.1"],
        },
    ],
    "edges": [
        {"source": "fw1", "target": "web1", "relation": "link"},
        {"source": "web1", "target": "db1", "relation": "depends_on"},
    ],
}


# --- feed bundle --------------------------------------------------------------

def _indicator(digit: str, pattern: str, **extra) -> dict:
    base = {
        "type": "indicator",
        "spec_version": "2.1",
        "id": f"indicator--{digit * 8}-{digit * 4}-4{digit * 3}-8{digit * 3}-{digit * 12}",
        "created": "2026-08-01T00:00:00Z",
        "modified": "2026-08-10T00:00:00Z",
        "valid_from": "2026-08-01T00:00:00Z",
        "pattern": pattern,
        "pattern_type": "stix",
        "labels": ["malicious-activity"],
    }
    base.update(extra)
    return base


BUNDLE_DOCUMENT = {
    "type": "bundle",
    "id": "bundle--f0000000-0000-4000-8000-000000000000",
    "objects": [
        # Parses to a record, retained: the web server's address.
        _indicator("1", "[ipv4-addr:value = '198.51.100.7']"),
        # Parses to a record, retained: parent domain of www.shop.example.
        _indicator("2", "[domain-name:value = 'shop.example']"),
        # Parses to a record, dropped: address not in the asset map.
        _indicator("3", "[ipv4-addr:value = '203.0.113.77']"),
        # Parses to a record, dropped: expired before any plausible test run.
        _indicator("4", "[domain-name:value = 'expired.example']",
                   created="2025-12-01T00:00:00Z", modified="2025-12-01T00:00:00Z",
                   valid_from="2025-12-01T00:00:00Z", valid_until="2026-01-01T00:00:00Z"),
        # Parses to a record, dropped: unknown domain, not host-agnostic.
        _indicator("5", "[domain-name:value = 'nowhere.example']"),
        # Skipped at parse: revoked.
        _indicator("6", "[ipv4-addr:value = '198.51.100.8']", revoked=True),
        # Skipped at parse: unsupported pattern construct.
        _indicator("7", "[domain-name:value LIKE 'evil%']"),
        # Skipped at parse: not an indicator.
        {
            "type": "marking-definition",
            "id": "marking-definition--a0000000-0000-4000-8000-000000000000",
            "created": "2026-08-01T00:00:00Z",
        },
    ],
}


# --- auth.log -------------------------------------------------------------------

def build_log_lines() -> list[str]:
    base = datetime(2026, 8, 15, 10, 0, 0, tzinfo=timezone.utc)
    entries: list[tuple[datetime, str, str, str]] = []

    def add(offset_seconds: int, host: str, program: str, message: str) -> None:
        entries.append((base + timedelta(seconds=offset_seconds), host, program, message))

    def fail(offset: int, host: str, user: str, src: str, port: int) -> None:
        add(offset, host, "sshd[2201]",
            f"Failed password for {user} from {src} port {port} ssh2")

    # A: five failures inside 60 s from 203.0.113.9 -> exactly one frequency
    # alert on the fifth. The port-4242 line is the canonical decoder example.
    fail(0, "web1", "root", "203.0.113.9", 4242)
    fail(10, "web1", "root", "203.0.113.9", 4243)
    fail(20, "web1", "root", "203.0.113.9", 4244)
    fail(35, "web1", "root", "203.0.113.9", 4245)
    fail(50, "web1", "root", "203.0.113.9", 4246)

    # B: four failures inside 60 s from 203.0.113.50, quiet past the window,
    # then three more -> zero alerts.
    for i, off in enumerate((300, 315, 330, 345)):
        fail(off, "web1", "admin", "203.0.113.50", 50100 + i)
    for i, off in enumerate((450, 460, 470)):
        fail(off, "web1", "admin", "203.0.113.50", 50110 + i)

    # C: twelve failures in 55 s from 203.0.113.99 -> threshold fires at the
    # fifth and again at the tenth under reset semantics: two alerts.
    for i in range(12):
        fail(600 + 5 * i, "db1", "postgres", "203.0.113.99", 40200 + i)

    # D: window boundary. Offsets 0/20/40/60/70/80 s from 10:15:00: an event
    # exactly 60 s old has aged out, so the count never reaches five -> zero
    # alerts. A strictly-greater prune would fire on the fifth event.
    for i, off in enumerate((900, 920, 940, 960, 970, 980)):
        fail(off, "web1", "backup", "203.0.113.60", 60300 + i)

    # E: identical events from an address that is in the asset map. The
    # tailored SIGMA rule for 198.51.100.7 matches each one; the first raises
    # an alert, the next two are suppressed (same signature inside 300 s), and
    # the repeat 360 s after the first lands outside the window -> new alert.
    for off in (1200, 1210, 1225):
        fail(off, "db1", "admin", "198.51.100.7", 51022)
    fail(1560, "db1", "admin", "198.51.100.7", 51022)

    # One DNS query for the tailored domain -> one dns-category alert. The
    # www subdomain is not string-equal to the compiled selection, no match.
    add(1800, "db1", "dnsmasq[999]", "query[A] shop.example from 10.0.0.12")
    add(1805, "db1", "dnsmasq[999]", "query[A] updates.vendor.example from 10.0.0.12")
    add(1810, "db1", "dnsmasq[999]", "query[AAAA] www.shop.example from 10.0.0.12")

    # A kernel line carrying the tailored address; the fallback decoder
    # extracts it as srcip -> one more network_connection alert.
    add(1920, "fw1", "kernel",
        "martian source 198.51.100.7 from 10.0.0.99, on dev eth0")

    # sshd lines that match no child decoder fall through to the fallback.
    add(55, "web1", "sshd[2201]", "Connection closed by 203.0.113.9 port 4246 [preauth]")
    add(475, "web1", "sshd[2201]", "Connection closed by 203.0.113.50 port 50112 [preauth]")

    # Legitimate logins decode but match no rule.
    add(120, "db1", "sshd[902]", "Accepted password for alice from 10.0.0.12 port 60000 ssh2")
    add(1260, "web1", "sshd[2300]", "Accepted publickey for deploy from 10.0.0.12 port 60010 ssh2")

    # Web access noise; the replay fixture rule set has no web rule.
    for i in range(24):
        status = 404 if i % 3 else 200
        minute, second = divmod(2100 + 15 * i, 60)
        add(2100 + 15 * i, "web1", "nginx",
            f'203.0.113.70 - - [15/Aug/2026:{10 + minute // 60}:{minute % 60:02d}:{second:02d} +0000] '
            f'"GET /probe/{i} HTTP/1.1" {status} 162')

    # Background chatter: decodes via the fallback or not at all.
    for i in range(130):
        if i % 3 == 0:
            add(2600 + 10 * i, "db1", "CRON[700]",
                f"(root) CMD (/usr/local/bin/backup --window {i % 60})")
        elif i % 3 == 1:
            add(2600 + 10 * i, "web1", "systemd",
                "Started Session 41 of User www-data.")
        else:
            add(2600 + 10 * i, "fw1", "kernel",
                f"conntrack table near limit, bucket {i % 60}")

    entries.sort(key=lambda item: item[0])
    lines = [
        f"{moment.strftime('%b')} {moment.day:2d} {moment.strftime('%H:%M:%S')} "
        f"{host} {program}: {message}"
        for moment, host, program, message in entries
    ]
    # Corrupted lines the replay parser must skip, at fixed positions.
    lines.insert(40, "#### corrupted entry ####")
    lines.insert(100, "Zzz 15 99:99:99 nowhere broken")
    lines.append("trailing garbage without any timestamp")
    return lines


def main() -> None:
    FIXTURES.mkdir(exist_ok=True)
    (FIXTURES / "feeds").mkdir(exist_ok=True)

    (FIXTURES / "map.json").write_bytes(save_map(load_map(MAP_DOCUMENT)))
    (FIXTURES / "feeds" / "bundle.json").write_bytes(canonical_json_bytes(BUNDLE_DOCUMENT))

    log_lines = build_log_lines()
    (FIXTURES / "auth.log").write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    print(f"map.json, feeds/bundle.json, auth.log ({len(log_lines)} lines) written")


if __name__ == "__main__":
    main()
