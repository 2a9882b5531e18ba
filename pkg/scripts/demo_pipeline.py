#!/usr/bin/env python3
"""Walk the whole loop once against the bundled fixtures and narrate it.

Copies fixtures/ into a scratch directory, runs a pipeline cycle (fetch ->
tailor -> compile -> atomic swap), replays the sample auth.log with
self-healing enabled, then raises one approval-gated alert and decides it.
Everything uses the fake executor; nothing touches the network or any host.

    python3 scripts/demo_pipeline.py [--workdir DIR] [--keep]
"""

from __future__ import annotations

import argparse
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from ctimp.platform import PlatformService, load_config  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", type=Path, default=None,
                        help="scratch directory (default: a fresh temp dir)")
    parser.add_argument("--keep", action="store_true",
                        help="leave the scratch directory behind for inspection")
    args = parser.parse_args()

    workdir = args.workdir or Path(tempfile.mkdtemp(prefix="ctimp-demo-"))
    tree = workdir / "tree"
    if tree.exists():
        shutil.rmtree(tree)
    tree.mkdir(parents=True)
    for name in ("config.toml", "map.json", "native_rules.toml",
                 "policies.toml", "threats.toml", "auth.log"):
        shutil.copy(ROOT / "fixtures" / name, tree / name)
    shutil.copytree(ROOT / "fixtures" / "feeds", tree / "feeds")

    service = PlatformService(load_config(tree / "config.toml"))
    try:
        print(f"== pipeline cycle (workdir {tree}) ==")
        report = service.run_cycle()
        for source_id, status in service.feed_status.items():
            print(f"feed {source_id}: {status['indicators']} indicators "
                  f"({status['added']} new)")
        print(f"tailored: {report.retained} retained against map rev "
              f"{service.asset_map.revision}")
        print(f"rules: {report.rules_written} compiled, active version "
              f"{service.rules_version}")

        print("\n== replaying auth.log with self-healing ==")
        replay = service.replay_file(tree / "auth.log", drive_selfheal=True)
        print(f"{replay.parsed} lines parsed, {replay.matches} rule matches, "
              f"{replay.alerts_created} alerts ({replay.alerts_suppressed} folded), "
              f"{replay.commands} commands")
        for alert in service.alerts.list_alerts():
            print(f"  alert {alert.rule_id:<44} x{alert.count} "
                  f"[{alert.threat_type}/{alert.threat_group}]")
        for record in service.selfheal.commands.list_records():
            print(f"  command {record.state.value:<22} {record.target_node:<5} "
                  f"$ {record.rendered_cli}")

        print("\n== approval-gated response ==")
        alert, records = service.simulate_alert("demo-threat", "cti-match", "203.0.113.99")
        pending = records[0]
        print(f"alert {alert.alert_id} parked command {pending.command_id} "
              f"({pending.state.value}): $ {pending.rendered_cli}")
        decided = service.selfheal.apply_verdict(pending.command_id, "approved", "demo-admin")
        print(f"after verdict: {decided.state.value}; transcript: {decided.transcript!r}")

        audit = (service.config.data_dir / "selfheal-audit.log").read_text().splitlines()
        print(f"\n== audit log ({len(audit)} lines) ==")
        for line in audit:
            print(f"  {line}")
    finally:
        service.close()

    if args.keep or args.workdir:
        print(f"\nartifacts kept under {workdir}")
    else:
        shutil.rmtree(workdir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
