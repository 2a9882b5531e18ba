"""Operator CLI: serve, ingest, compile-rules, replay, validate-map, simulate-alert."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import threading
import time
from pathlib import Path

from ..asset_inventory import AssetMapError, load_map
from ..selfheal import FakeExecutor
from .config import ConfigError, load_config, resolve_config_path


def _build_parser() -> argparse.ArgumentParser:
    # Shared flags are accepted both before and after the subcommand. SUPPRESS
    # keeps the subparser copy from overwriting a value parsed before the
    # subcommand with its own default.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="config file path (fallback: $CTIMP_CONFIG)")
    common.add_argument("-v", "--verbose", action="store_true",
                        default=argparse.SUPPRESS, help="debug logging")

    parser = argparse.ArgumentParser(
        prog="ctimp",
        description="Threat-intelligence tailoring, detection and self-healing platform.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the API service", parents=[common])
    serve.add_argument("--host", help="override api.bind host")
    serve.add_argument("--port", type=int, help="override api.bind port")

    ingest = sub.add_parser("ingest", help="fetch feeds and recompile rules",
                            parents=[common])
    ingest.add_argument("--once", action="store_true",
                        help="run a single pipeline cycle and exit")

    sub.add_parser("compile-rules", parents=[common],
                   help="tailor stored indicators and recompile rules")

    replay = sub.add_parser("replay", help="replay a log file through detection",
                            parents=[common])
    replay.add_argument("--file", required=True, help="log file to replay")
    replay.add_argument("--selfheal", action="store_true",
                        help="also drive self-healing for raised alerts")
    replay.add_argument("--year", type=int, default=2026,
                        help="year for classic syslog timestamps (default 2026)")

    validate = sub.add_parser("validate-map", help="validate an asset map document",
                              parents=[common])
    validate.add_argument("path", help="asset map JSON file")

    simulate = sub.add_parser("simulate-alert", parents=[common],
                              help="raise a synthetic alert and drive self-healing")
    simulate.add_argument("--type", required=True, dest="threat_type")
    simulate.add_argument("--group", required=True, dest="threat_group")
    simulate.add_argument("--srcip", required=True)
    return parser


def _load_service(args, executor=None):
    from .service import PlatformService

    config = load_config(resolve_config_path(args.config))
    return PlatformService(config, executor=executor)


def _print_report(report) -> None:
    print(json.dumps(report.to_doc(), indent=2, sort_keys=True))


def _cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    service = _load_service(args)
    app = create_app(service)
    host = args.host or service.config.api.host
    port = args.port or service.config.api.port

    if service.config.detect.intake == "replay" and service.config.detect.replay_path:
        path = service.config.detect.replay_path

        def replay_intake():
            report = service.replay_file(path, drive_selfheal=True)
            logging.getLogger(__name__).info(
                "replay intake done: %d lines, %d alerts", report.lines, report.alerts_created
            )

        threading.Thread(target=replay_intake, daemon=True, name="replay-intake").start()
    elif service.config.detect.intake == "socket":
        _start_socket_intake(service)

    uvicorn.run(app, host=host, port=port, log_level="info")
    return 0


def _start_socket_intake(service) -> None:
    """Line-oriented intake on a unix socket under data_dir."""
    import socket
    import socketserver

    from .intake import LineParseError, parse_log_line

    socket_path = service.config.data_dir / "intake.sock"
    if socket_path.exists():
        socket_path.unlink()

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            for raw in self.rfile:
                try:
                    event = parse_log_line(raw.decode("utf-8", errors="replace"))
                except LineParseError:
                    continue
                service.ingest_event(event, drive_selfheal=True)

    class Server(socketserver.ThreadingMixIn, socketserver.UnixStreamServer):
        daemon_threads = True

    server = Server(str(socket_path), Handler)
    threading.Thread(target=server.serve_forever, daemon=True, name="socket-intake").start()


def _cmd_ingest(args) -> int:
    service = _load_service(args)
    try:
        if args.once:
            report = service.run_cycle()
            _print_report(report)
            return 1 if report.aborted else 0
        interval = min((f.poll_interval for f in service.config.feeds if f.enabled), default=300)
        while True:
            report = service.run_cycle()
            _print_report(report)
            time.sleep(interval)
    except KeyboardInterrupt:
        return 0
    finally:
        service.close()


def _cmd_compile_rules(args) -> int:
    service = _load_service(args)
    try:
        report = service.run_cycle(fetch=False)
        _print_report(report)
        return 1 if report.aborted else 0
    finally:
        service.close()


def _cmd_replay(args) -> int:
    service = _load_service(args, executor=FakeExecutor())
    try:
        report = service.replay_file(Path(args.file), drive_selfheal=args.selfheal,
                                     default_year=args.year)
    except OSError as exc:
        print(f"cannot read {args.file}: {exc}", file=sys.stderr)
        return 1
    finally:
        service.close()
    print(f"lines: {report.lines}")
    print(f"parsed: {report.parsed}")
    print(f"skipped: {report.skipped}")
    print(f"matches: {report.matches}")
    print(f"suppressed: {report.alerts_suppressed}")
    if args.selfheal:
        print(f"commands: {report.commands}")
    print(f"alerts: {report.alerts_created}")
    return 0


def _cmd_validate_map(args) -> int:
    try:
        document = json.loads(Path(args.path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        print(f"cannot read map: {exc}", file=sys.stderr)
        return 1
    try:
        asset_map = load_map(document)
    except AssetMapError as exc:
        print(f"invalid map: {exc}", file=sys.stderr)
        return 1
    print(f"map {asset_map.map_id} revision {asset_map.revision}: "
          f"{len(asset_map.nodes)} nodes, {len(asset_map.edges)} edges")
    return 0


def _cmd_simulate_alert(args) -> int:
    service = _load_service(args, executor=FakeExecutor())
    try:
        alert, records = service.simulate_alert(args.threat_type, args.threat_group, args.srcip)
    finally:
        service.close()
    print(f"alert: {alert.alert_id} threat_type={alert.threat_type} "
          f"threat_group={alert.threat_group}")
    if not records:
        print("no policy matched; nothing submitted")
    for record in records:
        print(f"command: {record.command_id} mode={record.mode.value} "
              f"state={record.state.value} target={record.target_node} "
              f"cli={record.rendered_cli!r}")
    return 0


_HANDLERS = {
    "serve": _cmd_serve,
    "ingest": _cmd_ingest,
    "compile-rules": _cmd_compile_rules,
    "replay": _cmd_replay,
    "validate-map": _cmd_validate_map,
    "simulate-alert": _cmd_simulate_alert,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    args.config = getattr(args, "config", None)
    args.verbose = getattr(args, "verbose", False)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except AssetMapError as exc:
        print(f"asset map error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
