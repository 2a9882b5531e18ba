"""HTTP + SSE API.

Bearer auth with two roles: admin (everything) and analyst (read plus alert
triage). Errors carry machine-readable bodies: {"error": code, "message": text}.
"""

from __future__ import annotations

import asyncio
import json
from typing import Optional

from fastapi import Body, Depends, FastAPI, Request
from fastapi import HTTPException
from fastapi.responses import JSONResponse, StreamingResponse
from starlette.exceptions import HTTPException as StarletteHTTPException

from ..asset_inventory import AssetMapError, save_map
from ..detection import AlertStatus, IllegalTransition
from ..selfheal import CommandState, IllegalCommandTransition
from .service import PlatformService
from .store import alert_to_doc

STREAM_KEEPALIVE_SECONDS = 15.0


def _error(status: int, code: str, message: str) -> HTTPException:
    return HTTPException(status_code=status, detail={"error": code, "message": message})


def create_app(service: PlatformService) -> FastAPI:
    app = FastAPI(title="ctimp", docs_url=None, redoc_url=None)

    @app.exception_handler(StarletteHTTPException)
    async def _http_error(request: Request, exc: StarletteHTTPException):
        body = exc.detail if isinstance(exc.detail, dict) else {"error": "http_error", "message": str(exc.detail)}
        return JSONResponse(status_code=exc.status_code, content=body)

    def current_role(request: Request) -> str:
        header = request.headers.get("authorization", "")
        if not header.lower().startswith("bearer "):
            raise _error(401, "unauthorized", "bearer token required")
        role = service.config.api.role_for(header[7:].strip())
        if role is None:
            raise _error(401, "unauthorized", "unknown token")
        return role

    def admin_role(role: str = Depends(current_role)) -> str:
        if role != "admin":
            raise _error(403, "forbidden", "admin role required")
        return role

    # --- health ------------------------------------------------------------

    @app.get("/api/health")
    def health():
        return {
            "status": "ok",
            "rules_version": service.rules_version,
            "rules_loaded": len(service.rules),
            "alerts": len(service.alerts.list_alerts()),
        }

    # --- alerts ------------------------------------------------------------

    @app.get("/api/alerts")
    def list_alerts(status: Optional[str] = None, role: str = Depends(current_role)):
        parsed = None
        if status is not None:
            try:
                parsed = AlertStatus(status)
            except ValueError:
                raise _error(400, "bad_request", f"unknown alert status {status!r}")
        return {"alerts": [alert_to_doc(a) for a in service.alerts.list_alerts(parsed)]}

    @app.patch("/api/alerts/{alert_id}")
    def patch_alert(alert_id: str, payload: dict = Body(...), role: str = Depends(current_role)):
        try:
            service.alerts.get(alert_id)
        except KeyError:
            raise _error(404, "not_found", f"no alert {alert_id}")
        if "status" in payload:
            try:
                status = AlertStatus(payload["status"])
            except ValueError:
                raise _error(400, "bad_request", f"unknown alert status {payload['status']!r}")
            try:
                service.alerts.set_status(alert_id, status)
            except IllegalTransition as exc:
                raise _error(409, "illegal_transition", str(exc))
        if "assignee" in payload:
            assignee = payload["assignee"]
            if assignee is not None and not isinstance(assignee, str):
                raise _error(400, "bad_request", "assignee must be a string or null")
            service.alerts.assign(alert_id, assignee)
        return alert_to_doc(service.alerts.get(alert_id))

    # --- commands ------------------------------------------------------------

    @app.get("/api/commands")
    def list_commands(state: Optional[str] = None, role: str = Depends(current_role)):
        parsed = None
        if state is not None:
            try:
                parsed = CommandState(state)
            except ValueError:
                raise _error(400, "bad_request", f"unknown command state {state!r}")
        return {"commands": [service.command_doc(r) for r in service.commands.list_records(parsed)]}

    @app.post("/api/commands/{command_id}/verdict")
    def command_verdict(command_id: str, payload: dict = Body(...), role: str = Depends(admin_role)):
        verdict = payload.get("verdict")
        if verdict not in ("approved", "rejected"):
            raise _error(400, "bad_request", "verdict must be 'approved' or 'rejected'")
        try:
            service.commands.get(command_id)
        except KeyError:
            raise _error(404, "not_found", f"no command {command_id}")
        try:
            record = service.selfheal.apply_verdict(command_id, verdict, actor=role)
        except IllegalCommandTransition as exc:
            raise _error(409, "illegal_transition", str(exc))
        return service.command_doc(record)

    # --- asset map ------------------------------------------------------------

    @app.get("/api/assetmap")
    def get_assetmap(role: str = Depends(current_role)):
        return json.loads(save_map(service.asset_map))

    @app.put("/api/assetmap")
    def put_assetmap(payload: dict = Body(...), role: str = Depends(admin_role)):
        try:
            candidate = service.replace_asset_map(payload)
        except AssetMapError as exc:
            raise _error(400, "invalid_map", str(exc))
        return {"map_id": candidate.map_id, "revision": candidate.revision,
                "nodes": len(candidate.nodes), "edges": len(candidate.edges)}

    # --- rules ------------------------------------------------------------

    @app.get("/api/rules")
    def get_rules(role: str = Depends(current_role)):
        from .pipeline import read_active_ruleset

        version, _documents, manifest = read_active_ruleset(service.config.rules_dir)
        return {
            "version": version,
            "manifest": manifest,
            "rules": [
                {
                    "rule_id": rule.rule_id,
                    "origin": rule.origin.value,
                    "level": rule.level,
                    "threat_type": rule.threat_type,
                    "threat_group": rule.threat_group,
                }
                for rule in service.rules
            ],
        }

    @app.get("/api/tailored")
    def get_tailored(role: str = Depends(current_role)):
        latest = service.latest_tailored()
        if latest is None:
            raise HTTPException(status_code=404, detail={
                "error": "no_tailored_bundle",
                "message": "no pipeline cycle has produced a tailored bundle yet",
            })
        name, bundle = latest
        return {"filename": name, "bundle": bundle}

    # --- feeds ------------------------------------------------------------

    @app.get("/api/feeds")
    def get_feeds(role: str = Depends(current_role)):
        return {
            "feeds": [
                {
                    "source_id": feed.source_id,
                    "location": feed.location,
                    "kind": feed.kind.value,
                    "trust_tier": feed.trust_tier,
                    "poll_interval": feed.poll_interval,
                    "enabled": feed.enabled,
                    "status": service.feed_status.get(feed.source_id),
                }
                for feed in service.config.feeds
            ]
        }

    @app.post("/api/feeds/{source_id}/sync")
    def sync_feed(source_id: str, role: str = Depends(admin_role)):
        if not any(f.source_id == source_id for f in service.config.feeds):
            raise _error(404, "not_found", f"no feed {source_id}")
        report = service.run_cycle(only_feed=source_id)
        return report.to_doc()

    # --- event stream ------------------------------------------------------------

    @app.get("/api/stream")
    async def stream(role: str = Depends(current_role)):
        queue: asyncio.Queue = asyncio.Queue()
        loop = asyncio.get_running_loop()

        def forward(event: str, payload: dict) -> None:
            loop.call_soon_threadsafe(queue.put_nowait, (event, payload))

        unsubscribe = service.bus.subscribe(forward)

        async def generate():
            try:
                yield ": connected\n\n"
                while True:
                    try:
                        event, payload = await asyncio.wait_for(
                            queue.get(), timeout=STREAM_KEEPALIVE_SECONDS
                        )
                    except asyncio.TimeoutError:
                        yield ": keep-alive\n\n"
                        continue
                    yield f"event: {event}\ndata: {json.dumps(payload, sort_keys=True)}\n\n"
            finally:
                unsubscribe()

        return StreamingResponse(
            generate(),
            media_type="text/event-stream",
            headers={"cache-control": "no-cache", "connection": "keep-alive"},
        )

    return app
