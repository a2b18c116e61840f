"""HTTP/JSON management surface. Thin: every route delegates to one
EmulationServer command and maps domain errors onto status codes.

400 bad request document, 404 unknown slice/participant, 409 state or
capacity conflict. Rejections carry {"error": <type>, "detail": ...} plus
whatever structured report the operation produced.
"""

from __future__ import annotations

from fastapi import Body, FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import config
from .conference import DuplicateParticipant, NotProducer, UnknownParticipant
from .control import AmbiguousParticipant, EmulationServer, ScriptError
from .forwarder import UnknownSlice
from .mobility import NoSuchInterface
from .orchestrator import EmbeddingError, TemplateError


def _error(status: int, kind: str, detail: str, **extra) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": kind, "detail": detail, **extra})


def create_app(server: EmulationServer) -> FastAPI:
    app = FastAPI(title="icnslice", docs_url=None, redoc_url=None)
    # the dashboard is served from a different origin than the API
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    @app.exception_handler(TemplateError)
    async def _template_error(request, exc):
        return _error(400, "TemplateError", str(exc))

    @app.exception_handler(ScriptError)
    async def _script_error(request, exc):
        return _error(400, "ScriptError", str(exc))

    @app.exception_handler(EmbeddingError)
    async def _embedding_error(request, exc):
        return _error(409, "EmbeddingError", str(exc), reason=exc.reason)

    @app.exception_handler(UnknownSlice)
    async def _unknown_slice(request, exc):
        return _error(404, "UnknownSlice", str(exc))

    @app.exception_handler(UnknownParticipant)
    async def _unknown_participant(request, exc):
        return _error(404, "UnknownParticipant", str(exc))

    @app.exception_handler(DuplicateParticipant)
    async def _duplicate_participant(request, exc):
        return _error(409, "DuplicateParticipant", str(exc))

    @app.exception_handler(AmbiguousParticipant)
    async def _ambiguous_participant(request, exc):
        return _error(409, "AmbiguousParticipant", str(exc))

    @app.exception_handler(NotProducer)
    async def _not_producer(request, exc):
        return _error(409, "NotProducer", str(exc))

    @app.exception_handler(NoSuchInterface)
    async def _no_such_interface(request, exc):
        return _error(409, "NoSuchInterface", str(exc))

    @app.post("/slices", status_code=201)
    def create_slice(body: dict = Body(...)):
        return server.create_slice(body)

    @app.delete("/slices/{slice_id}")
    def delete_slice(slice_id: int):
        return server.delete_slice(slice_id)

    @app.post("/slices/{slice_id}/mobility")
    def set_mobility(slice_id: int, body: dict = Body(...)):
        if not isinstance(body.get("enabled"), bool):
            return _error(400, "TemplateError", "body needs enabled: bool")
        return server.set_mobility(slice_id, body["enabled"])

    @app.post("/slices/{slice_id}/participants", status_code=201)
    def add_participant(slice_id: int, body: dict = Body(...)):
        for key in ("participant", "poa"):
            if not isinstance(body.get(key), str):
                return _error(400, "TemplateError", f"body needs {key}: str")
        return server.add_participant(
            slice_id, body["participant"], body["poa"],
            role=body.get("role", "both"),
            access_type=body.get("access_type"))

    @app.delete("/slices/{slice_id}/participants/{pid}")
    def remove_participant(slice_id: int, pid: str):
        return server.remove_participant(slice_id, pid)

    @app.post("/slices/{slice_id}/adapt")
    def adapt(slice_id: int, body: dict = Body(...)):
        report = server.adapt(slice_id, body.get("participants", []))
        if report.get("status") == "rejected":
            return _error(409, "AdaptRejected", report.get("detail", ""),
                          report=report)
        return report

    @app.post("/participants/{pid}/handoff")
    def handoff(pid: str, body: dict = Body(...)):
        if not isinstance(body.get("to_poa"), str):
            return _error(400, "TemplateError", "body needs to_poa: str")
        record, _ = server.resolve_participant(pid)
        report = server.handoff(record.slice_id, pid, body["to_poa"],
                                access_type=body.get("access_type"),
                                gap_ms=float(body.get(
                                    "gap_ms", config.DEFAULT_DETACH_GAP_MS)))
        if report.get("denied_reason"):
            return _error(409, "MobilityDisabled", report["denied_reason"],
                          report=report)
        return report

    @app.post("/participants/{pid}/move")
    def move(pid: str, body: dict = Body(...)):
        if not isinstance(body.get("to_poa"), str):
            return _error(400, "TemplateError", "body needs to_poa: str")
        record, _ = server.resolve_participant(pid)
        return server.move(record.slice_id, pid, body["to_poa"],
                           access_type=body.get("access_type"))

    @app.post("/slices/{slice_id}/publish")
    def publish(slice_id: int, body: dict = Body(...)):
        if not isinstance(body.get("participant"), str):
            return _error(400, "TemplateError", "body needs participant: str")
        return server.publish(slice_id, body["participant"],
                              count=int(body.get("count", 1)),
                              interval_ms=float(body.get("interval_ms", 0)),
                              payload_bytes=body.get("payload_bytes"))

    @app.get("/views")
    def views():
        return server.views()

    @app.get("/metrics")
    def metrics():
        with server.lock:
            server._sync_clock()
            return server.net.metrics.view()

    @app.post("/scenario")
    def scenario(body: dict = Body(...)):
        return server.run_scenario(body)

    @app.get("/events")
    def events(after: int = 0, limit: int = 500):
        return server.events_after(after, limit)

    @app.post("/clock/advance")
    def clock_advance(body: dict = Body(...)):
        ms = body.get("ms")
        if not isinstance(ms, (int, float)) or isinstance(ms, bool) or ms < 0:
            return _error(400, "TemplateError", "body needs ms: number >= 0")
        return {"t_ms": server.advance(float(ms))}

    return app
