"""Async shell around NavSession: IGTL ingest, viewer WebSocket, PNG fetch.

Concurrency layout: one state task owns the NavSession; tracker readers,
WebSocket handlers, and timers only enqueue commands.  Broadcasts go
through per-viewer queues so a slow viewer cannot stall ingest (it gets
disconnected instead).  Analytics run in a worker thread off the hot
path and the result is adopted back on the state task.
"""

import asyncio
import contextlib
import json
import logging
import threading
import time
from pathlib import Path

import numpy as np
import uvicorn
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse, Response
from fastapi.staticfiles import StaticFiles

from scopenav.geometry.analytics import analyze_trajectory
from scopenav.igtl import ProtocolError, StatusBody, TransformBody
from scopenav.igtl.framing import MessageFramer
from scopenav.server.config import SessionConfig
from scopenav.server.session import NavSession, SessionError

log = logging.getLogger("scopenav.server")

VIEWER_QUEUE_LIMIT = 4096


class _ViewerClient:
    _counter = 0

    def __init__(self):
        _ViewerClient._counter += 1
        self.id = f"viewer-{_ViewerClient._counter}"
        self.queue: asyncio.Queue = asyncio.Queue(maxsize=VIEWER_QUEUE_LIMIT)
        self.dead = False

    def push(self, message: dict) -> None:
        if self.dead:
            return
        try:
            self.queue.put_nowait(message)
        except asyncio.QueueFull:
            self.dead = True


class NavServer:
    def __init__(self, config: SessionConfig, session_id: str | None = None):
        self.config = config
        self.session_id = session_id
        self.session: NavSession | None = None
        self.ready = threading.Event()
        self.igtl_port: int | None = None
        self.viewer_port: int | None = None
        self._queue: asyncio.Queue | None = None
        self._clients: dict[str, _ViewerClient] = {}
        self._loop: asyncio.AbstractEventLoop | None = None
        self._shutdown: asyncio.Event | None = None
        self._metrics_busy = False
        self._metrics_sample_count = -1

    # -- lifecycle -----------------------------------------------------------

    def request_shutdown(self) -> None:
        """Thread-safe graceful stop (flushes and exports before exit)."""
        if self._loop and self._shutdown:
            self._loop.call_soon_threadsafe(self._shutdown.set)

    async def run(self) -> None:
        self._loop = asyncio.get_running_loop()
        self._queue = asyncio.Queue()
        self._shutdown = asyncio.Event()
        self.session = NavSession(self.config, self.session_id)
        log.info("session %s directory %s", self.session.session_id, self.session.session_dir)

        igtl_server = await asyncio.start_server(
            self._handle_tracker, self.config.host, self.config.igtl_port
        )
        self.igtl_port = igtl_server.sockets[0].getsockname()[1]

        uv_config = uvicorn.Config(
            self._build_app(),
            host=self.config.host,
            port=self.config.viewer_port,
            log_level="warning",
            access_log=False,
            ws="websockets-sansio",
        )
        uv_server = uvicorn.Server(uv_config)
        uv_task = asyncio.create_task(uv_server.serve())
        while not uv_server.started and not uv_task.done():
            await asyncio.sleep(0.01)
        if uv_task.done():
            igtl_server.close()
            raise RuntimeError(f"viewer endpoint failed to start: {uv_task.exception()}")
        self.viewer_port = uv_server.servers[0].sockets[0].getsockname()[1]

        tasks = [
            asyncio.create_task(self._state_task()),
            asyncio.create_task(self._ticker(self.config.metrics_interval_s, ("metrics_tick",))),
            asyncio.create_task(self._ticker(self.config.flush_interval_s, ("flush",))),
        ]
        self.ready.set()
        log.info("tracker port %d, viewer port %d", self.igtl_port, self.viewer_port)

        try:
            # uvicorn owns SIGINT/SIGTERM when on the main thread; either
            # its exit or an explicit request ends the session
            done, _ = await asyncio.wait(
                [uv_task, asyncio.create_task(self._shutdown.wait())],
                return_when=asyncio.FIRST_COMPLETED,
            )
        finally:
            igtl_server.close()
            await igtl_server.wait_closed()
            for task in tasks:
                task.cancel()
            await asyncio.gather(*tasks, return_exceptions=True)
            uv_server.should_exit = True
            with contextlib.suppress(Exception):
                await asyncio.wait_for(uv_task, timeout=5.0)
            if self.session is not None:
                self.session.export()
                self.session.close()
                log.info("session exported to %s", self.session.session_dir)

    async def _ticker(self, interval: float, command: tuple) -> None:
        while True:
            await asyncio.sleep(interval)
            await self._queue.put(command)

    # -- tracker ingest -------------------------------------------------------

    async def _handle_tracker(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        peer = writer.get_extra_info("peername")
        log.info("tracker connected: %s", peer)
        framer = MessageFramer()
        try:
            while True:
                data = await reader.read(65536)
                if not data:
                    if not framer.at_boundary:
                        log.warning("tracker %s closed mid-message", peer)
                    break
                for _, body in framer.feed(data):
                    if isinstance(body, TransformBody):
                        await self._queue.put(
                            ("pose", time.time(), body.translation, body.rotation)
                        )
                    elif isinstance(body, StatusBody):
                        await self._queue.put(("stream_status", body))
        except ProtocolError as exc:
            log.error("tracker %s protocol error, dropping connection: %s", peer, exc)
        finally:
            writer.close()
            with contextlib.suppress(Exception):
                await writer.wait_closed()
            log.info("tracker disconnected: %s", peer)

    # -- state owner ------------------------------------------------------------

    async def _state_task(self) -> None:
        session = self.session
        while True:
            item = await self._queue.get()
            kind = item[0]
            try:
                if kind == "pose":
                    _, now, position, rotation = item
                    self._broadcast(session.ingest_pose(now, position, rotation))
                elif kind == "flush":
                    session.flush_log()
                elif kind == "metrics_tick":
                    self._start_metrics(force=False)
                elif kind == "stream_status":
                    session.flush_log()
                    self._start_metrics(force=True)
                elif kind == "metrics_done":
                    _, report = item
                    self._metrics_busy = False
                    session.live_metrics = report
                    self._broadcast([session._metrics_event()])
                elif kind == "connect":
                    client = item[1]
                    self._clients[client.id] = client
                    client.push(session.hello())
                    client.push(session.snapshot())
                elif kind == "disconnect":
                    self._clients.pop(item[1].id, None)
                elif kind == "finish_capture":
                    _, label, client, cmd_id = item
                    try:
                        capture, events = session.finish_capture(label)
                        self._broadcast(events)
                        client.push(
                            {
                                "type": "ack", "id": cmd_id, "cmd": "capture_fiducial",
                                "ok": True, "label": label,
                                "n_samples": capture.n_samples_averaged,
                                "tracker_xyz": [float(v) for v in capture.tracker_point],
                            }
                        )
                    except SessionError as exc:
                        client.push(
                            {
                                "type": "ack", "id": cmd_id, "cmd": "capture_fiducial",
                                "ok": False, "label": label, "error": str(exc),
                            }
                        )
                elif kind == "ws_cmd":
                    _, client, payload = item
                    self._handle_command(client, payload)
            except Exception:
                log.exception("state task error handling %s", kind)
            self._reap_dead_clients()

    def _start_metrics(self, force: bool) -> None:
        session = self.session
        if self._metrics_busy or not session.ct_samples:
            return
        now = time.monotonic()
        if not force and now - session._last_metrics_time < self.config.metrics_interval_s:
            return
        if not force and session.sample_count == self._metrics_sample_count:
            return  # nothing new arrived; stay quiet
        session._last_metrics_time = now
        self._metrics_sample_count = session.sample_count
        trajectory = session.ct_trajectory()
        self._metrics_busy = True

        async def compute():
            try:
                report = await asyncio.to_thread(
                    analyze_trajectory, trajectory, self.config.threshold
                )
                await self._queue.put(("metrics_done", report))
            except Exception:
                self._metrics_busy = False
                log.exception("metrics computation failed")

        asyncio.create_task(compute())

    def _broadcast(self, events: list[dict]) -> None:
        if not events:
            return
        for client in self._clients.values():
            for event in events:
                client.push(event)

    def _reap_dead_clients(self) -> None:
        dead = [cid for cid, c in self._clients.items() if c.dead]
        for cid in dead:
            log.warning("dropping slow viewer %s", cid)
            del self._clients[cid]

    # -- operator commands -----------------------------------------------------

    def _handle_command(self, client: _ViewerClient, payload: dict) -> None:
        session = self.session
        cmd = payload.get("cmd")
        cmd_id = payload.get("id")

        def ack(ok: bool, **extra):
            client.push({"type": "ack", "id": cmd_id, "cmd": cmd, "ok": ok, **extra})

        try:
            if cmd == "capture_fiducial":
                label = str(payload.get("label", ""))
                window_ms = payload.get("window_ms")
                deadline = session.begin_capture(label, time.time(), window_ms)
                delay = max(0.0, deadline - time.time())

                async def finish():
                    await asyncio.sleep(delay)
                    await self._queue.put(("finish_capture", label, client, cmd_id))

                asyncio.create_task(finish())
            elif cmd == "register":
                ct_points = None
                if payload.get("ct_fiducials"):
                    ct_points = {
                        str(f["label"]): np.asarray(f["xyz"], dtype=np.float64)
                        for f in payload["ct_fiducials"]
                    }
                result, events = session.register(ct_points)
                self._broadcast(events)
                ack(True, fre_mm=result.fre)
            elif cmd == "annotate":
                position = payload.get("position")
                color = tuple(payload.get("color", (255, 60, 60, 255)))
                _, events = session.annotate_stone(
                    position=np.asarray(position, dtype=np.float64) if position else None,
                    color=color,
                    label=str(payload.get("label", "")),
                )
                self._broadcast(events)
                ack(True, annotation_id=events[0]["annotation"]["id"])
            elif cmd == "remove_annotation":
                events = session.remove_annotation(str(payload.get("annotation_id", "")))
                self._broadcast(events)
                ack(True)
            elif cmd == "set_slice":
                active, events = session.set_slice(payload)
                self._broadcast(events)
                ack(True, image_id=active["image_id"])
            elif cmd == "set_anatomy_mode":
                events = session.set_anatomy_mode(str(payload.get("mode", "")))
                self._broadcast(events)
                ack(True)
            elif cmd == "export":
                manifest = session.export()
                ack(True, manifest=manifest, dir=str(session.session_dir))
            elif cmd == "get_snapshot":
                client.push(session.snapshot())
            else:
                ack(False, error=f"unknown command {cmd!r}")
        except (SessionError, ValueError) as exc:
            ack(False, error=str(exc))
        except Exception as exc:
            log.exception("command %s failed", cmd)
            ack(False, error=f"internal error: {exc}")

    # -- viewer endpoints -------------------------------------------------------

    def _build_app(self) -> FastAPI:
        app = FastAPI(title="scopenav session server", docs_url=None, redoc_url=None)
        server = self

        @app.get("/healthz")
        async def healthz():
            return {
                "session_id": server.session.session_id,
                "sample_count": server.session.sample_count,
                "flushed_count": server.session.flushed_count,
            }

        @app.get("/slices/{image_id}.png")
        async def get_slice(image_id: str):
            png = server.session.get_slice_png(image_id)
            if png is None:
                return Response(status_code=404)
            return Response(content=png, media_type="image/png")

        @app.get("/assets/{name}.obj")
        async def get_asset(name: str):
            path = server.config.mesh_paths().get(name)
            if path is None or not Path(path).exists():
                return Response(status_code=404)
            return FileResponse(path, media_type="model/obj")

        @app.websocket("/ws")
        async def viewer_ws(ws: WebSocket):
            await ws.accept()
            client = _ViewerClient()
            await server._queue.put(("connect", client))

            async def sender():
                while True:
                    message = await client.queue.get()
                    await ws.send_text(json.dumps(message))

            send_task = asyncio.create_task(sender())
            try:
                while True:
                    text = await ws.receive_text()
                    try:
                        payload = json.loads(text)
                    except json.JSONDecodeError:
                        client.push({"type": "ack", "ok": False, "error": "bad JSON"})
                        continue
                    await server._queue.put(("ws_cmd", client, payload))
            except WebSocketDisconnect:
                pass
            finally:
                send_task.cancel()
                client.dead = True
                await server._queue.put(("disconnect", client))

        if server.config.ui_dir and Path(server.config.ui_dir).is_dir():
            app.mount("/", StaticFiles(directory=server.config.ui_dir, html=True), name="ui")

        return app


def run_server(config: SessionConfig, session_id: str | None = None) -> None:
    """Blocking entry point: serve until interrupted, then export."""
    asyncio.run(NavServer(config, session_id).run())
