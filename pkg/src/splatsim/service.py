"""WebSocket service around simulation sessions.

Lockstep protocol: the client sends JSON commands, the server replies with
JSON (frames additionally carry one length-prefixed binary message). Frames
advance only on `step`, so pacing is client-driven and tests stay exact.
"""

import json
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .io import load_cloud
from .session import ENCODINGS, SessionStateError, SimSession, frame_blob
from .simulator.mpm import MaterialParams, SimulationFault


def _error(code, message):
    return {"type": "error", "code": code, "message": str(message)}


def _material_params(overrides):
    fields = set(MaterialParams.__dataclass_fields__)
    unknown = set(overrides) - fields
    if unknown:
        raise ValueError(f"unknown parameters: {sorted(unknown)}")
    if "gravity" in overrides:
        overrides = {**overrides, "gravity": tuple(overrides["gravity"])}
    return MaterialParams(**overrides)


class CloudStore:
    """Lazily loaded .gsc files from one directory."""

    def __init__(self, root):
        self.root = Path(root)
        self._cache = {}

    def names(self):
        return sorted(p.stem for p in self.root.glob("*.gsc"))

    def get(self, name):
        if name not in self._cache:
            path = self.root / f"{name}.gsc"
            if not path.exists():
                raise KeyError(name)
            self._cache[name] = load_cloud(path)
        return self._cache[name]


def create_app(cloud_dir, session_defaults=None):
    app = FastAPI()
    app.state.clouds = CloudStore(cloud_dir)
    app.state.sessions = {}
    app.state.session_defaults = session_defaults or {}

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/clouds")
    def clouds():
        store = app.state.clouds
        out = []
        for name in store.names():
            entry = {"name": name}
            try:
                entry["gaussians"] = len(store.get(name).positions)
            except Exception:
                entry["error"] = "unreadable"
            out.append(entry)
        return {"clouds": out}

    @app.websocket("/ws")
    async def ws(socket: WebSocket):
        await socket.accept()
        session = None

        async def reply(msg, blob=None):
            await socket.send_text(json.dumps(msg))
            if blob is not None:
                await socket.send_bytes(frame_blob(blob))

        while True:
            try:
                raw = await socket.receive_text()
            except WebSocketDisconnect:
                break
            try:
                msg = json.loads(raw)
            except json.JSONDecodeError as exc:
                await reply(_error("bad_json", exc))
                continue
            kind = msg.get("type")
            try:
                if kind == "create_session":
                    cloud_name = msg.get("cloud", "")
                    try:
                        cloud = app.state.clouds.get(cloud_name)
                    except KeyError:
                        await reply(_error("not_found", f"unknown cloud {cloud_name!r}"))
                        continue
                    params = _material_params(msg.get("params", {}))
                    defaults = app.state.session_defaults
                    session = SimSession.create(
                        cloud,
                        cloud_name=cloud_name,
                        n_nodes=int(msg.get("nodes", 512)),
                        params=params,
                        seed=int(msg.get("seed", 0)),
                        anchor_margin=float(
                            msg.get("anchor_margin", defaults.get("anchor_margin", 0.1))
                        ),
                        anchor_axes=msg.get("anchor_axes", defaults.get("anchor_axes")),
                        encoding=msg.get("encoding", "png"),
                    )
                    app.state.sessions[session.id] = session
                    await reply({
                        "type": "session_created",
                        "id": session.id,
                        "node_count": len(session.nodes),
                        "gaussian_count": len(cloud.positions),
                        "anchored": int(session.nodes.anchored.sum()),
                    })
                elif session is None:
                    await reply(_error("no_session", "create a session first"))
                elif kind == "apply_force":
                    warned = session.apply_force(
                        msg["position"], msg["direction"],
                        msg["magnitude"], msg["radius"],
                    )
                    ack = {"type": "force_applied"}
                    if warned:
                        ack["warning"] = "direction was not unit length; normalized"
                    await reply(ack)
                elif kind == "release_force":
                    session.release_force()
                    await reply({"type": "force_released"})
                elif kind == "step":
                    try:
                        payload, blob = session.step_frame()
                    except SessionStateError as exc:
                        await reply(_error("not_running", exc))
                        continue
                    except SimulationFault as fault:
                        await reply({
                            "type": "fault",
                            "message": str(fault),
                            "diagnostics": {
                                k: v for k, v in fault.diagnostics.items()
                                if isinstance(v, (int, float, str, bool, list))
                            },
                        })
                        continue
                    await reply(payload, blob)
                elif kind == "set_camera":
                    session.set_camera(
                        msg["qvec"], msg["tvec"],
                        width=msg.get("width"), height=msg.get("height"),
                        focal=msg.get("focal"),
                    )
                    await reply({"type": "camera_set"})
                elif kind == "set_params":
                    updates = {k: v for k, v in msg.items() if k != "type"}
                    session.set_params(**updates)
                    await reply({"type": "params_set"})
                elif kind == "reset":
                    session.reset()
                    await reply({"type": "reset_done"})
                elif kind == "query_depth":
                    await reply(session.query_depth(float(msg["x"]), float(msg["y"])))
                else:
                    await reply(_error("unknown_type", f"unknown message type {kind!r}"))
            except WebSocketDisconnect:
                break
            except (KeyError, TypeError, ValueError) as exc:
                await reply(_error("bad_request", exc))
        # connection closed; sessions stay in the registry for inspection

    return app


def serve(cloud_dir, host="127.0.0.1", port=8080, log_level="warning"):
    import uvicorn

    uvicorn.run(create_app(cloud_dir), host=host, port=port, log_level=log_level)
