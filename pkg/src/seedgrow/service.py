"""Local HTTP service exposing volumes, slices, and the prompt-to-
segmentation loop, under /api/v1.

Slice orientation contract (the UI's click mapping depends on it):
axis "a" slices are (rows=b, cols=c); axis "b" -> (rows=a, cols=c);
axis "c" -> (rows=a, cols=b). Slices are rendered server-side to 8-bit
grayscale with the fixed window [0, 1]; mask overlays travel as per-row
run-length-encoded spans.

All responses are JSON except slice PNGs and mask payloads. Error bodies
carry {"code", "message", and optionally "field"}. Sessions live in
memory with TTL eviction; refinement requests on one session are
serialised (a concurrent request gets 409).
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import numpy as np

from .env import EnvConfig
from .errors import DataError, FileFormatError, SeedgrowError
from .grid import Mask, Volume, mask_bytes, read_mask, read_volume, read_volume_bytes
from .infer import InferenceEngine
from .metrics import classify_negative, dice_score
from .pngutil import encode_gray_png
from .surrogate import entropy_of

API = "/api/v1"
_AXES = {"a": 0, "b": 1, "c": 2, "0": 0, "1": 1, "2": 2}


class HttpError(Exception):
    def __init__(self, status: int, code: str, message: str, fieldname: str | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.fieldname = fieldname

    def body(self) -> dict:
        out = {"code": self.code, "message": str(self)}
        if self.fieldname:
            out["field"] = self.fieldname
        return out


@dataclass(eq=False)
class Session:
    session_id: str
    volume_id: str
    engine: InferenceEngine
    truth: Mask | None = None
    history: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_used: float = field(default_factory=time.monotonic)

    def touch(self):
        self.last_used = time.monotonic()


class ServiceState:
    """Volumes, model registries, and live sessions."""

    def __init__(self, env_cfg: EnvConfig, session_ttl: float = 3600.0):
        self.env_cfg = env_cfg
        self.session_ttl = session_ttl
        self.volumes: dict[str, Volume] = {}
        self.volume_meta: dict[str, dict] = {}
        self.masks: dict[str, Mask] = {}
        self.surrogates: dict = {}
        self.policies: dict = {}
        self.sessions: dict[str, Session] = {}
        self._entropy_cache: dict = {}
        self._lock = threading.Lock()
        self._counter = 0

    def _fresh_id(self, prefix: str, payload: bytes) -> str:
        digest = hashlib.sha256(payload).hexdigest()[:12]
        return f"{prefix}-{digest}"

    def add_volume(self, volume: Volume, source: str = "") -> str:
        vid = self._fresh_id("vol", volume.data.tobytes())
        with self._lock:
            self.volumes[vid] = volume
            self.volume_meta[vid] = {
                "volume_id": vid,
                "dims": list(volume.dims),
                "channels": volume.channels,
                "spacing_mm": list(volume.spacing_mm),
                "source": source,
            }
        return vid

    def add_mask(self, mask: Mask, source: str = "") -> str:
        mid = self._fresh_id("mask", mask.data.tobytes())
        with self._lock:
            self.masks[mid] = mask
        return mid

    def add_surrogate(self, name: str, params) -> None:
        self.surrogates[name] = params

    def add_policy(self, name: str, params) -> None:
        self.policies[name] = params

    def entropy_for(self, volume_id: str, surrogate_id: str):
        key = (volume_id, surrogate_id)
        hit = self._entropy_cache.get(key)
        if hit is None:
            hit = entropy_of(self.volumes[volume_id], self.surrogates[surrogate_id])
            self._entropy_cache[key] = hit
        return hit

    def new_session(self, volume_id: str, policy_id: str, surrogate_id: str,
                    truth_mask_id: str | None = None) -> Session:
        if volume_id not in self.volumes:
            raise HttpError(404, "unknown_volume", f"no volume {volume_id!r}",
                            "volume_id")
        if surrogate_id not in self.surrogates:
            raise HttpError(404, "unknown_surrogate", f"no surrogate {surrogate_id!r}",
                            "surrogate_id")
        if policy_id is not None and policy_id not in self.policies:
            raise HttpError(404, "unknown_policy", f"no policy {policy_id!r}",
                            "policy_id")
        truth = None
        if truth_mask_id is not None:
            truth = self.masks.get(truth_mask_id)
            if truth is None:
                raise HttpError(404, "unknown_mask", f"no mask {truth_mask_id!r}",
                                "truth_mask_id")
        engine = InferenceEngine(
            self.volumes[volume_id],
            self.entropy_for(volume_id, surrogate_id),
            self.policies.get(policy_id),
            self.env_cfg)
        with self._lock:
            self._counter += 1
            sid = f"s{self._counter:06d}"
            session = Session(session_id=sid, volume_id=volume_id,
                              engine=engine, truth=truth)
            self.sessions[sid] = session
        return session

    def get_session(self, sid: str) -> Session:
        self.evict_stale()
        session = self.sessions.get(sid)
        if session is None:
            raise HttpError(404, "unknown_session", f"no session {sid!r}")
        session.touch()
        return session

    def evict_stale(self) -> None:
        now = time.monotonic()
        with self._lock:
            dead = [k for k, s in self.sessions.items()
                    if now - s.last_used > self.session_ttl]
            for k in dead:
                del self.sessions[k]


# ---------------------------------------------------------------------------
# Rendering helpers
# ---------------------------------------------------------------------------

def slice_plane(volume: Volume, axis: int, index: int, channel: int) -> np.ndarray:
    if not (0 <= channel < volume.channels):
        raise HttpError(404, "bad_channel", f"channel {channel} out of range", "channel")
    if not (0 <= index < volume.dims[axis]):
        raise HttpError(404, "bad_index", f"slice {index} out of range", "index")
    ch = volume.data[channel]
    plane = np.take(ch, index, axis=axis)
    return np.clip(plane * 255.0, 0, 255).astype(np.uint8)


def mask_slice_rle(mask: Mask, axis: int, index: int) -> list:
    """Per-row [row, [[start, length], ...]] spans of the slice."""
    if not (0 <= index < mask.dims[axis]):
        raise HttpError(404, "bad_index", f"slice {index} out of range", "index")
    plane = np.take(mask.data, index, axis=axis)
    rows = []
    for r in range(plane.shape[0]):
        line = plane[r]
        if not line.any():
            continue
        edges = np.flatnonzero(np.diff(np.concatenate([[0], line, [0]])))
        spans = [[int(edges[i]), int(edges[i + 1] - edges[i])]
                 for i in range(0, len(edges), 2)]
        rows.append([r, spans])
    return rows


def _step_payload(session: Session, rec) -> dict:
    out = {
        "seed": list(rec.seed),
        "added": rec.added,
        "removed": rec.removed,
        "mask_voxels": rec.mask_voxels,
        "stabilised": rec.stabilised,
    }
    if session.truth is not None:
        out["dice"] = dice_score(session.engine.mask, session.truth)
    return out


# ---------------------------------------------------------------------------
# HTTP plumbing
# ---------------------------------------------------------------------------

class Handler(BaseHTTPRequestHandler):
    state: ServiceState        # injected by make_server
    static_dir: Path | None = None
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # quiet by default
        pass

    # -- responses ---------------------------------------------------------
    def _send(self, status: int, body: bytes, ctype: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _json(self, obj, status: int = 200) -> None:
        self._send(status, json.dumps(obj).encode(), "application/json")

    def _error(self, err: HttpError) -> None:
        self._json(err.body(), err.status)

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else b""

    def _json_body(self) -> dict:
        raw = self._read_body()
        if not raw:
            return {}
        try:
            doc = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise HttpError(400, "bad_json", f"request body is not JSON: {exc}")
        if not isinstance(doc, dict):
            raise HttpError(400, "bad_json", "request body must be a JSON object")
        return doc

    # -- dispatch ----------------------------------------------------------
    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def _dispatch(self, method: str) -> None:
        try:
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]
            query = {k: v[-1] for k, v in parse_qs(url.query).items()}
            if url.path == "/" or not parts or parts[0] != "api":
                if method == "GET":
                    return self._static(url.path)
                raise HttpError(404, "not_found", f"no route {url.path}")
            if len(parts) < 2 or parts[1] != "v1":
                raise HttpError(404, "not_found", f"unknown API version in {url.path}")
            self._route(method, parts[2:], query)
        except HttpError as err:
            self._error(err)
        except SeedgrowError as exc:
            self._error(HttpError(400, exc.code, str(exc)))
        except Exception as exc:  # pragma: no cover - last resort
            self._error(HttpError(500, "internal", f"{type(exc).__name__}: {exc}"))

    def _route(self, method: str, parts: list, query: dict) -> None:
        state = self.state
        if parts == ["volumes"] and method == "POST":
            return self._post_volume()
        if parts == ["masks"] and method == "POST":
            return self._post_mask()
        if len(parts) == 2 and parts[0] == "volumes" and method == "GET":
            meta = state.volume_meta.get(parts[1])
            if meta is None:
                raise HttpError(404, "unknown_volume", f"no volume {parts[1]!r}")
            return self._json(meta)
        if len(parts) == 3 and parts[0] == "volumes" and parts[2] == "slice" \
                and method == "GET":
            return self._get_slice(parts[1], query)
        if parts == ["volumes"] and method == "GET":
            return self._json({"volumes": list(state.volume_meta.values())})
        if parts == ["models"] and method == "GET":
            return self._json({"policies": sorted(state.policies),
                               "surrogates": sorted(state.surrogates)})
        if parts == ["sessions"] and method == "POST":
            return self._post_session()
        if len(parts) >= 2 and parts[0] == "sessions":
            return self._session_route(method, parts[1], parts[2:], query)
        raise HttpError(404, "not_found", f"no route for {method} {'/'.join(parts)}")

    # -- volumes -----------------------------------------------------------
    def _post_volume(self) -> None:
        ctype = (self.headers.get("Content-Type") or "").split(";")[0].strip()
        if ctype == "application/octet-stream":
            try:
                volume = read_volume_bytes(self._read_body())
            except FileFormatError as exc:
                raise HttpError(400, "bad_volume", str(exc), exc.field)
            vid = self.state.add_volume(volume, source="<upload>")
        else:
            doc = self._json_body()
            path = doc.get("path")
            if not isinstance(path, str):
                raise HttpError(400, "bad_request", "need {'path': ...} or an "
                                "application/octet-stream SVF body", "path")
            try:
                volume = read_volume(path)
            except (OSError, FileFormatError) as exc:
                raise HttpError(400, "bad_volume", str(exc), "path")
            vid = self.state.add_volume(volume, source=path)
        self._json(self.state.volume_meta[vid], status=201)

    def _post_mask(self) -> None:
        doc = self._json_body()
        path = doc.get("path")
        if not isinstance(path, str):
            raise HttpError(400, "bad_request", "need {'path': ...}", "path")
        try:
            mask = read_mask(path)
        except (OSError, FileFormatError) as exc:
            raise HttpError(400, "bad_mask", str(exc), "path")
        mid = self.state.add_mask(mask, source=path)
        self._json({"mask_id": mid, "dims": list(mask.dims),
                    "voxels": mask.count()}, status=201)

    def _get_slice(self, vid: str, query: dict) -> None:
        volume = self.state.volumes.get(vid)
        if volume is None:
            raise HttpError(404, "unknown_volume", f"no volume {vid!r}")
        axis = _AXES.get(query.get("axis", "c"))
        if axis is None:
            raise HttpError(400, "bad_axis", f"axis must be one of a,b,c", "axis")
        try:
            index = int(query.get("index", volume.dims[axis] // 2))
            channel = int(query.get("channel", 0))
        except ValueError:
            raise HttpError(400, "bad_request", "index and channel must be ints")
        png = encode_gray_png(slice_plane(volume, axis, index, channel))
        self._send(200, png, "image/png")

    # -- sessions ----------------------------------------------------------
    def _post_session(self) -> None:
        doc = self._json_body()
        volume_id = doc.get("volume_id")
        if not isinstance(volume_id, str):
            raise HttpError(400, "bad_request", "volume_id required", "volume_id")
        session = self.state.new_session(
            volume_id,
            doc.get("policy_id", "default"),
            doc.get("surrogate_id", "default"),
            doc.get("truth_mask_id"))
        self._json({"session_id": session.session_id,
                    "volume_id": volume_id,
                    "horizon": self.state.env_cfg.horizon}, status=201)

    def _session_route(self, method: str, sid: str, rest: list, query: dict) -> None:
        state = self.state
        session = state.get_session(sid)
        eng = session.engine
        if rest == [] and method == "GET":
            return self._json({
                "session_id": sid,
                "volume_id": session.volume_id,
                "prompt": list(eng.prompt) if eng.prompt else None,
                "mask_voxels": eng.mask.count() if eng.mask is not None else None,
                "steps_run": len(eng.steps),
                "stabilised": eng.stabilised,
                "history": session.history,
            })
        if rest == ["prompt"] and method == "POST":
            doc = self._json_body()
            try:
                voxel = (int(doc["a"]), int(doc["b"]), int(doc["c"]))
            except (KeyError, TypeError, ValueError):
                raise HttpError(400, "bad_request", "need integer fields a, b, c")
            if not eng.env.volume.contains(voxel):
                raise HttpError(404, "bad_voxel",
                                f"voxel {voxel} outside dims {eng.env.volume.dims}")
            if not session.lock.acquire(blocking=False):
                raise HttpError(409, "busy", "refinement in flight for this session")
            try:
                eng.start(voxel)
                _, iterations, converged = eng.env.grow_details(voxel)
                payload = {
                    "prompt": list(voxel),
                    "mask_voxels": eng.mask.count(),
                    "grow_iterations": iterations,
                    "grow_converged": converged,
                }
                if session.truth is not None:
                    payload["dice"] = dice_score(eng.mask, session.truth)
                session.history.append({"event": "prompt", **payload})
            finally:
                session.lock.release()
            return self._json(payload)
        if rest == ["refine"] and method == "POST":
            doc = self._json_body()
            steps = doc.get("steps", "auto")
            if steps != "auto" and (not isinstance(steps, int) or steps < 1):
                raise HttpError(400, "bad_request",
                                "steps must be a positive int or 'auto'", "steps")
            if eng.mask is None:
                raise HttpError(409, "no_prompt", "prompt the session first")
            if eng.policy is None:
                raise HttpError(409, "no_policy", "session has no policy loaded")
            if not session.lock.acquire(blocking=False):
                raise HttpError(409, "busy", "refinement in flight for this session")
            try:
                records = []
                budget = self.state.env_cfg.horizon if steps == "auto" else steps
                while budget > 0 and not eng.done:
                    rec = eng.step()
                    records.append(_step_payload(session, rec))
                    budget -= 1
                session.history.extend(
                    {"event": "refine", **r} for r in records)
                return self._json({"steps": records,
                                   "stabilised": eng.stabilised,
                                   "steps_run": len(eng.steps),
                                   "done": eng.done})
            finally:
                session.lock.release()
        if rest == ["mask"] and method == "GET":
            if eng.mask is None:
                raise HttpError(404, "no_mask", "session has no mask yet")
            return self._send(200, mask_bytes(eng.mask), "application/octet-stream")
        if rest == ["overlay"] and method == "GET":
            if eng.mask is None:
                raise HttpError(404, "no_mask", "session has no mask yet")
            axis = _AXES.get(query.get("axis", "c"))
            if axis is None:
                raise HttpError(400, "bad_axis", "axis must be one of a,b,c", "axis")
            try:
                index = int(query.get("index", eng.mask.dims[axis] // 2))
            except ValueError:
                raise HttpError(400, "bad_request", "index must be an int", "index")
            return self._json({"axis": query.get("axis", "c"), "index": index,
                               "dims": list(eng.mask.dims),
                               "rows": mask_slice_rle(eng.mask, axis, index)})
        if rest == ["classification"] and method == "GET":
            if eng.mask is None:
                raise HttpError(404, "no_mask", "session has no mask yet")
            negative = classify_negative(eng.mask, self.state.env_cfg.grow)
            return self._json({"classification": "negative" if negative else "positive",
                               "mask_voxels": eng.mask.count(),
                               "threshold": self.state.env_cfg.grow.window_voxels()})
        if rest == ["reset-prompt"] and method == "POST":
            if not session.lock.acquire(blocking=False):
                raise HttpError(409, "busy", "refinement in flight for this session")
            try:
                eng.prompt = None
                eng.mask = None
                eng.steps = []
                eng.stabilised = False
                session.history.append({"event": "reset-prompt"})
            finally:
                session.lock.release()
            return self._json({"ok": True})
        raise HttpError(404, "not_found", f"no route for {method} sessions/{sid}/{'/'.join(rest)}")

    # -- static assets -----------------------------------------------------
    def _static(self, path: str) -> None:
        if self.static_dir is None:
            raise HttpError(404, "not_found", "no static assets configured")
        rel = path.lstrip("/") or "index.html"
        target = (self.static_dir / rel).resolve()
        if not str(target).startswith(str(self.static_dir.resolve())) \
                or not target.is_file():
            raise HttpError(404, "not_found", f"no asset {path!r}")
        ctype = {
            ".html": "text/html", ".js": "application/javascript",
            ".css": "text/css", ".png": "image/png", ".svg": "image/svg+xml",
            ".map": "application/json",
        }.get(target.suffix, "application/octet-stream")
        self._send(200, target.read_bytes(), ctype)


def make_server(state: ServiceState, host: str = "127.0.0.1", port: int = 0,
                static_dir: str | None = None) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (Handler,), {
        "state": state,
        "static_dir": Path(static_dir) if static_dir else None,
    })
    return ThreadingHTTPServer((host, port), handler)


def serve(state: ServiceState, host: str = "127.0.0.1", port: int = 8571,
          static_dir: str | None = None) -> None:
    server = make_server(state, host, port, static_dir)
    print(json.dumps({"serving": f"http://{host}:{server.server_address[1]}{API}"}))
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
