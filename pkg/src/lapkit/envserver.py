"""Serve environments to remote clients over framed JSON (protocol v1).

Two transports share one session implementation:
- tcp: 4-byte big-endian length prefix, then a UTF-8 JSON document
- websocket: RFC 6455 text frames, one JSON document per frame
"""
from __future__ import annotations

import base64
import hashlib
import json
import os
import socket
import struct
import threading
import time

import numpy as np

from . import __version__ as SERVER_VERSION
from .envcore import config_from_dict, config_to_dict
from .envs import ENV_IDS, default_config, make_env
from .errors import (
    ActionShapeMismatch,
    BindFailure,
    InvalidConfig,
    LapkitError,
    NotReset,
    UnknownEnv,
)
from .sensors import render
from .trajstore import StepRecord, TrajectoryRecord, _encode_observation, write

PROTOCOL_VERSION = 1
DEFAULT_PORT = 7801
_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


def default_port() -> int:
    return int(os.environ.get("LAPKIT_PORT", DEFAULT_PORT))


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


class Session:
    """One client connection: at most one live environment, strict ordering."""

    def __init__(self):
        self.env = None
        self.env_id = None
        self.seed = None
        self.recording = None
        self.record_path = None
        self.closed = False

    # -- dispatch -------------------------------------------------------
    def handle(self, message: dict) -> dict:
        if not isinstance(message, dict):
            return self._error(None, "BAD_MESSAGE", "message must be an object")
        msg_id = message.get("id")
        if not isinstance(msg_id, int):
            return self._error(None, "BAD_MESSAGE", "missing integer 'id'")
        mtype = message.get("type")
        handler = getattr(self, f"_on_{mtype}", None) if isinstance(mtype, str) \
            else None
        if handler is None:
            return self._error(msg_id, "BAD_MESSAGE", f"unknown type {mtype!r}")
        try:
            return handler(msg_id, message.get("payload") or {})
        except NotReset as exc:
            return self._error(msg_id, "NOT_READY", str(exc))
        except (InvalidConfig, UnknownEnv) as exc:
            return self._error(msg_id, "INVALID_CONFIG", str(exc))
        except ActionShapeMismatch as exc:
            return self._error(msg_id, "ACTION_SHAPE", str(exc))
        except (LapkitError, Exception) as exc:  # noqa: BLE001 - must not crash
            return self._error(msg_id, "INTERNAL", f"{type(exc).__name__}: {exc}")

    @staticmethod
    def _ok(msg_id, payload) -> dict:
        return {"type": "ok", "id": msg_id, "payload": payload}

    @staticmethod
    def _error(msg_id, code, message) -> dict:
        return {"type": "error", "id": msg_id,
                "payload": {"code": code, "message": message}}

    def _require_env(self):
        if self.env is None:
            raise NotReset("no environment; send 'make' first")
        return self.env

    # -- message handlers -----------------------------------------------
    def _on_hello(self, msg_id, _payload):
        return self._ok(msg_id, {
            "server_version": SERVER_VERSION,
            "protocol_version": PROTOCOL_VERSION,
            "env_ids": list(ENV_IDS),
        })

    def _on_make(self, msg_id, payload):
        env_id = payload.get("env_id")
        if not isinstance(env_id, str):
            raise InvalidConfig("make requires a string 'env_id'")
        config = None
        if payload.get("config") is not None:
            overrides = payload["config"]
            if not isinstance(overrides, dict):
                raise InvalidConfig("make 'config' must be a JSON object")
            # Partial records are merged over the environment's defaults;
            # unknown keys are still rejected by the strict parser.
            merged = dict(config_to_dict(default_config(env_id)))
            merged.update(overrides)
            config = config_from_dict(merged)
        self.env = make_env(env_id, config)
        self.env_id = env_id
        self.seed = None
        return self._ok(msg_id, {"env_id": env_id,
                                 "action_dim": self.env.action_dim})

    def _on_reset(self, msg_id, payload):
        env = self._require_env()
        seed = payload.get("seed", 0)
        if not isinstance(seed, int):
            raise InvalidConfig("reset 'seed' must be an integer")
        obs = env.reset(seed=seed)
        self.seed = seed
        if self.recording is not None:
            self.recording.seed = seed
            self.recording.steps = []
        return self._ok(msg_id, {"observation": _jsonable(obs)})

    def _on_step(self, msg_id, payload):
        env = self._require_env()
        action = payload.get("action")
        if not isinstance(action, list):
            raise ActionShapeMismatch("step 'action' must be a list")
        arr = np.asarray(action, dtype=float)
        result = env.step(arr)
        if self.recording is not None:
            self.recording.steps.append(StepRecord(
                index=len(self.recording.steps),
                action=[float(x) for x in arr],
                reward=float(result.reward),
                reward_breakdown=[[fid, float(v)]
                                  for fid, v in result.info["reward_breakdown"]],
                terminated=bool(result.terminated),
                truncated=bool(result.truncated),
                custom={},
                observation=_encode_observation(result.observation),
            ))
        return self._ok(msg_id, {
            "observation": _jsonable(result.observation),
            "reward": float(result.reward),
            "terminated": bool(result.terminated),
            "truncated": bool(result.truncated),
            "info": _jsonable(result.info),
        })

    def _on_render(self, msg_id, _payload):
        env = self._require_env()
        if not env._was_reset:
            raise NotReset("reset before render")
        fb = render(env.scene(), env.camera())
        return {"type": "frame", "id": msg_id, "payload": {
            "shape": list(fb.rgb.shape),
            "rgb": base64.b64encode(fb.rgb.tobytes()).decode("ascii"),
            "depth": base64.b64encode(
                fb.depth.astype("<f4").tobytes()).decode("ascii"),
            "segmentation": base64.b64encode(
                fb.segmentation.astype("<i4").tobytes()).decode("ascii"),
        }}

    def _on_record_start(self, msg_id, payload):
        env = self._require_env()
        path = payload.get("path")
        if not isinstance(path, str) or not path:
            raise InvalidConfig("record_start requires a string 'path'")
        if self.seed is None:
            raise NotReset("reset before record_start")
        self.recording = TrajectoryRecord(
            env_id=self.env_id, config=env.config, seed=self.seed,
            source=payload.get("source", "human"),
        )
        self.record_path = path
        return self._ok(msg_id, {"recording": True, "path": path})

    def _on_record_stop(self, msg_id, _payload):
        if self.recording is None:
            raise NotReset("no recording in progress")
        traj, path = self.recording, self.record_path
        self.recording = None
        self.record_path = None
        write(traj, path)
        return self._ok(msg_id, {"recording": False, "path": path,
                                 "steps": len(traj.steps)})

    def _on_close(self, msg_id, _payload):
        self.env = None
        self.closed = True
        return self._ok(msg_id, {"closed": True})


# -- TCP framing ---------------------------------------------------------
def _recv_exact(conn: socket.socket, n: int) -> bytes | None:
    buf = b""
    while len(buf) < n:
        chunk = conn.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def read_tcp_message(conn: socket.socket) -> dict | None:
    head = _recv_exact(conn, 4)
    if head is None:
        return None
    (length,) = struct.unpack(">I", head)
    if length > 64 * 1024 * 1024:
        raise ValueError("frame too large")
    body = _recv_exact(conn, length)
    if body is None:
        return None
    return json.loads(body.decode("utf-8"))


def write_tcp_message(conn: socket.socket, message: dict) -> None:
    body = json.dumps(message).encode("utf-8")
    conn.sendall(struct.pack(">I", len(body)) + body)


def _tcp_session(conn: socket.socket) -> None:
    session = Session()
    try:
        while not session.closed:
            try:
                message = read_tcp_message(conn)
            except (ValueError, UnicodeDecodeError) as exc:
                write_tcp_message(conn, Session._error(
                    None, "BAD_MESSAGE", str(exc)))
                continue
            if message is None:
                break
            write_tcp_message(conn, session.handle(message))
    except (ConnectionError, OSError):
        pass
    finally:
        conn.close()


# -- websocket framing ---------------------------------------------------
def _ws_handshake(conn: socket.socket) -> bool:
    data = b""
    while b"\r\n\r\n" not in data:
        chunk = conn.recv(4096)
        if not chunk:
            return False
        data += chunk
        if len(data) > 65536:
            return False
    headers = {}
    for line in data.split(b"\r\n")[1:]:
        if b":" in line:
            k, v = line.split(b":", 1)
            headers[k.strip().lower()] = v.strip()
    key = headers.get(b"sec-websocket-key")
    if key is None:
        return False
    accept = base64.b64encode(
        hashlib.sha1(key + _WS_GUID.encode("ascii")).digest()
    ).decode("ascii")
    conn.sendall(
        b"HTTP/1.1 101 Switching Protocols\r\n"
        b"Upgrade: websocket\r\n"
        b"Connection: Upgrade\r\n"
        b"Sec-WebSocket-Accept: " + accept.encode("ascii") + b"\r\n\r\n"
    )
    return True


def _ws_read_frame(conn: socket.socket):
    head = _recv_exact(conn, 2)
    if head is None:
        return None, None
    opcode = head[0] & 0x0F
    masked = bool(head[1] & 0x80)
    length = head[1] & 0x7F
    if length == 126:
        ext = _recv_exact(conn, 2)
        if ext is None:
            return None, None
        (length,) = struct.unpack(">H", ext)
    elif length == 127:
        ext = _recv_exact(conn, 8)
        if ext is None:
            return None, None
        (length,) = struct.unpack(">Q", ext)
    mask = b"\x00" * 4
    if masked:
        mask = _recv_exact(conn, 4)
        if mask is None:
            return None, None
    payload = _recv_exact(conn, length) if length else b""
    if payload is None:
        return None, None
    if masked:
        payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    return opcode, payload


def _ws_send_frame(conn: socket.socket, payload: bytes, opcode: int = 0x1):
    header = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        header += bytes([n])
    elif n < 65536:
        header += bytes([126]) + struct.pack(">H", n)
    else:
        header += bytes([127]) + struct.pack(">Q", n)
    conn.sendall(header + payload)


def _ws_session(conn: socket.socket) -> None:
    session = Session()
    try:
        if not _ws_handshake(conn):
            return
        while not session.closed:
            opcode, payload = _ws_read_frame(conn)
            if opcode is None or opcode == 0x8:  # closed / close frame
                break
            if opcode == 0x9:  # ping
                _ws_send_frame(conn, payload, opcode=0xA)
                continue
            if opcode not in (0x1, 0x2):
                continue
            try:
                message = json.loads(payload.decode("utf-8"))
            except (ValueError, UnicodeDecodeError) as exc:
                response = Session._error(None, "BAD_MESSAGE", str(exc))
            else:
                response = session.handle(message)
            _ws_send_frame(conn, json.dumps(response).encode("utf-8"))
    except (ConnectionError, OSError):
        pass
    finally:
        conn.close()


# -- server --------------------------------------------------------------
class EnvServer:
    """Threaded server; one session thread per connection."""

    def __init__(self, host: str = "127.0.0.1", port: int | None = None,
                 transport: str = "tcp", max_sessions: int = 32):
        if transport not in ("tcp", "websocket"):
            raise InvalidConfig("transport must be 'tcp' or 'websocket'")
        self.host = host
        self.port = port if port is not None else default_port()
        self.transport = transport
        self.max_sessions = max_sessions
        self._sock = None
        self._thread = None
        self._stop = threading.Event()

    def start(self) -> None:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind((self.host, self.port))
        except OSError as exc:
            sock.close()
            raise BindFailure(f"cannot bind {self.host}:{self.port}: {exc}")
        if self.port == 0:
            self.port = sock.getsockname()[1]
        sock.listen(self.max_sessions)
        sock.settimeout(0.2)
        self._sock = sock
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._thread.start()

    def _accept_loop(self) -> None:
        handler = _tcp_session if self.transport == "tcp" else _ws_session
        while not self._stop.is_set():
            try:
                conn, _addr = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            threading.Thread(target=handler, args=(conn,), daemon=True).start()
        self._sock.close()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)

    def serve_forever(self) -> None:
        self.start()
        try:
            while True:
                time.sleep(0.5)
        except KeyboardInterrupt:
            self.stop()


def serve(address: str | None = None, transport: str = "tcp",
          max_sessions: int = 32) -> None:
    """Blocking entry point: serve until interrupted."""
    host, port = "127.0.0.1", default_port()
    if address:
        host, _, port_s = address.rpartition(":")
        host = host or "127.0.0.1"
        port = int(port_s)
    EnvServer(host, port, transport, max_sessions).serve_forever()
