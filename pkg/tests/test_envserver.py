"""Protocol server tests over real TCP and websocket sockets."""
import base64
import hashlib
import json
import socket
import struct

import numpy as np
import pytest

from lapkit.envs import make_env
from lapkit.envserver import (
    EnvServer,
    Session,
    read_tcp_message,
    write_tcp_message,
)


@pytest.fixture
def tcp_server():
    srv = EnvServer(port=0, transport="tcp")
    srv.start()
    yield srv
    srv.stop()


@pytest.fixture
def ws_server():
    srv = EnvServer(port=0, transport="websocket")
    srv.start()
    yield srv
    srv.stop()


def _connect(srv):
    return socket.create_connection(("127.0.0.1", srv.port), timeout=5)


def _rpc(conn, message):
    write_tcp_message(conn, message)
    return read_tcp_message(conn)


# -- session logic (transport-independent) ------------------------------
def test_hello_handshake():
    resp = Session().handle({"type": "hello", "id": 1})
    assert resp["type"] == "ok" and resp["id"] == 1
    assert resp["payload"]["protocol_version"] == 1
    assert "reach" in resp["payload"]["env_ids"]


def test_step_before_make_not_ready():
    resp = Session().handle({"type": "step", "id": 2,
                             "payload": {"action": [0, 0, 0]}})
    assert resp["type"] == "error"
    assert resp["payload"]["code"] == "NOT_READY"


def test_bad_message_shapes():
    s = Session()
    assert s.handle([1, 2])["payload"]["code"] == "BAD_MESSAGE"
    assert s.handle({"type": "hello"})["payload"]["code"] == "BAD_MESSAGE"
    assert s.handle({"type": "warp", "id": 1})["payload"]["code"] == \
        "BAD_MESSAGE"


def test_make_invalid_env():
    resp = Session().handle({"type": "make", "id": 1,
                             "payload": {"env_id": "bogus"}})
    assert resp["payload"]["code"] == "INVALID_CONFIG"


def test_action_shape_error_code():
    s = Session()
    s.handle({"type": "make", "id": 1, "payload": {"env_id": "reach"}})
    s.handle({"type": "reset", "id": 2, "payload": {"seed": 0}})
    resp = s.handle({"type": "step", "id": 3, "payload": {"action": [0, 0]}})
    assert resp["payload"]["code"] == "ACTION_SHAPE"


def test_same_seed_identical_payload_bytes():
    s = Session()
    s.handle({"type": "make", "id": 1, "payload": {"env_id": "reach"}})
    a = s.handle({"type": "reset", "id": 2, "payload": {"seed": 5}})
    b = s.handle({"type": "reset", "id": 3, "payload": {"seed": 5}})
    assert json.dumps(a["payload"]) == json.dumps(b["payload"])


# -- TCP transport -------------------------------------------------------
def test_tcp_remote_equals_in_process(tcp_server):
    conn = _connect(tcp_server)
    try:
        _rpc(conn, {"type": "make", "id": 1, "payload": {"env_id": "reach"}})
        remote_obs = _rpc(conn, {"type": "reset", "id": 2,
                                 "payload": {"seed": 11}})["payload"][
                                     "observation"]
        env = make_env("reach")
        local_obs = env.reset(seed=11)
        assert json.dumps(remote_obs) == json.dumps(
            [float(x) for x in local_obs]
        )
        action = [0.3, -0.2, 0.5]
        remote = _rpc(conn, {"type": "step", "id": 3,
                             "payload": {"action": action}})["payload"]
        local = env.step(np.asarray(action))
        assert remote["reward"] == local.reward
        assert json.dumps(remote["observation"]) == json.dumps(
            [float(x) for x in local.observation]
        )
    finally:
        conn.close()


def test_tcp_sessions_are_isolated(tcp_server):
    c1, c2 = _connect(tcp_server), _connect(tcp_server)
    try:
        _rpc(c1, {"type": "make", "id": 1, "payload": {"env_id": "reach"}})
        _rpc(c2, {"type": "make", "id": 1,
                  "payload": {"env_id": "deflect_spheres"}})
        o1 = _rpc(c1, {"type": "reset", "id": 2, "payload": {"seed": 0}})
        o2 = _rpc(c2, {"type": "reset", "id": 2, "payload": {"seed": 0}})
        assert len(o1["payload"]["observation"]) == 6
        assert len(o2["payload"]["observation"]) == 29
        r1 = _rpc(c1, {"type": "step", "id": 3,
                       "payload": {"action": [0.1, 0.1, 0.1]}})
        assert r1["type"] == "ok"
    finally:
        c1.close()
        c2.close()


def test_tcp_render_frame(tcp_server):
    conn = _connect(tcp_server)
    try:
        _rpc(conn, {"type": "make", "id": 1, "payload": {"env_id": "reach"}})
        _rpc(conn, {"type": "reset", "id": 2, "payload": {"seed": 0}})
        frame = _rpc(conn, {"type": "render", "id": 3})
        assert frame["type"] == "frame"
        h, w, c = frame["payload"]["shape"]
        rgb = base64.b64decode(frame["payload"]["rgb"])
        assert len(rgb) == h * w * c
    finally:
        conn.close()


def test_tcp_record_start_stop(tcp_server, tmp_path):
    conn = _connect(tcp_server)
    out = tmp_path / "session.lgtraj"
    try:
        _rpc(conn, {"type": "make", "id": 1, "payload": {"env_id": "reach"}})
        _rpc(conn, {"type": "reset", "id": 2, "payload": {"seed": 4}})
        _rpc(conn, {"type": "record_start", "id": 3,
                    "payload": {"path": str(out)}})
        for k in range(5):
            _rpc(conn, {"type": "step", "id": 10 + k,
                        "payload": {"action": [0.2, 0.0, 0.0]}})
        stop = _rpc(conn, {"type": "record_stop", "id": 20})
        assert stop["payload"]["steps"] == 5
    finally:
        conn.close()
    from lapkit.trajstore import read

    traj = read(out)
    assert len(traj.steps) == 5
    assert traj.seed == 4


def test_tcp_malformed_frame_keeps_session(tcp_server):
    conn = _connect(tcp_server)
    try:
        body = b"this is not json"
        conn.sendall(struct.pack(">I", len(body)) + body)
        resp = read_tcp_message(conn)
        assert resp["payload"]["code"] == "BAD_MESSAGE"
        ok = _rpc(conn, {"type": "hello", "id": 9})
        assert ok["type"] == "ok"
    finally:
        conn.close()


def test_tcp_fuzzing_does_not_kill_server(tcp_server):
    rng = np.random.default_rng(0)
    for _ in range(50):
        conn = _connect(tcp_server)
        try:
            junk = rng.integers(0, 256, size=rng.integers(1, 200),
                                dtype=np.uint8).tobytes()
            conn.sendall(struct.pack(">I", len(junk)) + junk)
            read_tcp_message(conn)
        except (ConnectionError, OSError, ValueError, json.JSONDecodeError):
            pass
        finally:
            conn.close()
    conn = _connect(tcp_server)
    try:
        assert _rpc(conn, {"type": "hello", "id": 1})["type"] == "ok"
    finally:
        conn.close()


# -- websocket transport -------------------------------------------------
def _ws_connect(srv):
    conn = _connect(srv)
    key = base64.b64encode(b"0123456789abcdef").decode("ascii")
    conn.sendall(
        (
            "GET / HTTP/1.1\r\nHost: localhost\r\nUpgrade: websocket\r\n"
            "Connection: Upgrade\r\nSec-WebSocket-Key: "
            f"{key}\r\nSec-WebSocket-Version: 13\r\n\r\n"
        ).encode("ascii")
    )
    data = b""
    while b"\r\n\r\n" not in data:
        data += conn.recv(4096)
    accept = base64.b64encode(
        hashlib.sha1(
            key.encode() + b"258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
        ).digest()
    ).decode("ascii")
    assert accept.encode("ascii") in data
    return conn


def _ws_send(conn, obj):
    payload = json.dumps(obj).encode("utf-8")
    mask = b"\x12\x34\x56\x78"
    masked = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    n = len(payload)
    if n < 126:
        header = bytes([0x81, 0x80 | n])
    else:
        header = bytes([0x81, 0x80 | 126]) + struct.pack(">H", n)
    conn.sendall(header + mask + masked)


def _ws_recv(conn):
    def read_exact(k):
        buf = b""
        while len(buf) < k:
            chunk = conn.recv(k - len(buf))
            assert chunk
            buf += chunk
        return buf

    head = read_exact(2)
    length = head[1] & 0x7F
    if length == 126:
        (length,) = struct.unpack(">H", read_exact(2))
    elif length == 127:
        (length,) = struct.unpack(">Q", read_exact(8))
    return json.loads(read_exact(length).decode("utf-8"))


def test_websocket_round_trip(ws_server):
    conn = _ws_connect(ws_server)
    try:
        _ws_send(conn, {"type": "hello", "id": 1})
        hello = _ws_recv(conn)
        assert hello["payload"]["protocol_version"] == 1
        _ws_send(conn, {"type": "make", "id": 2,
                        "payload": {"env_id": "reach"}})
        assert _ws_recv(conn)["type"] == "ok"
        _ws_send(conn, {"type": "reset", "id": 3, "payload": {"seed": 11}})
        obs = _ws_recv(conn)["payload"]["observation"]
        env = make_env("reach")
        assert json.dumps(obs) == json.dumps(
            [float(x) for x in env.reset(seed=11)]
        )
    finally:
        conn.close()
