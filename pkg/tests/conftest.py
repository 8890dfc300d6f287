"""Shared fixtures: synthetic videos and an independently implemented mock
denoiser server (framing hand-rolled with struct, schedule recomputed from
scratch) so client and server code paths cross-check each other."""

from __future__ import annotations

import socket
import socketserver
import struct
import threading
import time

import numpy as np
import pytest

from vidrestore import RangeTag, VideoTensor, seeded_rng
from vidrestore.kernels import conv_axis, gaussian_kernel

# Acceptance tests register one line each; the terminal summary prints them
# together with the whole-suite wall-clock budget.
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []
SUITE_BUDGET_SECONDS = 300.0
_session_started = 0.0


def record_acceptance(name: str, ok: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS.append((name, ok, detail))


def pytest_sessionstart(session: pytest.Session) -> None:
    global _session_started
    _session_started = time.perf_counter()


def pytest_terminal_summary(terminalreporter, exitstatus: int, config) -> None:
    if not ACCEPTANCE_RESULTS:
        return
    elapsed = time.perf_counter() - _session_started
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        line = f"{'PASS' if ok else 'FAIL'} - {name}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
    budget_ok = elapsed < SUITE_BUDGET_SECONDS
    terminalreporter.write_line(
        f"{'PASS' if budget_ok else 'FAIL'} - suite wall clock "
        f"{elapsed:.1f}s < {SUITE_BUDGET_SECONDS:.0f}s"
    )

MSG_HELLO = 1
MSG_EPS_REQ = 2
MSG_EPS_RESP = 3
MSG_ENC_REQ = 4
MSG_ENC_RESP = 5
MSG_DEC_REQ = 6
MSG_DEC_RESP = 7
MSG_ERROR = 8

_FRAME = struct.Struct("<IB")
_TENSOR = struct.Struct("<IIII")


def smooth_video(n: int, c: int, h: int, w: int, seed: int,
                 blur_sigma: float = 5.0, amp: float = 0.8) -> VideoTensor:
    """Band-limited random video; frames correlate through temporal smoothing."""
    rng = seeded_rng(seed, 2)
    base = rng.standard_normal((n, c, h, w))
    taps = gaussian_kernel(int(np.ceil(3 * blur_sigma)) * 2 + 1, blur_sigma)
    sm = conv_axis(conv_axis(base, taps, 2, "reflect"), taps, 3, "reflect")
    tt = gaussian_kernel(5, 1.0)
    sm = conv_axis(sm, tt, 0, "replicate")
    sm = sm / np.abs(sm).max() * amp
    return VideoTensor(sm.astype(np.float32), RangeTag.SYMMETRIC)


def reference_alpha_bar(T: int, kind: str = "scaled_linear") -> np.ndarray:
    """Brute-force schedule recomputation, independent of the package code."""
    if kind == "scaled_linear":
        betas = np.linspace(0.00085 ** 0.5, 0.012 ** 0.5, 1000, dtype=np.float64) ** 2
    elif kind == "linear":
        betas = np.linspace(0.0001, 0.02, 1000, dtype=np.float64)
    else:
        raise ValueError(kind)
    full = np.cumprod(1.0 - betas)
    idx = [int(round(t * 1000 / T)) - 1 for t in range(1, T + 1)]
    return np.concatenate([[1.0], full[idx]])


def pack_frame(msg_type: int, payload: bytes) -> bytes:
    return _FRAME.pack(len(payload), msg_type) + payload


def pack_tensor_payload(t: int, arr: np.ndarray) -> bytes:
    c, h, w = arr.shape
    return _TENSOR.pack(t, c, h, w) + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def unpack_tensor_payload(payload: bytes) -> tuple[int, np.ndarray]:
    t, c, h, w = _TENSOR.unpack_from(payload, 0)
    data = np.frombuffer(payload, dtype="<f4", offset=_TENSOR.size)
    return t, data.reshape(c, h, w).astype(np.float32)


class MockVxdnServer(socketserver.ThreadingTCPServer):
    """Configurable stand-in denoiser endpoint for client tests.

    model: 'zero' or 'gaussian' (gaussian needs T; recomputes alpha_bar itself).
    Fault switches let tests drive every client error path.
    """

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, model: str = "zero", T: int = 25, kind: str = "scaled_linear"):
        super().__init__(("127.0.0.1", 0), _MockHandler)
        self.model = model
        self.T = T
        self.kind = kind
        self.alpha_bar = reference_alpha_bar(T, kind)
        self.fail_eps_with_error = False
        self.respond_wrong_type = False
        self.truncate_response = False
        self.drop_after_header = False
        self.hello_version = 1
        self.requests_seen: list[int] = []
        self._lock = threading.Lock()
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)

    def start(self) -> "MockVxdnServer":
        self._thread.start()
        return self

    @property
    def endpoint(self) -> str:
        host, port = self.server_address
        return f"{host}:{port}"

    def stop(self) -> None:
        self.shutdown()
        self.server_close()

    def eps_of(self, t: int, z: np.ndarray) -> np.ndarray:
        if self.model == "zero":
            return np.zeros_like(z, dtype=np.float32)
        scale = np.sqrt(1.0 - float(self.alpha_bar[t]))
        return (z.astype(np.float64) * scale).astype(np.float32)


class _MockHandler(socketserver.BaseRequestHandler):
    server: MockVxdnServer

    def _send(self, msg_type: int, payload: bytes) -> None:
        self.request.sendall(pack_frame(msg_type, payload))

    def handle(self) -> None:
        srv = self.server
        reader = self.request.makefile("rb")
        while True:
            head = reader.read(_FRAME.size)
            if len(head) < _FRAME.size:
                return
            length, msg_type = _FRAME.unpack(head)
            payload = reader.read(length)
            if len(payload) < length:
                return
            with srv._lock:
                srv.requests_seen.append(msg_type)
            if msg_type == MSG_HELLO:
                self._send(MSG_HELLO, bytes([srv.hello_version]))
                continue
            if msg_type not in (MSG_EPS_REQ, MSG_ENC_REQ, MSG_DEC_REQ):
                self._send(MSG_ERROR, b"unknown message type")
                return
            if srv.drop_after_header:
                self.request.sendall(_FRAME.pack(1000, MSG_EPS_RESP))
                return
            t, z = unpack_tensor_payload(payload)
            if msg_type == MSG_EPS_REQ:
                if srv.fail_eps_with_error:
                    self._send(MSG_ERROR, b"model exploded")
                    continue
                out = srv.eps_of(t, z)
                resp_type = MSG_EPS_RESP
            elif msg_type == MSG_ENC_REQ:
                out = z
                resp_type = MSG_ENC_RESP
            else:
                out = z
                resp_type = MSG_DEC_RESP
            if srv.respond_wrong_type:
                resp_type = MSG_DEC_RESP if resp_type == MSG_EPS_RESP else MSG_EPS_RESP
            frame = pack_frame(resp_type, pack_tensor_payload(t, out))
            if srv.truncate_response:
                self.request.sendall(frame[: len(frame) // 2])
                self.request.close()
                return
            self.request.sendall(frame)


@pytest.fixture
def mock_server():
    servers: list[MockVxdnServer] = []

    def make(**kwargs) -> MockVxdnServer:
        srv = MockVxdnServer(**kwargs).start()
        servers.append(srv)
        return srv

    yield make
    for srv in servers:
        srv.stop()
