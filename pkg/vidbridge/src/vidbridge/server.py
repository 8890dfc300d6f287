"""VXDN/1 bridge server with analytic mock models.

Wire format, shared with the client package: every frame is a u32 LE payload
length, a u8 message type, then the payload. HELLO carries a u8 protocol
version plus u32 T and a u8 schedule-kind code and is echoed verbatim when
compatible. EPS requests hold a tensor payload (u32 t, c, h, w, then float32
LE data) and are answered by the configured model; ENC and DEC echo their
tensor unchanged. A malformed or incompatible frame gets one ERROR message
(UTF-8 text payload) and the connection is closed.

Each connection is served by its own thread and answered strictly in request
order; every response is written with a single sendall, so frames are never
interleaved. The analytic models (zero, gaussian_prior) exist so integration
tests need no ML runtime; a real model would register as another model kind
through the same request path ("external" is reserved for that and refused at
startup until an adapter is supplied).

The gaussian_prior model repeats the client-side arithmetic exactly: the
schedule table is rebuilt with the same float64 operations and the prediction
is computed in float64 and rounded once to float32, so served outputs are
bit-identical to a local evaluation.
"""

from __future__ import annotations

import argparse
import socketserver
import struct
import threading
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MODEL_KINDS",
    "PROTOCOL_VERSION",
    "SCHEDULE_KINDS",
    "BridgeServer",
    "ServerConfig",
    "alpha_bar_sequence",
    "serve",
    "main",
]

MSG_HELLO = 1
MSG_EPS_REQ = 2
MSG_EPS_RESP = 3
MSG_ENC_REQ = 4
MSG_ENC_RESP = 5
MSG_DEC_REQ = 6
MSG_DEC_RESP = 7
MSG_ERROR = 8

PROTOCOL_VERSION = 1
SCHEDULE_KINDS = ("scaled_linear", "linear", "cosine")
MODEL_KINDS = ("zero", "gaussian_prior", "external")

_FRAME = struct.Struct("<IB")
_HELLO_BODY = struct.Struct("<IB")
_TENSOR = struct.Struct("<IIII")
_VIRTUAL_STEPS = 1000
_MAX_PAYLOAD = 1 << 28  # anything larger is treated as a framing error

_ECHO_TYPES = {MSG_ENC_REQ: MSG_ENC_RESP, MSG_DEC_REQ: MSG_DEC_RESP}


class RequestRejected(Exception):
    """Request the server will not answer; the text goes out as ERROR."""


def alpha_bar_sequence(T: int, kind: str) -> np.ndarray:
    """Cumulative signal fractions alpha_bar[0..T] for the named ramp.

    scaled_linear and linear subsample the 1000-step beta ramps evenly to T;
    cosine uses the squared-cosine ramp floored at 1e-5 with the plateau
    nudged back to strict decrease.
    """
    T = int(T)
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if kind not in SCHEDULE_KINDS:
        raise ValueError(f"unknown schedule kind {kind!r}, choose from {SCHEDULE_KINDS}")

    if kind in ("scaled_linear", "linear"):
        if T > _VIRTUAL_STEPS:
            raise ValueError(f"{kind} schedule supports at most T={_VIRTUAL_STEPS}")
        if kind == "scaled_linear":
            betas = np.linspace(np.sqrt(0.00085), np.sqrt(0.012), _VIRTUAL_STEPS, dtype=np.float64) ** 2
        else:
            betas = np.linspace(0.0001, 0.02, _VIRTUAL_STEPS, dtype=np.float64)
        virtual = np.cumprod(1.0 - betas)
        steps = np.round(np.arange(1, T + 1) * (_VIRTUAL_STEPS / T)).astype(int)
        return np.concatenate([[1.0], virtual[steps - 1]])

    s = 0.008
    grid = np.arange(T + 1, dtype=np.float64) / T
    f = np.cos((grid + s) / (1.0 + s) * np.pi / 2.0) ** 2
    ab = np.maximum(f / f[0], 1e-5)
    for t in range(T - 1, 0, -1):
        ab[t] = max(ab[t], ab[t + 1] * (1.0 + 1e-9))
    return ab


@dataclass(frozen=True)
class ServerConfig:
    """Where to listen, which model answers EPS, and the schedule it assumes."""

    host: str = "127.0.0.1"
    port: int = 0
    model: str = "gaussian_prior"
    T: int = 25
    schedule_kind: str = "scaled_linear"

    def __post_init__(self) -> None:
        if self.model not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.model!r}, choose from {MODEL_KINDS}")
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if self.schedule_kind not in SCHEDULE_KINDS:
            raise ValueError(
                f"unknown schedule kind {self.schedule_kind!r}, choose from {SCHEDULE_KINDS}"
            )


def _unpack_tensor(payload: bytes) -> tuple[int, np.ndarray]:
    if len(payload) < _TENSOR.size:
        raise RequestRejected(f"tensor payload is {len(payload)} bytes, header needs {_TENSOR.size}")
    t, c, h, w = _TENSOR.unpack_from(payload)
    if min(c, h, w) < 1:
        raise RequestRejected(f"tensor dims must be positive, got ({c}, {h}, {w})")
    expected = _TENSOR.size + 4 * c * h * w
    if len(payload) != expected:
        raise RequestRejected(
            f"tensor payload is {len(payload)} bytes, dims ({c}, {h}, {w}) need {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4", offset=_TENSOR.size).reshape(c, h, w)
    return t, data


def _pack_tensor(t: int, arr: np.ndarray) -> bytes:
    c, h, w = arr.shape
    return _TENSOR.pack(t, c, h, w) + np.ascontiguousarray(arr, dtype="<f4").tobytes()


class _Bridge:
    """Stateless request -> response mapping shared by all connection threads."""

    def __init__(self, config: ServerConfig) -> None:
        self.config = config
        if config.model == "external":
            raise NotImplementedError(
                "the external model kind is an adapter extension point; "
                "serve zero or gaussian_prior"
            )
        self.alpha_bar = alpha_bar_sequence(config.T, config.schedule_kind)

    def respond(self, msg_type: int, payload: bytes) -> tuple[int, bytes]:
        if msg_type == MSG_HELLO:
            return self._hello(payload)
        if msg_type == MSG_EPS_REQ:
            t, z = _unpack_tensor(payload)
            return MSG_EPS_RESP, _pack_tensor(t, self._eps(z, t))
        if msg_type in _ECHO_TYPES:
            _unpack_tensor(payload)  # reject malformed tensors before echoing
            return _ECHO_TYPES[msg_type], payload
        raise RequestRejected(f"unexpected message type {msg_type}")

    def _hello(self, payload: bytes) -> tuple[int, bytes]:
        if len(payload) != 1 + _HELLO_BODY.size:
            raise RequestRejected(f"hello payload must be {1 + _HELLO_BODY.size} bytes, got {len(payload)}")
        version = payload[0]
        if version != PROTOCOL_VERSION:
            raise RequestRejected(f"unsupported protocol version {version}")
        t_steps, kind_code = _HELLO_BODY.unpack_from(payload, 1)
        if kind_code >= len(SCHEDULE_KINDS):
            raise RequestRejected(f"unknown schedule kind code {kind_code}")
        kind = SCHEDULE_KINDS[kind_code]
        cfg = self.config
        if t_steps != cfg.T or kind != cfg.schedule_kind:
            raise RequestRejected(
                f"schedule mismatch: client T={t_steps} kind={kind}, "
                f"server T={cfg.T} kind={cfg.schedule_kind}"
            )
        return MSG_HELLO, payload

    def _eps(self, z: np.ndarray, t: int) -> np.ndarray:
        if self.config.model == "zero":
            return np.zeros_like(z, dtype=np.float32)
        if not 1 <= t <= self.config.T:
            raise RequestRejected(f"timestep {t} outside [1, {self.config.T}]")
        scale = np.sqrt(1.0 - float(self.alpha_bar[t]))
        return (z.astype(np.float64) * scale).astype(np.float32)


class _Handler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        bridge: _Bridge = self.server.bridge  # type: ignore[attr-defined]
        try:
            while True:
                header = self._read_exact(_FRAME.size)
                if header is None:
                    return
                length, msg_type = _FRAME.unpack(header)
                if length > _MAX_PAYLOAD:
                    self._send(MSG_ERROR, f"payload length {length} exceeds limit".encode())
                    return
                payload = self._read_exact(length) if length else b""
                if payload is None:
                    return
                try:
                    resp_type, resp_payload = bridge.respond(msg_type, payload)
                except RequestRejected as exc:
                    self._send(MSG_ERROR, str(exc).encode())
                    return
                self._send(resp_type, resp_payload)
        except (ConnectionError, OSError):
            return

    def _read_exact(self, n: int) -> bytes | None:
        buf = b""
        while len(buf) < n:
            chunk = self.request.recv(n - len(buf))
            if not chunk:
                return None  # peer closed; mid-frame or clean, nothing to answer
            buf += chunk
        return buf

    def _send(self, msg_type: int, payload: bytes) -> None:
        # one sendall per response keeps frames atomic on the wire
        self.request.sendall(_FRAME.pack(len(payload), msg_type) + payload)


class _TcpServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class BridgeServer:
    """Owns the listening socket; start/stop for embedding, serve_forever for main."""

    def __init__(self, config: ServerConfig) -> None:
        self.config = config
        self._server = _TcpServer((config.host, config.port), _Handler)
        self._server.bridge = _Bridge(config)  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._server.server_address[:2]
        return str(host), int(port)

    @property
    def port(self) -> int:
        return self.address[1]

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join()
            self._thread = None

    def serve_forever(self) -> None:
        try:
            self._server.serve_forever()
        finally:
            self._server.server_close()

    def __enter__(self) -> "BridgeServer":
        self.start()
        return self

    def __exit__(self, *exc: object) -> None:
        self.stop()


def serve(config: ServerConfig) -> None:
    """Bind and answer until terminated."""
    server = BridgeServer(config)
    host, port = server.address
    print(f"vidbridge: serving {config.model} (T={config.T}, {config.schedule_kind}) on {host}:{port}", flush=True)
    server.serve_forever()


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(prog="vidbridge", description=__doc__.splitlines()[0])
    parser.add_argument("--listen", default="127.0.0.1:8471", help="HOST:PORT to bind")
    parser.add_argument("--model", default="gaussian_prior", choices=[k for k in MODEL_KINDS if k != "external"])
    parser.add_argument("--steps", type=int, default=25, help="schedule length T")
    parser.add_argument("--schedule", default="scaled_linear", choices=SCHEDULE_KINDS)
    args = parser.parse_args(argv)
    host, _, port = args.listen.rpartition(":")
    if not host or not port.isdigit():
        parser.error(f"--listen must be HOST:PORT, got {args.listen!r}")
    serve(ServerConfig(host=host, port=int(port), model=args.model,
                       T=args.steps, schedule_kind=args.schedule))


if __name__ == "__main__":
    main()
