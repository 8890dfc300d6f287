"""Client side of the VXDN/1 remote-model wire protocol.

Every message on the stream is [u32 LE payload_length][u8 type][payload].
Tensor payloads are u32 t, u32 c, u32 h, u32 w followed by c*h*w float32 LE
values. A connection opens with a HELLO exchange; after that, requests and
responses alternate strictly in order on each connection. The HELLO payload
is the protocol version byte, optionally followed by u32 T and u8 schedule
kind so a schedule-dependent server can reject a mismatched client.

The pool hands one connection to one in-flight request at a time, so a
multi-threaded caller gets concurrency equal to the pool size without ever
interleaving frames on a single socket.
"""

from __future__ import annotations

import queue
import socket
import struct
from dataclasses import dataclass

import numpy as np

from .denoisers import LatentCodec
from .errors import ParameterError, ProtocolError, RemoteModelError, TransportError
from .schedule import SCHEDULE_KINDS, NoiseSchedule

__all__ = [
    "MSG_HELLO",
    "MSG_EPS_REQ",
    "MSG_EPS_RESP",
    "MSG_ENC_REQ",
    "MSG_ENC_RESP",
    "MSG_DEC_REQ",
    "MSG_DEC_RESP",
    "MSG_ERROR",
    "PROTOCOL_VERSION",
    "pack_tensor",
    "unpack_tensor",
    "read_message",
    "write_message",
    "RemoteDenoiser",
    "remote_denoiser",
    "remote_codec",
]

PROTOCOL_VERSION = 1

MSG_HELLO = 1
MSG_EPS_REQ = 2
MSG_EPS_RESP = 3
MSG_ENC_REQ = 4
MSG_ENC_RESP = 5
MSG_DEC_REQ = 6
MSG_DEC_RESP = 7
MSG_ERROR = 8

_FRAME_HEADER = struct.Struct("<IB")  # payload length, message type
_TENSOR_HEADER = struct.Struct("<IIII")  # t, c, h, w


def pack_tensor(t: int, frame: np.ndarray) -> bytes:
    """Serialize one (c, h, w) float32 frame with its timestep."""
    if frame.ndim != 3:
        raise ParameterError(f"wire tensors are single (c,h,w) frames, got ndim={frame.ndim}")
    c, h, w = frame.shape
    return _TENSOR_HEADER.pack(int(t), c, h, w) + np.ascontiguousarray(frame, dtype="<f4").tobytes()


def unpack_tensor(payload: bytes) -> tuple[int, np.ndarray]:
    """Inverse of :func:`pack_tensor`; raises ProtocolError on bad layout."""
    if len(payload) < _TENSOR_HEADER.size:
        raise ProtocolError(f"tensor payload of {len(payload)} bytes is shorter than its header")
    t, c, h, w = _TENSOR_HEADER.unpack_from(payload)
    body = payload[_TENSOR_HEADER.size :]
    if len(body) != c * h * w * 4:
        raise ProtocolError(f"tensor payload declares {c}x{h}x{w} but carries {len(body)} bytes")
    frame = np.frombuffer(body, dtype="<f4").reshape(c, h, w).astype(np.float32)
    return t, frame


def write_message(sock: socket.socket, msg_type: int, payload: bytes) -> None:
    try:
        sock.sendall(_FRAME_HEADER.pack(len(payload), msg_type) + payload)
    except OSError as exc:
        raise TransportError(f"send failed: {exc}") from exc


def _recv_exact(sock: socket.socket, count: int) -> bytes:
    chunks = []
    remaining = count
    while remaining:
        try:
            chunk = sock.recv(remaining)
        except socket.timeout as exc:
            raise TransportError("timed out waiting for remote model") from exc
        except OSError as exc:
            raise TransportError(f"receive failed: {exc}") from exc
        if not chunk:
            raise TransportError("connection closed mid-message")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_message(sock: socket.socket) -> tuple[int, bytes]:
    header = _recv_exact(sock, _FRAME_HEADER.size)
    length, msg_type = _FRAME_HEADER.unpack(header)
    payload = _recv_exact(sock, length) if length else b""
    return msg_type, payload


def hello_payload(schedule: NoiseSchedule | None) -> bytes:
    base = struct.pack("<B", PROTOCOL_VERSION)
    if schedule is None:
        return base
    kind_code = SCHEDULE_KINDS.index(schedule.kind)
    return base + struct.pack("<IB", schedule.T, kind_code)


class _Pool:
    """Lazily created sockets, at most ``size`` alive, one user at a time each."""

    def __init__(self, endpoint: str, timeout: float, size: int, schedule: NoiseSchedule | None):
        host, _, port = endpoint.rpartition(":")
        if not host or not port.isdigit():
            raise ParameterError(f"endpoint must look like host:port, got {endpoint!r}")
        self._address = (host, int(port))
        self._timeout = timeout
        self._schedule = schedule
        self._idle: queue.Queue = queue.Queue(maxsize=size)
        for _ in range(size):
            self._idle.put(None)  # placeholder: connect lazily on first use

    def _connect(self) -> socket.socket:
        try:
            sock = socket.create_connection(self._address, timeout=self._timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to {self._address[0]}:{self._address[1]}: {exc}") from exc
        sock.settimeout(self._timeout)
        write_message(sock, MSG_HELLO, hello_payload(self._schedule))
        msg_type, payload = read_message(sock)
        if msg_type == MSG_ERROR:
            sock.close()
            raise RemoteModelError(payload.decode("utf-8", errors="replace"))
        if msg_type != MSG_HELLO or len(payload) < 1 or payload[0] != PROTOCOL_VERSION:
            sock.close()
            raise ProtocolError("server did not answer HELLO with protocol version 1")
        return sock

    def roundtrip(self, msg_type: int, payload: bytes) -> tuple[int, bytes]:
        conn = self._idle.get()
        try:
            if conn is None:
                conn = self._connect()
            write_message(conn, msg_type, payload)
            resp = read_message(conn)
        except BaseException:
            if conn is not None:
                conn.close()
            self._idle.put(None)  # replace the dead slot
            raise
        self._idle.put(conn)
        return resp

    def close(self) -> None:
        # Close live sockets; leave placeholders so later calls reconnect.
        drained = []
        while True:
            try:
                drained.append(self._idle.get_nowait())
            except queue.Empty:
                break
        for conn in drained:
            if conn is not None:
                conn.close()
            self._idle.put_nowait(None)


class RemoteDenoiser:
    """Denoiser backed by a VXDN/1 server; satisfies the Denoiser protocol."""

    deterministic = True

    def __init__(self, endpoint: str, timeout: float = 30.0, pool_size: int = 1,
                 schedule: NoiseSchedule | None = None):
        if pool_size < 1:
            raise ParameterError(f"pool_size must be >= 1, got {pool_size}")
        self._pool = _Pool(endpoint, timeout, pool_size, schedule)
        self.endpoint = endpoint

    def _exchange(self, req_type: int, resp_type: int, t: int, frame: np.ndarray) -> np.ndarray:
        msg_type, payload = self._pool.roundtrip(req_type, pack_tensor(t, frame))
        if msg_type == MSG_ERROR:
            raise RemoteModelError(payload.decode("utf-8", errors="replace"))
        if msg_type != resp_type:
            raise ProtocolError(f"expected message type {resp_type}, got {msg_type}")
        _, out = unpack_tensor(payload)
        return out

    def eps(self, z: np.ndarray, t: int) -> np.ndarray:
        out = self._exchange(MSG_EPS_REQ, MSG_EPS_RESP, t, np.asarray(z, dtype=np.float32))
        if out.shape != z.shape:
            raise ProtocolError(f"server returned shape {out.shape} for input {z.shape}")
        return out

    def encode(self, frame: np.ndarray) -> np.ndarray:
        return self._exchange(MSG_ENC_REQ, MSG_ENC_RESP, 0, np.asarray(frame, dtype=np.float32))

    def decode(self, latent: np.ndarray) -> np.ndarray:
        return self._exchange(MSG_DEC_REQ, MSG_DEC_RESP, 0, np.asarray(latent, dtype=np.float32))

    def close(self) -> None:
        self._pool.close()

    def __enter__(self) -> "RemoteDenoiser":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def remote_denoiser(endpoint: str, timeout: float = 30.0, pool_size: int = 1,
                    schedule: NoiseSchedule | None = None) -> RemoteDenoiser:
    """Connect lazily to a remote noise predictor at ``host:port``."""
    return RemoteDenoiser(endpoint, timeout=timeout, pool_size=pool_size, schedule=schedule)


def remote_codec(session: RemoteDenoiser, spatial_factor: int = 1, channel_factor: int = 1) -> LatentCodec:
    """Latent codec that round-trips frames through the same remote server."""
    return LatentCodec(
        name=f"remote:{session.endpoint}",
        spatial_factor=spatial_factor,
        channel_factor=channel_factor,
        encode_fn=session.encode,
        decode_fn=session.decode,
    )
