"""Video tensors, pixel-range conventions, and on-disk formats.

A video is a dense float32 array of shape (N, C, H, W) plus a declared pixel
range: UNIT for [0, 1] or SYMMETRIC for [-1, 1]. Range changes are always an
explicit call, never a silent coercion.

Two storage forms exist: a directory of losslessly compressed 8-bit frames
(for eyeballing) and the exact VTF binary format (magic "VXT1", 22-byte
header, little-endian float32 payload) for bit-faithful round trips.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np
from PIL import Image

from .errors import DimensionMismatchError, FormatError, ParameterError, PayloadLengthError, ShapeError

__all__ = [
    "RangeTag",
    "VideoTensor",
    "convert_range",
    "read_frame_dir",
    "write_frame_dir",
    "vtf_read",
    "vtf_write",
]

VTF_MAGIC = b"VXT1"
_VTF_DTYPE_F32 = 1
_HEADER = struct.Struct("<4sIIIIBB")  # magic, n, c, h, w, dtype, range tag
assert _HEADER.size == 22

_FRAME_SUFFIXES = {".png", ".bmp"}


class RangeTag(enum.IntEnum):
    """Declared pixel range of a video tensor."""

    UNIT = 0  # [0, 1]
    SYMMETRIC = 1  # [-1, 1]


@dataclass(frozen=True)
class VideoTensor:
    """Immutable (N, C, H, W) float32 video with a declared pixel range."""

    data: np.ndarray
    range_tag: RangeTag = RangeTag.UNIT

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float32, copy=True)
        if arr.ndim != 4:
            raise ShapeError(f"video tensor must be 4-D (N,C,H,W), got ndim={arr.ndim}")
        n, c, h, w = arr.shape
        if min(n, c, h, w) < 1:
            raise ShapeError(f"all dimensions must be >= 1, got {arr.shape}")
        if c not in (1, 3):
            raise ShapeError(f"channel count must be 1 or 3, got {c}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "range_tag", RangeTag(self.range_tag))

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def c(self) -> int:
        return self.data.shape[1]

    @property
    def h(self) -> int:
        return self.data.shape[2]

    @property
    def w(self) -> int:
        return self.data.shape[3]

    def with_data(self, data: np.ndarray) -> "VideoTensor":
        """Same range tag, new payload."""
        return VideoTensor(data, self.range_tag)


def convert_range(v: VideoTensor, target: RangeTag) -> VideoTensor:
    """Affine change of pixel range; same-range conversion returns v."""
    target = RangeTag(target)
    if v.range_tag == target:
        return v
    if target == RangeTag.SYMMETRIC:
        return VideoTensor(v.data * np.float32(2.0) - np.float32(1.0), RangeTag.SYMMETRIC)
    return VideoTensor((v.data + np.float32(1.0)) * np.float32(0.5), RangeTag.UNIT)


def read_frame_dir(path: str | Path) -> VideoTensor:
    """Decode a directory of 8-bit frames, lexicographic order, into UNIT range.

    Grayscale frames give C=1, everything else is decoded as RGB. All frames
    must agree in size and mode.
    """
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"frame directory not found: {root}")
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in _FRAME_SUFFIXES)
    if not files:
        raise FileNotFoundError(f"no frames in {root}")
    frames: list[np.ndarray] = []
    for p in files:
        with Image.open(p) as img:
            plane = img if img.mode == "L" else img.convert("RGB")
            arr = np.asarray(plane, dtype=np.uint8)
        if arr.ndim == 2:
            arr = arr[None, :, :]
        else:
            arr = arr.transpose(2, 0, 1)
        if frames and arr.shape != frames[0].shape:
            raise DimensionMismatchError(
                f"frame {p.name} has shape {arr.shape}, expected {frames[0].shape}"
            )
        frames.append(arr)
    stack = np.stack(frames).astype(np.float32) / np.float32(255.0)
    return VideoTensor(stack, RangeTag.UNIT)


def write_frame_dir(v: VideoTensor, path: str | Path) -> None:
    """Quantize to 8-bit (round half to even) and write numbered PNG frames."""
    v = convert_range(v, RangeTag.UNIT)
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    scaled = np.clip(np.round(v.data.astype(np.float64) * 255.0), 0, 255).astype(np.uint8)
    for i in range(v.n):
        frame = scaled[i]
        img = Image.fromarray(frame[0]) if v.c == 1 else Image.fromarray(frame.transpose(1, 2, 0))
        img.save(root / f"frame_{i:05d}.png")


def vtf_write(v: VideoTensor, sink: str | Path | BinaryIO) -> int:
    """Write the exact binary tensor format. Returns bytes written."""
    header = _HEADER.pack(VTF_MAGIC, v.n, v.c, v.h, v.w, _VTF_DTYPE_F32, int(v.range_tag))
    payload = np.ascontiguousarray(v.data, dtype="<f4").tobytes()
    if hasattr(sink, "write"):
        sink.write(header)
        sink.write(payload)
    else:
        with open(sink, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    return len(header) + len(payload)


def vtf_read(source: str | Path | BinaryIO) -> VideoTensor:
    """Read the binary tensor format written by :func:`vtf_write`."""
    if hasattr(source, "read"):
        blob = source.read()
    else:
        blob = Path(source).read_bytes()
    if len(blob) < _HEADER.size:
        raise PayloadLengthError(f"file is {len(blob)} bytes, header needs {_HEADER.size}")
    magic, n, c, h, w, dtype, tag = _HEADER.unpack_from(blob)
    if magic != VTF_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if dtype != _VTF_DTYPE_F32:
        raise FormatError(f"unsupported dtype code {dtype}")
    if tag not in (int(RangeTag.UNIT), int(RangeTag.SYMMETRIC)):
        raise FormatError(f"unknown range tag {tag}")
    expected = n * c * h * w * 4
    body = blob[_HEADER.size :]
    if len(body) != expected:
        raise PayloadLengthError(f"payload is {len(body)} bytes, header declares {expected}")
    data = np.frombuffer(body, dtype="<f4").reshape(n, c, h, w)
    return VideoTensor(data.astype(np.float32), RangeTag(tag))
