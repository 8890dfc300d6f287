"""Denoiser and latent codec plug points, with analytic built-ins.

The sampling loop only ever sees two interfaces: a Denoiser that predicts the
noise inside one latent frame at one timestep, and a LatentCodec that moves
single frames between pixel and latent space. The built-ins here are exact
closed forms used for verification; a neural model plugs in through the
remote client without the loop noticing.

Payload convention: denoisers and codecs consume and produce float32 frames.
The Gaussian-prior denoiser computes in float64 and rounds once to float32 so
that a remote server doing the same arithmetic is bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol, runtime_checkable

import numpy as np

from .errors import ParameterError, ShapeError
from .schedule import NoiseSchedule

__all__ = [
    "Denoiser",
    "FuncDenoiser",
    "LatentCodec",
    "LatentBatch",
    "zero_denoiser",
    "gaussian_prior_denoiser",
    "identity_codec",
    "haar_codec",
]


@runtime_checkable
class Denoiser(Protocol):
    """Predicts the noise content of one latent frame at one timestep."""

    deterministic: bool

    def eps(self, z: np.ndarray, t: int) -> np.ndarray: ...


@dataclass(frozen=True)
class FuncDenoiser:
    """Denoiser built from a plain function."""

    fn: Callable[[np.ndarray, int], np.ndarray] = field(repr=False)
    name: str = ""
    deterministic: bool = True

    def eps(self, z: np.ndarray, t: int) -> np.ndarray:
        out = self.fn(z, t)
        if out.shape != z.shape:
            raise ShapeError(f"denoiser returned shape {out.shape} for input {z.shape}")
        return out


def zero_denoiser() -> FuncDenoiser:
    """eps(z, t) = 0; turns the sampling loop into pure scaling."""
    return FuncDenoiser(fn=lambda z, t: np.zeros_like(z, dtype=np.float32), name="zero")


def gaussian_prior_denoiser(schedule: NoiseSchedule) -> FuncDenoiser:
    """Exact MMSE noise predictor for a standard-normal latent prior.

    For x ~ N(0, I) and z = sqrt(ab_t) x + sqrt(1 - ab_t) e, the posterior
    mean of e given z is sqrt(1 - ab_t) z.
    """

    def fn(z: np.ndarray, t: int) -> np.ndarray:
        t = schedule.check_t(t)
        scale = np.sqrt(1.0 - float(schedule.alpha_bar[t]))
        return (z.astype(np.float64) * scale).astype(np.float32)

    return FuncDenoiser(fn=fn, name="gaussian_prior")


@dataclass(frozen=True)
class LatentCodec:
    """Single-frame encoder/decoder between pixel and latent space."""

    name: str
    spatial_factor: int
    channel_factor: int
    encode_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    decode_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def encode(self, frame: np.ndarray) -> np.ndarray:
        return self.encode_fn(np.asarray(frame))

    def decode(self, latent: np.ndarray) -> np.ndarray:
        return self.decode_fn(np.asarray(latent))

    def latent_shape(self, frame_shape: tuple[int, int, int]) -> tuple[int, int, int]:
        c, h, w = frame_shape
        if h % self.spatial_factor or w % self.spatial_factor:
            raise ShapeError(f"frame {frame_shape} not divisible by spatial factor {self.spatial_factor}")
        return (c * self.channel_factor, h // self.spatial_factor, w // self.spatial_factor)


def identity_codec() -> LatentCodec:
    """Latent space equals pixel space; bit-exact round trip."""
    copy32 = lambda a: np.array(a, dtype=np.float32, copy=True)
    return LatentCodec(name="identity", spatial_factor=1, channel_factor=1, encode_fn=copy32, decode_fn=copy32)


def _haar_split(frame: np.ndarray) -> np.ndarray:
    c, h, w = frame.shape
    if h % 2 or w % 2:
        raise ShapeError(f"haar codec needs even spatial dims, got {h}x{w}")
    x = frame.astype(np.float64)
    a = x[:, 0::2, 0::2]
    b = x[:, 0::2, 1::2]
    cc = x[:, 1::2, 0::2]
    d = x[:, 1::2, 1::2]
    ll = (a + b + cc + d) * 0.5
    lh = (a - b + cc - d) * 0.5
    hl = (a + b - cc - d) * 0.5
    hh = (a - b - cc + d) * 0.5
    stacked = np.stack([ll, lh, hl, hh], axis=1)  # (C, 4, H/2, W/2)
    return stacked.reshape(c * 4, h // 2, w // 2).astype(np.float32)


def _haar_merge(latent: np.ndarray) -> np.ndarray:
    c4, hh_, ww_ = latent.shape
    if c4 % 4:
        raise ShapeError(f"haar latent channel count must be a multiple of 4, got {c4}")
    c = c4 // 4
    z = latent.astype(np.float64).reshape(c, 4, hh_, ww_)
    ll, lh, hl, hh = z[:, 0], z[:, 1], z[:, 2], z[:, 3]
    out = np.empty((c, hh_ * 2, ww_ * 2), dtype=np.float64)
    out[:, 0::2, 0::2] = (ll + lh + hl + hh) * 0.5
    out[:, 0::2, 1::2] = (ll - lh + hl - hh) * 0.5
    out[:, 1::2, 0::2] = (ll + lh - hl - hh) * 0.5
    out[:, 1::2, 1::2] = (ll - lh - hl + hh) * 0.5
    return out.astype(np.float32)


def haar_codec() -> LatentCodec:
    """Orthonormal 2x2 Haar transform per channel: 4x channels, half resolution."""
    return LatentCodec(
        name="haar", spatial_factor=2, channel_factor=4, encode_fn=_haar_split, decode_fn=_haar_merge
    )


@dataclass(frozen=True)
class LatentBatch:
    """All frame latents of the video at one shared timestep."""

    data: np.ndarray  # (N, c, h, w) float32
    t: int

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float32, copy=True)
        if arr.ndim != 4:
            raise ShapeError(f"latent batch must be 4-D, got ndim={arr.ndim}")
        if self.t < 0:
            raise ParameterError(f"timestep must be >= 0, got {self.t}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def latent_shape(self) -> tuple[int, int, int]:
        return self.data.shape[1:]
