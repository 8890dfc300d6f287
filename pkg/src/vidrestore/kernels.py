"""Separable convolution primitives with exact adjoints.

All degradation operators and the scheduled low-pass filter are built from
one-dimensional same-size convolutions along a single tensor axis. Keeping the
padding rule explicit as an index map makes the adjoint exact to floating
point: the transpose of gather is scatter-add over the same map.

Products are accumulated in float64 and cast back to the input dtype, so
callers that need full precision can simply pass float64 arrays.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError

__all__ = [
    "gaussian_kernel",
    "lpf_kernel",
    "pad_indices",
    "conv_axis",
    "conv_axis_adjoint",
]


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Sampled Gaussian taps of odd length ``size``, normalized to sum 1."""
    if size < 1 or size % 2 == 0:
        raise ParameterError(f"kernel size must be odd and positive, got {size}")
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    radius = size // 2
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def lpf_kernel(sigma: float) -> np.ndarray:
    """Low-pass taps for strength ``sigma`` with radius ceil(3 sigma)."""
    radius = int(np.ceil(3.0 * sigma))
    return gaussian_kernel(2 * radius + 1, sigma)


def pad_indices(n: int, radius: int, mode: str) -> np.ndarray:
    """Source index for every position of a length ``n + 2*radius`` padding.

    mode "reflect" mirrors without repeating the edge sample and keeps
    bouncing for pads wider than the axis; mode "replicate" clamps to the
    edge. Position j of the padded axis reads input index out[j].
    """
    if n < 1:
        raise ParameterError("axis length must be >= 1")
    pos = np.arange(-radius, n + radius)
    if mode == "replicate":
        return np.clip(pos, 0, n - 1)
    if mode == "reflect":
        if n == 1:
            return np.zeros_like(pos)
        period = 2 * n - 2
        m = np.mod(pos, period)
        return np.where(m >= n, period - m, m)
    raise ParameterError(f"unknown padding mode {mode!r}")


def conv_axis(x: np.ndarray, taps: np.ndarray, axis: int, mode: str) -> np.ndarray:
    """Same-size correlation of ``x`` with ``taps`` along ``axis``.

    Padding follows ``mode``; output position i sums taps[a] * padded[i + a].
    """
    radius = (len(taps) - 1) // 2
    xm = np.moveaxis(x, axis, 0)
    n = xm.shape[0]
    src = pad_indices(n, radius, mode)
    padded = xm[src].astype(np.float64)
    out = np.zeros_like(padded, shape=(n,) + xm.shape[1:])
    for a, w in enumerate(taps):
        out += w * padded[a : a + n]
    return np.moveaxis(out, 0, axis).astype(x.dtype)


def conv_axis_adjoint(y: np.ndarray, taps: np.ndarray, axis: int, mode: str) -> np.ndarray:
    """Exact transpose of :func:`conv_axis` with the same taps and mode."""
    radius = (len(taps) - 1) // 2
    ym = np.moveaxis(y, axis, 0).astype(np.float64)
    n = ym.shape[0]
    src = pad_indices(n, radius, mode)
    # Transpose of valid correlation: full convolution back onto the padded axis.
    padded = np.zeros((n + 2 * radius,) + ym.shape[1:], dtype=np.float64)
    for a, w in enumerate(taps):
        padded[a : a + n] += w * ym
    # Transpose of gather-padding: scatter-add padded borders onto their sources.
    out = padded[radius : radius + n].copy()
    if radius > 0:
        np.add.at(out, src[:radius], padded[:radius])
        np.add.at(out, src[n + radius :], padded[n + radius :])
    return np.moveaxis(out, 0, axis).astype(y.dtype)
