"""Reconstruction fidelity metrics: PSNR and windowed SSIM."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .kernels import conv_axis, gaussian_kernel
from .tensors import RangeTag, VideoTensor

__all__ = ["MetricReport", "psnr", "ssim"]

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricReport:
    """Per-frame metric values plus their mean over the finite frames."""

    metric: str
    peak: float
    per_frame: tuple[float, ...]
    mean: float
    has_infinite: bool = False

    def to_text(self) -> str:
        lines = [f"metric={self.metric}", f"peak={self.peak:g}", f"mean={self.mean:.6f}"]
        if self.has_infinite:
            lines.append("infinite_frames_excluded=true")
        lines += [f"frame_{i:04d}={v:.6f}" for i, v in enumerate(self.per_frame)]
        return "\n".join(lines)


def _finish(metric: str, peak: float, per_frame: list[float]) -> MetricReport:
    finite = [v for v in per_frame if math.isfinite(v)]
    has_inf = len(finite) != len(per_frame)
    mean = float(np.mean(finite)) if finite else math.inf
    return MetricReport(
        metric=metric, peak=float(peak), per_frame=tuple(per_frame), mean=mean, has_infinite=has_inf
    )


def psnr(a: VideoTensor, b: VideoTensor, peak: float | None = None) -> MetricReport:
    """Per-frame 10 log10(peak^2 / MSE); identical frames report +inf.

    peak defaults to the width of the declared range: 1 for UNIT, 2 for
    SYMMETRIC. Frames with zero error are excluded from the mean and flagged.
    """
    if a.shape != b.shape:
        raise ShapeError(f"psnr needs equal shapes, got {a.shape} vs {b.shape}")
    if a.range_tag != b.range_tag:
        raise ParameterError("psnr needs matching range tags")
    if peak is None:
        peak = 1.0 if a.range_tag == RangeTag.UNIT else 2.0
    if peak <= 0:
        raise ParameterError(f"peak must be positive, got {peak}")
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    values = []
    for i in range(a.n):
        mse = float(np.mean(diff[i] ** 2))
        values.append(math.inf if mse == 0.0 else 10.0 * math.log10(peak * peak / mse))
    return _finish("psnr", peak, values)


def _valid_gauss(plane: np.ndarray, taps: np.ndarray) -> np.ndarray:
    # Same-size separable filtering, then drop the border the window touches;
    # interior values are independent of the padding rule.
    radius = (len(taps) - 1) // 2
    smoothed = conv_axis(conv_axis(plane, taps, 0, "reflect"), taps, 1, "reflect")
    return smoothed[radius:-radius, radius:-radius]


def ssim(a: VideoTensor, b: VideoTensor) -> MetricReport:
    """Mean structural similarity per frame, channels averaged.

    11x11 Gaussian window with sigma 1.5, K1=0.01, K2=0.03, UNIT range only.
    """
    if a.shape != b.shape:
        raise ShapeError(f"ssim needs equal shapes, got {a.shape} vs {b.shape}")
    if a.range_tag != RangeTag.UNIT or b.range_tag != RangeTag.UNIT:
        raise ParameterError("ssim is defined on UNIT-range tensors; convert first")
    if a.h < _SSIM_WINDOW or a.w < _SSIM_WINDOW:
        raise ShapeError(f"frames must be at least {_SSIM_WINDOW}x{_SSIM_WINDOW}, got {a.h}x{a.w}")

    taps = gaussian_kernel(_SSIM_WINDOW, _SSIM_SIGMA)
    c1 = _SSIM_K1**2
    c2 = _SSIM_K2**2
    xs = a.data.astype(np.float64)
    ys = b.data.astype(np.float64)

    values = []
    for i in range(a.n):
        channel_means = []
        for ch in range(a.c):
            x, y = xs[i, ch], ys[i, ch]
            mu_x = _valid_gauss(x, taps)
            mu_y = _valid_gauss(y, taps)
            var_x = _valid_gauss(x * x, taps) - mu_x * mu_x
            var_y = _valid_gauss(y * y, taps) - mu_y * mu_y
            cov = _valid_gauss(x * y, taps) - mu_x * mu_y
            s_map = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
                (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
            )
            channel_means.append(float(s_map.mean()))
        values.append(float(np.mean(channel_means)))
    return _finish("ssim", 1.0, values)
