"""Noise schedules and the latent-space arithmetic of the sampling loop.

The schedule is the cumulative signal fraction alpha_bar over T solver steps,
indexed 0..T with alpha_bar[0] = 1 and a strict decrease to alpha_bar[T] > 0.
On top of it live the forward noising map, Tweedie posterior-mean denoising,
batch-consistent DDIM inversion, the renoising step, and the scheduled
low-pass filter whose strength tracks the remaining noise level.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import ParameterError
from .kernels import conv_axis, lpf_kernel
from .tensors import VideoTensor

if TYPE_CHECKING:
    from .denoisers import Denoiser

__all__ = [
    "NoiseSchedule",
    "NoiseMix",
    "LpfSchedule",
    "make_schedule",
    "add_noise",
    "tweedie_denoise",
    "ddim_invert",
    "compose_noise",
    "renoise",
    "lpf_apply",
    "LPF_IDENTITY_BELOW",
]

SCHEDULE_KINDS = ("scaled_linear", "linear", "cosine")

# Below this filter strength the sampled kernel degenerates to a point.
LPF_IDENTITY_BELOW = 0.3

_VIRTUAL_STEPS = 1000


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal fractions alpha_bar[0..T] for a T-step solver."""

    T: int
    kind: str
    alpha_bar: np.ndarray

    def __post_init__(self) -> None:
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if ab.shape != (self.T + 1,):
            raise ParameterError(f"alpha_bar must have length T+1={self.T + 1}, got {ab.shape}")
        if ab[0] != 1.0:
            raise ParameterError("alpha_bar[0] must be exactly 1")
        if not np.all(np.diff(ab) < 0):
            raise ParameterError("alpha_bar must be strictly decreasing")
        if ab[-1] <= 0.0:
            raise ParameterError("alpha_bar[T] must stay positive")
        ab.setflags(write=False)
        object.__setattr__(self, "alpha_bar", ab)

    def sqrt_alpha_bar(self, t: int) -> float:
        return float(np.sqrt(self.alpha_bar[t]))

    def sqrt_one_minus(self, t: int) -> float:
        return float(np.sqrt(1.0 - self.alpha_bar[t]))

    def check_t(self, t: int, low: int = 0) -> int:
        t = int(t)
        if not low <= t <= self.T:
            raise ParameterError(f"timestep {t} outside [{low}, {self.T}]")
        return t


def _virtual_alpha_bar(beta_lo: float, beta_hi: float, scaled: bool) -> np.ndarray:
    if scaled:
        betas = np.linspace(np.sqrt(beta_lo), np.sqrt(beta_hi), _VIRTUAL_STEPS, dtype=np.float64) ** 2
    else:
        betas = np.linspace(beta_lo, beta_hi, _VIRTUAL_STEPS, dtype=np.float64)
    return np.cumprod(1.0 - betas)


def make_schedule(T: int, kind: str = "scaled_linear") -> NoiseSchedule:
    """Build a T-step schedule of the given kind.

    scaled_linear and linear follow the 1000-step latent-diffusion and DDPM
    beta ramps, subsampled evenly to T; cosine uses the squared-cosine ramp
    with alpha_bar[T] clipped to stay at or above 1e-5.
    """
    T = int(T)
    if T < 1:
        raise ParameterError(f"T must be >= 1, got {T}")
    if kind not in SCHEDULE_KINDS:
        raise ParameterError(f"unknown schedule kind {kind!r}, choose from {SCHEDULE_KINDS}")

    if kind in ("scaled_linear", "linear"):
        if T > _VIRTUAL_STEPS:
            raise ParameterError(f"{kind} schedule supports at most T={_VIRTUAL_STEPS}")
        virtual = (
            _virtual_alpha_bar(0.00085, 0.012, scaled=True)
            if kind == "scaled_linear"
            else _virtual_alpha_bar(0.0001, 0.02, scaled=False)
        )
        steps = np.round(np.arange(1, T + 1) * (_VIRTUAL_STEPS / T)).astype(int)
        ab = np.concatenate([[1.0], virtual[steps - 1]])
    else:
        s = 0.008
        grid = np.arange(T + 1, dtype=np.float64) / T
        f = np.cos((grid + s) / (1.0 + s) * np.pi / 2.0) ** 2
        ab = np.maximum(f / f[0], 1e-5)
        # clipping may flatten the tail; restore strict decrease by nudging the
        # earlier plateau entries up so alpha_bar[T] keeps the 1e-5 floor
        for t in range(T - 1, 0, -1):
            ab[t] = max(ab[t], ab[t + 1] * (1.0 + 1e-9))
    return NoiseSchedule(T=T, kind=kind, alpha_bar=ab)


def add_noise(x0: np.ndarray, eps: np.ndarray, t: int, schedule: NoiseSchedule) -> np.ndarray:
    """Forward noising z_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps."""
    t = schedule.check_t(t)
    if x0.shape != eps.shape:
        raise ParameterError(f"x0 shape {x0.shape} != eps shape {eps.shape}")
    return x0 * schedule.sqrt_alpha_bar(t) + eps * schedule.sqrt_one_minus(t)


def tweedie_denoise(z_t: np.ndarray, eps_hat: np.ndarray, t: int, schedule: NoiseSchedule) -> np.ndarray:
    """Posterior-mean estimate x0_hat = (z_t - sqrt(1 - ab_t) eps_hat) / sqrt(ab_t)."""
    t = schedule.check_t(t)
    if z_t.shape != eps_hat.shape:
        raise ParameterError(f"z_t shape {z_t.shape} != eps_hat shape {eps_hat.shape}")
    return (z_t - eps_hat * schedule.sqrt_one_minus(t)) / schedule.sqrt_alpha_bar(t)


def ddim_invert(z0: np.ndarray, denoiser: "Denoiser", tau: int, schedule: NoiseSchedule) -> np.ndarray:
    """Run the deterministic inversion from timestep 0 up to tau.

    Each step re-estimates noise at the current (lower) timestep and jumps one
    index up; at t=0 the denoiser is queried at t=1 since index 0 carries no
    noise to predict. The state keeps the caller's dtype; denoiser calls see
    float32 as the payload contract requires.
    """
    tau = schedule.check_t(tau, low=1)
    z = np.array(z0, copy=True)
    for t in range(tau):
        query_t = max(t, 1)
        eps = np.asarray(denoiser.eps(z.astype(np.float32), query_t), dtype=z.dtype)
        x0_hat = tweedie_denoise(z, eps, t, schedule)
        z = add_noise(x0_hat, eps, t + 1, schedule)
    return z


@dataclass(frozen=True)
class NoiseMix:
    """Renoising noise E_t: a deterministic part plus shared Gaussian noise."""

    eta: float
    shared_noise: np.ndarray  # (c, h, w), identical for every frame slot
    deterministic_part: np.ndarray  # (N, c, h, w) predicted noise

    def __post_init__(self) -> None:
        if not 0.0 <= self.eta <= 1.0:
            raise ParameterError(f"eta must be in [0,1], got {self.eta}")

    def tensor(self) -> np.ndarray:
        det = self.deterministic_part
        scale_det = float(np.sqrt(1.0 - self.eta * self.eta))
        return det * det.dtype.type(scale_det) + self.shared_noise * det.dtype.type(self.eta)


def compose_noise(eps_pred_per_frame: np.ndarray, shared_gaussian: np.ndarray, eta: float) -> np.ndarray:
    """E_t = sqrt(1 - eta^2) eps_hat + eta g, with g shared across frames.

    shared_gaussian may be one latent (c,h,w), broadcast to all frames, or a
    full (N,c,h,w) stack whose frames must then be bit-identical.
    """
    eps = np.asarray(eps_pred_per_frame)
    g = np.asarray(shared_gaussian)
    if g.ndim == eps.ndim:
        if any(not np.array_equal(g[0], gi) for gi in g[1:]):
            raise ParameterError("shared_gaussian must be bit-identical across frames")
        g = g[0]
    if g.shape != eps.shape[1:]:
        raise ParameterError(f"shared noise shape {g.shape} does not match latent {eps.shape[1:]}")
    return NoiseMix(eta=float(eta), shared_noise=g, deterministic_part=eps).tensor()


def renoise(z_bar: np.ndarray, t_minus_1: int, e_t: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Z_{t-1} = sqrt(ab_{t-1}) Z_bar + sqrt(1 - ab_{t-1}) E_t."""
    t_minus_1 = schedule.check_t(t_minus_1)
    if z_bar.shape != e_t.shape:
        raise ParameterError(f"z_bar shape {z_bar.shape} != E_t shape {e_t.shape}")
    return z_bar * schedule.sqrt_alpha_bar(t_minus_1) + e_t * schedule.sqrt_one_minus(t_minus_1)


@dataclass(frozen=True)
class LpfSchedule:
    """Low-pass strength tied to the remaining noise: sigma_t = lam sqrt(1 - ab_t)."""

    lam: float
    schedule: NoiseSchedule

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ParameterError(f"lambda must be >= 0, got {self.lam}")

    def sigma_of(self, t: int) -> float:
        t = self.schedule.check_t(t)
        return self.lam * self.schedule.sqrt_one_minus(t)


def lpf_apply(x: VideoTensor, t: int, lpf: LpfSchedule) -> VideoTensor:
    """Blur each frame with the scheduled Gaussian; identity when sigma_t < 0.3."""
    sigma = lpf.sigma_of(t)
    if sigma < LPF_IDENTITY_BELOW:
        return x
    taps = lpf_kernel(sigma)
    blurred = conv_axis(conv_axis(x.data, taps, 2, "reflect"), taps, 3, "reflect")
    return VideoTensor(blurred.astype(np.float32), x.range_tag)
