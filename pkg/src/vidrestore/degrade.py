"""Linear spatio-temporal degradation operators with exact adjoints.

Each operator is a pair of matrix-free maps (apply, adjoint) over (N, C, H, W)
arrays plus a descriptor that serializes everything needed to rebuild it,
seed included. Adjoints are exact transposes of the discrete forward maps,
not approximations, so inner-product checks hold to floating-point accuracy.

Conventions fixed here: spatial padding is reflect (mirror without edge
repeat), temporal padding is replicate, masks drop pixels independently per
frame by default, and combined tasks average frames first and degrade
spatially second.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .errors import CapacityError, ParameterError, ShapeError
from .kernels import conv_axis, conv_axis_adjoint, gaussian_kernel
from .rng import DOMAIN_MASK, DOMAIN_PROBE, seeded_rng
from .tensors import VideoTensor

__all__ = [
    "LinearDegradation",
    "MaskPattern",
    "identity_op",
    "gaussian_blur_op",
    "avgpool_sr_op",
    "random_mask_op",
    "frame_average_op",
    "compose",
    "adjoint_check",
    "materialize",
    "op_from_descriptor",
    "task_operator",
    "TASK_DEFAULTS",
]

Shape4 = tuple[int, int, int, int]


@dataclass(frozen=True, eq=False)
class LinearDegradation:
    """A linear map between video shapes, with its exact transpose."""

    input_shape: Shape4
    output_shape: Shape4
    descriptor: dict[str, Any]
    apply_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    adjoint_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        """Forward map on a raw array; output dtype follows input dtype."""
        if tuple(x.shape) != self.input_shape:
            raise ShapeError(f"operator expects input {self.input_shape}, got {tuple(x.shape)}")
        return self.apply_fn(x)

    def adjoint_array(self, y: np.ndarray) -> np.ndarray:
        """Transpose map on a raw array; output dtype follows input dtype."""
        if tuple(y.shape) != self.output_shape:
            raise ShapeError(f"adjoint expects input {self.output_shape}, got {tuple(y.shape)}")
        return self.adjoint_fn(y)

    def apply(self, x: VideoTensor) -> VideoTensor:
        return VideoTensor(self.apply_array(x.data).astype(np.float32), x.range_tag)

    def adjoint(self, y: VideoTensor) -> VideoTensor:
        return VideoTensor(self.adjoint_array(y.data).astype(np.float32), y.range_tag)


@dataclass(frozen=True)
class MaskPattern:
    """Realized random keep/drop pattern, broadcast over channels."""

    seed: int
    rate: float
    per_frame: bool
    mask: np.ndarray  # (N, H, W) boolean, True = kept

    def __post_init__(self) -> None:
        m = np.asarray(self.mask, dtype=bool)
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @property
    def kept_fraction(self) -> float:
        return float(self.mask.mean())


def _shape4(shape) -> Shape4:
    shape = tuple(int(s) for s in shape)
    if len(shape) != 4 or min(shape) < 1:
        raise ShapeError(f"expected a positive (N,C,H,W) shape, got {shape}")
    return shape


def identity_op(shape: Shape4) -> LinearDegradation:
    shape = _shape4(shape)
    return LinearDegradation(
        input_shape=shape,
        output_shape=shape,
        descriptor={"kind": "identity", "shape": list(shape)},
        apply_fn=lambda x: x.copy(),
        adjoint_fn=lambda y: y.copy(),
    )


def gaussian_blur_op(kernel_size: int, sigma: float, shape: Shape4) -> LinearDegradation:
    """Per-frame, per-channel 2-D Gaussian blur, same-size, reflect padding."""
    shape = _shape4(shape)
    taps = gaussian_kernel(kernel_size, sigma)

    def fwd(x: np.ndarray) -> np.ndarray:
        return conv_axis(conv_axis(x, taps, 2, "reflect"), taps, 3, "reflect")

    def adj(y: np.ndarray) -> np.ndarray:
        return conv_axis_adjoint(conv_axis_adjoint(y, taps, 3, "reflect"), taps, 2, "reflect")

    return LinearDegradation(
        input_shape=shape,
        output_shape=shape,
        descriptor={
            "kind": "gaussian_blur",
            "kernel_size": int(kernel_size),
            "sigma": float(sigma),
            "shape": list(shape),
        },
        apply_fn=fwd,
        adjoint_fn=adj,
    )


def avgpool_sr_op(factor: int, shape: Shape4) -> LinearDegradation:
    """Block-mean downsampling by an integer factor."""
    shape = _shape4(shape)
    factor = int(factor)
    if factor < 2:
        raise ParameterError(f"pooling factor must be >= 2, got {factor}")
    n, c, h, w = shape
    if h % factor or w % factor:
        raise ShapeError(f"H={h}, W={w} not divisible by factor {factor}")
    out_shape = (n, c, h // factor, w // factor)

    def fwd(x: np.ndarray) -> np.ndarray:
        blocks = x.reshape(n, c, h // factor, factor, w // factor, factor).astype(np.float64)
        return blocks.mean(axis=(3, 5)).astype(x.dtype)

    def adj(y: np.ndarray) -> np.ndarray:
        spread = np.repeat(np.repeat(y.astype(np.float64), factor, axis=2), factor, axis=3)
        return (spread / float(factor * factor)).astype(y.dtype)

    return LinearDegradation(
        input_shape=shape,
        output_shape=out_shape,
        descriptor={"kind": "avgpool_sr", "factor": factor, "shape": list(shape)},
        apply_fn=fwd,
        adjoint_fn=adj,
    )


def realize_mask(rate: float, seed: int, per_frame: bool, shape: Shape4) -> MaskPattern:
    """Draw the keep/drop pattern for ``random_mask_op`` (rate = drop probability)."""
    n, _, h, w = _shape4(shape)
    if not 0.0 <= rate <= 1.0:
        raise ParameterError(f"mask rate must be in [0,1], got {rate}")
    rng = seeded_rng(int(seed), DOMAIN_MASK)
    rows = n if per_frame else 1
    kept = rng.random((rows, h, w)) >= rate
    if not per_frame:
        kept = np.broadcast_to(kept, (n, h, w))
    return MaskPattern(seed=int(seed), rate=float(rate), per_frame=bool(per_frame), mask=kept)


def random_mask_op(rate: float, seed: int, per_frame: bool, shape: Shape4) -> LinearDegradation:
    """Elementwise multiply by a seeded {0,1} mask; self-adjoint."""
    shape = _shape4(shape)
    pattern = realize_mask(rate, seed, per_frame, shape)
    mask = pattern.mask[:, None, :, :]  # broadcast over channels

    def fwd(x: np.ndarray) -> np.ndarray:
        return np.where(mask, x, x.dtype.type(0))

    return LinearDegradation(
        input_shape=shape,
        output_shape=shape,
        descriptor={
            "kind": "random_mask",
            "rate": float(rate),
            "seed": int(seed),
            "per_frame": bool(per_frame),
            "shape": list(shape),
        },
        apply_fn=fwd,
        adjoint_fn=fwd,
    )


def frame_average_op(window: int, shape: Shape4) -> LinearDegradation:
    """Temporal uniform blur over ``window`` frames, replicate padding, same N."""
    shape = _shape4(shape)
    window = int(window)
    n = shape[0]
    if window < 1 or window % 2 == 0:
        raise ParameterError(f"window must be odd and positive, got {window}")
    if window > n:
        raise ParameterError(f"window {window} exceeds frame count {n}")
    taps = np.full(window, 1.0 / window, dtype=np.float64)

    def fwd(x: np.ndarray) -> np.ndarray:
        return conv_axis(x, taps, 0, "replicate")

    def adj(y: np.ndarray) -> np.ndarray:
        return conv_axis_adjoint(y, taps, 0, "replicate")

    return LinearDegradation(
        input_shape=shape,
        output_shape=shape,
        descriptor={"kind": "frame_average", "window": window, "shape": list(shape)},
        apply_fn=fwd,
        adjoint_fn=adj,
    )


def compose(outer: LinearDegradation, inner: LinearDegradation) -> LinearDegradation:
    """outer after inner; adjoint is the reversed composition of adjoints."""
    if inner.output_shape != outer.input_shape:
        raise ShapeError(
            f"cannot chain inner output {inner.output_shape} into outer input {outer.input_shape}"
        )
    return LinearDegradation(
        input_shape=inner.input_shape,
        output_shape=outer.output_shape,
        descriptor={"kind": "compose", "outer": outer.descriptor, "inner": inner.descriptor},
        apply_fn=lambda x: outer.apply_fn(inner.apply_fn(x)),
        adjoint_fn=lambda y: inner.adjoint_fn(outer.adjoint_fn(y)),
    )


def adjoint_check(op: LinearDegradation, trials: int, seed: int) -> float:
    """Max over trials of |<Ax,y> - <x,A'y>| / (|Ax||y| + eps)."""
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    rng = seeded_rng(int(seed), DOMAIN_PROBE)
    worst = 0.0
    eps = float(np.finfo(np.float64).eps)
    for _ in range(trials):
        x = rng.standard_normal(op.input_shape)
        y = rng.standard_normal(op.output_shape)
        ax = op.apply_array(x)
        aty = op.adjoint_array(y)
        lhs = float(np.vdot(ax, y))
        rhs = float(np.vdot(x, aty))
        denom = float(np.linalg.norm(ax)) * float(np.linalg.norm(y)) + eps
        worst = max(worst, abs(lhs - rhs) / denom)
    return worst


def materialize(op: LinearDegradation, max_elements: int = 4096) -> np.ndarray:
    """Dense matrix of the operator, built column by column from basis vectors.

    Only for small problems; refuses anything past ``max_elements`` inputs.
    """
    d_in = int(np.prod(op.input_shape))
    d_out = int(np.prod(op.output_shape))
    if d_in > max_elements or d_out > max_elements:
        raise CapacityError(
            f"dense materialization capped at {max_elements} elements, "
            f"operator is {d_in} -> {d_out}"
        )
    cols = np.zeros((d_out, d_in), dtype=np.float64)
    basis = np.zeros(d_in, dtype=np.float64)
    for j in range(d_in):
        basis[j] = 1.0
        cols[:, j] = op.apply_array(basis.reshape(op.input_shape)).ravel()
        basis[j] = 0.0
    return cols


def op_from_descriptor(desc: Mapping[str, Any]) -> LinearDegradation:
    """Rebuild an operator from its serialized descriptor."""
    kind = desc.get("kind")
    if kind == "identity":
        return identity_op(desc["shape"])
    if kind == "gaussian_blur":
        return gaussian_blur_op(desc["kernel_size"], desc["sigma"], desc["shape"])
    if kind == "avgpool_sr":
        return avgpool_sr_op(desc["factor"], desc["shape"])
    if kind == "random_mask":
        return random_mask_op(desc["rate"], desc["seed"], desc["per_frame"], desc["shape"])
    if kind == "frame_average":
        return frame_average_op(desc["window"], desc["shape"])
    if kind == "compose":
        return compose(op_from_descriptor(desc["outer"]), op_from_descriptor(desc["inner"]))
    raise ParameterError(f"unknown operator kind {kind!r}")


# Benchmark task defaults: 61-tap sigma-3 blur, x4 pooling, 50% masking,
# 7-frame temporal averaging. "+" variants average frames first.
TASK_DEFAULTS: dict[str, dict[str, Any]] = {
    "deblur": {"kernel_size": 61, "sigma": 3.0},
    "sr": {"factor": 4},
    "inpaint": {"rate": 0.5, "per_frame": True},
    "deblur+": {"kernel_size": 61, "sigma": 3.0, "window": 7},
    "sr+": {"factor": 4, "window": 7},
    "inpaint+": {"rate": 0.5, "per_frame": True, "window": 7},
}


def task_operator(task: str, shape: Shape4, seed: int = 0, **overrides: Any) -> LinearDegradation:
    """Build one of the named benchmark degradations for a given input shape."""
    if task not in TASK_DEFAULTS:
        raise ParameterError(f"unknown task {task!r}, choose from {sorted(TASK_DEFAULTS)}")
    shape = _shape4(shape)
    params = dict(TASK_DEFAULTS[task])
    params.update(overrides)

    base = task.rstrip("+")
    if base == "deblur":
        spatial = gaussian_blur_op(params["kernel_size"], params["sigma"], shape)
    elif base == "sr":
        spatial = avgpool_sr_op(params["factor"], shape)
    else:
        spatial = random_mask_op(params["rate"], seed, params["per_frame"], shape)

    if task.endswith("+"):
        temporal = frame_average_op(params["window"], shape)
        return compose(spatial, temporal)
    return spatial
