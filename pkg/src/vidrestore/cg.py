"""Conjugate-gradient data consistency on the normal equations.

Given a measurement Y, a linear degradation A, and a starting batch X0, run l
CG iterations on A'A X = A'Y. The returned iterate is X0 plus a correction
confined to the Krylov space built from the initial normal-equations residual,
which is exactly the subspace-restricted least-squares update the sampling
loop needs. A'A is never materialized; each iteration costs one apply and one
adjoint call.

Everything here iterates in float64 regardless of payload dtype, so the
monotone-residual property survives float32 inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .degrade import LinearDegradation, materialize
from .errors import ParameterError, ShapeError
from .tensors import VideoTensor

__all__ = ["CgReport", "cg_data_consistency", "krylov_membership"]

# Absolute floor under which a residual counts as converged.
_RESIDUAL_FLOOR = 1e-10


@dataclass(frozen=True)
class CgReport:
    """What happened inside one cg_data_consistency call.

    residual_history[k] is the data residual ||Y - A(X_k)|| of the k-th
    iterate, starting with X_0 = x0, so its length is iterations_run + 1.
    """

    iterations_run: int
    residual_history: tuple[float, ...]
    breakdown: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "residual_history", tuple(self.residual_history))


def cg_data_consistency(
    x0: VideoTensor, y: VideoTensor, a: LinearDegradation, l: int
) -> tuple[VideoTensor, CgReport]:
    """l-step CG toward argmin ||Y - A(X)||^2 over x0 plus its Krylov space."""
    if l < 1:
        raise ParameterError(f"iteration budget l must be >= 1, got {l}")
    if x0.shape != a.input_shape:
        raise ShapeError(f"x0 shape {x0.shape} does not match operator input {a.input_shape}")
    if y.shape != a.output_shape:
        raise ShapeError(f"y shape {y.shape} does not match operator output {a.output_shape}")

    x = x0.data.astype(np.float64)
    yv = y.data.astype(np.float64)

    s = yv - a.apply_array(x)  # data-space residual Y - A(X)
    history = [float(np.linalg.norm(s))]
    r = a.adjoint_array(s)  # normal-equations residual A'(Y - A(X))
    d = r.copy()
    rs = float(np.vdot(r, r))

    iterations = 0
    breakdown = False
    for _ in range(l):
        if history[-1] <= _RESIDUAL_FLOOR or np.sqrt(rs) <= _RESIDUAL_FLOOR:
            break
        ad = a.apply_array(d)
        curvature = float(np.vdot(ad, ad))  # d'A'Ad, nonnegative by construction
        if not np.isfinite(curvature) or curvature <= 0.0:
            breakdown = True
            break
        alpha = rs / curvature
        x += alpha * d
        s -= alpha * ad
        history.append(float(np.linalg.norm(s)))
        iterations += 1
        r_new = r - alpha * a.adjoint_array(ad)
        rs_new = float(np.vdot(r_new, r_new))
        beta = rs_new / rs
        d = r_new + beta * d
        r, rs = r_new, rs_new

    result = VideoTensor(x.astype(np.float32), x0.range_tag)
    return result, CgReport(iterations_run=iterations, residual_history=tuple(history), breakdown=breakdown)


def krylov_membership(
    x0: VideoTensor, x_bar: VideoTensor, y: VideoTensor, a: LinearDegradation, l: int
) -> float:
    """How far x_bar - x0 sticks out of the order-l Krylov space of A'A.

    Builds {r, Mr, ..., M^(l-1) r} densely with M = A'A and r the initial
    normal-equations residual, orthonormalizes by SVD, and returns the
    relative norm of the component of (x_bar - x0) outside that span.
    Returns 0 for x_bar = x0. Small problems only; guarded by materialize.
    """
    if l < 1:
        raise ParameterError(f"l must be >= 1, got {l}")
    dense = materialize(a)  # raises CapacityError past the size cap
    m = dense.T @ dense

    x0v = x0.data.astype(np.float64).ravel()
    w = x_bar.data.astype(np.float64).ravel() - x0v
    wnorm = float(np.linalg.norm(w))
    if wnorm == 0.0:
        return 0.0

    r = dense.T @ (y.data.astype(np.float64).ravel() - dense @ x0v)
    cols = [r]
    for _ in range(l - 1):
        cols.append(m @ cols[-1])
    basis = np.stack(cols, axis=1)

    u, svals, _ = np.linalg.svd(basis, full_matrices=False)
    if svals[0] == 0.0:
        return 1.0  # empty Krylov space, everything sticks out
    q = u[:, svals > svals[0] * 1e-12]
    outside = w - q @ (q.T @ w)
    return float(np.linalg.norm(outside)) / wnorm
