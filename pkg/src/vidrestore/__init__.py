"""Video restoration through batch-consistent latent diffusion sampling.

Solves spatio-temporal inverse problems (deblurring, super-resolution,
inpainting, and their temporally-averaged variants) by steering a diffusion
sampler with conjugate-gradient data consistency in pixel space, plus a
two-round blind mode that refines an unknown Gaussian PSF width between
reconstruction passes.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .cg import CgReport, cg_data_consistency, krylov_membership
from .degrade import (
    LinearDegradation,
    MaskPattern,
    adjoint_check,
    avgpool_sr_op,
    compose,
    frame_average_op,
    gaussian_blur_op,
    identity_op,
    materialize,
    op_from_descriptor,
    random_mask_op,
    realize_mask,
    task_operator,
)
from .denoisers import (
    Denoiser,
    FuncDenoiser,
    LatentBatch,
    LatentCodec,
    gaussian_prior_denoiser,
    haar_codec,
    identity_codec,
    zero_denoiser,
)
from .errors import (
    CapacityError,
    DimensionMismatchError,
    FormatError,
    ParameterError,
    PayloadLengthError,
    ProtocolError,
    RemoteModelError,
    ShapeError,
    TransportError,
    VidrestoreError,
)
from .kernels import gaussian_kernel, lpf_kernel
from .metrics import MetricReport, psnr, ssim
from .pipeline import (
    DegradeResult,
    PsfEstimate,
    RunReport,
    SolverConfig,
    StepRecord,
    blind_reconstruct,
    blind_reconstruct_with_report,
    degrade,
    estimate_psf_sigma,
    identity_pre_restorer,
    initialize_latents,
    oracle_pre_restorer,
    reconstruct,
    reconstruct_with_report,
)
from .remote import RemoteDenoiser, remote_codec, remote_denoiser
from .rng import seeded_rng
from .schedule import (
    LpfSchedule,
    NoiseMix,
    NoiseSchedule,
    add_noise,
    compose_noise,
    ddim_invert,
    lpf_apply,
    make_schedule,
    renoise,
    tweedie_denoise,
)
from .tensors import (
    RangeTag,
    VideoTensor,
    convert_range,
    read_frame_dir,
    vtf_read,
    vtf_write,
    write_frame_dir,
)

__all__ = [
    "__version__",
    "CgReport",
    "cg_data_consistency",
    "krylov_membership",
    "LinearDegradation",
    "MaskPattern",
    "adjoint_check",
    "avgpool_sr_op",
    "compose",
    "frame_average_op",
    "gaussian_blur_op",
    "identity_op",
    "materialize",
    "op_from_descriptor",
    "random_mask_op",
    "realize_mask",
    "task_operator",
    "Denoiser",
    "FuncDenoiser",
    "LatentBatch",
    "LatentCodec",
    "gaussian_prior_denoiser",
    "haar_codec",
    "identity_codec",
    "zero_denoiser",
    "CapacityError",
    "DimensionMismatchError",
    "FormatError",
    "ParameterError",
    "PayloadLengthError",
    "ProtocolError",
    "RemoteModelError",
    "ShapeError",
    "TransportError",
    "VidrestoreError",
    "gaussian_kernel",
    "lpf_kernel",
    "MetricReport",
    "psnr",
    "ssim",
    "DegradeResult",
    "PsfEstimate",
    "RunReport",
    "SolverConfig",
    "StepRecord",
    "blind_reconstruct",
    "blind_reconstruct_with_report",
    "degrade",
    "estimate_psf_sigma",
    "identity_pre_restorer",
    "initialize_latents",
    "oracle_pre_restorer",
    "reconstruct",
    "reconstruct_with_report",
    "RemoteDenoiser",
    "remote_codec",
    "remote_denoiser",
    "seeded_rng",
    "LpfSchedule",
    "NoiseMix",
    "NoiseSchedule",
    "add_noise",
    "compose_noise",
    "ddim_invert",
    "lpf_apply",
    "make_schedule",
    "renoise",
    "tweedie_denoise",
    "RangeTag",
    "VideoTensor",
    "convert_range",
    "read_frame_dir",
    "vtf_read",
    "vtf_write",
    "write_frame_dir",
]
