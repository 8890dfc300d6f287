"""Command-line front end: degrade, reconstruct, blind, selfcheck.

Every command writes a JSON manifest describing the run (version, config,
paths, seed, operator descriptor, timing) so outputs are reproducible from
the manifest plus the inputs. Videos travel either as frame directories
(PNG/BMP, unit range) or as .vtf tensor files (exact float32).

Exit codes: 0 success, 2 invalid configuration or parameters, 3 file I/O
failure, 4 remote-denoiser transport or protocol failure.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import os
import sys
import time
from typing import Any, Callable, Mapping

import numpy as np

from . import __version__
from .cg import cg_data_consistency
from .degrade import (
    LinearDegradation,
    adjoint_check,
    compose,
    frame_average_op,
    identity_op,
    op_from_descriptor,
    task_operator,
)
from .denoisers import (
    Denoiser,
    LatentCodec,
    gaussian_prior_denoiser,
    haar_codec,
    identity_codec,
    zero_denoiser,
)
from .errors import (
    ParameterError,
    ProtocolError,
    RemoteModelError,
    TransportError,
    VidrestoreError,
)
from .metrics import psnr, ssim
from .pipeline import (
    SolverConfig,
    blind_reconstruct_with_report,
    identity_pre_restorer,
    oracle_pre_restorer,
    reconstruct_with_report,
)
from .remote import RemoteDenoiser, remote_denoiser
from .rng import seeded_rng
from .schedule import add_noise, make_schedule, tweedie_denoise
from .tensors import (
    RangeTag,
    VideoTensor,
    convert_range,
    read_frame_dir,
    vtf_read,
    vtf_write,
    write_frame_dir,
)

REMOTE_ENDPOINT_ENV = "VISION_REMOTE"
SELFCHECK_FAULT_ENV = "VIDRESTORE_SELFCHECK_FAULT"

_CONFIG_KEYS = {
    "T": int,
    "tau_frac": float,
    "lambda_lpf": float,
    "cg_steps": int,
    "eta": float,
    "seed": int,
    "schedule": str,
    "denoiser": str,
    "codec": str,
    "range": str,
}


def _is_vtf(path: str) -> bool:
    return path.endswith(".vtf")


def read_video(path: str) -> VideoTensor:
    if _is_vtf(path):
        return vtf_read(path)
    return read_frame_dir(path)


def write_video(v: VideoTensor, path: str) -> None:
    if _is_vtf(path):
        vtf_write(v, path)
    else:
        write_frame_dir(v, path)


def default_sidecar(out: str, suffix: str) -> str:
    if _is_vtf(out):
        return out + "." + suffix
    return os.path.join(out, suffix)


def config_from_mapping(values: Mapping[str, Any]) -> SolverConfig:
    """Build a SolverConfig from flat string/number key-values (INI or JSON)."""
    kwargs: dict[str, Any] = {}
    for key, raw in values.items():
        if key not in _CONFIG_KEYS:
            raise ParameterError(f"unknown config key {key!r}")
        conv = _CONFIG_KEYS[key]
        try:
            val = conv(raw)
        except (TypeError, ValueError) as exc:
            raise ParameterError(f"bad value for config key {key!r}: {raw!r}") from exc
        if key == "schedule":
            kwargs["schedule_kind"] = val
        elif key == "range":
            name = str(val).strip().upper()
            if name not in RangeTag.__members__:
                raise ParameterError(f"range must be 'unit' or 'symmetric', got {val!r}")
            kwargs["range_tag"] = RangeTag[name]
        else:
            kwargs[key] = val
    return SolverConfig(**kwargs)


def load_config(path: str | None) -> SolverConfig:
    """Read the flat key-value config file ([solver] section, INI syntax)."""
    if path is None:
        return SolverConfig()
    if not os.path.exists(path):
        # a config input the user pointed at is a configuration error, not I/O
        raise ParameterError(f"--config file not found: {path}")
    cp = configparser.ConfigParser()
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ParameterError(f"cannot parse config file {path}: {exc}") from exc
    if cp.has_section("solver"):
        section = dict(cp["solver"])
    else:
        section = {k: v for k, v in cp.defaults().items()}
    return config_from_mapping(section)


def config_to_mapping(cfg: SolverConfig) -> dict[str, Any]:
    d = dataclasses.asdict(cfg)
    d["schedule"] = d.pop("schedule_kind")
    d["range"] = RangeTag(d.pop("range_tag")).name.lower()
    return d


def build_codec(name: str) -> LatentCodec:
    if name == "identity":
        return identity_codec()
    if name == "haar":
        return haar_codec()
    raise ParameterError(f"unknown codec {name!r} (expected identity or haar)")


def build_denoiser(
    name: str, cfg: SolverConfig, pool_size: int
) -> tuple[Denoiser, Callable[[], None]]:
    """Returns (denoiser, close). The close callable releases remote connections."""
    schedule = make_schedule(cfg.T, cfg.schedule_kind)
    if name == "zero":
        return zero_denoiser(), lambda: None
    if name == "gaussian":
        return gaussian_prior_denoiser(schedule), lambda: None
    if name == "remote" or name.startswith("remote:"):
        endpoint = name.split(":", 1)[1] if ":" in name else ""
        if not endpoint:
            endpoint = os.environ.get(REMOTE_ENDPOINT_ENV, "")
        if not endpoint:
            raise ParameterError(
                f"remote denoiser needs remote:HOST:PORT or the {REMOTE_ENDPOINT_ENV} env var"
            )
        session = remote_denoiser(endpoint, pool_size=pool_size, schedule=schedule)
        return session, session.close
    raise ParameterError(f"unknown denoiser {name!r} (expected zero, gaussian, or remote[:ADDR])")


def write_manifest(path: str, payload: dict[str, Any]) -> None:
    payload = dict(payload)
    payload["version"] = f"vidrestore {__version__}"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path: str, flag: str = "--manifest") -> dict[str, Any]:
    if not os.path.exists(path):
        raise ParameterError(f"{flag} file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ParameterError(f"manifest {path} must hold a JSON object")
    return data


def _metric_block(reference: VideoTensor, result: VideoTensor) -> str:
    ref_u = convert_range(reference, RangeTag.UNIT)
    out_u = convert_range(result, RangeTag.UNIT)
    clipped = VideoTensor(np.clip(out_u.data, 0.0, 1.0), RangeTag.UNIT)
    parts = [psnr(ref_u, clipped).to_text(), ssim(ref_u, clipped).to_text()]
    return "\n".join(parts)


def cmd_degrade(args: argparse.Namespace) -> int:
    x = read_video(args.input)
    x_sym = convert_range(x, RangeTag.SYMMETRIC)
    if args.replay:
        manifest = load_manifest(args.replay, flag="--replay")
        if "operator" not in manifest:
            raise ParameterError(f"manifest {args.replay} has no operator descriptor")
        op = op_from_descriptor(manifest["operator"])
        seed = int(manifest.get("seed", args.seed))
        task = manifest.get("task", "replay")
    else:
        overrides: dict[str, Any] = {}
        if args.sigma is not None:
            overrides["sigma"] = args.sigma
        if args.kernel_size is not None:
            overrides["kernel_size"] = args.kernel_size
        if args.factor is not None:
            overrides["factor"] = args.factor
        if args.rate is not None:
            overrides["rate"] = args.rate
        if args.window is not None:
            overrides["window"] = args.window
        op = task_operator(args.task, x_sym.shape, seed=args.seed, **overrides)
        seed = args.seed
        task = args.task
    started = time.perf_counter()
    y = op.apply(x_sym)
    write_video(y, args.out)
    write_manifest(
        args.manifest_out or default_sidecar(args.out, "manifest.json"),
        {
            "command": "degrade",
            "task": task,
            "seed": seed,
            "operator": op.descriptor,
            "input": args.input,
            "output": args.out,
            "timing_seconds": time.perf_counter() - started,
        },
    )
    return 0


def cmd_reconstruct(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    if "operator" not in manifest:
        raise ParameterError(f"manifest {args.manifest} has no operator descriptor")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    denoiser_name = args.denoiser or cfg.denoiser
    codec_name = args.codec or cfg.codec
    cfg = dataclasses.replace(cfg, denoiser=denoiser_name, codec=codec_name)

    op = op_from_descriptor(manifest["operator"])
    y = convert_range(read_video(args.input), cfg.range_tag)
    codec = build_codec(codec_name)
    workers = args.workers or os.cpu_count() or 1
    denoiser, close = build_denoiser(denoiser_name, cfg, pool_size=workers)
    started = time.perf_counter()
    try:
        out, report = reconstruct_with_report(y, op, cfg, denoiser, codec, workers=workers)
    finally:
        close()
    write_video(out, args.out)

    report_text = report.to_text()
    if args.reference:
        reference = read_video(args.reference)
        metrics = _metric_block(reference, out)
        report_text += "\n" + metrics
        print(metrics)
    report_path = args.report or default_sidecar(args.out, "report.txt")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report_text + "\n")

    write_manifest(
        args.manifest_out or default_sidecar(args.out, "manifest.json"),
        {
            "command": "reconstruct",
            "config": config_to_mapping(cfg),
            "operator": op.descriptor,
            "seed": cfg.seed,
            "input": args.input,
            "output": args.out,
            "timing_seconds": time.perf_counter() - started,
        },
    )
    return 0


def _build_pre_restorer(selector: str):
    if selector == "identity":
        return identity_pre_restorer()
    if selector.startswith("oracle:"):
        path = selector.split(":", 1)[1]
        if not path:
            raise ParameterError("oracle pre-restorer needs oracle:PATH")
        return oracle_pre_restorer(read_video(path))
    raise ParameterError(f"unknown pre-restorer {selector!r} (expected identity or oracle:PATH)")


def cmd_blind(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    denoiser_name = args.denoiser or cfg.denoiser
    codec_name = args.codec or cfg.codec
    cfg = dataclasses.replace(cfg, denoiser=denoiser_name, codec=codec_name)

    y = read_video(args.input)
    pre = _build_pre_restorer(args.pre)
    codec = build_codec(codec_name)
    workers = args.workers or os.cpu_count() or 1
    denoiser, close = build_denoiser(denoiser_name, cfg, pool_size=workers)
    started = time.perf_counter()
    try:
        out, psf1, psf2, report = blind_reconstruct_with_report(
            y, pre, cfg, denoiser, codec, workers=workers
        )
    finally:
        close()
    write_video(out, args.out)

    report_text = report.to_text()
    if args.reference:
        reference = read_video(args.reference)
        metrics = _metric_block(reference, out)
        report_text += "\n" + metrics
        print(metrics)
    report_path = args.report or default_sidecar(args.out, "report.txt")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report_text + "\n")
    print(f"psf_round1 sigma={psf1.sigma:.4f}")
    print(f"psf_round2 sigma={psf2.sigma:.4f}")

    write_manifest(
        args.manifest_out or default_sidecar(args.out, "manifest.json"),
        {
            "command": "blind",
            "config": config_to_mapping(cfg),
            "pre_restorer": args.pre,
            "psf": [
                {"sigma": psf1.sigma, "residual": psf1.residual},
                {"sigma": psf2.sigma, "residual": psf2.residual},
            ],
            "seed": cfg.seed,
            "input": args.input,
            "output": args.out,
            "timing_seconds": time.perf_counter() - started,
        },
    )
    return 0


def _selfcheck_operators(fault: str) -> list[tuple[str, LinearDegradation]]:
    shape = (8, 3, 16, 16)  # windowed tasks need at least 7 frames
    ops: list[tuple[str, LinearDegradation]] = []
    for task in ("deblur", "sr", "inpaint", "deblur+", "sr+", "inpaint+"):
        ops.append((task, task_operator(task, shape, seed=7)))
    fa = frame_average_op(3, shape)
    ops.append(("compose(frame_average,identity)", compose(fa, identity_op(shape))))
    ops.append(
        ("compose(identity,frame_average)", compose(identity_op(shape), fa))
    )
    ops.append(("compose(frame_average,frame_average)", compose(fa, fa)))
    if fault == "broken-adjoint":
        broken = identity_op(shape)
        bad = LinearDegradation(
            input_shape=broken.input_shape,
            output_shape=broken.output_shape,
            descriptor={"kind": "identity", "shape": list(shape)},
            apply_fn=broken.apply_array,
            adjoint_fn=lambda yv: yv * 1.01,
        )
        ops.append(("identity(faulted)", bad))
    return ops


def cmd_selfcheck(args: argparse.Namespace) -> int:
    del args
    fault = os.environ.get(SELFCHECK_FAULT_ENV, "")
    started = time.perf_counter()
    rows: list[tuple[str, bool, str]] = []

    for name, op in _selfcheck_operators(fault):
        err = adjoint_check(op, trials=10, seed=11)
        rows.append((f"adjoint {name}", err <= 1e-5, f"max_rel_err={err:.2e}"))

    rng = seeded_rng(13, 2)
    shape = (2, 1, 6, 6)
    x_true = VideoTensor(
        rng.standard_normal(shape).astype(np.float32), RangeTag.SYMMETRIC
    )
    op = task_operator("inpaint", shape, seed=3)
    y = op.apply(x_true)
    x0 = VideoTensor(np.zeros(shape, np.float32), RangeTag.SYMMETRIC)
    dim = int(np.prod(shape))
    sol, rep = cg_data_consistency(x0, y, op, dim)
    del sol
    monotone = all(
        rep.residual_history[i + 1] <= rep.residual_history[i] + 1e-12
        for i in range(len(rep.residual_history) - 1)
    )
    converged = rep.residual_history[-1] <= 1e-6 * max(rep.residual_history[0], 1e-30)
    rows.append(
        (
            "cg finite termination",
            monotone and converged and not rep.breakdown,
            f"iters={rep.iterations_run} final={rep.residual_history[-1]:.2e}",
        )
    )

    schedule = make_schedule(25, "scaled_linear")
    x0v = rng.standard_normal((1, 3, 8, 8)).astype(np.float32)
    eps = rng.standard_normal((1, 3, 8, 8)).astype(np.float32)
    worst = 0.0
    for t in range(1, 26):
        z = add_noise(x0v, eps, t, schedule)
        back = tweedie_denoise(z, eps, t, schedule)
        worst = max(worst, float(np.max(np.abs(back - x0v))))
    rows.append(("tweedie identity", worst <= 1e-5, f"max_abs_err={worst:.2e}"))

    frame = rng.standard_normal((3, 16, 16)).astype(np.float32)
    for codec in (identity_codec(), haar_codec()):
        round_trip = codec.decode(codec.encode(frame))
        err = float(np.max(np.abs(round_trip - frame)))
        rows.append((f"codec roundtrip {codec.name}", err <= 1e-6, f"max_abs_err={err:.2e}"))

    all_pass = all(ok for _, ok, _ in rows)
    width = max(len(name) for name, _, _ in rows)
    for name, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name.ljust(width)}  {detail}")
    print(f"selfcheck {'passed' if all_pass else 'FAILED'} in {time.perf_counter() - started:.2f}s")
    return 0 if all_pass else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vidrestore",
        description="Video restoration via batch-consistent latent diffusion sampling.",
    )
    parser.add_argument("--version", action="version", version=f"vidrestore {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="apply a degradation task and write the measurement")
    p.add_argument("--input", required=True, help="frame directory or .vtf file")
    p.add_argument(
        "--task",
        choices=["deblur", "sr", "inpaint", "deblur+", "sr+", "inpaint+"],
        help="degradation to apply (omit when using --replay)",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output frame directory or .vtf file")
    p.add_argument("--manifest-out", default=None)
    p.add_argument("--replay", default=None, help="manifest whose operator descriptor to reuse")
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--kernel-size", type=int, default=None)
    p.add_argument("--factor", type=int, default=None)
    p.add_argument("--rate", type=float, default=None)
    p.add_argument("--window", type=int, default=None)
    p.set_defaults(fn=cmd_degrade)

    p = sub.add_parser("reconstruct", help="restore a measurement written by degrade")
    p.add_argument("--input", required=True, help="measurement frame directory or .vtf file")
    p.add_argument("--manifest", required=True, help="manifest holding the operator descriptor")
    p.add_argument("--config", default=None, help="solver config file")
    p.add_argument("--denoiser", default=None, help="zero, gaussian, or remote[:HOST:PORT]")
    p.add_argument("--codec", default=None, choices=["identity", "haar"])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--reference", default=None, help="ground truth for metrics")
    p.add_argument("--report", default=None)
    p.add_argument("--manifest-out", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_reconstruct)

    p = sub.add_parser("blind", help="two-round blind deblurring with PSF refinement")
    p.add_argument("--input", required=True)
    p.add_argument("--pre", default="identity", help="identity or oracle:PATH")
    p.add_argument("--config", default=None)
    p.add_argument("--denoiser", default=None)
    p.add_argument("--codec", default=None, choices=["identity", "haar"])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--reference", default=None)
    p.add_argument("--report", default=None)
    p.add_argument("--manifest-out", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_blind)

    p = sub.add_parser("selfcheck", help="run built-in numerical checks")
    p.set_defaults(fn=cmd_selfcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "degrade" and not args.replay and not args.task:
        parser.error("degrade requires --task (or --replay)")
    try:
        return args.fn(args)
    except (TransportError, RemoteModelError, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except VidrestoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
