"""Command-line front end: encode, decode, eval, allocate, pmf-dump.

Exit codes: 0 success; 2 bad input or I/O failure; 3 model/geometry
mismatch; 4 corrupted or truncated bitstream data.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
from PIL import Image, UnidentifiedImageError

from .allocate import (
    DEFAULT_GRANULARITY,
    allocate_bruteforce,
    allocate_dp,
    read_problem,
    summarize,
    write_allocation,
)
from .errors import (
    CodecError,
    CorruptStream,
    ModelMismatch,
    TruncatedStream,
    UnsupportedVersion,
)
from .gmm import GmmParams, pmf_table
from .metrics import RdReport, ms_ssim
from .modelfile import load_model
from .pipeline import decode_image, encode_image

THREADS_ENV = "GMMC_THREADS"


def read_image(path: str) -> np.ndarray:
    """Load a PNG (or other Pillow-readable) image as (3, H, W) in [0, 1]."""
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return rgb.transpose(2, 0, 1)


def write_image(path: str, image: np.ndarray):
    """Store a (3, H, W) [0, 1] image as 8-bit RGB."""
    u8 = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(u8.transpose(1, 2, 0)).save(path)


def _write_report(path: str, report: dict):
    with open(path, "w", encoding="utf-8") as fp:
        json.dump(report, fp, indent=2, sort_keys=True)
        fp.write("\n")


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _check_overrides(args, model):
    """Abort when explicit --k/--n disagree with the loaded model."""
    if args.k is not None and args.k != model.k:
        raise ModelMismatch(f"--k {args.k} does not match model k={model.k}")
    if args.n is not None and args.n != model.n:
        raise ModelMismatch(f"--n {args.n} does not match model n={model.n}")


def _cmd_encode(args) -> int:
    model = load_model(args.model)
    _check_overrides(args, model)
    image = read_image(args.input)
    blob, report = encode_image(image, model, threads=args.threads)
    with open(args.output, "wb") as fp:
        fp.write(blob)
    if args.report:
        _write_report(args.report, report)
    print(f"encoded {args.input} -> {args.output}: "
          f"{report['container_bytes']} bytes, {report['bpp']:.4f} bpp")
    return 0


def _cmd_decode(args) -> int:
    model = load_model(args.model)
    _check_overrides(args, model)
    with open(args.input, "rb") as fp:
        data = fp.read()
    image, report = decode_image(data, model)
    write_image(args.output, image)
    if args.report:
        _write_report(args.report, report)
    print(f"decoded {args.input} -> {args.output}: "
          f"{report['width']}x{report['height']}, {report['bpp']:.4f} bpp")
    return 0


def _cmd_eval(args) -> int:
    orig = read_image(args.orig)
    recon = read_image(args.recon)
    score = ms_ssim(orig, recon)
    result = {"schema": 1, "action": "eval", "ms_ssim": score, "distortion": 1.0 - score}
    if args.lam is not None and args.bits is not None:
        pixels = orig.shape[1] * orig.shape[2]
        rep = RdReport(rate_y_bits=args.bits, rate_z_bits=0, num_pixels=pixels,
                       ms_ssim=score, lam=args.lam)
        result.update(bpp=rep.bpp, rd_loss=rep.loss, **{"lambda": args.lam})
    if args.report:
        _write_report(args.report, result)
    print(json.dumps(result, sort_keys=True))
    return 0


def _cmd_allocate(args) -> int:
    with open(args.table, "r", encoding="utf-8", newline="") as fp:
        problem = read_problem(fp, args.budget_bpp)
    if args.method == "dp":
        allocation = allocate_dp(problem, args.granularity)
    else:
        allocation = allocate_bruteforce(problem)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fp:
            write_allocation(fp, allocation)
    else:
        write_allocation(sys.stdout, allocation)
    mean, agg_bpp = summarize(allocation)
    print(
        f"allocated {len(problem.images)} images: mean ms_ssim {mean:.6f}, "
        f"bpp {agg_bpp:.6f}, feasible {allocation.feasible}",
        file=sys.stderr,
    )
    return 0


def _cmd_pmf_dump(args) -> int:
    params = GmmParams(tuple(args.weights), tuple(args.means), tuple(args.scales))
    if args.k is not None and args.k != params.k:
        raise ModelMismatch(f"--k {args.k} does not match {params.k} mixture components")
    pmf = pmf_table(params)
    json.dump({"k": params.k, "pmf": pmf.tolist(), "sum": float(pmf.sum())}, sys.stdout)
    print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gmmcodec",
        description="Mixture-model image codec: compress, expand, evaluate, allocate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_model_io(p, in_help, out_help):
        p.add_argument("--model", required=True, help="model parameter file")
        p.add_argument("--in", dest="input", required=True, help=in_help)
        p.add_argument("--out", dest="output", required=True, help=out_help)
        p.add_argument("--report", help="write a JSON report here")
        p.add_argument("--threads", type=int, default=_default_threads(),
                       help=f"table-builder threads (default ${THREADS_ENV} or 1)")
        p.add_argument("--k", type=int, help="expected mixture components (checked against model)")
        p.add_argument("--n", type=int, help="expected latent channels (checked against model)")

    enc = sub.add_parser("encode", help="compress an image to a container")
    add_model_io(enc, "input image (PNG)", "output container")
    enc.set_defaults(func=_cmd_encode)

    dec = sub.add_parser("decode", help="expand a container to an image")
    add_model_io(dec, "input container", "output image (PNG)")
    dec.set_defaults(func=_cmd_decode)

    ev = sub.add_parser("eval", help="score a reconstruction against its original")
    ev.add_argument("--orig", required=True, help="original image")
    ev.add_argument("--recon", required=True, help="reconstructed image")
    ev.add_argument("--lambda", dest="lam", type=float,
                    help="rate-distortion weight (with --bits, adds the loss)")
    ev.add_argument("--bits", type=int, help="coded size in bits of the reconstruction")
    ev.add_argument("--report", help="write a JSON report here")
    ev.set_defaults(func=_cmd_eval)

    al = sub.add_parser("allocate", help="pick per-image quality under a bit budget")
    al.add_argument("--table", required=True,
                    help="CSV of image_id,pixels,lambda,bpp,ms_ssim rows")
    al.add_argument("--budget-bpp", type=float, required=True,
                    help="global budget in bits per pixel")
    al.add_argument("--granularity", type=int, default=DEFAULT_GRANULARITY,
                    help="DP cell size in bits (default %(default)s)")
    al.add_argument("--method", choices=("dp", "bruteforce"), default="dp")
    al.add_argument("--out", help="write the assignment CSV here instead of stdout")
    al.set_defaults(func=_cmd_allocate)

    pd = sub.add_parser("pmf-dump", help="print a mixture's discrete distribution")
    pd.add_argument("--k", type=int, help="expected component count")
    pd.add_argument("--weights", type=float, nargs="+", required=True)
    pd.add_argument("--means", type=float, nargs="+", required=True)
    pd.add_argument("--scales", type=float, nargs="+", required=True)
    pd.set_defaults(func=_cmd_pmf_dump)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ModelMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (CorruptStream, TruncatedStream, UnsupportedVersion) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (CodecError, OSError, UnidentifiedImageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
