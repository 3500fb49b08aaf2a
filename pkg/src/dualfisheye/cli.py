"""Command-line entry point: ``dualfisheye <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from .exceptions import StitchError
from .imagecore import AffineTransform2D
from .pipeline import (CameraProfile, calibrate_align, calibrate_vignette, read_image,
                       stitch, write_image)
from .vignette import RadialProfile
from .synth import Occluder, SynthConfig, ground_truth, make_test_pano, render_dual

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # print full help, not just the usage line
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(EXIT_USAGE, f"\n{self.prog}: error: {message}\n")


def _affine(text):
    try:
        vals = [float(v) for v in text.split(",")]
        return AffineTransform2D.from_params(vals)
    except (ValueError, TypeError) as exc:
        raise argparse.ArgumentTypeError(f"expected a,b,c,d,tx,ty: {exc}") from None


def build_parser():
    p = _Parser(prog="dualfisheye", description="Stitch dual-fisheye frames into 360x180 panoramas.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("stitch", help="stitch a side-by-side dual-fisheye frame")
    s.add_argument("input", help="PNG/JPEG dual-fisheye frame (width = 2 x height)")
    s.add_argument("--profile", required=True, help="camera profile (JSON)")
    s.add_argument("--out", required=True, help="output panorama PNG")
    s.add_argument("--pano-height", type=int, help="override output height (width = 2 x height)")
    s.add_argument("--no-refine", action="store_true", help="skip the adaptive NCC refinement")
    s.add_argument("--paper-ramp", action="store_true", help="use raw, unnormalized ramp weights")
    s.add_argument("--report", help="write a JSON stitch report here")
    s.add_argument("--16bit", dest="bit16", action="store_true", help="write a 16-bit PNG")

    v = sub.add_parser("calibrate-vignette", help="fit lens fall-off from a white target frame")
    v.add_argument("input", help="dual-fisheye capture of a uniform white target")
    v.add_argument("--out", required=True, help="profile to write")
    v.add_argument("--profile", help="base profile (default: centred lenses sized to the frame)")
    v.add_argument("--degree", type=int, default=5)
    v.add_argument("--bins", type=int, default=64)
    v.add_argument("--radial-csv", metavar="PREFIX",
                   help="also write measured radial profiles to PREFIX_front.csv / PREFIX_rear.csv")
    v.add_argument("--report", help="write a JSON calibration report here")

    a = sub.add_parser("calibrate-align", help="estimate the precomputed affine from control points")
    a.add_argument("input", help="control-point CSV with columns x1,y1,x2,y2")
    a.add_argument("--out", required=True, help="profile to write")
    a.add_argument("--profile", help="base profile (default: full-resolution Gear 360)")
    a.add_argument("--report", help="write a JSON calibration report here")

    y = sub.add_parser("synth", help="render a synthetic dual-fisheye frame with ground truth")
    y.add_argument("--out", required=True, help="output frame PNG")
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--pano-height", type=int, default=512)
    y.add_argument("--size", type=int, default=640, help="half-frame side in pixels")
    y.add_argument("--kind", choices=("chart", "noise", "low"), default="chart")
    y.add_argument("--fov", type=float, default=193.0)
    y.add_argument("--misalign", type=_affine, help="rear canvas affine a,b,c,d,tx,ty")
    y.add_argument("--rear-gain", type=float, default=1.0)
    y.add_argument("--noise", type=float, default=0.0, help="Gaussian noise sigma")
    y.add_argument("--occluder", action="store_true", help="add a near object with parallax")
    y.add_argument("--ground-truth", help="write the ground-truth panorama PNG here")
    y.add_argument("--profile-out", help="write a matching camera profile here")
    y.add_argument("--16bit", dest="bit16", action="store_true", help="write 16-bit PNGs")
    return p


def _load_profile(path):
    if path is None:
        return None
    if not os.path.isfile(path):
        raise _UsageError(f"profile not found: {path}")
    try:
        return CameraProfile.load(path)
    except (ValueError, KeyError, TypeError) as exc:
        raise _UsageError(f"invalid profile {path}: {exc}") from None


def _write_json(path, obj):
    if path:
        with open(path, "w") as fh:
            json.dump(obj, fh, indent=2)
            fh.write("\n")


def _read_frame(path):
    try:
        return read_image(path)
    except OSError as exc:
        raise StitchError(str(exc), stage="input") from exc


def _cmd_stitch(args):
    profile = _load_profile(args.profile)
    if args.pano_height is not None:
        profile = replace(profile, pano_height=args.pano_height)
    frame = _read_frame(args.input)
    pano, report = stitch(frame, profile, refine=not args.no_refine,
                          normalize=not args.paper_ramp)
    write_image(args.out, pano, 16 if args.bit16 else 8)
    _write_json(args.report, report)
    for m in report["matches"]:
        print(f"{m['band']}: du={m['du']} dv={m['dv']} gamma={m['peak_gamma']:.4f}")
    if report["warning"]:
        print(f"warning: {report['warning']}", file=sys.stderr)
    print(f"wrote {args.out} ({report['pano_width']}x{report['pano_height']})")


def _cmd_calibrate_vignette(args):
    base = _load_profile(args.profile)
    frame = _read_frame(args.input)
    if base is None:
        base = CameraProfile.for_frame(frame.height)
    profile, report = calibrate_vignette(frame, base, degree=args.degree, n_bins=args.bins)
    if args.radial_csv:
        for name, lens in report["lenses"].items():
            RadialProfile(lens["radius_px"], lens["intensity"]).to_csv(f"{args.radial_csv}_{name}.csv")
    profile.save(args.out)
    _write_json(args.report, report)
    for name, lens in report["lenses"].items():
        print(f"{name}: residual RMS {lens['residual_rms']:.3e}")


def _cmd_calibrate_align(args):
    base = _load_profile(args.profile) or CameraProfile.gear360()
    if not os.path.isfile(args.input):
        raise _UsageError(f"control-point file not found: {args.input}")
    try:
        profile, report = calibrate_align(args.input, base)
    except StitchError as exc:
        exc.stage = exc.stage or "calibrate-align"
        raise
    except ValueError as exc:
        raise StitchError(str(exc), stage="calibrate-align") from exc
    profile.save(args.out)
    _write_json(args.report, report)
    for i, r in enumerate(report["residuals_px"]):
        print(f"pair {i}: residual {r:.4g} px")
    print(f"RMS residual {report['rms_px']:.4g} px")


def _cmd_synth(args):
    try:
        cfg = SynthConfig(
            fov_deg=args.fov, halfframe_size=args.size,
            misalign=args.misalign or AffineTransform2D.identity(),
            rear_gain=args.rear_gain, noise_sigma=args.noise, seed=args.seed,
            occluder=Occluder(seed=args.seed + 1) if args.occluder else None)
        pano = make_test_pano(args.pano_height, args.kind, seed=args.seed)
    except ValueError as exc:
        raise StitchError(str(exc), stage="synth") from exc
    depth = 16 if args.bit16 else 8
    write_image(args.out, render_dual(pano, cfg), depth)
    if args.ground_truth:
        write_image(args.ground_truth, ground_truth(pano, cfg), depth)
    if args.profile_out:
        CameraProfile.for_frame(args.size, args.pano_height, args.fov).save(args.profile_out)
    print(f"wrote {args.out}")


_COMMANDS = {
    "stitch": _cmd_stitch,
    "calibrate-vignette": _cmd_calibrate_vignette,
    "calibrate-align": _cmd_calibrate_align,
    "synth": _cmd_synth,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"dualfisheye {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StitchError as exc:
        print(f"dualfisheye {args.command}: error {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"dualfisheye {args.command}: error [io] {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
