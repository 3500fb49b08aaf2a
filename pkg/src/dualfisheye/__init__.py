"""Dual-fisheye to equirectangular panorama stitching."""

from .align import (AlignmentResult, ControlPointAffine, ControlPointSet, MatchResult,
                    RefineParams, estimate_affine, match_window, ncc_direct, ncc_fast,
                    ncc_masked, refine_affine, two_step_align)
from .blend import composite, ramp_weights, seam_discontinuity
from .exceptions import (AspectMismatch, BadProfile, CoverageHole, DegenerateConfiguration,
                         EmptyBin, IllConditioned, LowConfidence, NoOverlap, SingularTransform,
                         StitchError)
from .imagecore import AffineTransform2D, ImageBuffer, SummedAreaTable, psnr, warp_affine
from .pipeline import (CameraProfile, DualFisheyeStitcher, calibrate_align, calibrate_vignette,
                       read_image, stitch, write_image)
from .synth import Occluder, SynthConfig, make_test_pano, render_dual, render_lens
from .unwarp import LensProfile, OverlapSpec, compute_overlaps, unwarp_lens
from .vignette import FalloffCompensator, FalloffPolynomial, RadialProfile, fit_falloff

__version__ = "0.1.0"

__all__ = [
    "AffineTransform2D", "AlignmentResult", "AspectMismatch", "BadProfile", "CameraProfile",
    "ControlPointAffine", "ControlPointSet", "CoverageHole", "DegenerateConfiguration",
    "DualFisheyeStitcher", "EmptyBin", "FalloffCompensator", "FalloffPolynomial",
    "IllConditioned", "ImageBuffer", "LensProfile", "LowConfidence", "MatchResult",
    "NoOverlap", "Occluder", "OverlapSpec", "RadialProfile", "RefineParams",
    "SingularTransform", "StitchError", "SummedAreaTable", "SynthConfig",
    "calibrate_align", "calibrate_vignette", "composite", "compute_overlaps",
    "estimate_affine", "fit_falloff", "make_test_pano", "match_window", "ncc_direct",
    "ncc_fast", "ncc_masked", "psnr", "ramp_weights", "read_image", "refine_affine",
    "render_dual", "render_lens", "seam_discontinuity", "stitch", "two_step_align",
    "unwarp_lens", "warp_affine", "write_image",
]
