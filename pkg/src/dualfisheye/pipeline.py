"""Camera profiles, image I/O and end-to-end stitching."""

from __future__ import annotations

import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace

import cv2
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_dual_frame, check_image, check_pano_height
from .align import ControlPointSet, RefineParams, affine_residuals, estimate_affine, two_step_align
from .blend import composite, seam_discontinuity
from .exceptions import StitchError
from .imagecore import AffineTransform2D, ImageBuffer, to_luma
from .unwarp import DEFAULT_FOV, LensProfile, compute_overlaps, unwarp_lens
from .vignette import FalloffPolynomial, compensate, fit_falloff, measure_radial_profile

PROFILE_SCHEMA = "dualfisheye/camera-profile@1"
REPORT_SCHEMA = "dualfisheye/stitch-report@1"


# ---------------------------------------------------------------------------
# camera profile
# ---------------------------------------------------------------------------

def _lens_to_dict(lens):
    return {
        "fov_deg": lens.fov_deg,
        "circle_center": list(lens.circle_center),
        "circle_radius": lens.circle_radius,
        "yaw_offset_deg": lens.yaw_offset_deg,
        "falloff": list(lens.falloff.coeffs),
    }


def _lens_from_dict(d):
    return LensProfile(
        fov_deg=float(d["fov_deg"]),
        circle_center=tuple(d["circle_center"]),
        circle_radius=float(d["circle_radius"]),
        falloff=FalloffPolynomial(tuple(d["falloff"])),
        yaw_offset_deg=float(d.get("yaw_offset_deg", 0.0)),
    )


@dataclass(frozen=True)
class CameraProfile:
    """Everything needed to stitch frames from one dual-fisheye camera.

    Serialised as JSON (see ``to_dict``); floats are written with
    ``repr`` precision so a save/load round trip is bit-exact.
    """

    front: LensProfile
    rear: LensProfile
    calib: AffineTransform2D = field(default_factory=AffineTransform2D.identity)
    pano_height: int = 512
    refine: RefineParams = field(default_factory=RefineParams)
    refine_enabled: bool = True
    blend_normalize: bool = True

    @classmethod
    def for_frame(cls, halfframe_size, pano_height=512, fov_deg=DEFAULT_FOV, falloff=None,
                  refine=None):
        """Centred lenses inscribed in square half-frames."""
        falloff = falloff or FalloffPolynomial.constant()
        return cls(LensProfile.centered(halfframe_size, fov_deg, 0.0, falloff),
                   LensProfile.centered(halfframe_size, fov_deg, 180.0, falloff),
                   pano_height=pano_height, refine=refine or RefineParams())

    @classmethod
    def gear360(cls):
        """Defaults for full-resolution 7776 x 3888 Gear 360 frames."""
        return cls.for_frame(3888, pano_height=1944, falloff=FalloffPolynomial.gear360())

    @property
    def fov_deg(self):
        return min(self.front.fov_deg, self.rear.fov_deg)

    def to_dict(self):
        r = self.refine
        return {
            "schema": PROFILE_SCHEMA,
            "pano_height": self.pano_height,
            "front": _lens_to_dict(self.front),
            "rear": _lens_to_dict(self.rear),
            "calib_affine": list(self.calib.params),
            "refine": {
                "enabled": self.refine_enabled,
                "template_size": None if r.template_size is None else list(r.template_size),
                "search_margin": r.search_margin,
                "min_peak_gamma": r.min_peak_gamma,
                "windows_per_band": r.windows_per_band,
                "min_overlap": r.min_overlap,
            },
            "blend": {"normalize": self.blend_normalize},
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("schema") != PROFILE_SCHEMA:
            raise ValueError(f"unsupported camera profile schema {d.get('schema')!r}")
        r = d.get("refine", {})
        return cls(
            front=_lens_from_dict(d["front"]),
            rear=_lens_from_dict(d["rear"]),
            calib=AffineTransform2D.from_params(d.get("calib_affine", AffineTransform2D().params)),
            pano_height=int(d.get("pano_height", 512)),
            refine=RefineParams(
                template_size=None if r.get("template_size") is None else tuple(r["template_size"]),
                search_margin=int(r.get("search_margin", 16)),
                min_peak_gamma=float(r.get("min_peak_gamma", 0.5)),
                windows_per_band=int(r.get("windows_per_band", 1)),
                min_overlap=float(r.get("min_overlap", 0.6)),
            ),
            refine_enabled=bool(r.get("enabled", True)),
            blend_normalize=bool(d.get("blend", {}).get("normalize", True)),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# image I/O
# ---------------------------------------------------------------------------

def read_image(path):
    """Read PNG/JPEG into a float [0, 1] RGB (or gray) ImageBuffer."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise OSError(f"cannot read image {path}")
    if raw.ndim == 3:
        raw = raw[:, :, :3][:, :, ::-1]
    scale = np.iinfo(raw.dtype).max if np.issubdtype(raw.dtype, np.integer) else 1.0
    return ImageBuffer(raw.astype(np.float32) / scale)


def write_image(path, img, bit_depth=8):
    """Write an ImageBuffer as PNG, clipping to [0, 1]."""
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    img = check_image(img)
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    top = np.iinfo(dtype).max
    out = np.round(np.clip(img.data, 0.0, 1.0) * top).astype(dtype)
    out = out[:, :, 0] if img.channels == 1 else out[:, :, ::-1]
    if not cv2.imwrite(str(path), np.ascontiguousarray(out)):
        raise OSError(f"cannot write image {path}")


# ---------------------------------------------------------------------------
# stitching
# ---------------------------------------------------------------------------

@contextmanager
def _stage(name, timings):
    t0 = time.perf_counter()
    try:
        yield
    except StitchError as exc:
        if exc.stage is None:
            exc.stage = name
        raise
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise StitchError(str(exc), stage=name) from exc
    finally:
        timings[name] = time.perf_counter() - t0


def split_halves(frame):
    frame = check_dual_frame(frame)
    s = frame.height
    return ImageBuffer(frame.data[:, :s]), ImageBuffer(frame.data[:, s:])


def stitch(frame, profile, refine=None, normalize=None):
    """Stitch a side-by-side dual-fisheye frame into an equirectangular panorama.

    Returns ``(panorama, report)``. ``refine`` and ``normalize`` override the
    profile's switches when not None.
    """
    refine = profile.refine_enabled if refine is None else refine
    normalize = profile.blend_normalize if normalize is None else normalize
    pano_h = check_pano_height(profile.pano_height)
    timings = {}

    with _stage("input", timings):
        front_half, rear_half = split_halves(frame)
    with _stage("vignette", timings):
        front_half = compensate(front_half, profile.front.falloff, profile.front.circle_center)
        rear_half = compensate(rear_half, profile.rear.falloff, profile.rear.circle_center)
    with _stage("unwarp", timings):
        front = unwarp_lens(front_half, profile.front, pano_h)
        rear = unwarp_lens(rear_half, profile.rear, pano_h)
        overlaps = compute_overlaps(profile.fov_deg, front.width)
    with _stage("align", timings):
        aligned = two_step_align(front, rear, profile.calib, profile.refine, overlaps, refine=refine)
    with _stage("blend", timings):
        pano = composite(front, aligned.rear, overlaps, normalize=normalize)
        seam = seam_discontinuity(front, aligned.rear, overlaps)

    report = {
        "schema": REPORT_SCHEMA,
        "pano_width": pano.width,
        "pano_height": pano.height,
        "refine": bool(refine),
        "normalized_ramp": bool(normalize),
        "bands": [{"name": b.name, "start": b.start, "stop": b.stop} for b in overlaps.bands],
        "matches": [m.as_dict() for m in aligned.matches],
        "calib_affine": list(aligned.calib.params),
        "refine_affine": list(aligned.refine.params),
        "total_affine": list(aligned.total.params),
        "seam_discontinuity": float(seam),
        "warning": aligned.warning,
        "timings_s": timings,
    }
    return pano, report


def calibrate_vignette(white_frame, profile, degree=5, n_bins=64):
    """Fit each lens's fall-off curve from a flat white capture.

    Returns ``(updated_profile, report)``.
    """
    if not isinstance(white_frame, ImageBuffer):
        white_frame = read_image(white_frame)
    timings = {}
    report = {"degree": degree, "n_bins": n_bins, "lenses": {}}
    halves = dict(zip(("front", "rear"), split_halves(white_frame)))
    lenses = {}
    for name, half in halves.items():
        lens = getattr(profile, name)
        with _stage(f"vignette-{name}", timings):
            prof = measure_radial_profile(to_luma(half), lens.circle_center,
                                          lens.circle_radius, n_bins)
            poly = fit_falloff(prof, degree)
        lenses[name] = replace(lens, falloff=poly)
        report["lenses"][name] = {
            "coeffs": list(poly.coeffs),
            "residual_rms": poly.residual_rms,
            "radius_px": prof.radius.tolist(),
            "intensity": prof.intensity.tolist(),
        }
    return replace(profile, **lenses), report


def calibrate_align(points, profile):
    """Estimate the precomputed affine from control points.

    ``points`` is a ControlPointSet or a path to an ``x1,y1,x2,y2`` CSV.
    Returns ``(updated_profile, report)``.
    """
    if not isinstance(points, ControlPointSet):
        points = ControlPointSet.from_csv(points)
    A = estimate_affine(points)
    res = affine_residuals(A, points)
    report = {
        "pairs": len(points),
        "affine": list(A.params),
        "residuals_px": res.tolist(),
        "rms_px": float(np.sqrt(np.mean(res ** 2))),
    }
    return replace(profile, calib=A), report


class DualFisheyeStitcher(BaseEstimator, TransformerMixin):
    """Scikit-learn style wrapper around :func:`stitch`.

    Parameters
    ----------
    profile : CameraProfile or None
        Camera profile; a centred default sized to the first frame if None.
    refine : bool
        Run the adaptive second alignment step.
    paper_ramp : bool
        Use the raw (unnormalised) ramp weights.
    pano_height : int or None
        Overrides the profile's output height.
    """

    def __init__(self, profile=None, refine=True, paper_ramp=False, pano_height=None):
        self.profile = profile
        self.refine = refine
        self.paper_ramp = paper_ramp
        self.pano_height = pano_height

    def fit(self, X=None, y=None):
        profile = self.profile
        if profile is None:
            if X is None:
                raise ValueError("need a frame or a profile to fit")
            profile = CameraProfile.for_frame(check_dual_frame(X).height)
        if self.pano_height is not None:
            profile = replace(profile, pano_height=check_pano_height(self.pano_height))
        self.profile_ = profile
        return self

    def transform(self, X):
        check_is_fitted(self, "profile_")
        pano, report = stitch(X, self.profile_, refine=self.refine,
                              normalize=not self.paper_ramp)
        self.last_report_ = report
        return pano.data
