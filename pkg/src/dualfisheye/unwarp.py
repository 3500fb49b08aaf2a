"""Fisheye to equirectangular unwarping and overlap-band bookkeeping.

Panorama conventions: width is twice the height; column ``j`` has yaw
``((j + 0.5) / W - 0.5) * 360`` degrees and row ``i`` has pitch
``((i + 0.5) / H - 0.5) * 180`` degrees (row 0 looks up). The front lens
looks along yaw 0 and the rear lens along yaw 180.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_image, check_pano_height
from .exceptions import BadProfile, NoOverlap
from .imagecore import BORDER_CLAMP, ImageBuffer, bilinear_sample
from .vignette import FalloffPolynomial

DEFAULT_FOV = 193.0
_ANGLE_TOL = 1e-9


@dataclass(frozen=True)
class LensProfile:
    """Geometry and fall-off of one fisheye lens within its half-frame."""

    fov_deg: float = DEFAULT_FOV
    circle_center: tuple = (0.0, 0.0)
    circle_radius: float = 1.0
    falloff: FalloffPolynomial = field(default_factory=FalloffPolynomial.constant)
    yaw_offset_deg: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "circle_center", tuple(float(v) for v in self.circle_center))
        if not 180.0 < self.fov_deg < 220.0:
            raise BadProfile(f"field of view {self.fov_deg} deg outside (180, 220)")
        if self.circle_radius <= 0:
            raise BadProfile("fisheye circle radius must be positive")

    @classmethod
    def centered(cls, size, fov_deg=DEFAULT_FOV, yaw_offset_deg=0.0, falloff=None):
        """Circle inscribed in a ``size x size`` half-frame."""
        c = (size - 1) / 2.0
        return cls(fov_deg=fov_deg, circle_center=(c, c), circle_radius=size / 2.0,
                   falloff=falloff if falloff is not None else FalloffPolynomial.constant(),
                   yaw_offset_deg=yaw_offset_deg)

    @property
    def fov_rad(self):
        return math.radians(self.fov_deg)

    def check_fits(self, width, height):
        cx, cy = self.circle_center
        r = self.circle_radius
        tol = 1e-9
        if (cx - r < -0.5 - tol or cy - r < -0.5 - tol
                or cx + r > width - 0.5 + tol or cy + r > height - 0.5 + tol):
            raise BadProfile(
                f"fisheye circle (centre {self.circle_center}, radius {r}) exceeds "
                f"the {width}x{height} half-frame", stage="unwarp")


@dataclass(frozen=True)
class Band:
    """Half-open column range ``[start, stop)`` of an overlap band."""

    name: str
    start: int
    stop: int
    yaw_deg: float

    @property
    def width(self):
        return self.stop - self.start

    @property
    def center(self):
        return 0.5 * (self.start + self.stop)

    def shifted(self, frame):
        """The same band in a horizontally rolled frame."""
        start = frame.column(self.start)
        return Band(self.name, start, start + self.width, self.yaw_deg)


@dataclass(frozen=True)
class OverlapSpec:
    """The two seams where both lenses see the scene.

    ``left`` is centred on yaw -90 and ``right`` on yaw +90.
    """

    left: Band
    right: Band
    pano_width: int
    fov_deg: float

    @property
    def bands(self):
        return (self.left, self.right)

    @property
    def width(self):
        return self.left.width


def pano_angles(pano_h):
    """Yaw and pitch (radians) of every panorama pixel centre."""
    pano_w = 2 * pano_h
    yaw = ((np.arange(pano_w) + 0.5) / pano_w - 0.5) * (2 * np.pi)
    pitch = ((np.arange(pano_h) + 0.5) / pano_h - 0.5) * np.pi
    return np.meshgrid(yaw, pitch)


def angles_to_pano(yaw, pitch, pano_h):
    """Continuous panorama pixel coordinates of a direction."""
    pano_w = 2 * pano_h
    x = (np.asarray(yaw) / (2 * np.pi) + 0.5) * pano_w - 0.5
    y = (np.asarray(pitch) / np.pi + 0.5) * pano_h - 0.5
    return x, y


def wrap_angle(a):
    """Wrap radians into ``[-pi, pi)``."""
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def equirect_to_fisheye(xe, ye, W, H, fov_deg):
    """Map lens-local equirectangular plane coordinates to fisheye pixels.

    The plane spans ``fov_deg`` in both yaw (across ``W``) and pitch (across
    ``H``). The fisheye image is equidistant with radius ``H/2`` at half the
    field of view. Returns ``(xf, yf, inside)`` where ``inside`` flags
    directions within ``fov/2`` of the optical axis.
    """
    f = math.radians(fov_deg)
    xe = np.asarray(xe, dtype=np.float64)
    ye = np.asarray(ye, dtype=np.float64)
    yaw = f * (xe / W - 0.5)
    pitch = f * (ye / H - 0.5)
    px = np.cos(pitch) * np.sin(yaw)
    py = np.cos(pitch) * np.cos(yaw)
    pz = np.sin(pitch)
    off_axis = np.arctan2(np.hypot(px, pz), py)
    rho = (H / f) * off_axis
    theta = np.arctan2(pz, px)
    xf = 0.5 * W + rho * np.cos(theta)
    yf = 0.5 * H + rho * np.sin(theta)
    inside = off_axis <= 0.5 * f + _ANGLE_TOL
    if xf.ndim == 0:
        return float(xf), float(yf), bool(inside)
    return xf, yf, inside


def fisheye_lookup(lens, frame_w, frame_h, pano_h):
    """Source coordinates in the half-frame for every panorama pixel.

    Returns ``(xs, ys, covered)``.
    """
    yaw, pitch = pano_angles(pano_h)
    f = lens.fov_rad
    local_yaw = wrap_angle(yaw - math.radians(lens.yaw_offset_deg))
    xe = frame_w * (local_yaw / f + 0.5)
    ye = frame_h * (pitch / f + 0.5)
    xf, yf, covered = equirect_to_fisheye(xe, ye, frame_w, frame_h, lens.fov_deg)
    scale = lens.circle_radius / (0.5 * frame_h)
    cx, cy = lens.circle_center
    xs = cx + (xf - 0.5 * frame_w) * scale
    ys = cy + (yf - 0.5 * frame_h) * scale
    return xs, ys, covered


def unwarp_lens(halfframe, lens, pano_h):
    """Resample one fisheye half-frame onto a full equirectangular canvas.

    Pixels farther than ``fov/2`` from the lens axis are masked invalid and
    zeroed.
    """
    halfframe = check_image(halfframe)
    pano_h = check_pano_height(pano_h)
    lens.check_fits(halfframe.width, halfframe.height)
    xs, ys, covered = fisheye_lookup(lens, halfframe.width, halfframe.height, pano_h)
    values, valid = bilinear_sample(halfframe, xs, ys, border=BORDER_CLAMP)
    valid &= covered
    values[~valid] = 0.0
    return ImageBuffer(values.astype(np.float32), valid)


def coverage_mask(lens, pano_h):
    """Directions within ``fov/2`` of the lens axis, on the panorama grid."""
    yaw, pitch = pano_angles(pano_h)
    local_yaw = wrap_angle(yaw - math.radians(lens.yaw_offset_deg))
    cos_off = np.cos(pitch) * np.cos(local_yaw)
    return np.arccos(np.clip(cos_off, -1.0, 1.0)) <= 0.5 * lens.fov_rad + _ANGLE_TOL


def compute_overlaps(fov_deg, pano_w):
    """Overlap bands centred at yaw -90 and +90, each ``fov - 180`` degrees wide."""
    if fov_deg <= 180.0:
        raise NoOverlap(f"field of view {fov_deg} deg leaves no overlap", stage="overlap")
    n = int(round(pano_w * (fov_deg - 180.0) / 360.0))
    if n < 1:
        raise NoOverlap(f"overlap of {fov_deg - 180.0:.3g} deg is under one column "
                        f"at width {pano_w}", stage="overlap")

    def band(name, yaw_deg):
        centre = pano_w * (yaw_deg + 180.0) / 360.0
        start = int(math.floor(centre - 0.5 * n + 0.5))
        return Band(name, start, start + n, yaw_deg)

    return OverlapSpec(band("left", -90.0), band("right", 90.0), int(pano_w), float(fov_deg))


def horizon_overlap_width(mask_a, mask_b, band, slack=None):
    """Columns near ``band`` where both masks are valid on the horizon rows."""
    h = mask_a.shape[0]
    slack = band.width if slack is None else slack
    rows = slice(h // 2 - 1, h // 2 + 1)
    lo = max(band.start - slack, 0)
    hi = min(band.stop + slack, mask_a.shape[1])
    both = (mask_a[rows, lo:hi] & mask_b[rows, lo:hi]).all(axis=0)
    return int(both.sum())
