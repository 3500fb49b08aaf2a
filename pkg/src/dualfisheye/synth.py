"""Synthetic dual-fisheye captures rendered from a known panorama.

Rendering runs the unwarp chain backwards: every fisheye pixel becomes a
viewing direction, the direction becomes a panorama coordinate, and the
panorama is sampled there. Lens misalignment is injected in alignment-frame
canvas coordinates, so the rear canvas recovered by unwarping equals
``warp_affine(true_rear, misalign)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_image
from .align import alignment_frame
from .imagecore import AffineTransform2D, ImageBuffer, bilinear_sample, BORDER_CLAMP
from .unwarp import DEFAULT_FOV, LensProfile, angles_to_pano
from .vignette import FalloffPolynomial, eval_falloff


@dataclass(frozen=True)
class Occluder:
    """Textured near object whose rear-lens view is shifted by parallax.

    Angles in degrees; ``parallax_px`` is the ``(dx, dy)`` shift, in
    panorama pixels, of the object as seen by the rear lens.
    """

    yaw_deg: float = 90.0
    pitch_deg: float = 0.0
    width_deg: float = 40.0
    height_deg: float = 70.0
    parallax_px: tuple = (6.0, 0.0)
    seed: int = 1


@dataclass(frozen=True)
class SynthConfig:
    fov_deg: float = DEFAULT_FOV
    halfframe_size: int = 640
    misalign: AffineTransform2D = field(default_factory=AffineTransform2D.identity)
    vignette: FalloffPolynomial | None = None
    front_gain: float = 1.0
    front_bias: float = 0.0
    rear_gain: float = 1.0
    rear_bias: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0
    occluder: Occluder | None = None
    rim_px: float = 2.0

    def __post_init__(self):
        if self.fov_deg <= 180:
            raise ValueError("synthetic field of view must exceed 180 degrees")
        if not self.misalign.is_invertible():
            raise ValueError("misalignment must be invertible")

    def lenses(self):
        """Front and rear lens profiles matching this configuration."""
        falloff = self.vignette or FalloffPolynomial.constant()
        s = self.halfframe_size
        return (LensProfile.centered(s, self.fov_deg, 0.0, falloff),
                LensProfile.centered(s, self.fov_deg, 180.0, falloff))


# ---------------------------------------------------------------------------
# procedural panoramas
# ---------------------------------------------------------------------------

def _directions(height):
    width = 2 * height
    yaw = ((np.arange(width) + 0.5) / width - 0.5) * 2 * np.pi
    pitch = ((np.arange(height) + 0.5) / height - 0.5) * np.pi
    yaw, pitch = np.meshgrid(yaw, pitch)
    return np.stack([np.cos(pitch) * np.sin(yaw),
                     np.cos(pitch) * np.cos(yaw),
                     np.sin(pitch)], axis=-1)


def _plane_waves(d, rng, count, k_lo, k_hi, amplitude):
    out = np.zeros(d.shape[:-1])
    for _ in range(count):
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        k = rng.uniform(k_lo, k_hi)
        out += np.cos(k * (d @ u) + rng.uniform(0, 2 * np.pi))
    return amplitude * out / np.sqrt(count)


def make_test_pano(height=512, kind="chart", seed=0):
    """Procedural RGB panorama that is smooth on the sphere.

    ``chart``: soft 3-D checkerboard over a vertical gradient.
    ``noise``: band-limited random texture (periods of roughly 8-20 deg).
    ``low``: gentle low-frequency texture, used as a far background.
    """
    d = _directions(height)
    rng = np.random.default_rng(seed)
    z = d[..., 2]
    if kind == "chart":
        k = 6.0
        cells = np.sin(k * d[..., 0]) * np.sin(k * d[..., 1]) * np.sin(k * d[..., 2] + 0.7)
        base = 0.5 + 0.22 * np.tanh(3.0 * cells) + 0.15 * z
        tint = _plane_waves(d, rng, 4, 1.0, 3.0, 0.05)
        rgb = np.stack([base + tint, base, base - tint], axis=-1)
    elif kind == "noise":
        chans = [0.5 + _plane_waves(d, rng, 48, 18.0, 45.0, 0.18) for _ in range(3)]
        rgb = np.stack(chans, axis=-1)
    elif kind == "low":
        chans = [0.5 + 0.1 * z + _plane_waves(d, rng, 12, 2.0, 6.0, 0.1) for _ in range(3)]
        rgb = np.stack(chans, axis=-1)
    else:
        raise ValueError(f"unknown panorama kind {kind!r}")
    return ImageBuffer(np.clip(rgb, 0.0, 1.0))


def paint_occluder(pano, occ, shift=(0.0, 0.0)):
    """Paste the occluder's texture into a copy of ``pano``, shifted by ``shift``."""
    pano = check_image(pano)
    H, W = pano.height, pano.width
    px_per_deg = W / 360.0
    cx = (occ.yaw_deg + 180.0) * px_per_deg - 0.5 + shift[0]
    cy = (occ.pitch_deg + 90.0) * px_per_deg - 0.5 + shift[1]
    hw = 0.5 * occ.width_deg * px_per_deg
    hh = 0.5 * occ.height_deg * px_per_deg
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    u, v = xx - cx, yy - cy
    # soft-edged box, 2 px ramp
    weight = (np.clip(hw - np.abs(u) + 1.0, 0, 2) / 2.0) * (np.clip(hh - np.abs(v) + 1.0, 0, 2) / 2.0)
    rng = np.random.default_rng(occ.seed)
    tex = np.zeros((H, W, 3))
    for ch in range(3):
        acc = np.zeros((H, W))
        for _ in range(10):
            ang = rng.uniform(0, np.pi)
            k = rng.uniform(0.35, 0.7)  # radians per panorama pixel
            acc += np.cos(k * (u * np.cos(ang) + v * np.sin(ang)) + rng.uniform(0, 2 * np.pi))
        tex[..., ch] = 0.5 + 0.35 * acc / np.sqrt(10)
    out = pano.data * (1 - weight[..., None]) + tex * weight[..., None]
    return ImageBuffer(np.clip(out, 0.0, 1.0).astype(np.float32))


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def _sample_pano(pano, x, y):
    """Bilinear panorama lookup wrapping horizontally and clamping vertically."""
    W = pano.width
    padded = ImageBuffer(np.concatenate([pano.data, pano.data[:, :1]], axis=1))
    x = np.mod(x + 0.5, W) - 0.5
    x = np.where(x < 0, x + W, x)
    values, _ = bilinear_sample(padded, x, y, border=BORDER_CLAMP)
    return values


def fisheye_directions(lens, size, rim_px=0.0):
    """Unit viewing direction (pano frame) of each half-frame pixel.

    Returns ``(yaw, pitch, inside)`` with angles in radians; ``inside``
    extends ``rim_px`` beyond the nominal circle.
    """
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cx, cy = lens.circle_center
    dx, dy = xx - cx, yy - cy
    rho = np.hypot(dx, dy)
    inside = rho <= lens.circle_radius + rim_px
    off_axis = rho / lens.circle_radius * (0.5 * lens.fov_rad)
    theta = np.arctan2(dy, dx)
    px = np.sin(off_axis) * np.cos(theta)
    py = np.cos(off_axis)
    pz = np.sin(off_axis) * np.sin(theta)
    local_yaw = np.arctan2(px, py)
    pitch = np.arcsin(np.clip(pz, -1.0, 1.0))
    yaw = local_yaw + math.radians(lens.yaw_offset_deg)
    return yaw, pitch, inside


def render_lens(pano, lens, cfg, rear=None, lens_index=None):
    """Render one fisheye half-frame of ``pano`` as seen through ``lens``.

    ``rear`` (inferred from the lens yaw when None) selects whether the
    misalignment and rear exposure are applied.
    """
    pano = check_image(pano)
    if pano.width != 2 * pano.height:
        raise ValueError("panorama must be 2:1 equirectangular")
    if rear is None:
        rear = abs(((lens.yaw_offset_deg + 180.0) % 360.0) - 180.0) > 90.0
    size = cfg.halfframe_size
    yaw, pitch, inside = fisheye_directions(lens, size, cfg.rim_px)
    x, y = angles_to_pano(np.mod(yaw + np.pi, 2 * np.pi) - np.pi, pitch, pano.height)

    if rear and cfg.misalign != AffineTransform2D.identity():
        frame = alignment_frame(pano.width)
        xa = np.mod(x + frame.shift + 0.5, pano.width) - 0.5
        xa, y = cfg.misalign.inverse().apply(xa, y)
        x = xa - frame.shift

    values = _sample_pano(pano, x, y)
    if cfg.vignette is not None:
        cx, cy = lens.circle_center
        r = np.hypot(*np.meshgrid(np.arange(size) - cx, np.arange(size) - cy))
        values *= eval_falloff(cfg.vignette, r)[..., None]
    gain, bias = (cfg.rear_gain, cfg.rear_bias) if rear else (cfg.front_gain, cfg.front_bias)
    values = gain * values + bias
    if cfg.noise_sigma > 0:
        idx = (1 if rear else 0) if lens_index is None else lens_index
        rng = np.random.default_rng([cfg.seed, idx])
        values += rng.normal(0.0, cfg.noise_sigma, size=values.shape)
    values[~inside] = 0.0
    return ImageBuffer(values.astype(np.float32))


def ground_truth(pano, cfg):
    """The panorama as seen from the front lens (occluder unshifted)."""
    if cfg.occluder is None:
        return check_image(pano)
    return paint_occluder(pano, cfg.occluder)


def render_dual(pano, cfg=None):
    """Side-by-side frame: front half-frame on the left, rear on the right."""
    cfg = cfg or SynthConfig()
    front_lens, rear_lens = cfg.lenses()
    front_pano = ground_truth(pano, cfg)
    rear_pano = front_pano
    if cfg.occluder is not None:
        rear_pano = paint_occluder(pano, cfg.occluder, cfg.occluder.parallax_px)
    front = render_lens(front_pano, front_lens, cfg, rear=False, lens_index=0)
    back = render_lens(rear_pano, rear_lens, cfg, rear=True, lens_index=1)
    return ImageBuffer(np.concatenate([front.data, back.data], axis=1))
