"""Image containers, bilinear sampling, affine warps and summed-area tables.

Pixel data is stored interleaved as ``(height, width, channels)`` float32.
Pixel ``(x, y)`` means column ``x``, row ``y``; integer coordinates sit on
pixel centres.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import SingularTransform

# Rec.709 luma weights
LUMA_R = 0.2126
LUMA_G = 0.7152
LUMA_B = 0.0722

BORDER_CLAMP = "clamp"
BORDER_ZERO = "zero"


class ImageBuffer:
    """Planar float image with an optional per-pixel validity mask.

    Parameters
    ----------
    data : array_like, shape (H, W) or (H, W, C)
        Pixel values; C must be 1 or 3. Stored as float32, always 3-D.
    mask : array_like of bool, shape (H, W), optional
        ``True`` where the pixel is valid. ``None`` means all valid.
    """

    __slots__ = ("data", "mask")

    def __init__(self, data, mask=None):
        data = np.asarray(data, dtype=np.float32)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError(f"expected (H, W), (H, W, 1) or (H, W, 3) data, got {data.shape}")
        if data.shape[0] == 0 or data.shape[1] == 0:
            raise ValueError("empty image")
        if not np.isfinite(data).all():
            raise ValueError("image contains NaN or Inf")
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != data.shape[:2]:
                raise ValueError(f"mask shape {mask.shape} does not match image {data.shape[:2]}")
        self.data = data
        self.mask = mask

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def valid(self):
        """Boolean validity map, materialised even when ``mask`` is None."""
        if self.mask is None:
            return np.ones(self.data.shape[:2], dtype=bool)
        return self.mask

    def plane(self, channel=0):
        return self.data[:, :, channel]

    def copy(self):
        return ImageBuffer(self.data.copy(), None if self.mask is None else self.mask.copy())

    def __repr__(self):
        return (f"ImageBuffer(width={self.width}, height={self.height}, "
                f"channels={self.channels}, masked={self.mask is not None})")


@dataclass(frozen=True)
class AffineTransform2D:
    """Planar affine in row-vector form ``[x1 y1 1] = [x2 y2 1] @ A``.

    ``A = [[a, b, 0], [c, d, 0], [tx, ty, 1]]`` so that
    ``x1 = a*x2 + c*y2 + tx`` and ``y1 = b*x2 + d*y2 + ty``.
    """

    a: float = 1.0
    b: float = 0.0
    c: float = 0.0
    d: float = 1.0
    tx: float = 0.0
    ty: float = 0.0

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def translation(cls, tx, ty):
        return cls(tx=float(tx), ty=float(ty))

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError("affine matrix must be 3x3")
        if not np.allclose(m[:, 2], [0.0, 0.0, 1.0]):
            raise ValueError("last column of a row-vector affine must be (0, 0, 1)")
        return cls(m[0, 0], m[0, 1], m[1, 0], m[1, 1], m[2, 0], m[2, 1])

    @classmethod
    def from_params(cls, params):
        a, b, c, d, tx, ty = (float(v) for v in params)
        return cls(a, b, c, d, tx, ty)

    @property
    def params(self):
        return (self.a, self.b, self.c, self.d, self.tx, self.ty)

    @property
    def matrix(self):
        return np.array([[self.a, self.b, 0.0],
                         [self.c, self.d, 0.0],
                         [self.tx, self.ty, 1.0]])

    @property
    def det(self):
        return self.a * self.d - self.b * self.c

    def is_invertible(self, tol=1e-12):
        return abs(self.det) > tol

    def inverse(self):
        det = self.det
        if abs(det) <= 1e-12:
            raise SingularTransform(f"affine determinant {det:.3g} is not invertible")
        ia, ib = self.d / det, -self.b / det
        ic, id_ = -self.c / det, self.a / det
        itx = -(self.tx * ia + self.ty * ic)
        ity = -(self.tx * ib + self.ty * id_)
        return AffineTransform2D(ia, ib, ic, id_, itx, ity)

    def apply(self, x, y):
        """Map source coordinates ``(x2, y2)`` to targets ``(x1, y1)``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self.a * x + self.c * y + self.tx, self.b * x + self.d * y + self.ty

    def apply_points(self, pts):
        pts = np.asarray(pts, dtype=float)
        x1, y1 = self.apply(pts[..., 0], pts[..., 1])
        return np.stack([x1, y1], axis=-1)

    def __matmul__(self, other):
        """``self @ other`` applies ``self`` first, then ``other``."""
        if not isinstance(other, AffineTransform2D):
            return NotImplemented
        return AffineTransform2D.from_matrix(self.matrix @ other.matrix)

    def conjugate_translation(self, dx, dy):
        """The same map expressed in a frame shifted by ``(dx, dy)``."""
        shift = AffineTransform2D.translation(-dx, -dy)
        return shift @ self @ AffineTransform2D.translation(dx, dy)


def _as_coords(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return np.broadcast_arrays(x, y)


def _snap(v, tol=1e-9):
    r = np.round(v)
    return np.where(np.abs(v - r) < tol, r, v)


def bilinear_sample(img, x, y, border=BORDER_ZERO):
    """Sample ``img`` at fractional coordinates.

    Returns ``(values, valid)``: values has shape ``x.shape + (channels,)``,
    valid has shape ``x.shape``. With ``border="clamp"`` coordinates are
    clamped into the image; with ``border="zero"`` out-of-range samples are
    0 and marked invalid. A sample is invalid if any source pixel carrying
    non-zero weight is masked invalid.
    """
    if border not in (BORDER_CLAMP, BORDER_ZERO):
        raise ValueError(f"unknown border policy {border!r}")
    x, y = _as_coords(x, y)
    # snap round-off so near-integer coordinates hit the lattice exactly
    x = _snap(x)
    y = _snap(y)
    h, w = img.height, img.width
    data = img.data

    if border == BORDER_CLAMP:
        inside = np.ones(x.shape, dtype=bool)
        xs = np.clip(x, 0, w - 1)
        ys = np.clip(y, 0, h - 1)
    else:
        inside = (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)
        xs = np.where(inside, x, 0.0)
        ys = np.where(inside, y, 0.0)

    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]

    p00 = data[y0, x0].astype(np.float64)
    p10 = data[y0, x1].astype(np.float64)
    p01 = data[y1, x0].astype(np.float64)
    p11 = data[y1, x1].astype(np.float64)
    top = p00 + fx * (p10 - p00)
    bot = p01 + fx * (p11 - p01)
    values = top + fy * (bot - top)

    valid = inside.copy()
    if img.mask is not None:
        m = img.mask
        wx = fx[..., 0] > 0
        wy = fy[..., 0] > 0
        ok = m[y0, x0]
        ok &= m[y0, x1] | ~wx
        ok &= m[y1, x0] | ~wy
        ok &= m[y1, x1] | ~(wx & wy)
        valid &= ok
    if border == BORDER_ZERO:
        values[~inside] = 0.0
    return values, valid


def warp_affine(img, A, out_w=None, out_h=None):
    """Inverse-mapping affine warp.

    Output pixel ``(x1, y1)`` takes the bilinear sample of ``img`` at
    ``(x2, y2) = (x1, y1, 1) @ inverse(A)``. Pixels whose source falls
    outside ``img`` (or on masked pixels) are masked invalid and zeroed.
    """
    out_w = img.width if out_w is None else int(out_w)
    out_h = img.height if out_h is None else int(out_h)
    inv = A.inverse()
    yy, xx = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    sx, sy = inv.apply(xx, yy)
    values, valid = bilinear_sample(img, sx, sy, border=BORDER_ZERO)
    values[~valid] = 0.0
    return ImageBuffer(values.astype(np.float32), valid)


class SummedAreaTable:
    """Cumulative sums of an image and its square, padded with a zero row/column.

    Rectangles are half-open: ``[x0, x1) x [y0, y1)``.
    """

    def __init__(self, plane):
        plane = np.asarray(plane, dtype=np.float64)
        if plane.ndim != 2:
            raise ValueError("summed-area table needs a single-channel 2-D plane")
        h, w = plane.shape
        self.sum = np.zeros((h + 1, w + 1))
        self.sumsq = np.zeros((h + 1, w + 1))
        np.cumsum(np.cumsum(plane, axis=0), axis=1, out=self.sum[1:, 1:])
        np.cumsum(np.cumsum(plane * plane, axis=0), axis=1, out=self.sumsq[1:, 1:])

    @property
    def width(self):
        return self.sum.shape[1] - 1

    @property
    def height(self):
        return self.sum.shape[0] - 1

    @staticmethod
    def _query(t, x0, y0, x1, y1):
        return t[y1, x1] - t[y0, x1] - t[y1, x0] + t[y0, x0]

    def rect_sum(self, x0, y0, x1, y1):
        return self._query(self.sum, x0, y0, x1, y1)

    def rect_sumsq(self, x0, y0, x1, y1):
        return self._query(self.sumsq, x0, y0, x1, y1)

    def window_sums(self, win_w, win_h):
        """Sums and square sums of every ``win_w x win_h`` window.

        Returned arrays have shape ``(H - win_h + 1, W - win_w + 1)`` indexed
        by the window's top-left corner ``(v, u)``.
        """
        def slide(t):
            return (t[win_h:, win_w:] - t[:-win_h, win_w:]
                    - t[win_h:, :-win_w] + t[:-win_h, :-win_w])
        return slide(self.sum), slide(self.sumsq)


def build_sat(img):
    """Summed-area table of a single-channel image."""
    if isinstance(img, ImageBuffer):
        if img.channels != 1:
            raise ValueError("build_sat needs a single-channel image")
        img = img.plane(0)
    return SummedAreaTable(img)


def to_luma(img):
    """Rec.709 luma of a 3-channel image; single-channel input passes through."""
    if img.channels == 1:
        return img
    r = img.data[:, :, 0].astype(np.float64)
    g = img.data[:, :, 1].astype(np.float64)
    b = img.data[:, :, 2].astype(np.float64)
    # written around G so that R == G == B returns G exactly
    y = g + LUMA_R * (r - g) + LUMA_B * (b - g)
    return ImageBuffer(y.astype(np.float32), img.mask)


class RollFrame(NamedTuple):
    """Horizontal cyclic shift between two column frames of width ``width``."""

    shift: int
    width: int

    def roll(self, img):
        mask = None if img.mask is None else np.roll(img.mask, self.shift, axis=1)
        return ImageBuffer(np.roll(img.data, self.shift, axis=1), mask)

    def unroll(self, img):
        mask = None if img.mask is None else np.roll(img.mask, -self.shift, axis=1)
        return ImageBuffer(np.roll(img.data, -self.shift, axis=1), mask)

    def column(self, col):
        return (col + self.shift) % self.width


def psnr(a, b, mask=None, peak=1.0):
    """Peak signal-to-noise ratio in dB, optionally restricted to ``mask``."""
    a = np.asarray(a.data if isinstance(a, ImageBuffer) else a, dtype=np.float64)
    b = np.asarray(b.data if isinstance(b, ImageBuffer) else b, dtype=np.float64)
    diff = (a - b) ** 2
    if mask is not None:
        diff = diff[np.asarray(mask, dtype=bool)]
    mse = float(np.mean(diff))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)
