"""Linear ramp blending across the overlap bands and final composition.

In each band the ramp weight ``alpha1`` belongs to the rear canvas and
``alpha2`` to the front canvas. The rear is the canvas that continues past
the end of the band where ``alpha1`` peaks, so the ramp meets each lens's
exclusive region with that lens at (nearly) full weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import CoverageHole
from .imagecore import ImageBuffer, to_luma

LEFT = "left"
RIGHT = "right"


@dataclass(frozen=True)
class BlendWeights:
    """Column weights for one band, index ``c - 1`` for ``c = 1 .. n``."""

    alpha1: np.ndarray
    alpha2: np.ndarray
    side: str
    normalized: bool = True

    @property
    def n(self):
        return len(self.alpha1)


def ramp_weights(n, side, normalize=True):
    """Ramp weights for a band of width ``n``.

    Raw ramps: right band ``alpha1 = c/n, alpha2 = (n-c+1)/n``; left band
    mirrored. With ``normalize`` each column is divided by its sum
    ``(n+1)/n``, and ``alpha2`` is built as ``1 - alpha1`` so that the pair
    sums to exactly one.
    """
    n = int(n)
    if n < 1:
        raise ValueError("ramp width must be >= 1")
    if side not in (LEFT, RIGHT):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    c = np.arange(1, n + 1, dtype=np.float64)
    rising = c if side == RIGHT else (n + 1 - c)
    if normalize:
        a1 = rising / (n + 1)
        a2 = 1.0 - a1
    else:
        a1 = rising / n
        a2 = (n + 1 - rising) / n
    return BlendWeights(a1, a2, side, normalize)


def blend_band(L, R, w):
    """Blend two equally shaped regions column by column.

    Where one side is masked invalid the other side is used unweighted.
    Normalized weights give ``R + alpha1 * (L - R)``, bounded to
    ``[min(L, R), max(L, R)]``.
    """
    if L.shape != R.shape:
        raise ValueError(f"band regions differ in shape: {L.shape} vs {R.shape}")
    if L.width != w.n:
        raise ValueError(f"band width {L.width} does not match {w.n} weights")
    l = L.data.astype(np.float64)
    r = R.data.astype(np.float64)
    a1 = w.alpha1[None, :, None]
    if w.normalized:
        out = r + a1 * (l - r)
        np.clip(out, np.minimum(l, r), np.maximum(l, r), out=out)
    else:
        out = a1 * l + w.alpha2[None, :, None] * r
    lv, rv = L.valid(), R.valid()
    only_l = lv & ~rv
    only_r = rv & ~lv
    out[only_l] = l[only_l]
    out[only_r] = r[only_r]
    valid = lv | rv
    out[~valid] = 0.0
    mask = None if valid.all() and L.mask is None and R.mask is None else valid
    return ImageBuffer(out.astype(np.float32), mask)


def _region(img, start, stop):
    mask = None if img.mask is None else img.mask[:, start:stop]
    return ImageBuffer(img.data[:, start:stop], mask)


def composite(front, rear, overlaps, normalize=True):
    """Assemble the panorama from the front and aligned rear canvases.

    Columns between the bands belong to the front lens, columns outside
    them to the rear lens; bands are ramp-blended. A pixel invalid in its
    owner falls back to the other canvas.

    Raises
    ------
    CoverageHole
        If some pixel is invalid in both canvases.
    """
    if front.shape != rear.shape:
        raise ValueError("front and rear canvases differ in shape")
    W = front.width
    left, right = overlaps.left, overlaps.right
    fv, rv = front.valid(), rear.valid()

    owner_front = np.zeros(W, dtype=bool)
    owner_front[left.stop:right.start] = True
    use_front = np.where(owner_front[None, :], fv, fv & ~rv)
    out = np.where(use_front[:, :, None], front.data, rear.data).astype(np.float32)
    valid = fv | rv

    for band, side in ((left, LEFT), (right, RIGHT)):
        w = ramp_weights(band.width, side, normalize)
        mixed = blend_band(_region(rear, band.start, band.stop),
                           _region(front, band.start, band.stop), w)
        out[:, band.start:band.stop] = mixed.data

    if not valid.all():
        rows, cols = np.nonzero(~valid)
        raise CoverageHole(
            f"{rows.size} panorama pixels covered by neither lens "
            f"(first at row {rows[0]}, column {cols[0]})", stage="blend")
    return ImageBuffer(out)


def seam_discontinuity(front, rear, overlaps):
    """Mean absolute luma difference between the canvases inside the bands."""
    a = to_luma(front).plane(0).astype(np.float64)
    b = to_luma(rear).plane(0).astype(np.float64)
    both = front.valid() & rear.valid()
    total, count = 0.0, 0
    for band in overlaps.bands:
        sel = both[:, band.start:band.stop]
        diff = np.abs(a[:, band.start:band.stop] - b[:, band.start:band.stop])[sel]
        total += diff.sum()
        count += diff.size
    if count == 0:
        raise CoverageHole("no pixel inside the bands is covered by both canvases", stage="blend")
    return total / count
