"""Radial light fall-off: model, measurement, fitting and compensation.

The fall-off curve is a polynomial in the distance from the fisheye centre,
measured in pixels of the original half-frame, with coefficients ordered
highest degree first. A white-target capture divided by the curve becomes
flat again.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_image
from .exceptions import EmptyBin, IllConditioned
from .imagecore import ImageBuffer, to_luma

# Gear 360 fall-off curve, radius in pixels of the 3888 x 3888 half-frame.
GEAR360_FALLOFF = (-7.5625e-17, 1.9589e-13, -1.8547e-10, 6.1997e-8, -6.9432e-5, 0.9976)

MAX_GAIN = 4.0


@dataclass(frozen=True)
class FalloffPolynomial:
    """Gain curve ``p(r) = p1*r**n + ... + pn*r + p(n+1)``.

    If ``r_max`` is given the curve must stay positive on ``[0, r_max]``.
    """

    coeffs: tuple
    r_max: float | None = None
    residual_rms: float | None = field(default=None, compare=False)

    def __post_init__(self):
        coeffs = tuple(float(c) for c in np.atleast_1d(self.coeffs))
        object.__setattr__(self, "coeffs", coeffs)
        if len(coeffs) < 2:
            raise ValueError("fall-off polynomial needs degree >= 1 (two coefficients)")
        if not all(np.isfinite(coeffs)):
            raise ValueError("non-finite fall-off coefficient")
        if not 0.0 < coeffs[-1] <= 1.2:
            raise ValueError(f"centre gain p(0)={coeffs[-1]} outside (0, 1.2]")
        if self.r_max is not None:
            r = np.linspace(0.0, float(self.r_max), 4097)
            if np.min(eval_falloff(self, r)) <= 0.0:
                raise ValueError(f"fall-off polynomial is not positive on [0, {self.r_max}]")

    @property
    def degree(self):
        return len(self.coeffs) - 1

    @classmethod
    def constant(cls, value=1.0):
        return cls((0.0, value))

    @classmethod
    def gear360(cls):
        return cls(GEAR360_FALLOFF)

    def __call__(self, r):
        return eval_falloff(self, r)


@dataclass(frozen=True)
class RadialProfile:
    """Mean normalised intensity per radius bin."""

    radius: np.ndarray
    intensity: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.radius, dtype=float)
        v = np.asarray(self.intensity, dtype=float)
        if r.shape != v.shape or r.ndim != 1:
            raise ValueError("radius and intensity must be 1-D arrays of equal length")
        if np.any(np.diff(r) <= 0):
            raise ValueError("profile radii must be strictly increasing")
        if np.any(v <= 0) or np.any(v > 1.5):
            raise ValueError("profile intensities must lie in (0, 1.5]")
        object.__setattr__(self, "radius", r)
        object.__setattr__(self, "intensity", v)

    def __len__(self):
        return len(self.radius)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["radius_px", "intensity"])
            for r, v in zip(self.radius, self.intensity):
                writer.writerow([repr(float(r)), repr(float(v))])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or set(rows[0]) != {"radius_px", "intensity"}:
            raise ValueError(f"{path}: expected header radius_px,intensity")
        return cls(np.array([float(r["radius_px"]) for r in rows]),
                   np.array([float(r["intensity"]) for r in rows]))


def eval_falloff(poly, r):
    """Horner evaluation of the fall-off polynomial at radius ``r`` (pixels)."""
    r = np.asarray(r, dtype=np.float64)
    out = np.zeros_like(r)
    for c in poly.coeffs:
        out = out * r + c
    return out if out.ndim else float(out)


def radius_map(height, width, center):
    cx, cy = center
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    return np.hypot(xx - cx, yy - cy)


def measure_radial_profile(img, center, r_max, n_bins=64):
    """Bin pixels by quantised radius and average them.

    Bin ``k`` holds pixels with ``k <= r * n_bins / r_max < k + 1`` for
    ``r <= r_max``; its sample radius is the mean pixel radius inside it.
    Intensities are normalised so the innermost bin equals 1.
    """
    img = check_image(img)
    if img.channels != 1:
        raise ValueError("measure_radial_profile needs a single-channel image; use to_luma")
    if n_bins < 8:
        raise ValueError("n_bins must be >= 8")
    r = radius_map(img.height, img.width, center)
    keep = r <= r_max
    if img.mask is not None:
        keep &= img.mask
    rr = r[keep]
    vv = img.plane(0)[keep].astype(np.float64)
    idx = np.minimum((rr * n_bins / r_max).astype(np.intp), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise EmptyBin(f"radial bins {empty.tolist()} received no pixels; lower n_bins")
    mean_r = np.bincount(idx, weights=rr, minlength=n_bins) / counts
    mean_v = np.bincount(idx, weights=vv, minlength=n_bins) / counts
    if mean_v[0] <= 0:
        raise EmptyBin("innermost bin has zero mean intensity; cannot normalise")
    return RadialProfile(mean_r, mean_v / mean_v[0])


def fit_falloff(profile, degree=5):
    """Least-squares polynomial fit of a radial profile.

    Radii are scaled to ``[0, 1]`` before solving so that pixel-scale radii
    do not wreck the conditioning; coefficients are scaled back afterwards.
    """
    r = np.asarray(profile.radius, dtype=np.float64)
    v = np.asarray(profile.intensity, dtype=np.float64)
    if degree < 1:
        raise ValueError("degree must be >= 1")
    if r.size < degree + 1:
        raise IllConditioned(f"{r.size} samples cannot determine a degree-{degree} fit")
    scale = float(np.max(np.abs(r))) or 1.0
    design = np.vander(r / scale, degree + 1)
    sol, _, rank, sv = np.linalg.lstsq(design, v, rcond=None)
    if rank < degree + 1 or sv[-1] <= sv[0] * 1e-13:
        raise IllConditioned("design matrix is numerically singular")
    coeffs = sol / scale ** np.arange(degree, -1, -1)
    resid = design @ sol - v
    rms = float(np.sqrt(np.mean(resid ** 2)))
    if not np.isfinite(rms) or not np.all(np.isfinite(coeffs)):
        raise IllConditioned("fit produced non-finite values")
    return FalloffPolynomial(tuple(coeffs), residual_rms=rms)


def attenuate(img, poly, center):
    """Multiply by the fall-off curve; the forward model of vignetting."""
    img = check_image(img)
    gain = eval_falloff(poly, radius_map(img.height, img.width, center))
    out = img.data * gain[:, :, None]
    return ImageBuffer(out.astype(np.float32), img.mask)


def compensate(img, poly, center):
    """Divide by the fall-off curve; output clamped to ``[0, MAX_GAIN]``.

    The same scalar gain is applied to every channel.
    """
    img = check_image(img)
    p = eval_falloff(poly, radius_map(img.height, img.width, center))
    p = np.maximum(p, 1e-12)
    out = img.data / p[:, :, None]
    np.clip(out, 0.0, MAX_GAIN, out=out)
    return ImageBuffer(out.astype(np.float32), img.mask)


class FalloffCompensator(BaseEstimator, TransformerMixin):
    """Fit a fall-off curve from a flat-field capture and divide it out.

    Parameters
    ----------
    degree : int
        Polynomial degree of the fitted curve.
    n_bins : int
        Number of radial bins used to measure the profile.
    center : (float, float) or None
        Fisheye centre in pixels; image centre if None.
    r_max : float or None
        Largest radius measured; half the shorter side if None.
    coeffs : sequence of float or None
        Use a known curve instead of fitting. ``fit`` then only validates.
    """

    def __init__(self, degree=5, n_bins=64, center=None, r_max=None, coeffs=None):
        self.degree = degree
        self.n_bins = n_bins
        self.center = center
        self.r_max = r_max
        self.coeffs = coeffs

    def _geometry(self, img):
        center = self.center
        if center is None:
            center = ((img.width - 1) / 2.0, (img.height - 1) / 2.0)
        r_max = self.r_max if self.r_max is not None else min(img.width, img.height) / 2.0
        return center, r_max

    def fit(self, X, y=None):
        img = check_image(X)
        center, r_max = self._geometry(img)
        self.center_ = center
        if self.coeffs is not None:
            self.profile_ = None
            self.polynomial_ = FalloffPolynomial(tuple(self.coeffs))
        else:
            self.profile_ = measure_radial_profile(to_luma(img), center, r_max, self.n_bins)
            self.polynomial_ = fit_falloff(self.profile_, self.degree)
        return self

    def transform(self, X):
        check_is_fitted(self, "polynomial_")
        return compensate(check_image(X), self.polynomial_, self.center_)
