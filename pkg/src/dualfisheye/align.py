"""Two-step registration of the rear canvas onto the front canvas.

Step one applies a fixed affine estimated offline from control points.
Step two matches one template per overlap band with normalized
cross-correlation and fits a refining affine to the matched window corners.

All affines here act in the *alignment frame*: the panorama rolled by half
its width so that the rear lens sits in the middle and its unwarped image is
contiguous. Control-point files use the same frame.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import fftconvolve
from sklearn.base import BaseEstimator

from .exceptions import DegenerateConfiguration, LowConfidence
from .imagecore import AffineTransform2D, ImageBuffer, RollFrame, SummedAreaTable, to_luma, warp_affine
from .unwarp import DEFAULT_FOV, compute_overlaps

logger = logging.getLogger(__name__)

FLAT_VARIANCE = 1e-12
_TIE_TOL = 1e-12


def alignment_frame(pano_w):
    """Roll that moves the rear lens (yaw 180) to the canvas centre."""
    return RollFrame(pano_w // 2, pano_w)


# ---------------------------------------------------------------------------
# control points and affine estimation
# ---------------------------------------------------------------------------

@dataclass
class ControlPointSet:
    """Point pairs, target-first: ``targets[i]`` corresponds to ``sources[i]``."""

    targets: np.ndarray
    sources: np.ndarray

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=np.float64).reshape(-1, 2)
        self.sources = np.asarray(self.sources, dtype=np.float64).reshape(-1, 2)
        if self.targets.shape != self.sources.shape:
            raise ValueError("targets and sources must have the same number of points")

    def __len__(self):
        return len(self.targets)

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["x1", "y1", "x2", "y2"]:
                raise ValueError(f"{path}: expected header x1,y1,x2,y2")
            rows = [[float(r[k]) for k in ("x1", "y1", "x2", "y2")] for r in reader]
        arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
        return cls(arr[:, :2], arr[:, 2:])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x1", "y1", "x2", "y2"])
            for (x1, y1), (x2, y2) in zip(self.targets, self.sources):
                writer.writerow([repr(float(v)) for v in (x1, y1, x2, y2)])


def estimate_affine(points):
    """Least-squares affine taking ``points.sources`` onto ``points.targets``.

    Minimises ``sum |[x2 y2 1] @ A - [x1 y1 1]|^2``. Source coordinates are
    centred and scaled before solving.
    """
    src, dst = points.sources, points.targets
    if len(src) < 3:
        raise DegenerateConfiguration(f"need at least 3 point pairs, got {len(src)}")
    mean = src.mean(axis=0)
    spread = np.sqrt(np.mean(np.sum((src - mean) ** 2, axis=1)))
    if not spread > 0:
        raise DegenerateConfiguration("all source points coincide")
    design = np.column_stack([(src - mean) / spread, np.ones(len(src))])
    sv = np.linalg.svd(design, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise DegenerateConfiguration("source points are collinear")
    params = np.zeros(6)
    target = dst
    # one round of iterative refinement: un-centring the first solve
    # leaks round-off into the translation
    for _ in range(2):
        sol, *_ = np.linalg.lstsq(design, target, rcond=None)
        a, b = sol[0] / spread
        c, d = sol[1] / spread
        tx = sol[2, 0] - a * mean[0] - c * mean[1]
        ty = sol[2, 1] - b * mean[0] - d * mean[1]
        params += (a, b, c, d, tx, ty)
        A = AffineTransform2D.from_params(params)
        target = dst - A.apply_points(src)
    return A


def affine_residuals(A, points):
    """Per-pair distance between mapped sources and targets."""
    mapped = A.apply_points(points.sources)
    return np.hypot(*(mapped - points.targets).T)


class ControlPointAffine(BaseEstimator):
    """Affine regression from source points to target points.

    ``fit(X, y)`` takes sources ``X`` and targets ``y`` as ``(n, 2)`` arrays;
    ``predict`` maps new source points.
    """

    def fit(self, X, y):
        pts = ControlPointSet(targets=y, sources=X)
        self.affine_ = estimate_affine(pts)
        self.residuals_ = affine_residuals(self.affine_, pts)
        return self

    def predict(self, X):
        return self.affine_.apply_points(np.asarray(X, dtype=np.float64).reshape(-1, 2))

    def score(self, X, y):
        """Negative RMS residual (higher is better)."""
        err = self.predict(X) - np.asarray(y, dtype=np.float64).reshape(-1, 2)
        return -float(np.sqrt(np.mean(np.sum(err ** 2, axis=1))))


# ---------------------------------------------------------------------------
# normalized cross-correlation
# ---------------------------------------------------------------------------

@dataclass
class CorrelationSurface:
    """NCC value per template placement; ``flat`` marks undefined placements.

    Both arrays have shape ``(Hr - Ht + 1, Wr - Wt + 1)`` and are indexed
    ``[v, u]`` by the placement's top-left corner.
    """

    gamma: np.ndarray
    flat: np.ndarray


def _plane(img, name):
    if isinstance(img, ImageBuffer):
        img = to_luma(img).plane(0)
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be single-channel")
    return arr


def _check_sizes(ref, tmpl):
    if tmpl.shape[0] >= ref.shape[0] or tmpl.shape[1] >= ref.shape[1]:
        raise ValueError(f"template {tmpl.shape} must be strictly smaller than reference {ref.shape}")


def ncc_direct(reference, template):
    """Normalized cross-correlation by direct summation at every placement."""
    f = _plane(reference, "reference")
    t = _plane(template, "template")
    _check_sizes(f, t)
    n = t.size
    tz = t - t.mean()
    t_energy = np.sum(tz * tz)
    windows = sliding_window_view(f, t.shape)
    fz = windows - windows.mean(axis=(2, 3), keepdims=True)
    num = np.einsum("vuij,ij->vu", fz, tz)
    f_energy = np.einsum("vuij,vuij->vu", fz, fz)
    flat = (f_energy / n < FLAT_VARIANCE) | (t_energy / n < FLAT_VARIANCE)
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma = num / np.sqrt(f_energy * t_energy)
    gamma[flat] = 0.0
    return CorrelationSurface(gamma, flat)


def ncc_fast(reference, template):
    """Normalized cross-correlation with summed-area-table denominators.

    The numerator is an FFT cross-correlation against the zero-mean
    template; window means and energies come from running sums in O(1) per
    placement.
    """
    f = _plane(reference, "reference")
    t = _plane(template, "template")
    _check_sizes(f, t)
    th, tw = t.shape
    n = t.size
    # shift the reference to zero mean: NCC ignores offsets and the running
    # sums lose less precision
    f = f - f.mean()
    tz = t - t.mean()
    t_energy = float(np.sum(tz * tz))
    num = fftconvolve(f, tz[::-1, ::-1], mode="valid")
    s1, s2 = SummedAreaTable(f).window_sums(tw, th)
    f_energy = np.maximum(s2 - s1 * s1 / n, 0.0)
    flat = (f_energy / n < FLAT_VARIANCE) | (t_energy / n < FLAT_VARIANCE)
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma = num / np.sqrt(f_energy * t_energy)
    gamma[flat] = 0.0
    np.clip(gamma, -1.0, 1.0, out=gamma)
    return CorrelationSurface(gamma, flat)


def _xcorr(a, b):
    return fftconvolve(a, b[::-1, ::-1], mode="valid")


def ncc_masked(reference, template, ref_mask=None, tmpl_mask=None, min_overlap=0.5):
    """Normalized cross-correlation over the pixels valid in both images.

    Each placement's means and energies are taken over the intersection of
    the two masks only. Placements whose intersection covers less than
    ``min_overlap`` of the valid template pixels are flagged like flat
    patches. With no invalid pixels this equals :func:`ncc_fast`.
    """
    f = _plane(reference, "reference")
    t = _plane(template, "template")
    _check_sizes(f, t)
    mf = np.ones(f.shape) if ref_mask is None else np.asarray(ref_mask, dtype=np.float64)
    mt = np.ones(t.shape) if tmpl_mask is None else np.asarray(tmpl_mask, dtype=np.float64)
    n_t = mt.sum()
    if n_t == 0 or mf.sum() == 0:
        shape = (f.shape[0] - t.shape[0] + 1, f.shape[1] - t.shape[1] + 1)
        return CorrelationSurface(np.zeros(shape), np.ones(shape, dtype=bool))
    f = (f - f[mf > 0].mean()) * mf
    t = (t - t[mt > 0].mean()) * mt
    n = np.round(_xcorr(mf, mt))
    sf = _xcorr(f, mt)
    sff = _xcorr(f * f, mt)
    st = _xcorr(mf, t)
    stt = _xcorr(mf, t * t)
    sft = _xcorr(f, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        num = sft - sf * st / n
        vf = np.maximum(sff - sf * sf / n, 0.0)
        vt = np.maximum(stt - st * st / n, 0.0)
        flat = ((n < max(min_overlap * n_t, 1.0))
                | ~(vf / n >= FLAT_VARIANCE) | ~(vt / n >= FLAT_VARIANCE))
        gamma = num / np.sqrt(vf * vt)
    gamma[flat] = 0.0
    np.clip(gamma, -1.0, 1.0, out=gamma)
    return CorrelationSurface(gamma, flat)


def surface_argmax(gamma, offset=(0, 0), allowed=None):
    """Peak placement with deterministic tie-breaking.

    Among placements within ``_TIE_TOL`` of the maximum, pick the one whose
    displacement ``(u + offset[0], v + offset[1])`` is shortest, then the
    first in row-major order. Returns ``(u, v, value)`` or None.
    """
    g = np.where(allowed, gamma, -np.inf) if allowed is not None else gamma
    best = np.max(g)
    if not np.isfinite(best):
        return None
    vs, us = np.nonzero(g >= best - _TIE_TOL)
    norms = (us + offset[0]) ** 2 + (vs + offset[1]) ** 2
    k = int(np.argmin(norms))  # argmin keeps the first (row-major) on ties
    return int(us[k]), int(vs[k]), float(gamma[vs[k], us[k]])


# ---------------------------------------------------------------------------
# adaptive refinement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RefineParams:
    """Matching window settings.

    ``template_size`` is ``(width, height)``; None means 80 % of the band
    width by 25 % of the panorama height.
    """

    template_size: tuple | None = None
    search_margin: int = 16
    min_peak_gamma: float = 0.5
    windows_per_band: int = 1
    min_overlap: float = 0.6

    def __post_init__(self):
        if self.search_margin < 1:
            raise ValueError("search_margin must be >= 1")
        if self.windows_per_band < 1:
            raise ValueError("windows_per_band must be >= 1")
        if self.template_size is not None:
            object.__setattr__(self, "template_size", tuple(int(v) for v in self.template_size))

    def template_for(self, band_width, pano_h):
        if self.template_size is not None:
            tw, th = self.template_size
        else:
            tw = int(round(0.8 * band_width))
            th = int(round(0.25 * pano_h))
        if tw < 2 or th < 2:
            raise ValueError(f"template {tw}x{th} too small")
        if tw > band_width:
            raise ValueError(f"template width {tw} exceeds overlap band width {band_width}")
        return tw, th

    def window_rows(self, pano_h, th):
        k = self.windows_per_band
        return [pano_h / 2.0 + (i - (k - 1) / 2.0) * th for i in range(k)]


@dataclass(frozen=True)
class MatchResult:
    """Where the ``top`` template was found in ``bottom``.

    ``displacement`` is the bottom position minus the top position, in
    pixels. Rectangles are ``(x, y, width, height)`` in the alignment frame.
    """

    displacement: tuple
    peak_gamma: float
    template_rect: tuple
    reference_rect: tuple
    band: str = ""
    low_confidence: bool = False

    @property
    def du(self):
        return self.displacement[0]

    @property
    def dv(self):
        return self.displacement[1]

    def vertices(self):
        x, y, w, h = self.template_rect
        return np.array([[x, y], [x + w - 1, y], [x, y + h - 1], [x + w - 1, y + h - 1]],
                        dtype=np.float64)

    def as_dict(self):
        return {
            "band": self.band,
            "du": int(self.du),
            "dv": int(self.dv),
            "peak_gamma": float(self.peak_gamma),
            "low_confidence": bool(self.low_confidence),
            "template_rect": [int(v) for v in self.template_rect],
            "reference_rect": [int(v) for v in self.reference_rect],
        }


def match_window(top, bottom, band, params=None, row_center=None):
    """Find the ``top`` template of ``band`` inside the ``bottom`` canvas.

    The template is centred in the band (vertically on ``row_center``,
    default the horizon); the reference is the same rectangle of ``bottom``
    grown by ``search_margin``. If either window holds invalid pixels the
    masked correlation is used, so placements that run partly off the rear
    lens coverage are scored on their valid part.

    Raises
    ------
    LowConfidence
        If the peak correlation is below ``params.min_peak_gamma``; the
        rejected match is attached as ``exc.result``.
    """
    params = params or RefineParams()
    H, W = top.height, top.width
    tw, th = params.template_for(band.width, H)
    rc = H / 2.0 if row_center is None else row_center
    tx0 = int(round(band.center - tw / 2.0))
    ty0 = int(round(rc - th / 2.0))
    ty0 = min(max(ty0, 0), H - th)
    m = params.search_margin
    rx0, ry0 = max(tx0 - m, 0), max(ty0 - m, 0)
    rx1, ry1 = min(tx0 + tw + m, W), min(ty0 + th + m, H)

    t_plane = to_luma(top).plane(0)[ty0:ty0 + th, tx0:tx0 + tw]
    r_plane = to_luma(bottom).plane(0)[ry0:ry1, rx0:rx1]
    t_mask = top.valid()[ty0:ty0 + th, tx0:tx0 + tw]
    r_mask = bottom.valid()[ry0:ry1, rx0:rx1]
    if t_mask.all() and r_mask.all():
        surface = ncc_fast(r_plane, t_plane)
    else:
        surface = ncc_masked(r_plane, t_plane, r_mask, t_mask, params.min_overlap)
    allowed = ~surface.flat

    offset = (rx0 - tx0, ry0 - ty0)
    rect_t = (tx0, ty0, tw, th)
    rect_r = (rx0, ry0, rx1 - rx0, ry1 - ry0)
    peak = surface_argmax(surface.gamma, offset, allowed)
    if peak is None:
        result = MatchResult((0, 0), 0.0, rect_t, rect_r, band.name, True)
        raise LowConfidence(f"band {band.name}: no valid placement", result=result, stage="align")
    u, v, g = peak
    disp = (u + offset[0], v + offset[1])
    if g < params.min_peak_gamma:
        result = MatchResult(disp, g, rect_t, rect_r, band.name, True)
        raise LowConfidence(f"band {band.name}: peak gamma {g:.3f} below "
                            f"{params.min_peak_gamma}", result=result, stage="align")
    return MatchResult(disp, g, rect_t, rect_r, band.name, False)


def refine_affine(matches):
    """Affine that moves matched ``bottom`` windows back onto ``top``.

    Each template corner ``v`` pairs target ``v`` with source
    ``v + displacement``; low-confidence windows contribute zero
    displacement.
    """
    if len(matches) < 2:
        raise DegenerateConfiguration("refinement needs matches from at least two windows")
    targets, sources = [], []
    for m in matches:
        verts = m.vertices()
        disp = np.zeros(2) if m.low_confidence else np.asarray(m.displacement, dtype=np.float64)
        targets.append(verts)
        sources.append(verts + disp)
    shifts = np.vstack(sources) - np.vstack(targets)
    if np.all(shifts == shifts[0]):
        # a common shift: return the exact translation, free of round-off
        return AffineTransform2D.translation(-shifts[0, 0], -shifts[0, 1])
    return estimate_affine(ControlPointSet(np.vstack(targets), np.vstack(sources)))


@dataclass
class AlignmentResult:
    """Aligned rear canvas (panorama frame) plus the transforms that made it."""

    rear: ImageBuffer
    calib: AffineTransform2D
    refine: AffineTransform2D
    matches: list = field(default_factory=list)
    warning: str | None = None

    @property
    def total(self):
        return self.calib @ self.refine


def match_bands(top, bottom, bands, params):
    """Run ``match_window`` for every window of every band.

    Low-confidence windows are kept with ``low_confidence=True``.
    """
    params = params or RefineParams()
    results = []
    for band in bands:
        tw, th = params.template_for(band.width, top.height)
        for rc in params.window_rows(top.height, th):
            try:
                results.append(match_window(top, bottom, band, params, row_center=rc))
            except LowConfidence as exc:
                logger.warning("%s", exc)
                results.append(exc.result)
    return results


def two_step_align(front, rear, A_calib=None, params=None, overlaps=None, refine=True,
                   fov_deg=DEFAULT_FOV):
    """Warp the rear canvas onto the front one.

    The rear is first warped by the precomputed ``A_calib``; with ``refine``
    the bands are matched on that result and a refining affine ``A_ref`` is
    fitted. The returned canvas is the original rear warped once by
    ``A_calib @ A_ref``.
    """
    A_calib = A_calib or AffineTransform2D.identity()
    params = params or RefineParams()
    overlaps = overlaps or compute_overlaps(fov_deg, front.width)
    frame = alignment_frame(front.width)
    F = frame.roll(front)
    R = frame.roll(rear)
    first = warp_affine(R, A_calib)

    A_ref = AffineTransform2D.identity()
    matches, warning = [], None
    if refine:
        bands = [b.shifted(frame) for b in overlaps.bands]
        matches = match_bands(F, first, bands, params)
        if all(m.low_confidence for m in matches):
            warning = "all matching windows were low confidence; using first-step alignment only"
            logger.warning(warning)
        else:
            A_ref = refine_affine(matches)

    total = A_calib @ A_ref
    aligned = first if total == A_calib else warp_affine(R, total)
    return AlignmentResult(frame.unroll(aligned), A_calib, A_ref, matches, warning)
