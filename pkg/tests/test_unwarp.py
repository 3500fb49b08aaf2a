import math

import numpy as np
import pytest

from dualfisheye.exceptions import BadProfile, NoOverlap
from dualfisheye.imagecore import ImageBuffer
from dualfisheye.unwarp import (LensProfile, angles_to_pano, compute_overlaps, coverage_mask,
                                equirect_to_fisheye, fisheye_lookup, horizon_overlap_width,
                                pano_angles, unwarp_lens, wrap_angle)

from oracles import overlap_columns


@pytest.mark.parametrize("fov", [180.0, 170.0, 220.0])
def test_lens_fov_bounds(fov):
    with pytest.raises(BadProfile):
        LensProfile(fov_deg=fov, circle_center=(10, 10), circle_radius=10)


def test_lens_must_fit_half_frame():
    lens = LensProfile(circle_center=(40.0, 40.0), circle_radius=50.0)
    with pytest.raises(BadProfile):
        unwarp_lens(ImageBuffer(np.zeros((80, 80))), lens, 32)


def test_centered_lens():
    lens = LensProfile.centered(640)
    assert lens.circle_center == (319.5, 319.5)
    assert lens.circle_radius == 320.0
    lens.check_fits(640, 640)


def test_pano_angles_conventions():
    yaw, pitch = pano_angles(8)
    assert yaw.shape == (8, 16)
    assert yaw[0, 0] == pytest.approx(-math.pi + math.pi / 16)
    assert pitch[0, 0] < 0 < pitch[-1, 0]
    x, y = angles_to_pano(yaw, pitch, 8)
    assert np.allclose(x, np.arange(16)[None, :])
    assert np.allclose(y, np.arange(8)[:, None])


def test_wrap_angle():
    assert wrap_angle(math.pi) == pytest.approx(-math.pi)
    assert wrap_angle(-3 * math.pi / 2) == pytest.approx(math.pi / 2)


def test_equirect_centre_maps_to_fisheye_centre():
    xf, yf, inside = equirect_to_fisheye(50.0, 50.0, 100, 100, 193.0)
    assert (xf, yf, inside) == pytest.approx((50.0, 50.0, True))


def test_equirect_edge_is_circle_rim():
    # yaw = +fov/2 on the horizon lands on the rim, to the right of centre
    xf, yf, inside = equirect_to_fisheye(100.0, 50.0, 100, 100, 193.0)
    assert xf == pytest.approx(100.0)
    assert yf == pytest.approx(50.0)
    assert inside


def test_lookup_is_equidistant():
    lens = LensProfile.centered(400)
    xs, ys, covered = fisheye_lookup(lens, 400, 400, 64)
    yaw, pitch = pano_angles(64)
    cos_off = np.cos(pitch) * np.cos(yaw)
    off = np.arccos(np.clip(cos_off, -1, 1))
    rho = np.hypot(xs - lens.circle_center[0], ys - lens.circle_center[1])
    sel = covered
    assert np.allclose(rho[sel], off[sel] / (0.5 * lens.fov_rad) * lens.circle_radius, atol=1e-9)


def test_unwarp_constant_image():
    lens = LensProfile.centered(96)
    out = unwarp_lens(ImageBuffer(np.full((96, 96, 3), 0.25)), lens, 32)
    assert out.shape == (32, 64, 3)
    assert np.allclose(out.data[out.valid()], 0.25)
    assert (out.data[~out.valid()] == 0).all()
    assert np.array_equal(out.valid(), coverage_mask(lens, 32))


def test_front_and_rear_coverage():
    front = coverage_mask(LensProfile.centered(64, yaw_offset_deg=0.0), 64)
    rear = coverage_mask(LensProfile.centered(64, yaw_offset_deg=180.0), 64)
    assert (front | rear).all()
    assert front[32, 64] and not rear[32, 64]
    assert rear[32, 0] and not front[32, 0]


def test_overlaps_frozen(frozen):
    ov = compute_overlaps(193.0, 1024)
    ref = frozen["overlap_193_1024"]
    assert ov.width == ref["n"] == 37
    assert ov.left.start == ref["left_start"] and ov.right.start == ref["right_start"]
    assert ov.left.stop - ov.left.start == ov.right.width == 37
    assert ov.left.center == pytest.approx(256.5) and ov.right.center == pytest.approx(768.5)


@pytest.mark.parametrize("fov,w", [(190.0, 720), (200.0, 1024), (193.0, 3888)])
def test_overlaps_match_oracle(fov, w):
    n, starts = overlap_columns(fov, w)
    ov = compute_overlaps(fov, w)
    assert ov.width == n
    assert [b.start for b in ov.bands] == starts


def test_no_overlap():
    with pytest.raises(NoOverlap):
        compute_overlaps(180.0, 1024)
    with pytest.raises(NoOverlap):
        compute_overlaps(180.1, 100)


def test_horizon_band_width():
    front = coverage_mask(LensProfile.centered(64, yaw_offset_deg=0.0), 512)
    rear = coverage_mask(LensProfile.centered(64, yaw_offset_deg=180.0), 512)
    ov = compute_overlaps(193.0, 1024)
    for band in ov.bands:
        assert abs(horizon_overlap_width(front, rear, band) - ov.width) <= 1
