import numpy as np
import pytest

from dualfisheye.imagecore import AffineTransform2D, ImageBuffer
from dualfisheye.synth import (Occluder, SynthConfig, fisheye_directions, ground_truth,
                               make_test_pano, paint_occluder, render_dual, render_lens)
from dualfisheye.unwarp import LensProfile
from dualfisheye.vignette import FalloffPolynomial, eval_falloff, measure_radial_profile


@pytest.mark.parametrize("kind", ["chart", "noise", "low"])
def test_test_panoramas(kind):
    pano = make_test_pano(64, kind)
    assert pano.shape == (64, 128, 3)
    assert pano.data.min() >= 0 and pano.data.max() <= 1
    assert pano.data.std() > 0.01
    assert np.array_equal(make_test_pano(64, kind).data, pano.data)


def test_unknown_kind():
    with pytest.raises(ValueError):
        make_test_pano(64, "plaid")


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(fov_deg=175.0)
    with pytest.raises(ValueError):
        SynthConfig(misalign=AffineTransform2D(0, 0, 0, 0, 1, 1))


def test_axis_ray():
    lens = LensProfile.centered(65)
    yaw, pitch, inside = fisheye_directions(lens, 65)
    assert yaw[32, 32] == pytest.approx(0.0, abs=1e-12)
    assert pitch[32, 32] == pytest.approx(0.0, abs=1e-12)
    assert inside[32, 32] and not inside[0, 0]
    rear = LensProfile.centered(65, yaw_offset_deg=180.0)
    assert fisheye_directions(rear, 65)[0][32, 32] == pytest.approx(np.pi)


def test_axis_pixel_samples_pano_centre():
    pano = make_test_pano(64, "noise")
    cfg = SynthConfig(halfframe_size=65)
    out = render_lens(pano, cfg.lenses()[0], cfg)
    centre = pano.data[31:33, 63:65].astype(np.float64).mean(axis=(0, 1))
    assert np.allclose(out.data[32, 32], centre, atol=1e-6)


def test_dual_layout():
    cfg = SynthConfig(halfframe_size=96)
    frame = render_dual(make_test_pano(64), cfg)
    assert frame.shape == (96, 192, 3)
    assert (frame.data[0, 0] == 0).all() and (frame.data[0, 96] == 0).all()


def test_render_requires_2to1():
    cfg = SynthConfig(halfframe_size=32)
    with pytest.raises(ValueError):
        render_lens(ImageBuffer(np.zeros((10, 30))), cfg.lenses()[0], cfg)


def test_vignette_profile_matches_curve():
    white = ImageBuffer(np.ones((64, 128, 3)))
    poly = FalloffPolynomial.gear360()
    cfg = SynthConfig(halfframe_size=640, vignette=poly, rim_px=0.0)
    lens = cfg.lenses()[0]
    half = render_lens(white, lens, cfg)
    prof = measure_radial_profile(half.data[:, :, 1], lens.circle_center, lens.circle_radius - 1, 64)
    expected = eval_falloff(poly, prof.radius) / poly(0.0)
    assert np.max(np.abs(prof.intensity - expected)) < 1e-3


def test_exposure_and_noise_determinism():
    pano = make_test_pano(64)
    cfg = SynthConfig(halfframe_size=64, noise_sigma=0.02, seed=9, rear_gain=0.8, rear_bias=0.05)
    a = render_dual(pano, cfg)
    assert np.array_equal(a.data, render_dual(pano, cfg).data)
    other = render_dual(pano, SynthConfig(halfframe_size=64, noise_sigma=0.02, seed=10,
                                          rear_gain=0.8, rear_bias=0.05))
    assert not np.array_equal(a.data, other.data)


def test_rear_gain_applies_to_rear_only():
    pano = make_test_pano(64)
    base = render_dual(pano, SynthConfig(halfframe_size=64)).data
    dim = render_dual(pano, SynthConfig(halfframe_size=64, rear_gain=0.5)).data
    assert np.array_equal(base[:, :64], dim[:, :64])
    assert np.allclose(dim[:, 64:], 0.5 * base[:, 64:], atol=1e-6)


def test_misalign_moves_rear_only():
    pano = make_test_pano(64)
    base = render_dual(pano, SynthConfig(halfframe_size=64)).data
    moved = render_dual(pano, SynthConfig(halfframe_size=64,
                                          misalign=AffineTransform2D.translation(3, 0))).data
    assert np.array_equal(base[:, :64], moved[:, :64])
    assert not np.allclose(base[:, 64:], moved[:, 64:])


def test_occluder():
    pano = make_test_pano(64, "low")
    occ = Occluder(parallax_px=(3, 0))
    cfg = SynthConfig(halfframe_size=64, occluder=occ)
    truth = ground_truth(pano, cfg)
    assert np.array_equal(truth.data, paint_occluder(pano, occ).data)
    assert not np.array_equal(truth.data, pano.data)
    # the object sits near yaw 90
    diff = np.abs(truth.data - pano.data).sum(axis=(0, 2))
    assert 90 < np.argmax(diff) < 105
    assert np.array_equal(ground_truth(pano, SynthConfig()).data, pano.data)
