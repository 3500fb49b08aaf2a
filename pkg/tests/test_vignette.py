import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from dualfisheye.exceptions import EmptyBin, IllConditioned
from dualfisheye.imagecore import ImageBuffer
from dualfisheye.vignette import (MAX_GAIN, FalloffCompensator, FalloffPolynomial, RadialProfile,
                                  attenuate, compensate, eval_falloff, fit_falloff,
                                  measure_radial_profile)

from oracles import horner_exact

GEAR = FalloffPolynomial.gear360()


def test_gear360_centre_gain():
    assert GEAR(0.0) == 0.9976
    assert GEAR.degree == 5


def test_eval_matches_exact_horner(frozen):
    for r, expected in frozen["gear360_values"].items():
        assert eval_falloff(GEAR, float(r)) == pytest.approx(expected, rel=1e-13)
        assert expected == pytest.approx(horner_exact(GEAR.coeffs, float(r)), rel=1e-15)


def test_gear360_positive_over_half_frame():
    # usable over the 1944 px radius of a 3888 px half-frame, not far beyond
    FalloffPolynomial(GEAR.coeffs, r_max=1944.0)
    with pytest.raises(ValueError):
        FalloffPolynomial(GEAR.coeffs, r_max=2500.0)


@pytest.mark.parametrize("coeffs", [(1.0,), (0.1, 0.0), (0.0, 1.5), (np.nan, 1.0)])
def test_polynomial_validation(coeffs):
    with pytest.raises(ValueError):
        FalloffPolynomial(coeffs)


def test_eval_array_shape():
    r = np.linspace(0, 100, 12).reshape(3, 4)
    assert eval_falloff(GEAR, r).shape == (3, 4)
    assert isinstance(eval_falloff(GEAR, 5.0), float)


def _flat(size=129, value=0.8):
    return ImageBuffer(np.full((size, size), value))


def test_profile_of_flat_field_is_one():
    c = (64.0, 64.0)
    prof = measure_radial_profile(_flat(), c, 64.0, n_bins=16)
    assert len(prof) == 16
    assert np.allclose(prof.intensity, 1.0)
    assert np.all(np.diff(prof.radius) > 0)


def test_profile_normalised_to_innermost_bin():
    c = (64.0, 64.0)
    poly = FalloffPolynomial((-1e-4, 0.0, 1.0))
    img = attenuate(_flat(value=0.5), poly, c)
    prof = measure_radial_profile(img, c, 64.0, n_bins=32)
    assert prof.intensity[0] == 1.0
    assert prof.intensity[-1] < prof.intensity[0]


def test_empty_bin():
    with pytest.raises(EmptyBin):
        measure_radial_profile(ImageBuffer(np.ones((16, 16))), (7.5, 7.5), 8.0, n_bins=64)


def test_profile_rejects_colour():
    with pytest.raises(ValueError):
        measure_radial_profile(ImageBuffer(np.ones((16, 16, 3))), (7.5, 7.5), 8.0, n_bins=8)


def test_fit_recovers_known_curve():
    r = np.linspace(0, 1900, 80)
    prof = RadialProfile(r, eval_falloff(GEAR, r) / GEAR(0.0) * 0.9999)
    fit = fit_falloff(prof, 5)
    expected = eval_falloff(GEAR, r) / GEAR(0.0) * 0.9999
    assert np.max(np.abs(fit(r) - expected)) < 1e-10
    assert fit.residual_rms < 1e-10


def test_fit_ill_conditioned():
    prof = RadialProfile([0.0, 1.0, 2.0], [1.0, 0.9, 0.8])
    with pytest.raises(IllConditioned):
        fit_falloff(prof, 5)


def test_compensate_inverts_attenuate():
    c = (64.0, 64.0)
    img = _flat()
    back = compensate(attenuate(img, GEAR, c), GEAR, c)
    assert np.allclose(back.data, img.data, atol=1e-6)


def test_compensate_clamps_gain():
    poly = FalloffPolynomial((-1.0, 0.5))
    out = compensate(ImageBuffer(np.ones((9, 9))), poly, (4.0, 4.0))
    assert out.data.max() == MAX_GAIN
    assert out.data.min() >= 0.0


def test_radial_csv_round_trip(tmp_path):
    prof = RadialProfile([0.5, 2.25, 7.125], [1.0, 0.95, 0.5 + 1e-12])
    path = tmp_path / "profile.csv"
    prof.to_csv(path)
    assert path.read_text().splitlines()[0] == "radius_px,intensity"
    back = RadialProfile.from_csv(path)
    assert np.array_equal(back.radius, prof.radius)
    assert np.array_equal(back.intensity, prof.intensity)


def test_radial_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("r,v\n1,1\n")
    with pytest.raises(ValueError):
        RadialProfile.from_csv(path)


def test_compensator_estimator():
    c = (63.5, 63.5)
    poly = FalloffPolynomial((-2e-5, 0.0, 1.0))
    white = attenuate(ImageBuffer(np.full((128, 128, 3), 0.9)), poly, c)
    est = FalloffCompensator(degree=2, n_bins=32)
    assert est.get_params() == {"degree": 2, "n_bins": 32, "center": None, "r_max": None, "coeffs": None}
    with pytest.raises(NotFittedError):
        est.transform(white)
    flat = est.fit_transform(white)
    inside = np.hypot(*np.meshgrid(np.arange(128) - c[0], np.arange(128) - c[1])) <= 64
    vals = flat.data[inside]
    assert np.std(vals) / np.mean(vals) < 2e-3


def test_compensator_known_coeffs():
    est = FalloffCompensator(coeffs=GEAR.coeffs).fit(np.zeros((8, 8), np.uint8))
    assert est.polynomial_ == GEAR
    assert est.profile_ is None
