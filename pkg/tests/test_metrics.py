import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msdeblur.autodiff import ShapeError
from msdeblur.metrics import (MS_SSIM_WEIGHTS, PSNR_CAP, _ssim_maps, gaussian_window, ms_ssim,
                              ms_ssim_min_size, psnr, ssim, to_luma)


def checker(size=64, cell=4, lo=0.2, hi=0.8):
    yy, xx = np.mgrid[0:size, 0:size]
    return np.where(((yy // cell) + (xx // cell)) % 2 == 0, hi, lo)


def test_psnr_values(rng):
    x = rng.random((3, 16, 16))
    assert psnr(x, x) == PSNR_CAP
    assert psnr(np.full((3, 8, 8), 0.5), np.full((3, 8, 8), 0.6)) == pytest.approx(20.0, abs=1e-9)
    assert psnr(np.zeros((3, 8, 8)), np.ones((3, 8, 8))) == 0.0


def test_psnr_symmetric_and_monotone(rng):
    x = rng.random((3, 32, 32))
    n = rng.uniform(-1, 1, x.shape)
    vals = [psnr(x, x + a * n) for a in (0.01, 0.02, 0.05, 0.1)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    y = x + 0.03 * n
    assert psnr(x, y) == psnr(y, x)


def test_psnr_quantized_positive_for_distinct(rng):
    x = rng.random((3, 8, 8))
    y = np.clip(x + 0.02, 0, 1)
    assert psnr(x, y, quantized=True) > 0


def test_psnr_shape_error():
    with pytest.raises(ShapeError):
        psnr(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))


@pytest.mark.parametrize("seed", range(10))
def test_ssim_self_is_exactly_one(seed):
    x = np.random.default_rng(seed).random((3, 32, 40))
    assert ssim(x, x) == 1.0


def test_ssim_inverted_checker_negative():
    x = checker()
    assert ssim(x, 1 - x) < 0


def test_ssim_range_and_symmetry(rng):
    x, y = rng.random((3, 32, 32)), rng.random((3, 32, 32))
    v = ssim(x, y)
    assert -1 <= v <= 1
    assert v == pytest.approx(ssim(y, x), abs=1e-15)


@given(st.floats(-0.2, 0.2), st.integers(0, 1000))
def test_contrast_structure_shift_invariant(c, seed):
    """The cs term only sees deviations from the local mean, so a shared offset leaves it unchanged."""
    r = np.random.default_rng(seed)
    x = 0.3 + 0.4 * r.random((24, 24))
    y = 0.3 + 0.4 * r.random((24, 24))
    _, cs0 = ssim(x, y, full=True)
    _, cs1 = ssim(x + c, y + c, full=True)
    assert abs(cs0 - cs1) <= 1e-6


def test_luminance_term_is_not_shift_invariant():
    """Full SSIM's luminance factor depends on the absolute means (recorded deviation)."""
    win = gaussian_window()
    x = np.full((16, 16), 0.2)
    y = np.full((16, 16), 0.3)
    lum0, _ = _ssim_maps(x, y, win, 1e-4, 9e-4)
    lum1, _ = _ssim_maps(x + 0.5, y + 0.5, win, 1e-4, 9e-4)
    assert abs(lum0.mean() - lum1.mean()) > 1e-3


def test_ssim_small_image_rejected():
    with pytest.raises(ShapeError):
        ssim(np.zeros((3, 8, 8)), np.zeros((3, 8, 8)))


def test_ms_ssim_self_and_size(rng):
    assert ms_ssim_min_size() == 176
    x = rng.random((3, 176, 180))
    assert ms_ssim(x, x) == 1.0
    with pytest.raises(ShapeError):
        ms_ssim(rng.random((3, 170, 200)), rng.random((3, 170, 200)))


def test_ms_ssim_decreases_with_noise(rng):
    x = rng.random((3, 176, 176)) * 0.5 + 0.25
    n = rng.standard_normal(x.shape)
    a = ms_ssim(x, np.clip(x + 0.02 * n, 0, 1))
    b = ms_ssim(x, np.clip(x + 0.2 * n, 0, 1))
    assert 1 > a > b >= 0
    assert sum(MS_SSIM_WEIGHTS) == pytest.approx(1.0, abs=1e-3)


def test_luma_weights():
    img = np.zeros((3, 2, 2))
    img[0] = 1
    np.testing.assert_allclose(to_luma(img), 0.299)
    with pytest.raises(ShapeError):
        to_luma(np.zeros((2, 4, 4)))


def test_gaussian_window_normalized():
    g = gaussian_window(11, 1.5)
    assert g.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.argmax(g) == 5
