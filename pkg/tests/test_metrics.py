import numpy as np
import pytest

from oracles import naive_ssim
from quadnerf.metrics import PSNR_CAP, gaussian_kernel1d, psnr, psnr_from_mse, ssim


def test_psnr_twenty_db():
    assert psnr_from_mse(0.01) == 20.0
    a = np.zeros((4, 4, 3))
    assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-12)


def test_psnr_cap_and_errors():
    a = np.full((3, 3, 3), 0.4)
    assert psnr(a, a) == PSNR_CAP
    assert psnr_from_mse(1e-30) == PSNR_CAP
    with pytest.raises(ValueError):
        psnr_from_mse(-1.0)


def test_ssim_identical_is_one(rng):
    a = rng.random((16, 20, 3))
    assert ssim(a, a) == 1.0


def test_ssim_matches_scalar_reference(rng):
    for _ in range(20):
        h, w = rng.integers(11, 18, 2)
        a = rng.random((h, w, 3))
        b = np.clip(a + rng.normal(0, rng.uniform(0.01, 0.3), a.shape), 0, 1)
        assert abs(ssim(a, b) - naive_ssim(a, b)) < 1e-6


def test_ssim_rejects_small_and_mismatched(rng):
    with pytest.raises(ValueError):
        ssim(rng.random((10, 30, 3)), rng.random((10, 30, 3)))
    with pytest.raises(ValueError):
        ssim(rng.random((12, 12, 3)), rng.random((13, 12, 3)))


def test_ssim_drops_with_noise(rng):
    a = rng.random((24, 24, 3))
    noisy = np.clip(a + rng.normal(0, 0.2, a.shape), 0, 1)
    assert ssim(a, noisy) < 0.9


def test_kernel_normalised_and_symmetric():
    k = gaussian_kernel1d()
    assert k.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(k, k[::-1]) and k.argmax() == 5
