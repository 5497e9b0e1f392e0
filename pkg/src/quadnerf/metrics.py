"""Image fidelity metrics on [0, 1] images."""

import numpy as np
from scipy.ndimage import correlate1d

PSNR_CAP = 99.0
LUMA = np.array([0.299, 0.587, 0.114])


def _as_array(img):
    return np.asarray(getattr(img, "data", img), dtype=np.float64)


def mse(a, b) -> float:
    d = _as_array(a) - _as_array(b)
    return float(np.mean(d * d))


def psnr_from_mse(err: float) -> float:
    """10 log10(1 / MSE) for peak 1.0, capped at 99 dB for identical images."""
    if err < 0.0:
        raise ValueError("mse must be nonnegative")
    if err == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, float(10.0 * np.log10(1.0 / err)))


def psnr(a, b) -> float:
    return psnr_from_mse(mse(a, b))


def luma(img) -> np.ndarray:
    arr = _as_array(img)
    return arr @ LUMA if arr.ndim == 3 else arr


def gaussian_kernel1d(size=11, sigma=1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def ssim(a, b, size=11, sigma=1.5, k1=0.01, k2=0.03, data_range=1.0) -> float:
    """Mean single-scale SSIM over all full Gaussian windows of the luma."""
    x, y = luma(a), luma(b)
    if x.shape != y.shape:
        raise ValueError("images must have the same shape")
    if min(x.shape) < size:
        raise ValueError(f"images must be at least {size}x{size} for SSIM")
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    k = gaussian_kernel1d(size, sigma)
    r = size // 2

    def blur(z):
        z = correlate1d(correlate1d(z, k, axis=0), k, axis=1)
        return z[r:z.shape[0] - r, r:z.shape[1] - r]

    mx, my = blur(x), blur(y)
    vx = blur(x * x) - mx * mx
    vy = blur(y * y) - my * my
    cxy = blur(x * y) - mx * my
    num = (2.0 * mx * my + c1) * (2.0 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))
