"""Image quality metrics: PSNR, SSIM (11x11 Gaussian window, sigma 1.5),
masked depth RMSE."""

import numpy as np
from scipy.ndimage import correlate1d

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
_WIN = 11
_SIGMA = 1.5


def _window():
    x = np.arange(_WIN) - (_WIN - 1) / 2.0
    w = np.exp(-(x**2) / (2.0 * _SIGMA**2))
    return w / w.sum()


_W1D = _window()


def filter2d(img):
    """Separable windowed mean with zero padding, over the two leading axes."""
    out = correlate1d(img, _W1D, axis=0, mode="constant", cval=0.0)
    return correlate1d(out, _W1D, axis=1, mode="constant", cval=0.0)


def ssim_components(x, y):
    """All intermediate maps of the SSIM computation, for reuse by gradients."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    mx = filter2d(x)
    my = filter2d(y)
    mxx = filter2d(x * x)
    myy = filter2d(y * y)
    mxy = filter2d(x * y)
    vx = mxx - mx * mx
    vy = myy - my * my
    vxy = mxy - mx * my
    a1 = 2.0 * mx * my + SSIM_C1
    a2 = 2.0 * vxy + SSIM_C2
    b1 = mx * mx + my * my + SSIM_C1
    b2 = vx + vy + SSIM_C2
    return {
        "mx": mx, "my": my, "vx": vx, "vy": vy, "vxy": vxy,
        "a1": a1, "a2": a2, "b1": b1, "b2": b2,
        "map": (a1 * a2) / (b1 * b2),
    }


def ssim(a, b):
    """Mean SSIM between two images in [0, 1]; channels average."""
    return float(np.mean(ssim_components(a, b)["map"]))


def psnr(a, b):
    """Peak signal-to-noise ratio in dB for unit-range images, capped at 100."""
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2))
    if mse <= 1e-10:
        return 100.0
    return min(100.0, float(-10.0 * np.log10(mse)))


def depth_rmse(a, b, mask=None):
    """Root mean square depth error over the mask (everywhere when None)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if mask is None:
        mask = np.ones(a.shape, dtype=bool)
    if not np.any(mask):
        return 0.0
    return float(np.sqrt(np.mean((a[mask] - b[mask]) ** 2)))
