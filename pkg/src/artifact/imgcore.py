"""Image containers, scale space, differentiation and warping.

Rasters are plain 2-D ``float64`` arrays indexed ``[row, col]`` with pixel
centres at integer coordinates; ``x`` is the column index and ``y`` the row
index.  Vector fields are arrays of shape ``(2, H, W)`` holding the
horizontal (``u``) and vertical (``v``) displacement in pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage as ndi


class InvalidArgument(ValueError):
    """Raised when an operation receives an argument outside its domain."""


def as_raster(img) -> np.ndarray:
    """Validate ``img`` and return it as a 2-D float64 array."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidArgument(f"raster must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument("raster contains non-finite values")
    return arr


def as_field(field_, shape=None) -> np.ndarray:
    arr = np.asarray(field_, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 2:
        raise InvalidArgument(f"vector field must have shape (2, H, W), got {arr.shape}")
    if shape is not None and arr.shape[1:] != tuple(shape):
        raise InvalidArgument(f"vector field shape {arr.shape[1:]} does not match raster {tuple(shape)}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument("vector field contains non-finite values")
    return arr


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Truncated (radius ``ceil(3 sigma)``) unit-sum 1-D Gaussian."""
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img, sigma: float) -> np.ndarray:
    """Separable Gaussian smoothing with replicated edges.

    ``sigma == 0`` returns a copy of the input.
    """
    img = as_raster(img)
    if not math.isfinite(sigma):
        raise InvalidArgument(f"sigma must be finite, got {sigma}")
    if sigma < 0:
        raise InvalidArgument(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return img.copy()
    k = gaussian_kernel(sigma)
    out = ndi.correlate1d(img, k, axis=1, mode="nearest")
    return ndi.correlate1d(out, k, axis=0, mode="nearest")


def gradient(img) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(gx, gy)``: central differences inside, one-sided at borders."""
    img = as_raster(img)
    if img.shape[0] < 2 or img.shape[1] < 2:
        raise InvalidArgument(f"gradient needs at least 2x2 pixels, got {img.shape}")
    gy, gx = np.gradient(img)
    return gx, gy


def warp(img, flow) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``img`` at ``x + flow``.

    Returns the warped raster and a boolean validity mask.  Samples that fall
    outside the domain are invalid and take the value of the nearest point of
    the domain.
    """
    img = as_raster(img)
    flow = as_field(flow, img.shape)
    h, w = img.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    xs = xx + flow[0]
    ys = yy + flow[1]
    valid = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    out = bilinear(img, xs, ys)
    return out, valid


def bilinear(img: np.ndarray, xs, ys) -> np.ndarray:
    """Bilinear interpolation at arbitrary points, clamped to the domain."""
    h, w = img.shape
    xs = np.clip(np.asarray(xs, dtype=np.float64), 0, w - 1)
    ys = np.clip(np.asarray(ys, dtype=np.float64), 0, h - 1)
    return ndi.map_coordinates(img, [ys, xs], order=1, mode="nearest")


def shift(img, dx: int, dy: int) -> np.ndarray:
    """Integer translation ``out(x) = img(x - d)`` with edge replication."""
    img = as_raster(img)
    h, w = img.shape
    rows = np.clip(np.arange(h) - dy, 0, h - 1)
    cols = np.clip(np.arange(w) - dx, 0, w - 1)
    return img[np.ix_(rows, cols)]


@dataclass
class ScaleSpace:
    base: np.ndarray
    sigmas: np.ndarray
    levels: list = field(repr=False)
    decimated: bool = False
    steps_per_octave: int = 1

    def __len__(self):
        return len(self.levels)

    def level_sigma(self, k: float) -> float:
        """Scale at a (possibly fractional) level index."""
        return float(self.sigmas[0] * 2.0 ** (k / self.steps_per_octave))


def build_scale_space(img, sigma0: float, steps_per_octave: int, n_levels: int,
                      decimate: bool = False) -> ScaleSpace:
    """Geometric scale schedule ``sigma0 * 2**(k / steps_per_octave)``.

    Levels are produced by incremental blurring.  With ``decimate`` the grid
    is halved each full octave (the pyramid variant); sigmas are always
    expressed in base-grid pixels.
    """
    img = as_raster(img)
    if not sigma0 > 0:
        raise InvalidArgument("sigma0 must be > 0")
    if n_levels < 1 or steps_per_octave < 1:
        raise InvalidArgument("n_levels and steps_per_octave must be >= 1")
    sigmas = sigma0 * 2.0 ** (np.arange(n_levels) / steps_per_octave)
    levels = [gaussian_blur(img, sigmas[0])]
    factor = 1
    for k in range(1, n_levels):
        inc = math.sqrt(sigmas[k] ** 2 - sigmas[k - 1] ** 2)
        nxt = gaussian_blur(levels[-1], inc / factor)
        if decimate and k % steps_per_octave == 0 and min(nxt.shape) >= 2:
            nxt = nxt[::2, ::2].copy()
            factor *= 2
        levels.append(nxt)
    return ScaleSpace(img, sigmas, levels, decimated=decimate, steps_per_octave=steps_per_octave)


def downsample(img) -> np.ndarray:
    """Anti-aliased halving used by the flow pyramid."""
    img = gaussian_blur(img, 1.0)
    return img[::2, ::2].copy()


def upsample(img, shape) -> np.ndarray:
    """Bilinear ×2 upscaling of a raster to ``shape``."""
    h, w = shape
    yy, xx = np.meshgrid(np.arange(h) / 2.0, np.arange(w) / 2.0, indexing="ij")
    return bilinear(np.asarray(img, dtype=np.float64), xx, yy)


def upsample_field(flow, shape) -> np.ndarray:
    """Bilinear ×2 upscaling of a vector field (vectors doubled) to ``shape``."""
    return np.stack([2.0 * upsample(c, shape) for c in np.asarray(flow)])


def rms(a, b) -> float:
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))
