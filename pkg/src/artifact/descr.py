"""Descriptors of canonized patches: best template and time HOG.

A patch is the image resampled on a ``G x G`` grid in frame coordinates
(translated to the frame centre, rotated by its angle, spaced ``sigma / 4``
pixels apart) and normalized to zero mean and unit standard deviation.
Both descriptors pool gradient orientation over a ``C x C`` grid of cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .detect import FlatPatch, Frame, canonize_contrast
from .imgcore import InvalidArgument, as_raster

PATCH_SIZE = 32
GRID = 4
BINS = 8
# patch half-width in units of the frame scale
WINDOW = 4.0
METRICS = ("L2", "chi2")


@dataclass(frozen=True)
class Patch:
    values: np.ndarray
    frame: Frame | None = None


@dataclass(frozen=True)
class TemplateDescriptor:
    """Per-cell circular mean and circular std of gradient direction.

    Cells that never had a defined direction have ``count 0``, mean 0 and
    infinite std.
    """

    mean: np.ndarray
    std: np.ndarray
    count: np.ndarray
    n_samples: int

    def to_json(self, metric: str = "L2") -> dict:
        return {"metadata": _metadata(self.mean.shape[0], None, metric),
                "mean": self.mean.tolist(), "count": self.count.tolist(),
                "std": [[None if not math.isfinite(s) else s for s in row] for row in self.std.tolist()],
                "n_samples": self.n_samples}


@dataclass(frozen=True)
class TimeHOG:
    """``(grid, grid, bins)`` orientation histograms, l1-normalized per cell."""

    hist: np.ndarray
    n_samples: int

    def to_json(self, metric: str = "chi2") -> dict:
        g, _, b = self.hist.shape
        return {"metadata": _metadata(g, b, metric), "hist": self.hist.tolist(),
                "n_samples": self.n_samples}


def _metadata(grid, bins, metric):
    return {"grid": grid, "bins": bins, "patch_size": PATCH_SIZE, "metric": metric}


def patch_coords(frame: Frame, size: int = PATCH_SIZE):
    """Image coordinates ``(xs, ys)`` of the canonical sampling grid."""
    step = 2 * WINDOW * frame.sigma / size
    u = (np.arange(size) - (size - 1) / 2) * step
    uu, vv = np.meshgrid(u, u)
    c, s = math.cos(frame.theta), math.sin(frame.theta)
    return frame.x + c * uu - s * vv, frame.y + s * uu + c * vv


def extract_patch(img, frame: Frame, size: int = PATCH_SIZE, eps_c: float = 1e-8) -> Patch:
    """Bilinear resampling of ``img`` on the frame's grid, contrast-canonized.

    Samples past the border replicate the edge.  Raises
    :class:`InvalidArgument` if the frame centre is outside the image and
    :class:`FlatPatch` if the window has no contrast.
    """
    img = as_raster(img)
    h, w = img.shape
    if not (0 <= frame.x <= w - 1 and 0 <= frame.y <= h - 1):
        raise InvalidArgument("frame centre lies outside the image")
    xs, ys = patch_coords(frame, size)
    vals = ndimage.map_coordinates(img, [ys.ravel(), xs.ravel()], order=1, mode="nearest")
    _, _, norm = canonize_contrast(vals.reshape(size, size), eps_c)
    return Patch(norm, frame)


def _values(p):
    v = p.values if isinstance(p, Patch) else np.asarray(p, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise InvalidArgument("patches must be square arrays")
    return v


def _samples(samples):
    vals = [_values(p) for p in samples]
    if not vals:
        raise InvalidArgument("a track needs at least one sample")
    if len({v.shape for v in vals}) != 1:
        raise InvalidArgument("patches must share one size")
    return vals


def _cells(a, grid):
    n = a.shape[0]
    if n % grid:
        raise InvalidArgument(f"patch size {n} is not divisible by {grid}")
    k = n // grid
    return a.reshape(grid, k, grid, k).swapaxes(1, 2).reshape(grid, grid, k * k)


def cell_directions(patch, grid: int = GRID):
    """Direction of the summed gradient in each cell, and whether it is defined."""
    gy, gx = np.gradient(_values(patch))
    sx, sy = _cells(gx, grid).sum(-1), _cells(gy, grid).sum(-1)
    ok = np.hypot(sx, sy) > 1e-12
    return np.mod(np.arctan2(sy, sx), 2 * math.pi), ok


def best_template(samples, grid: int = GRID) -> TemplateDescriptor:
    """Per-cell circular mean of gradient direction over the track samples."""
    vals = _samples(samples)
    cs = np.zeros((grid, grid))
    sn = np.zeros((grid, grid))
    count = np.zeros((grid, grid), dtype=int)
    for v in vals:
        ang, ok = cell_directions(v, grid)
        cs += np.where(ok, np.cos(ang), 0.0)
        sn += np.where(ok, np.sin(ang), 0.0)
        count += ok
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.clip(np.hypot(cs, sn) / count, 0.0, 1.0)
        std = np.where(count > 0, np.sqrt(-2 * np.log(r)), np.inf)
    mean = np.where(count > 0, np.mod(np.arctan2(sn, cs), 2 * math.pi), 0.0)
    # resultants of length 1 up to rounding
    std = np.where(np.isfinite(std) & (std < 1e-7), 0.0, std)
    return TemplateDescriptor(mean, std, count, len(vals))


def orientation_histograms(patch, grid: int = GRID, bins: int = BINS) -> np.ndarray:
    """Unnormalized magnitude-weighted cell histograms of one patch, with
    linear interpolation between adjacent (circular) bins."""
    gy, gx = np.gradient(_values(patch))
    mag = _cells(np.hypot(gx, gy), grid)
    pos = _cells(np.mod(np.arctan2(gy, gx), 2 * math.pi), grid) * bins / (2 * math.pi) - 0.5
    lo = np.floor(pos)
    frac = pos - lo
    lo = lo.astype(int) % bins
    hist = np.zeros((grid, grid, bins))
    gi, gj = np.indices((grid, grid))
    for k in range(mag.shape[-1]):
        np.add.at(hist, (gi, gj, lo[..., k]), mag[..., k] * (1 - frac[..., k]))
        np.add.at(hist, (gi, gj, (lo[..., k] + 1) % bins), mag[..., k] * frac[..., k])
    return hist


def time_hog(samples, grid: int = GRID, bins: int = BINS) -> TimeHOG:
    """Orientation histograms accumulated over all samples, order discarded."""
    vals = _samples(samples)
    # sum in a fixed order so the result does not depend on the sample order
    per = np.stack([orientation_histograms(v, grid, bins) for v in vals])
    total = np.sort(per, axis=0).sum(0)
    mass = total.sum(-1, keepdims=True)
    hist = np.divide(total, mass, out=np.zeros_like(total), where=mass > 1e-12)
    return TimeHOG(hist, len(vals))


def descr_distance(a, b, metric: str = "L2") -> float:
    """Distance between two descriptors of the same type and shape.

    Templates compare wrapped angle differences in [0, pi], each cell
    weighted by the product of the two resultant lengths
    ``exp(-std^2 / 2)``; cells undefined in either template do not count.
    Time HOGs use the Euclidean or chi-squared distance
    ``0.5 * sum((p - q)^2 / (p + q))``.
    """
    if metric not in METRICS:
        raise InvalidArgument(f"unknown metric {metric!r}")
    if type(a) is not type(b):
        raise InvalidArgument("descriptors of different types")
    if isinstance(a, TemplateDescriptor):
        if a.mean.shape != b.mean.shape:
            raise InvalidArgument("descriptor shapes differ")
        if metric != "L2":
            raise InvalidArgument("templates support the L2 metric only")
        d = np.abs(np.mod(a.mean - b.mean + math.pi, 2 * math.pi) - math.pi)
        wa = np.where(a.count > 0, np.exp(-np.where(a.count > 0, a.std, 0) ** 2 / 2), 0.0)
        wb = np.where(b.count > 0, np.exp(-np.where(b.count > 0, b.std, 0) ** 2 / 2), 0.0)
        return float(math.sqrt(float((wa * wb * d ** 2).sum())))
    if isinstance(a, TimeHOG):
        p, q = a.hist, b.hist
    else:
        p, q = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if p.shape != q.shape:
        raise InvalidArgument("descriptor shapes differ")
    if metric == "L2":
        return float(np.sqrt(((p - q) ** 2).sum()))
    s = p + q
    return float(0.5 * np.divide((p - q) ** 2, s, out=np.zeros_like(s), where=s > 0).sum())


__all__ = ["PATCH_SIZE", "GRID", "BINS", "WINDOW", "Patch", "TemplateDescriptor", "TimeHOG",
           "FlatPatch", "patch_coords", "extract_patch", "cell_directions", "best_template",
           "orientation_histograms", "time_hog", "descr_distance"]
