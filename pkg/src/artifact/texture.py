"""Markov neighbourhoods of textures and the texture/structure dichotomy.

Intensities are quantized to ``Q`` levels on [0, 1].  Offsets are
``(dx, dy)`` pairs, so ``(-1, 0)`` is the left neighbour.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detect.blobs import default_tau_j, second_derivatives
from .imgcore import InvalidArgument, as_raster, gaussian_blur

Q_DEFAULT = 8
# DoG scale ratio used by the structure test
DOG_K = 1.6
# extrema weaker than this fraction of the strongest one are ignored
REL_THRESH = 0.1


@dataclass(frozen=True)
class TextureModel:
    omega: tuple
    sigma: int
    cond_entropy: float
    Q: int
    beta: float
    cost: float

    @property
    def omega_halfwidth(self) -> int:
        return (self.sigma - 1) // 2

    def to_json(self) -> dict:
        return {"omega_halfwidth": self.omega_halfwidth, "sigma": self.sigma,
                "entropy_bits": self.cond_entropy, "Q": self.Q, "beta": self.beta,
                "assumptions": ["stationarity within the region", "ergodicity (not testable)"]}


def quantize(region, Q: int = Q_DEFAULT) -> np.ndarray:
    if Q < 1:
        raise InvalidArgument("Q must be >= 1")
    r = as_raster(region)
    return np.clip(np.floor(r * Q), 0, Q - 1).astype(np.int64)


def square_offsets(halfwidth: int) -> tuple:
    """Offsets of the centred square of the given half-width, origin excluded."""
    if halfwidth < 0:
        raise InvalidArgument("half-width must be >= 0")
    r = range(-halfwidth, halfwidth + 1)
    return tuple((dx, dy) for dy in r for dx in r if (dx, dy) != (0, 0))


def _entropy_bits(counts) -> float:
    c = np.asarray(counts, dtype=np.float64)
    p = c[c > 0] / c.sum()
    return float(-(p * np.log2(p)).sum())


def cond_entropy(region, omega, Q: int = Q_DEFAULT) -> float:
    """Plug-in estimate of H(I(x) | I(x + omega)) in bits.

    Every position whose whole context lies in the region is one sample.
    """
    q = quantize(region, Q)
    omega = tuple((int(dx), int(dy)) for dx, dy in omega)
    if (0, 0) in omega:
        raise InvalidArgument("omega must exclude the origin")
    h, w = q.shape
    dxs = [dx for dx, _ in omega] + [0]
    dys = [dy for _, dy in omega] + [0]
    x0, x1 = -min(dxs), w - max(dxs)
    y0, y1 = -min(dys), h - max(dys)
    if x1 <= x0 or y1 <= y0:
        raise InvalidArgument("region too small for the neighbourhood")
    centre = q[y0:y1, x0:x1].ravel()
    if not omega:
        return _entropy_bits(np.bincount(centre))
    ctx = np.stack([q[y0 + dy:y1 + dy, x0 + dx:x1 + dx].ravel() for dx, dy in omega], axis=1)
    _, code = np.unique(ctx, axis=0, return_inverse=True)
    code = code.ravel()
    _, joint = np.unique(code * Q + centre, return_counts=True)
    return max(_entropy_bits(joint) - _entropy_bits(np.bincount(code)), 0.0)


def infer_neighborhood(region, beta: float, candidates, Q: int = Q_DEFAULT) -> TextureModel:
    """Square neighbourhood minimizing ``H + sigma / beta``, where a half-width
    ``r`` candidate has ``sigma = 2 r + 1``.  Ties go to the smaller square."""
    candidates = sorted(set(int(c) for c in candidates))
    if not candidates:
        raise InvalidArgument("no candidate sizes")
    if not beta > 0:
        raise InvalidArgument("beta must be > 0")
    best = None
    for r in candidates:
        omega = square_offsets(r)
        H = cond_entropy(region, omega, Q)
        sigma = 2 * r + 1
        cost = H + sigma / beta
        if best is None or cost < best.cost - 1e-12:
            best = TextureModel(omega, sigma, H, Q, float(beta), cost)
    return best


def entropy_profile(img, x: int, y: int, halfwidths, Q: int = Q_DEFAULT) -> np.ndarray:
    """Marginal entropy (bits) of the quantized window of each half-width
    around ``(x, y)``, clipped to the image."""
    q = quantize(img, Q)
    h, w = q.shape
    out = []
    for r in halfwidths:
        win = q[max(y - r, 0):min(y + r + 1, h), max(x - r, 0):min(x + r + 1, w)]
        out.append(_entropy_bits(np.bincount(win.ravel())))
    return np.array(out)


def dog_response(region, sigma: float, k: float = DOG_K) -> np.ndarray:
    r = as_raster(region)
    return (gaussian_blur(r, sigma) - gaussian_blur(r, k * sigma)) / (k - 1)


def structure_points(region, sigma: float):
    """Transversal DoG extrema at ``sigma`` whose magnitude is at least
    ``REL_THRESH`` of the strongest one, as ``(x, y)`` pairs."""
    r = dog_response(region, sigma)
    peak = float(np.abs(r).max())
    if peak <= 1e-12:
        return []
    lxx, lyy, lxy = second_derivatives(r)
    det = lxx * lyy - lxy ** 2
    tau = default_tau_j(r)
    h, w = r.shape
    c = r[1:-1, 1:-1]
    nb = [r[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx] for dy in (-1, 0, 1) for dx in (-1, 0, 1) if dy or dx]
    is_max = np.all([c > n for n in nb], axis=0)
    is_min = np.all([c < n for n in nb], axis=0)
    mask = (is_max | is_min) & (np.abs(c) >= REL_THRESH * peak) & (det[1:-1, 1:-1] > tau)
    ys, xs = np.nonzero(mask)
    return [(int(x) + 1, int(y) + 1) for x, y in zip(xs, ys)]


def texture_or_structure(region, sigma: float) -> str:
    """``"structure"`` iff the DoG at ``sigma`` has exactly one significant
    transversal extremum in the region, else ``"texture"``."""
    region = as_raster(region)
    if not sigma > 0:
        raise InvalidArgument("sigma must be > 0")
    if min(region.shape) < sigma:
        raise InvalidArgument("region side must be >= sigma")
    return "structure" if len(structure_points(region, sigma)) == 1 else "texture"
