"""Scale-space detectors, transversality, stability margins and the
canonization of rotation and contrast."""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from ..imgcore import InvalidArgument, ScaleSpace, as_raster, gaussian_blur
from .frame import Frame

K_DOG = 1.6
N_ORIENT_BINS = 36


class UndefinedOrientation(ValueError):
    """The window carries no gradient energy."""


class FlatPatch(ValueError):
    """Patch standard deviation is at or below the contrast floor."""


def second_derivatives(img):
    """Central second differences ``(Lxx, Lyy, Lxy)`` with replicated edges."""
    p = np.pad(np.asarray(img, dtype=np.float64), 1, mode="edge")
    c = p[1:-1, 1:-1]
    lxx = p[1:-1, 2:] - 2 * c + p[1:-1, :-2]
    lyy = p[2:, 1:-1] - 2 * c + p[:-2, 1:-1]
    lxy = 0.25 * (p[2:, 2:] - p[2:, :-2] - p[:-2, 2:] + p[:-2, :-2])
    return lxx, lyy, lxy


def response_stack(ss: ScaleSpace, kind: str) -> np.ndarray:
    """Scale-normalized detector response, shape (levels, H, W).

    LoG is ``sigma^2 (Lxx + Lyy)``; DoG is ``(L(sigma) - L(k sigma)) / (k - 1)``
    with ``k = 1.6``; Hessian is ``sigma^4 det H``.
    """
    if ss.decimated:
        raise InvalidArgument("detectors need a scale space sampled on the base grid")
    out = []
    for s, lev in zip(ss.sigmas, ss.levels):
        if kind == "DoG":
            out.append((lev - gaussian_blur(lev, s * math.sqrt(K_DOG ** 2 - 1))) / (K_DOG - 1))
            continue
        lxx, lyy, lxy = second_derivatives(lev)
        if kind == "LoG":
            out.append(s ** 2 * (lxx + lyy))
        elif kind == "Hessian":
            out.append(s ** 4 * (lxx * lyy - lxy ** 2))
        else:
            raise InvalidArgument(f"unknown blob detector {kind!r}")
    return np.stack(out)


def _strict_extrema(r, maxima=True, minima=True):
    """Boolean mask of points strictly above (below) all neighbours.

    Edge replication makes every sample on the array border compare against
    itself, so border samples are never reported.
    """
    foot = np.ones((3,) * r.ndim, bool)
    foot[(1,) * r.ndim] = False
    mask = np.zeros(r.shape, bool)
    if maxima:
        mask |= r > ndimage.maximum_filter(r, footprint=foot, mode="nearest")
    if minima:
        mask |= r < ndimage.minimum_filter(r, footprint=foot, mode="nearest")
    return mask


def _refine(r, idx):
    """Quadratic fit around a discrete extremum; returns (offset, value)."""
    idx = np.asarray(idx)
    n = r.ndim
    g = np.zeros(n)
    h = np.zeros((n, n))
    c = r[tuple(idx)]
    unit = np.eye(n, dtype=int)
    for i in range(n):
        p, m = r[tuple(idx + unit[i])], r[tuple(idx - unit[i])]
        g[i] = 0.5 * (p - m)
        h[i, i] = p - 2 * c + m
        for j in range(i + 1, n):
            h[i, j] = h[j, i] = 0.25 * (r[tuple(idx + unit[i] + unit[j])] - r[tuple(idx + unit[i] - unit[j])]
                                        - r[tuple(idx - unit[i] + unit[j])] + r[tuple(idx - unit[i] - unit[j])])
    try:
        off = -np.linalg.solve(h, g)
    except np.linalg.LinAlgError:
        return np.zeros(n), c
    if not np.all(np.isfinite(off)) or np.abs(off).max() > 0.6:
        return np.zeros(n), c
    return off, c + 0.5 * g @ off


def detect_blobs(ss: ScaleSpace, kind: str = "LoG", contrast_thresh: float = 0.0) -> list[Frame]:
    """Local extrema of the normalized response over (x, y, sigma).

    Every sample is compared with its 26 neighbours; the Hessian detector keeps
    maxima only (positive determinant, blob-like).  Frames are refined by a
    quadratic fit in space and log-scale and returned strongest first.
    """
    if len(ss) < 3:
        raise InvalidArgument("blob detection needs at least 3 scale levels")
    r = response_stack(ss, kind)
    mask = _strict_extrema(r, minima=(kind != "Hessian")) & (np.abs(r) >= contrast_thresh)
    frames = []
    for idx in zip(*np.nonzero(mask)):
        off, val = _refine(r, idx)
        lev, y, x = np.asarray(idx) + off
        frames.append(Frame(x=float(x), y=float(y), sigma=ss.level_sigma(lev), kind=kind,
                            score=float(val)))
    frames.sort(key=lambda f: -abs(f.score))
    return frames


def harris_response(img, sigma_d: float, sigma_w: float, kappa: float = 0.04) -> np.ndarray:
    """``det M - kappa tr(M)^2`` for the windowed second-moment matrix."""
    if not (sigma_d > 0 and sigma_w > 0):
        raise InvalidArgument("sigma_d and sigma_w must be > 0")
    smooth = gaussian_blur(as_raster(img), sigma_d)
    gy, gx = np.gradient(smooth)
    sxx = gaussian_blur(gx * gx, sigma_w)
    syy = gaussian_blur(gy * gy, sigma_w)
    sxy = gaussian_blur(gx * gy, sigma_w)
    return sxx * syy - sxy ** 2 - kappa * (sxx + syy) ** 2


def detect_harris(img, sigma_d: float = 1.0, sigma_w: float = 2.0, kappa: float = 0.04,
                  thresh: float = 0.0) -> list[Frame]:
    """Strict 3x3 local maxima of the Harris response above ``thresh``.

    ``kappa = 0`` gives the pure determinant form.
    """
    r = harris_response(img, sigma_d, sigma_w, kappa)
    mask = _strict_extrema(r, minima=False) & (r > thresh)
    ys, xs = np.nonzero(mask)
    frames = [Frame(x=float(x), y=float(y), sigma=sigma_w, kind="Harris", score=float(r[y, x]))
              for y, x in zip(ys, xs)]
    frames.sort(key=lambda f: -f.score)
    return frames


def default_tau_j(response) -> float:
    """Transversality floor: 1e-6 of the response dynamic range."""
    response = np.asarray(response)
    return 1e-6 * float(response.max() - response.min())


def transversal(response, x: float, y: float, tau_j: float | None = None) -> bool:
    """True iff the discrete Hessian at the nearest sample is definite with
    ``|det| > tau_j``.  Saddles and degenerate (ridge-like) points fail."""
    response = np.asarray(response, dtype=np.float64)
    ix, iy = int(round(x)), int(round(y))
    h, w = response.shape
    if not (1 <= ix <= w - 2 and 1 <= iy <= h - 2):
        raise InvalidArgument("frame must be interior to the response grid")
    tau_j = default_tau_j(response) if tau_j is None else tau_j
    win = response[iy - 1:iy + 2, ix - 1:ix + 2]
    hxx = win[1, 2] - 2 * win[1, 1] + win[1, 0]
    hyy = win[2, 1] - 2 * win[1, 1] + win[0, 1]
    hxy = 0.25 * (win[2, 2] - win[2, 0] - win[0, 2] + win[0, 0])
    det = hxx * hyy - hxy ** 2
    # det > 0 forces hxx and hyy to share a sign, i.e. a definite Hessian
    return bool(det > tau_j and det > 0)


def _level_of(ss: ScaleSpace, sigma: float) -> int:
    k = ss.steps_per_octave * math.log2(sigma / ss.sigmas[0])
    return int(np.clip(round(k), 0, len(ss) - 1))


class _ExtremumLinks:
    """Per-level 2-D extrema of one polarity and their links to the next level."""

    def __init__(self, ss: ScaleSpace, r: np.ndarray, want_max: bool):
        self.ss = ss
        floor = 1e-6 * np.abs(r).max()
        self.pts = []
        for lev in r:
            m = _strict_extrema(lev, maxima=want_max, minima=not want_max) & (np.abs(lev) > floor)
            ys, xs = np.nonzero(m)
            self.pts.append(np.column_stack([xs, ys]).astype(float))
        self.up = [self._links(lo) for lo in range(len(ss) - 1)]

    def _links(self, lo):
        # nearest extremum at lo + 1 for each extremum at lo, or -1
        a, b = self.pts[lo], self.pts[lo + 1]
        radius = max(1.5, 0.5 * self.ss.sigmas[lo + 1])
        if len(a) == 0 or len(b) == 0:
            return np.full(len(a), -1)
        d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
        j = d.argmin(1)
        return np.where(d[np.arange(len(a)), j] <= radius, j, -1)

    def margin(self, frame: Frame) -> float:
        ss, up = self.ss, self.up
        start = _level_of(ss, frame.sigma)
        here = self.pts[start]
        if len(here) == 0:
            raise InvalidArgument("frame has no extremum at its own level")
        d = np.linalg.norm(here - np.array(frame.t), axis=1)
        i0 = int(d.argmin())
        if d[i0] > max(1.5, 0.5 * frame.sigma):
            raise InvalidArgument("frame has no extremum at its own level")
        hi, i = start, i0
        while hi < len(ss) - 1:
            j = up[hi][i]
            if j < 0 or np.count_nonzero(up[hi] == j) != 1:
                break
            hi, i = hi + 1, j
        lo, i = start, i0
        while lo > 0:
            pre = np.nonzero(up[lo - 1] == i)[0]
            if len(pre) != 1:
                break
            lo, i = lo - 1, int(pre[0])
        return float(ss.sigmas[hi] - ss.sigmas[lo])


def stability_margins(ss: ScaleSpace, frames) -> list[float]:
    """:func:`stability_margin` for many frames, sharing the response
    computation; frames without an extremum at their level get ``nan``."""
    out = []
    cache = {}
    for f in frames:
        kind = f.kind if f.kind in ("LoG", "DoG", "Hessian") else "LoG"
        want_max = kind == "Hessian" or f.score > 0
        if (kind, want_max) not in cache:
            if kind not in cache:
                cache[kind] = response_stack(ss, kind)
            cache[kind, want_max] = _ExtremumLinks(ss, cache[kind], want_max)
        try:
            out.append(cache[kind, want_max].margin(f))
        except InvalidArgument:
            out.append(math.nan)
    return out


def stability_margin(ss: ScaleSpace, frame: Frame) -> float:
    """Scale-space persistence of the extremum behind ``frame``.

    The extremum is followed level by level while the nearest-neighbour link
    to the adjacent level is one-to-one.  The walk stops at the first merge
    (two extrema claim the same successor), split or disappearance.  Returns
    ``sigma_hi - sigma_lo`` of the contiguous interval, in pixels.
    """
    kind = frame.kind if frame.kind in ("LoG", "DoG", "Hessian") else "LoG"
    want_max = kind == "Hessian" or frame.score > 0
    return _ExtremumLinks(ss, response_stack(ss, kind), want_max).margin(frame)


def canonize_rotation(img, frame: Frame) -> float:
    """Dominant gradient direction in a Gaussian window around the frame.

    A 36-bin histogram of gradient directions, weighted by magnitude and a
    Gaussian of std ``1.5 sigma``, is peak-picked with parabolic refinement.
    Returns the angle in [0, 2 pi).
    """
    img = as_raster(img)
    sw = 1.5 * frame.sigma
    rad = int(math.ceil(3 * sw))
    cx, cy = int(round(frame.x)), int(round(frame.y))
    h, w = img.shape
    if cx - rad < 0 or cy - rad < 0 or cx + rad >= w or cy + rad >= h:
        raise InvalidArgument("orientation window leaves the image")
    # blur a padded crop so the window values do not depend on far pixels
    pad = rad + int(math.ceil(3 * frame.sigma)) + 1
    y0, y1 = max(cy - pad, 0), min(cy + pad + 1, h)
    x0, x1 = max(cx - pad, 0), min(cx + pad + 1, w)
    crop = gaussian_blur(img[y0:y1, x0:x1], frame.sigma)
    gy, gx = np.gradient(crop)
    sl = (slice(cy - rad - y0, cy + rad + 1 - y0), slice(cx - rad - x0, cx + rad + 1 - x0))
    gx, gy = gx[sl], gy[sl]
    yy, xx = np.mgrid[-rad:rad + 1, -rad:rad + 1]
    weight = np.hypot(gx, gy) * np.exp(-(xx ** 2 + yy ** 2) / (2 * sw ** 2))
    if weight.sum() <= 1e-12 * weight.size:
        raise UndefinedOrientation("no gradient energy in the orientation window")
    ang = np.mod(np.arctan2(gy, gx), 2 * math.pi)
    width = 2 * math.pi / N_ORIENT_BINS
    pos = ang / width - 0.5
    lo = np.floor(pos)
    frac = pos - lo
    lo = lo.astype(int) % N_ORIENT_BINS
    hist = np.bincount(lo.ravel(), (weight * (1 - frac)).ravel(), N_ORIENT_BINS)
    hist += np.bincount(((lo + 1) % N_ORIENT_BINS).ravel(), (weight * frac).ravel(), N_ORIENT_BINS)
    k = int(hist.argmax())
    hm, h0, hp = hist[k - 1], hist[k], hist[(k + 1) % N_ORIENT_BINS]
    denom = hm - 2 * h0 + hp
    off = 0.5 * (hm - hp) / denom if denom < 0 else 0.0
    return float(((k + 0.5 + off) * width) % (2 * math.pi))


def canonize_contrast(patch, eps_c: float = 1e-8):
    """Return ``(alpha, beta, (patch - beta) / alpha)`` with beta the mean
    and alpha the standard deviation."""
    patch = np.asarray(patch, dtype=np.float64)
    beta = float(patch.mean())
    alpha = float(patch.std())
    if not alpha > eps_c:
        raise FlatPatch(f"patch std {alpha:.3g} <= {eps_c:.3g}")
    return alpha, beta, (patch - beta) / alpha
