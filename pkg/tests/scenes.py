"""Synthetic scenes with analytic ground truth, shared by the test modules."""

import numpy as np

from artifact.imgcore import gaussian_blur


def texture(seed, shape, sigma=0.7):
    """Blurred uniform noise rescaled to [0, 1]."""
    rng = np.random.default_rng(seed)
    t = gaussian_blur(rng.random(shape), sigma)
    return (t - t.min()) / (t.max() - t.min())


def moving_square(seed=0, n=128, side=40, d=3):
    """Textured square moving ``d`` px right over a textured background of
    disjoint intensity range.  Returns ``(a, b, strip)`` where ``strip`` is
    the background of ``a`` covered by the square's leading edge in ``b``."""
    rng = np.random.default_rng(100 + seed)
    x0, y0 = (int(c) for c in rng.integers(30, 50, 2))
    bg = 0.4 * texture(seed, (n, n))
    fg = 0.6 + 0.4 * texture(seed + 1000, (n, n))[y0:y0 + side, 10:10 + side]

    def frame(x):
        f = bg.copy()
        f[y0:y0 + side, x:x + side] = fg
        return f

    strip = np.zeros((n, n), bool)
    strip[y0:y0 + side, x0 + side:x0 + side + d] = True
    return frame(x0), frame(x0 + d), strip


def layered(seed=0, n=128, width=16, v_bg=1, v_fg=4, x0=50):
    """Slow textured background with a fast vertical foreground strip.

    Returns ``(a, b, occluded)``: background pixels of ``a`` hidden in ``b``."""
    bg = texture(seed, (n, n + 40))
    fg = texture(seed + 500, (n, width))

    def frame(k):
        f = 0.45 * bg[:, 20 - v_bg * k:20 - v_bg * k + n]
        x = x0 + v_fg * k
        f[:, x:x + width] = 0.55 + 0.45 * fg
        return f

    occ = np.zeros((n, n), bool)
    occ[:, x0 + width:x0 + width + v_fg - v_bg] = True
    return frame(0), frame(1), occ


def iou(mask, truth):
    return float((mask & truth).sum() / max((mask | truth).sum(), 1))


def blob_field(seed, n=96, k=8, dx=0.0, dy=0.0, margin=14, travel=0.0):
    """Bright Gaussian blobs of std 1.5-4 on a dark background, rendered
    analytically after translating the scene by ``(dx, dy)``.  Centres keep
    ``margin`` px from the border even after moving ``travel`` px right."""
    rng = np.random.default_rng(seed)
    centers = np.column_stack([rng.uniform(margin, n - margin - travel, k),
                               rng.uniform(margin, n - margin, k)])
    stds = rng.uniform(1.5, 4.0, k)
    amps = rng.uniform(0.5, 1.0, k)
    y, x = np.mgrid[0:n, 0:n].astype(float)
    out = np.zeros((n, n))
    for (cx, cy), s, a in zip(centers, stds, amps):
        out += a * np.exp(-((x - cx - dx) ** 2 + (y - cy - dy) ** 2) / (2 * s * s))
    return out


def shift_sequence(seed, n_frames=10, step=3.0, n=128):
    """Rigid translation by ``step`` px per frame along x."""
    travel = step * (n_frames - 1)
    return [blob_field(seed, n, dx=step * t, travel=travel) for t in range(n_frames)]


def occlusion_script(seed, n=96, n_frames=6, side=20, speed=32, level=0.25):
    """Two static blobs; a flat square sweeps right ``speed`` px per frame
    and covers the first blob exactly at frame ``k``.

    Returns ``(frames, (bx, by), k)``.  The square is far enough from the
    blob at ``k - 1`` that it stays outside the blob's support."""
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, n_frames))
    bx, by = rng.uniform(36, 60, 2)
    s = rng.uniform(2.0, 3.5)
    y, x = np.mgrid[0:n, 0:n].astype(float)
    base = np.exp(-((x - bx) ** 2 + (y - by) ** 2) / (2 * s * s))
    ox, oy = (bx + 25) % 80 + 8, (by + 30) % 80 + 8
    base += 0.7 * np.exp(-((x - ox) ** 2 + (y - oy) ** 2) / (2 * 2.5 ** 2))
    frames = []
    for t in range(n_frames):
        f = base.copy()
        x0 = int(round(bx)) - side // 2 + speed * (t - k)
        y0 = int(round(by)) - side // 2
        xa, xb = max(x0, 0), min(x0 + side, n)
        if xb > xa:
            f[y0:y0 + side, xa:xb] = level
        frames.append(f)
    return frames, (bx, by), k


def square_texture(seed, n=64, side=32, noise=0.2):
    """Pixels with the same intensity histogram inside and outside a centred
    square: the left half of the image is bright outside the square and dark
    inside it, and the right half the opposite.  Returns ``(y, F, c)`` with
    features ``(intensity, x, y)``."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:n, 0:n]
    lo = (n - side) // 2
    inside = (xx >= lo) & (xx < lo + side) & (yy >= lo) & (yy < lo + side)
    bright = (xx < n // 2) ^ inside
    img = 0.25 + 0.5 * bright + rng.uniform(-noise, noise, (n, n))
    y = img.ravel()
    F = np.stack([y, xx.ravel(), yy.ravel()], axis=1).astype(float)
    return y, F, inside.ravel().astype(int)
