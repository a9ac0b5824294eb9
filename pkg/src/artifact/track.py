"""Proper-sampling tests and tracking on the selection tree.

Frames detected at many scales are linked coarse to fine into a selection
tree.  Between two images each root frame is matched by a windowed SSD
search at its own scale, where the region is properly sampled (same
Attributed Reeb Tree in both images); the estimate is handed down to the
children, which refine it locally and must be re-detected uniquely.
Displacements are always reported at the scale of the frame that produced
them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .art import art_equal, build_art
from .detect import Frame, detect_blobs, stability_margins
from .imgcore import InvalidArgument, as_raster, build_scale_space, gaussian_blur

# a frame's support is a disc of SUPPORT * sigma
SUPPORT = 2.0
BREAK_REASONS = ("topology-change", "occlusion", "out-of-frame")


def _crop(img, region):
    if region is None:
        return img
    x0, y0, x1, y1 = region
    h, w = img.shape
    x0, y0, x1, y1 = max(int(x0), 0), max(int(y0), 0), min(int(x1), w), min(int(y1), h)
    if x1 - x0 < 1 or y1 - y0 < 1:
        raise InvalidArgument("region does not intersect the image")
    return img[y0:y1, x0:x1]


def properly_sampled(a, b, sigma: float, region=None, region_b=None) -> bool:
    """Whether ``a`` and ``b`` smoothed at ``sigma`` have the same ART.

    ``region = (x0, y0, x1, y1)`` restricts the comparison to a half-open
    window, which gets its own virtual boundary minimum.  ``region_b``
    (default ``region``) lets the window in ``b`` follow a known motion.
    """
    a, b = as_raster(a), as_raster(b)
    if a.shape != b.shape:
        raise InvalidArgument("images must have the same size")
    sa = gaussian_blur(a, sigma) if sigma > 0 else a
    sb = gaussian_blur(b, sigma) if sigma > 0 else b
    region_b = region if region_b is None else region_b
    return art_equal(build_art(_crop(sa, region)), build_art(_crop(sb, region_b)))


def coarsest_proper_scale(a, b, schedule, region=None):
    """First scale of the increasing ``schedule`` at which the pair is
    properly sampled, or ``None``."""
    schedule = list(schedule)
    if any(s1 <= s0 for s0, s1 in zip(schedule, schedule[1:])):
        raise InvalidArgument("schedule must be increasing")
    for s in schedule:
        if properly_sampled(a, b, s, region):
            return s
    return None


@dataclass
class SelectionTree:
    """Frames with coarse-to-fine parent links; ``parent[i] = -1`` for roots."""

    frames: list
    parent: list
    margins: list
    track_ids: list

    def children(self, i):
        return [j for j, p in enumerate(self.parent) if p == i]


def build_selection_tree(frames, margins=None, track_ids=None) -> SelectionTree:
    """Link each frame to the nearest strictly coarser frame whose support
    contains it."""
    frames = list(frames)
    parent = []
    for f in frames:
        cands = [(math.hypot(f.x - g.x, f.y - g.y), g.sigma, j) for j, g in enumerate(frames)
                 if g.sigma > f.sigma * (1 + 1e-9)]
        cands = [c for c in cands if c[0] <= SUPPORT * c[1]]
        parent.append(min(cands)[2] if cands else -1)
    margins = list(margins) if margins is not None else [math.nan] * len(frames)
    track_ids = list(track_ids) if track_ids is not None else list(range(len(frames)))
    return SelectionTree(frames, parent, margins, track_ids)


@dataclass
class TSTConfig:
    sigma0: float = 1.0
    steps_per_octave: int = 3
    n_levels: int = 10
    kind: str = "LoG"
    contrast_thresh: float = 0.1
    # search radius bounds for root frames, in pixels
    min_radius: int = 2
    max_radius: int = 8
    # local refinement radius for frames that inherit a parent's estimate
    child_radius: int = 2
    # normalized SSD above which a uniquely re-detected frame counts as occluded
    occlusion_ratio: float = 0.5

    def scale_space(self, img):
        return build_scale_space(img, self.sigma0, self.steps_per_octave, self.n_levels)

    def detect(self, ss):
        return detect_blobs(ss, self.kind, self.contrast_thresh)


@dataclass
class Track:
    id: int
    times: list = field(default_factory=list)
    frames: list = field(default_factory=list)
    # (dx, dy, sigma) into each time after the first, at the frame's own scale
    displacements: list = field(default_factory=list)
    status: str = "live"
    break_reason: str | None = None
    break_time: int | None = None

    def add(self, t, frame, disp=None):
        if self.times and t <= self.times[-1]:
            raise InvalidArgument("track times must increase")
        if self.status != "live":
            raise InvalidArgument("cannot extend a broken track")
        self.times.append(t)
        self.frames.append(frame)
        if disp is not None:
            self.displacements.append(disp)

    def break_(self, t, reason):
        if reason not in BREAK_REASONS:
            raise InvalidArgument(f"unknown break reason {reason!r}")
        self.status, self.break_reason, self.break_time = "broken", reason, t

    def records(self):
        """JSON-lines records ``{track_id, t, x, y, sigma, theta, status}``."""
        out = [{"track_id": self.id, "t": t, "x": f.x, "y": f.y, "sigma": f.sigma,
                "theta": f.theta, "status": "live"} for t, f in zip(self.times, self.frames)]
        if self.status == "broken":
            f = self.frames[-1]
            out.append({"track_id": self.id, "t": self.break_time, "x": f.x, "y": f.y,
                        "sigma": f.sigma, "theta": f.theta, "status": "broken",
                        "reason": self.break_reason})
        return out


def _ssd_search(la, lb, frame, d0, radius):
    """Integer SSD search around ``d0`` with parabolic refinement.

    Returns ``((dx, dy), normalized residual, interior)`` where ``interior``
    is false when the minimum lies on the rim of the search box, or ``None``
    if the window at the predicted position leaves the image.
    """
    h, w = la.shape
    rho = int(math.ceil(2 * frame.sigma)) + 1
    gy, gx = np.mgrid[-rho:rho + 1, -rho:rho + 1].astype(float)
    weight = np.exp(-(gx ** 2 + gy ** 2) / (2 * (1.5 * frame.sigma) ** 2)).ravel()
    cx, cy = round(d0[0]), round(d0[1])

    def inside(x, y):
        return rho <= x and x <= w - 1 - rho and rho <= y and y <= h - 1 - rho

    if not (inside(frame.x, frame.y) and inside(frame.x + cx, frame.y + cy)):
        return None
    p = ndimage.map_coordinates(la, [frame.y + gy.ravel(), frame.x + gx.ravel()], order=1)
    offs = np.arange(-radius, radius + 1)
    cost = np.full((len(offs), len(offs)), np.inf)
    for iy, oy in enumerate(offs):
        for ix, ox in enumerate(offs):
            x, y = frame.x + cx + ox, frame.y + cy + oy
            if inside(x, y):
                q = ndimage.map_coordinates(lb, [y + gy.ravel(), x + gx.ravel()], order=1)
                cost[iy, ix] = float((weight * (p - q) ** 2).sum())
    iy, ix = np.unravel_index(np.argmin(cost), cost.shape)

    def parabola(cm, c0, cp):
        den = cm - 2 * c0 + cp
        if not (np.isfinite(den) and den > 0):
            return 0.0
        return float(np.clip(0.5 * (cm - cp) / den, -0.5, 0.5))

    energy = float((weight * (p - np.average(p, weights=weight)) ** 2).sum())
    interior = bool(0 < ix < len(offs) - 1 and 0 < iy < len(offs) - 1)
    sx = sy = 0.0
    # an exact integer match needs no refinement
    if interior and cost[iy, ix] > 1e-12 * max(energy, 1e-12):
        sx = parabola(cost[iy, ix - 1], cost[iy, ix], cost[iy, ix + 1])
        sy = parabola(cost[iy - 1, ix], cost[iy, ix], cost[iy + 1, ix])
    resid = cost[iy, ix] / max(energy, 1e-12)
    return (cx + offs[ix] + sx, cy + offs[iy] + sy), resid, interior


def _region(frame, dx=0, dy=0):
    """Window of radius 3 sigma + 2 around the frame, shifted by integers."""
    r = int(math.ceil(3 * frame.sigma)) + 2
    x, y = int(round(frame.x)) + dx, int(round(frame.y)) + dy
    return (x - r, y - r, x + r + 1, y + r + 1)


def tst_step(tree: SelectionTree, img_t, img_t1, tracks: dict, t: int,
             config: TSTConfig | None = None) -> SelectionTree:
    """Advance every live track in ``tree`` from time ``t`` to ``t + 1``.

    Frames are visited coarse to fine.  A frame whose parent was matched
    inherits the parent's displacement and refines it within
    ``child_radius``; any other frame is a root, searched within
    ``sigma + stability margin`` (clipped to ``[min_radius, max_radius]``)
    and kept only if its window and the matched window have the same ART
    at some scheduled scale at or above its own.  A best match on the rim of
    the search box is not accepted.  A match needs exactly one re-detection
    of the same polarity near the predicted position within one scale step.
    Returns the selection tree at ``t + 1``; ``tracks`` is updated in place.
    """
    config = config or TSTConfig()
    img_t, img_t1 = as_raster(img_t), as_raster(img_t1)
    ss1 = config.scale_space(img_t1)
    det = config.detect(ss1)
    det_xyz = np.array([(f.x, f.y, math.log2(f.sigma), f.score) for f in det]).reshape(-1, 4)
    schedule = list(ss1.sigmas)
    cache = {}

    def levels(s):
        if s not in cache:
            cache[s] = (gaussian_blur(img_t, s), gaussian_blur(img_t1, s))
        return cache[s]

    frames = tree.frames
    disp = {}
    new_frames, new_ids = [], []
    for i in sorted(range(len(frames)), key=lambda i: (-frames[i].sigma, i)):
        f, tid = frames[i], tree.track_ids[i]
        track = tracks[tid]
        if track.status != "live":
            continue
        p = tree.parent[i]
        if p >= 0 and p in disp:
            d0, radius = disp[p], config.child_radius
        else:
            # the extremum stays unambiguous up to sigma + margin, which
            # bounds how far it can be looked for
            m = tree.margins[i]
            m = 0.0 if not math.isfinite(m) else m
            radius = int(np.clip(math.ceil(f.sigma + m), config.min_radius, config.max_radius))
            d0 = (0.0, 0.0)
        found = _ssd_search(*levels(f.sigma), f, d0, radius)
        if found is None:
            track.break_(t + 1, "out-of-frame")
            continue
        d, resid, interior = found
        if not interior:
            # best match on the rim of the search box: the motion is not
            # resolved within the stable neighbourhood
            track.break_(t + 1, "topology-change")
            continue
        if not (p >= 0 and p in disp):
            # a root is trackable only where the pair is properly sampled:
            # same ART in its window and in the window moved by the match
            ix, iy = int(round(d[0])), int(round(d[1]))
            try:
                ok = any(properly_sampled(img_t, img_t1, s, _region(f), _region(f, ix, iy))
                         for s in schedule if s >= f.sigma * (1 - 1e-9))
            except InvalidArgument:
                ok = False
            if not ok:
                track.break_(t + 1, "topology-change")
                continue
        tx, ty = f.x + d[0], f.y + d[1]
        near = np.hypot(det_xyz[:, 0] - tx, det_xyz[:, 1] - ty) <= max(1.5, 0.5 * f.sigma)
        same_scale = np.abs(det_xyz[:, 2] - math.log2(f.sigma)) <= 1.0 / config.steps_per_octave + 1e-9
        same_sign = np.sign(det_xyz[:, 3]) == np.sign(f.score)
        hits = np.nonzero(near & same_scale & same_sign)[0]
        if len(hits) != 1:
            track.break_(t + 1, "topology-change")
            continue
        if resid > config.occlusion_ratio:
            track.break_(t + 1, "occlusion")
            continue
        disp[i] = d
        g = det[int(hits[0])]
        track.add(t + 1, g, (float(d[0]), float(d[1]), float(f.sigma)))
        new_frames.append(g)
        new_ids.append(tid)
    margins = stability_margins(ss1, new_frames)
    return build_selection_tree(new_frames, margins, new_ids)


def track_sequence(images, config: TSTConfig | None = None) -> list[Track]:
    """Detect on the first image and track every frame through ``images``."""
    config = config or TSTConfig()
    images = [as_raster(im) for im in images]
    if not images:
        raise InvalidArgument("empty sequence")
    ss = config.scale_space(images[0])
    frames = config.detect(ss)
    tree = build_selection_tree(frames, stability_margins(ss, frames))
    tracks = {}
    for i, f in enumerate(frames):
        tracks[i] = Track(i)
        tracks[i].add(0, f)
    for t in range(len(images) - 1):
        tree = tst_step(tree, images[t], images[t + 1], tracks, t, config)
    return [tracks[i] for i in sorted(tracks)]
