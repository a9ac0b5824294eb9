"""Canonization of planar point sets under the similarity group."""

from __future__ import annotations

import math

import numpy as np

from ..imgcore import InvalidArgument


class DegenerateConfiguration(ValueError):
    """The reference points needed to fix the group element coincide."""


def as_pointset(ps, min_points: int = 3) -> np.ndarray:
    ps = np.asarray(ps, dtype=np.float64)
    if ps.ndim != 2 or ps.shape[1] != 2:
        raise InvalidArgument("a point set is an (N, 2) array")
    if len(ps) < min_points:
        raise InvalidArgument(f"need at least {min_points} points")
    if not np.all(np.isfinite(ps)):
        raise InvalidArgument("point coordinates must be finite")
    return ps


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def apply_similarity(ps, t, theta: float, alpha: float) -> np.ndarray:
    """``alpha * R(theta) x + t`` for each row ``x``."""
    return alpha * np.asarray(ps, dtype=np.float64) @ rotation(theta).T + np.asarray(t, dtype=np.float64)


def canonize_similarity(ps, mode: str = "vertex"):
    """Map a point set to a canonical representative of its similarity orbit.

    ``mode="vertex"`` sends the first point to the origin and the second to
    ``(1, 0)``.  ``mode="stable"`` uses the centroid, the principal axis
    (oriented by the sign of the third moment along it) and the RMS radius,
    which does not single out any point and degrades gracefully with noise.

    Returns ``(canonical, (t, theta, alpha))`` such that
    ``apply_similarity(canonical, t, theta, alpha)`` reproduces the input.
    """
    ps = as_pointset(ps)
    span = float(np.abs(ps - ps.mean(0)).max())
    if mode == "vertex":
        t = ps[0]
        d = ps[1] - ps[0]
        alpha = float(np.hypot(*d))
        if alpha <= 1e-12 * max(span, 1.0):
            raise DegenerateConfiguration("first two points coincide")
        theta = math.atan2(d[1], d[0])
    elif mode == "stable":
        t = ps.mean(0)
        c = ps - t
        alpha = float(np.sqrt((c ** 2).sum(1).mean()))
        if alpha <= 1e-12 * max(span, 1.0):
            raise DegenerateConfiguration("all points coincide")
        _, _, vt = np.linalg.svd(c, full_matrices=False)
        axis = vt[0]
        proj = c @ axis
        # the principal axis is only defined up to sign; pick the skewed side
        if (proj ** 3).sum() < 0:
            axis = -axis
        theta = math.atan2(axis[1], axis[0])
    else:
        raise InvalidArgument(f"unknown canonization mode {mode!r}")
    theta = theta % (2 * math.pi)
    canon = (ps - t) @ rotation(-theta).T / alpha
    return canon, (np.array(t, dtype=np.float64), theta, alpha)


def vertex_orderings(ps):
    """Vertex canonizations for every cyclic relabelling of the points.

    Vertex canonization removes the similarity group but not the labelling;
    this lists the N candidates so a caller can choose a policy.
    """
    ps = as_pointset(ps)
    return [canonize_similarity(np.roll(ps, -k, axis=0))[0] for k in range(len(ps))]
