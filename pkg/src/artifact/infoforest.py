"""Split scoring and single-tree growth for information forests.

Every sample has an observation ``y`` (a scalar whose class-conditional
histograms are compared), stump features ``F[:, j]`` (any statistics,
location included) and a label ``c`` in {0, 1}.  A stump ``(j, theta)``
splits the node into ``S = {F_j >= theta}`` and its complement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imgcore import InvalidArgument

DEFAULT_BINS = 16


@dataclass(frozen=True)
class Stump:
    feature: int
    theta: float


@dataclass(frozen=True)
class Data:
    y: np.ndarray
    F: np.ndarray
    c: np.ndarray
    y_range: tuple

    @classmethod
    def make(cls, y, F, c, y_range=None):
        y = np.asarray(y, dtype=np.float64).ravel()
        F = np.asarray(F, dtype=np.float64)
        if F.ndim == 1:
            F = F[:, None]
        c = np.asarray(c).ravel()
        if not (len(y) == len(F) == len(c)) or len(y) == 0:
            raise InvalidArgument("y, features and labels must have one equal non-zero length")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(F))):
            raise InvalidArgument("features must be finite")
        if not np.all((c == 0) | (c == 1)):
            raise InvalidArgument("labels must be 0 or 1")
        if y_range is None:
            y_range = (float(y.min()), float(y.max()))
        return cls(y, F, c.astype(np.int64), tuple(y_range))


def _hist(y, bins, y_range):
    lo, hi = y_range
    if hi <= lo:
        hi = lo + 1.0
    idx = np.clip(((y - lo) / (hi - lo) * bins).astype(np.int64), 0, bins - 1)
    return np.bincount(idx, minlength=bins).astype(np.float64)


def divergence(y, c, bins=DEFAULT_BINS, y_range=None, symmetric=False) -> float:
    """KL(p1 || p0) in nats between add-one smoothed histograms of ``y`` for
    the two classes (sum of both directions if ``symmetric``)."""
    y, c = np.asarray(y, dtype=np.float64), np.asarray(c)
    if y_range is None:
        y_range = (float(y.min()), float(y.max())) if len(y) else (0.0, 1.0)
    h1 = _hist(y[c == 1], bins, y_range) + 1
    h0 = _hist(y[c == 0], bins, y_range) + 1
    p1, p0 = h1 / h1.sum(), h0 / h0.sum()
    kl = float((p1 * np.log(p1 / p0)).sum())
    if symmetric:
        kl += float((p0 * np.log(p0 / p1)).sum())
    return kl


def label_entropy(c) -> float:
    """Plug-in entropy of binary labels in bits."""
    n = len(c)
    if n == 0:
        return 0.0
    p = float(np.count_nonzero(c)) / n
    return -sum(q * math.log2(q) for q in (p, 1 - p) if q > 0)


def _split(data, stump, idx=None):
    idx = np.arange(len(data.y)) if idx is None else idx
    inside = data.F[idx, stump.feature] >= stump.theta
    if inside.all() or not inside.any():
        raise InvalidArgument("stump leaves one side empty")
    return idx[inside], idx[~inside]


def kl_score(data: Data, stump: Stump, bins: int = DEFAULT_BINS, idx=None,
             symmetric: bool = False) -> float:
    """``|S|/|D| KL_S + |S^c|/|D| KL_{S^c}`` over the node ``idx``."""
    s, sc = _split(data, stump, idx)
    n = len(s) + len(sc)
    return sum(len(part) / n * divergence(data.y[part], data.c[part], bins, data.y_range, symmetric)
               for part in (s, sc))


def entropy_score(data: Data, stump: Stump, idx=None) -> float:
    """``|S|/|D| H(c|S) + |S^c|/|D| H(c|S^c)`` in bits."""
    s, sc = _split(data, stump, idx)
    n = len(s) + len(sc)
    return sum(len(part) / n * label_entropy(data.c[part]) for part in (s, sc))


def candidate_stumps(data: Data, idx):
    """Per feature, the distinct order statistics at the deciles of the node
    that split it into two non-empty sides."""
    out = []
    n = len(idx)
    for j in range(data.F.shape[1]):
        v = np.sort(data.F[idx, j])
        for t in sorted({float(v[(k * n) // 10]) for k in range(1, 10)}):
            if v[0] < t:
                out.append(Stump(j, t))
    return out


def _leaf(data, idx):
    n1 = int(np.count_nonzero(data.c[idx]))
    return {"posterior": n1 / len(idx), "n": int(len(idx))}


def _best(data, idx, mode, bins, symmetric):
    """Best stump by max KL or min entropy; the first one wins ties."""
    best, best_val = None, None
    for st in candidate_stumps(data, idx):
        if mode == "kl":
            v = kl_score(data, st, bins, idx, symmetric)
            better = best_val is None or v > best_val
        else:
            v = entropy_score(data, st, idx)
            better = best_val is None or v < best_val
        if better:
            best, best_val = st, v
    return best, best_val


def _grow(data, idx, depth, mode, tau, max_depth, bins, symmetric, min_leaf):
    if depth >= max_depth or len(idx) < 2 * min_leaf or label_entropy(data.c[idx]) == 0:
        return _leaf(data, idx)
    if mode == "kl" and divergence(data.y[idx], data.c[idx], bins, data.y_range, symmetric) >= tau:
        # the node's class-conditionals are separable enough: classify here
        mode = "entropy"
    st, val = _best(data, idx, mode, bins, symmetric)
    if st is None:
        return _leaf(data, idx)
    if mode == "entropy" and val >= label_entropy(data.c[idx]) - 1e-12:
        return _leaf(data, idx)
    s, sc = _split(data, st, idx)
    return {"mode": mode, "feature": st.feature, "theta": st.theta, "score": val,
            "ge": _grow(data, s, depth + 1, mode, tau, max_depth, bins, symmetric, min_leaf),
            "lt": _grow(data, sc, depth + 1, mode, tau, max_depth, bins, symmetric, min_leaf)}


def grow(data: Data, tau: float, max_depth: int = 8, bins: int = DEFAULT_BINS,
         symmetric: bool = False, min_leaf: int = 1) -> dict:
    """Grow one tree.

    Nodes start in KL mode.  A KL-mode node whose own class-conditional
    divergence is at least ``tau`` switches, with its whole subtree, to
    entropy splitting; otherwise it splits on the stump of maximal KL score.
    With ``tau = 0`` every tree is grown by entropy alone.
    """
    if tau < 0:
        raise InvalidArgument("tau must be >= 0")
    return _grow(data, np.arange(len(data.y)), 0, "kl", tau, max_depth, bins, symmetric, min_leaf)


def grow_entropy(data: Data, max_depth: int = 8, min_leaf: int = 1) -> dict:
    """Plain entropy-split tree (random-forest style, no feature sampling)."""
    return _grow(data, np.arange(len(data.y)), 0, "entropy", 0.0, max_depth, DEFAULT_BINS, False,
                 min_leaf)


def predict_proba(tree: dict, F) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    F = F[:, None] if F.ndim == 1 else F
    out = np.empty(len(F))
    for i, row in enumerate(F):
        node = tree
        while "posterior" not in node:
            node = node["ge"] if row[node["feature"]] >= node["theta"] else node["lt"]
        out[i] = node["posterior"]
    return out


def predict(tree: dict, F) -> np.ndarray:
    return (predict_proba(tree, F) >= 0.5).astype(np.int64)


def nodes(tree: dict):
    """Internal nodes in pre-order as ``(mode, feature, theta)``."""
    if "posterior" in tree:
        return []
    return [(tree["mode"], tree["feature"], tree["theta"])] + nodes(tree["ge"]) + nodes(tree["lt"])


__all__ = ["Stump", "Data", "divergence", "label_entropy", "kl_score", "entropy_score",
           "candidate_stumps", "grow", "grow_entropy", "predict_proba", "predict", "nodes"]
