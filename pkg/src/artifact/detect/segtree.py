"""Greedy segmentation tree and stable-segment selection."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from ..imgcore import InvalidArgument, as_raster
from .frame import Frame


@dataclass(frozen=True)
class SegTree:
    """Merge history of a greedy agglomeration.

    Node ids ``0 .. H*W-1`` are pixels (row-major); merge ``k`` creates node
    ``H*W + k``.  ``events[k] = (a, b, cost)`` joins nodes ``a`` and ``b``.
    ``birth``/``death`` are the merge costs at which each node appears and is
    absorbed (survivors die at ``sigma_stop``); ``gap = death - birth``.
    ``stable`` labels each pixel with its stable region (1-based, 0 = none).
    """

    shape: tuple
    events: list
    birth: np.ndarray
    death: np.ndarray
    stable: np.ndarray
    sigma_stop: float

    @property
    def n_merges(self) -> int:
        return len(self.events)

    @property
    def gap(self) -> np.ndarray:
        return self.death - self.birth

    def labels_at(self, level: int | None = None) -> np.ndarray:
        """Region labels (0-based, compact, in first-pixel order) after
        ``level`` merges; ``None`` means the final partition."""
        level = self.n_merges if level is None else level
        if not 0 <= level <= self.n_merges:
            raise InvalidArgument(f"level must be in [0, {self.n_merges}]")
        n = self.shape[0] * self.shape[1]
        parent = np.arange(n + level)
        for k, (a, b, _) in enumerate(self.events[:level]):
            parent[a] = parent[b] = n + k
        # nodes are created in increasing id order, so one backward sweep
        # resolves every node to its root
        root = parent.copy()
        for i in range(n + level - 1, -1, -1):
            root[i] = root[parent[i]]
        _, lab = np.unique(root[:n], return_inverse=True)
        # relabel by first occurrence for a deterministic, scan-order labelling
        first = {}
        out = np.array([first.setdefault(x, len(first)) for x in lab])
        return out.reshape(self.shape)


def _edges(img):
    """4-neighbour pairs (row-major ids) and their absolute differences."""
    h, w = img.shape
    ids = np.arange(h * w).reshape(h, w)
    a = np.concatenate([ids[:, :-1].ravel(), ids[:-1, :].ravel()])
    b = np.concatenate([ids[:, 1:].ravel(), ids[1:, :].ravel()])
    cost = np.concatenate([np.abs(np.diff(img, axis=1)).ravel(), np.abs(np.diff(img, axis=0)).ravel()])
    return a, b, cost


def segment_tree(img, sigma_stop: float, gap_min: float = 0.0) -> SegTree:
    """Agglomerate 4-connected regions by least mean boundary gradient.

    The boundary cost between two regions is the mean of ``|I(p) - I(q)|``
    over the 4-neighbour pairs straddling it.  The cheapest pair is merged
    first, ties going to the smaller combined region and then to the smaller
    ids.  Merging stops when the cheapest cost reaches ``sigma_stop``.  Each
    pixel takes the node on its root path with the largest gap
    (death - birth cost), preferring the finer node on ties, if that gap is
    at least ``gap_min``.
    """
    img = as_raster(img)
    if not sigma_stop > 0:
        raise InvalidArgument("sigma_stop must be > 0")
    h, w = img.shape
    n = h * w
    # adjacency: node -> {neighbour: [cost sum, pair count]}
    adj = [dict() for _ in range(n)]
    for a, b, c in zip(*_edges(img)):
        a, b, c = int(a), int(b), float(c)
        adj[a][b] = [c, 1]
        adj[b][a] = [c, 1]
    size = [1] * n
    alive = [True] * n
    heap = [(s[0], 2, a, b) for a in range(n) for b, s in adj[a].items() if a < b]
    heapq.heapify(heap)
    events, birth = [], [0.0] * n
    death = [math.nan] * n
    while heap:
        cost, sz, a, b = heap[0]
        if cost >= sigma_stop:
            break
        heapq.heappop(heap)
        if not (alive[a] and alive[b]):
            continue
        s = adj[a][b]
        if s[0] / s[1] != cost:
            continue  # stale entry
        new = len(size)
        alive[a] = alive[b] = False
        death[a] = death[b] = cost
        events.append((a, b, cost))
        merged = {}
        for src in (adj[a], adj[b]):
            for m, (cs, ct) in src.items():
                if m in (a, b):
                    continue
                acc = merged.setdefault(m, [0.0, 0])
                acc[0] += cs
                acc[1] += ct
        adj[a] = adj[b] = None
        adj.append(merged)
        size.append(size[a] + size[b])
        alive.append(True)
        birth.append(cost)
        death.append(math.nan)
        for m, (cs, ct) in merged.items():
            am = adj[m]
            am.pop(a, None)
            am.pop(b, None)
            am[new] = [cs, ct]
            heapq.heappush(heap, (cs / ct, size[new] + size[m], min(m, new), max(m, new)))
    birth = np.array(birth)
    death = np.array(death)
    death[np.isnan(death)] = sigma_stop

    # best node on each root path: parents have larger ids, so a backward
    # sweep sees every parent before its children
    total = len(birth)
    parent = np.full(total, -1)
    for k, (a, b, _) in enumerate(events):
        parent[a] = parent[b] = n + k
    gap = death - birth
    best = np.arange(total)
    for i in range(total - 1, -1, -1):
        p = parent[i]
        if p >= 0 and gap[best[p]] > gap[i]:
            best[i] = best[p]
    pick = best[:n]
    keep = gap[pick] >= gap_min
    ids = np.unique(pick[keep])
    stable = np.zeros(n, dtype=np.int64)
    stable[keep] = np.searchsorted(ids, pick[keep]) + 1
    return SegTree(shape=(h, w), events=events, birth=birth, death=death,
                   stable=stable.reshape(h, w), sigma_stop=float(sigma_stop))


def region_frames(labels) -> list[Frame]:
    """One centroid frame per label (labels < 0 are ignored)."""
    labels = np.asarray(labels)
    ys, xs = np.indices(labels.shape)
    frames = []
    for lab in np.unique(labels):
        if lab < 0:
            continue
        m = labels == lab
        area = int(m.sum())
        frames.append(Frame(x=float(xs[m].mean()), y=float(ys[m].mean()),
                            sigma=math.sqrt(area / math.pi), kind="SuperpixelCentroid",
                            score=float(area)))
    return frames


def superpixel_frames(tree: SegTree, level: int | None = None) -> list[Frame]:
    """Centroid frames of the regions after ``level`` merges, with
    ``sigma = sqrt(area / pi)``; the score holds the area."""
    return region_frames(tree.labels_at(level))
