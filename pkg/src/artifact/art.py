"""Critical points and Attributed Reeb Trees of sampled images.

Samples are totally ordered by ``(value, raster index)``, which removes ties
without changing any strict comparison.  The domain is compactified by one
virtual minimum adjacent to every border pixel.  The tree is the merge tree
of the superlevel sets rooted at that minimum, so maxima are leaves, joins
are degree-3 saddles and ``n_min - n_saddle + n_max = 2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .imgcore import InvalidArgument, as_raster, gaussian_blur

# cyclic order of the 8-neighbourhood, as (dy, dx)
RING = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))
KIND_ORDER = {"min": 0, "saddle": 1, "max": 2}


class TopologyError(RuntimeError):
    """A constructed tree violates the degree or Euler constraints."""


@dataclass(frozen=True)
class CriticalPoint:
    x: int
    y: int
    kind: str
    value: float
    # simple saddles merged at this sample (monkey saddles have > 1)
    multiplicity: int = 1


@dataclass(frozen=True)
class ArtNode:
    id: int
    kind: str
    ordinal: int
    x: int | None = None
    y: int | None = None

    @property
    def virtual(self) -> bool:
        return self.x is None


@dataclass(frozen=True)
class ART:
    """Attributed Reeb tree rooted at the virtual boundary minimum (id 0).

    Equality of trees is equality of ``encoding``: node values enter only
    through their ordinal rank.
    """

    nodes: tuple
    edges: tuple
    encoding: str

    def counts(self) -> dict:
        out = {"min": 0, "saddle": 0, "max": 0}
        for n in self.nodes:
            out[n.kind] += 1
        return out

    def degrees(self) -> list[int]:
        deg = [0] * len(self.nodes)
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg

    def to_json(self) -> dict:
        return {"nodes": [{"id": n.id, "kind": n.kind, "ordinal": n.ordinal} for n in self.nodes],
                "edges": [list(e) for e in self.edges], "encoding": self.encoding}


def _smooth(img, sigma):
    img = as_raster(img)
    if sigma < 0:
        raise InvalidArgument("sigma must be >= 0")
    return gaussian_blur(img, sigma) if sigma > 0 else img


def sample_rank(f) -> np.ndarray:
    """Rank of every sample under the order (value, raster index)."""
    flat = np.asarray(f).ravel()
    rank = np.empty(flat.size, dtype=np.int64)
    rank[np.argsort(flat, kind="stable")] = np.arange(flat.size)
    return rank.reshape(np.shape(f))


def classify_critical(img, sigma: float = 0.0) -> list[CriticalPoint]:
    """Interior critical samples of ``img`` smoothed at ``sigma``.

    A sample is a maximum (minimum) if it beats (loses to) all 8 neighbours,
    and a saddle if the cyclic sign sequence of neighbour minus centre
    alternates at least 4 times; ``alternations / 2 - 1`` simple saddles
    coincide there.
    """
    f = _smooth(img, sigma)
    h, w = f.shape
    if h < 3 or w < 3:
        return []
    r = sample_rank(f)
    c = r[1:-1, 1:-1]
    up = np.stack([r[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx] > c for dy, dx in RING])
    alt = (up != np.roll(up, -1, axis=0)).sum(0)
    n_up = up.sum(0)
    out = []
    for kind, mask in (("max", n_up == 0), ("min", n_up == 8), ("saddle", alt >= 4)):
        for y, x in zip(*np.nonzero(mask)):
            mult = int(alt[y, x]) // 2 - 1 if kind == "saddle" else 1
            out.append(CriticalPoint(int(x) + 1, int(y) + 1, kind, float(f[y + 1, x + 1]), mult))
    out.sort(key=lambda p: (p.y, p.x))
    return out


@lru_cache(maxsize=32)
def _neighbour_table(h, w):
    """(h*w, 8) neighbour indices in ring order, -1 outside, and a border mask."""
    y, x = np.mgrid[0:h, 0:w]
    cols = []
    for dy, dx in RING:
        yy, xx = y + dy, x + dx
        ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        cols.append(np.where(ok, yy * w + xx, -1).ravel())
    border = ((y == 0) | (y == h - 1) | (x == 0) | (x == w - 1)).ravel()
    return np.stack(cols, axis=1), border


def _join_tree(rank_px, h, w):
    """Superlevel merge tree of the grid plus a virtual minimum ``h * w``.

    Vertices are swept from the highest rank down; each one becomes the
    parent of the lowest vertex of every component among its higher
    neighbours.  Returns (children lists, parent list, sweep order).
    """
    n = h * w
    nb, border = _neighbour_table(h, w)
    rank_px = np.asarray(rank_px)
    higher = (nb >= 0) & (rank_px[np.where(nb >= 0, nb, 0)] > rank_px[:, None])
    uppers = np.where(higher, nb, -1).tolist()
    uppers.append(np.nonzero(border)[0].tolist())  # the virtual vertex sees the border
    order = np.argsort(-rank_px, kind="stable").tolist() + [n]
    uf = list(range(n + 1))
    latest = list(range(n + 1))
    children = [[] for _ in range(n + 1)]
    parent = [-1] * (n + 1)
    for v in order:
        roots = set()
        for u in uppers[v]:
            if u < 0:
                continue
            while uf[u] != u:
                uf[u] = uf[uf[u]]
                u = uf[u]
            roots.add(u)
        for c in roots:
            t = latest[c]
            parent[t] = v
            children[v].append(t)
            uf[c] = v
        latest[v] = v
    return children, parent, order


def build_art(img, sigma: float = 0.0) -> ART:
    """Attributed Reeb tree of ``img`` smoothed at ``sigma``.

    The superlevel sets are swept from the top with a union-find over the
    8-connected grid; every maximum starts a component, every join of
    components is a saddle, and the virtual minimum closes the domain as the
    root.  A join of ``k > 2`` components becomes ``k - 1`` simple saddles.
    """
    f = _smooth(img, sigma)
    h, w = f.shape
    n = h * w
    rank_px = sample_rank(f).ravel() + 1
    children, parent, desc = _join_tree(rank_px, h, w)
    rank = rank_px.tolist() + [0]  # the virtual minimum sits below every sample

    def critical(v):
        return v == n or len(children[v]) != 1

    # contract regular chains: each critical vertex hangs from the next
    # critical vertex below it
    crit = [v for v in desc if critical(v)]
    below = {}
    for v in crit:
        if v == n:
            continue
        u = parent[v]
        while not critical(u):
            u = parent[u]
        below[v] = u
    ups = {v: [] for v in crit}
    for v, u in below.items():
        ups[u].append(v)

    keys, kinds, locs, edges = [], [], [], []
    top = {}  # critical vertex -> node that links it to the vertex below

    def add(key, kind, v):
        keys.append(key)
        kinds.append(kind)
        locs.append(None if v == n else (v % w, v // w))
        return len(keys) - 1

    # descending order guarantees every upper node exists before its join
    for v in crit:
        kids = sorted(ups[v], key=lambda u: rank[u])
        if v == n:
            node = add((0, 0), "min", v)
            edges.extend((top[u], node) for u in kids)
        elif not kids:
            node = add((rank[v], 0), "max", v)
        else:
            # simultaneous joins are ordered as if the lowest branches met first
            k = len(kids)
            node = add((rank[v], k - 2), "saddle", v)
            edges.extend((top[u], node) for u in kids[:2])
            for j, u in enumerate(kids[2:]):
                nxt = add((rank[v], k - 3 - j), "saddle", v)
                edges.extend([(node, nxt), (top[u], nxt)])
                node = nxt
        top[v] = node

    # renumber by value order so the virtual minimum is node 0
    order = sorted(range(len(keys)), key=lambda i: keys[i])
    new = {old: k for k, old in enumerate(order)}
    nodes = tuple(ArtNode(new[i], kinds[i], new[i], *(locs[i] or (None, None))) for i in order)
    edges = tuple(sorted((min(new[a], new[b]), max(new[a], new[b])) for a, b in edges))
    art = ART(nodes, edges, _encode(nodes, edges))
    check_invariants(art)
    return art


def _encode(nodes, edges) -> str:
    adj = [[] for _ in nodes]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    enc = [None] * len(nodes)
    # iterative post-order from the root so deep trees do not hit recursion limits
    parent = [-1] * len(nodes)
    stack, post = [0], []
    seen = [False] * len(nodes)
    seen[0] = True
    while stack:
        v = stack.pop()
        post.append(v)
        for u in adj[v]:
            if not seen[u]:
                seen[u] = True
                parent[u] = v
                stack.append(u)
    for v in reversed(post):
        kids = sorted((KIND_ORDER[nodes[u].kind], nodes[u].ordinal, enc[u])
                      for u in adj[v] if u != parent[v])
        enc[v] = f"{nodes[v].kind}{nodes[v].ordinal}(" + ",".join(k[2] for k in kids) + ")"
    return enc[0]


def check_invariants(art: ART) -> None:
    """Raise :class:`TopologyError` unless ``art`` is a tree with leaf extrema,
    degree-3 saddles and ``n_min - n_saddle + n_max = 2``."""
    n = len(art.nodes)
    if len(art.edges) != n - 1:
        raise TopologyError(f"{n} nodes but {len(art.edges)} edges")
    deg = art.degrees()
    for node, d in zip(art.nodes, deg):
        want = 3 if node.kind == "saddle" else 1
        if d != want and not (n == 1 and d == 0):
            raise TopologyError(f"{node.kind} node {node.id} has degree {d}")
    c = art.counts()
    if c["min"] - c["saddle"] + c["max"] != 2 and n > 1:
        raise TopologyError(f"Euler count {c}")
    if art.encoding.count("(") != n:
        raise TopologyError("tree is not connected")


def art_equal(a: ART, b: ART) -> bool:
    return a.encoding == b.encoding
