"""Depth ordering of regions from occlusion constraints, as a linear program.

Depth labels are non-negative integers, larger meaning closer.  The
objective sums ``W(a, b) |c_a - c_b|`` over adjacent regions; each
constraint ``(occluded, occluder)`` requires ``c_occluder >= c_occluded + 1``.
"""

from __future__ import annotations

import graphlib
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .imgcore import InvalidArgument, as_field, as_raster

METHOD = "linprog-highs, two-stage (objective, then sum of labels)"


class CyclicOcclusion(ValueError):
    """The occlusion constraints contain a directed cycle."""

    def __init__(self, cycle):
        super().__init__(f"cyclic occlusion: {' -> '.join(map(str, cycle))}")
        self.cycle = list(cycle)


@dataclass(frozen=True)
class RegionGraph:
    """Regions and symmetric affinities; ``weights`` maps ``(a, b)`` with
    ``a < b`` to a non-negative weight."""

    regions: tuple
    weights: dict
    alpha: float = 1.0
    beta: float = 1.0
    eps: float = 1.0

    def __post_init__(self):
        regs = set(self.regions)
        for (a, b), w in self.weights.items():
            if not (a < b and a in regs and b in regs):
                raise InvalidArgument(f"bad edge {(a, b)}")
            if not w >= 0:
                raise InvalidArgument("weights must be >= 0")

    def weight(self, a, b) -> float:
        return self.weights.get((min(a, b), max(a, b)), 0.0)

    def matrix(self) -> np.ndarray:
        idx = {r: i for i, r in enumerate(self.regions)}
        W = np.zeros((len(self.regions),) * 2)
        for (a, b), w in self.weights.items():
            W[idx[a], idx[b]] = W[idx[b], idx[a]] = w
        return W


@dataclass(frozen=True)
class DepthLabeling:
    labels: dict
    objective: float
    method: str = METHOD

    def to_json(self) -> dict:
        return {"labels": {str(k): v for k, v in self.labels.items()},
                "objective": self.objective, "method": self.method}


def _offsets(eps):
    r = int(np.floor(eps))
    out = []
    for dy in range(0, r + 1):
        for dx in range(-r, r + 1):
            if (dy > 0 or dx > 0) and dx * dx + dy * dy <= eps * eps + 1e-12:
                out.append((dx, dy))
    return out


def build_region_graph(labels, img, flow, alpha: float = 1.0, beta: float = 1.0,
                       eps: float = 1.0) -> RegionGraph:
    """Sum of ``alpha exp(-(I(x) - I(y))^2) + beta exp(-|v(x) - v(y)|^2)``
    over unordered pixel pairs in different regions at distance <= ``eps``."""
    labels = np.asarray(labels)
    if labels.ndim != 2 or not np.issubdtype(labels.dtype, np.integer):
        raise InvalidArgument("labels must be a 2-D integer array")
    img = as_raster(img)
    flow = as_field(flow, img.shape)
    if labels.shape != img.shape:
        raise InvalidArgument("labels and image sizes differ")
    if alpha < 0 or beta < 0 or not eps >= 1:
        raise InvalidArgument("alpha, beta must be >= 0 and eps >= 1")
    h, w = labels.shape
    weights = {}
    for dx, dy in _offsets(eps):
        ya, yb = slice(0, h - dy), slice(dy, h)
        xa, xb = slice(max(0, -dx), w - max(0, dx)), slice(max(0, dx), w + min(0, dx))
        la, lb = labels[ya, xa], labels[yb, xb]
        diff = la != lb
        if not diff.any():
            continue
        di = img[ya, xa] - img[yb, xb]
        dv = flow[:, ya, xa] - flow[:, yb, xb]
        aff = alpha * np.exp(-di ** 2) + beta * np.exp(-(dv ** 2).sum(0))
        a, b = np.minimum(la, lb)[diff], np.maximum(la, lb)[diff]
        pairs, inv = np.unique(np.stack([a, b], 1), axis=0, return_inverse=True)
        sums = np.bincount(inv.ravel(), aff[diff])
        for (p, q), s in zip(pairs.tolist(), sums.tolist()):
            weights[(p, q)] = weights.get((p, q), 0.0) + s
    return RegionGraph(tuple(int(r) for r in np.unique(labels)), weights, alpha, beta, eps)


def find_cycle(regions, constraints):
    """A directed cycle of the occlusion graph (occluded -> occluder), or None."""
    ts = graphlib.TopologicalSorter({r: set() for r in regions})
    for lo, hi in constraints:
        ts.add(hi, lo)
    try:
        ts.prepare()
    except graphlib.CycleError as err:
        return err.args[1]
    return None


def objective(graph: RegionGraph, labels: dict) -> float:
    return float(sum(w * abs(labels[a] - labels[b]) for (a, b), w in graph.weights.items()))


def depth_order(graph: RegionGraph, constraints) -> DepthLabeling:
    """Integer depths minimizing the weighted label differences subject to
    the occlusion constraints.

    The LP is solved twice: first for the optimal objective, then, with the
    objective held at its optimum, for the smallest sum of labels, which
    picks the lowest optimal labeling (all zeros without constraints).
    """
    regions = list(graph.regions)
    idx = {r: i for i, r in enumerate(regions)}
    constraints = [(lo, hi) for lo, hi in constraints]
    for lo, hi in constraints:
        if lo not in idx or hi not in idx:
            raise InvalidArgument(f"constraint {(lo, hi)} names an unknown region")
        if lo == hi:
            raise CyclicOcclusion([lo, lo])
    cycle = find_cycle(regions, constraints)
    if cycle is not None:
        raise CyclicOcclusion(cycle)
    K, edges = len(regions), list(graph.weights.items())
    E = len(edges)
    n = K + E
    rows, rhs = [], []
    for lo, hi in constraints:
        row = np.zeros(n)
        row[idx[lo]], row[idx[hi]] = 1.0, -1.0
        rows.append(row)
        rhs.append(-1.0)
    for e, ((a, b), _) in enumerate(edges):
        for s in (1.0, -1.0):
            row = np.zeros(n)
            row[idx[a]], row[idx[b]], row[K + e] = s, -s, -1.0
            rows.append(row)
            rhs.append(0.0)
    A = np.array(rows).reshape(-1, n)
    b = np.array(rhs)
    cost = np.concatenate([np.zeros(K), [w for _, w in edges]])
    bounds = [(0, K)] * K + [(0, None)] * E
    first = linprog(cost, A_ub=A if len(A) else None, b_ub=b if len(A) else None,
                    bounds=bounds, method="highs")
    if first.status != 0:
        raise RuntimeError(f"depth LP failed: {first.message}")
    A2 = np.vstack([A, cost]) if len(A) else cost[None]
    b2 = np.concatenate([b, [first.fun + 1e-9 * max(1.0, abs(first.fun))]])
    second = linprog(np.concatenate([np.ones(K), np.zeros(E)]), A_ub=A2, b_ub=b2,
                     bounds=bounds, method="highs")
    # the first stage is a difference system (totally unimodular), so its
    # vertex is integral; the tie-breaking stage is kept only if it rounds
    # to a labeling that is still optimal
    labels = {r: int(round(first.x[idx[r]])) for r in regions}
    if second.status == 0:
        cand = {r: int(round(second.x[idx[r]])) for r in regions}
        if (all(cand[hi] >= cand[lo] + 1 for lo, hi in constraints)
                and objective(graph, cand) <= objective(graph, labels) + 1e-9):
            labels = cand
    for lo, hi in constraints:
        if not labels[hi] >= labels[lo] + 1:
            raise RuntimeError(f"rounded labels violate {(lo, hi)}")
    return DepthLabeling(labels, objective(graph, labels))


__all__ = ["CyclicOcclusion", "RegionGraph", "DepthLabeling", "build_region_graph",
           "find_cycle", "objective", "depth_order"]
