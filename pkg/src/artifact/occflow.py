"""Joint optical flow and occlusion estimation.

For a linearization ``r(v) = grad . v + it0`` of the brightness residual the
estimate minimizes

    psi(v, e) = ||r(v) - e||^2 + lam * sum_i w_i |e_i| + mu * TV(v)

which is jointly convex in the flow ``v`` and the sparse occlusion residual
``e``.  It is solved by alternating an exact pointwise shrinkage for ``e``
with a primal-dual TV step for ``v``, inside a coarse-to-fine warping loop.
The weights ``w`` are re-estimated once per linearization from the previous
residual so that the penalty approaches a count of occluded pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .imgcore import (InvalidArgument, as_field, as_raster, downsample, gradient, upsample,
                      upsample_field, warp)

MAD_SCALE = 1.4826


class SolverFailure(RuntimeError):
    """The objective increased; ``trace`` holds the offending values."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass
class FlowProblem:
    frame_a: np.ndarray
    frame_b: np.ndarray
    lam: float = 1e-4
    mu: float = 0.005
    n_levels: int = 3
    warps_per_level: int = 10
    inner_iters: int = 50
    alternations: int = 10
    eps_w: float = 1e-3
    tau_factor: float = 3.0
    # primal/dual step balance; the data term is weak for intensities in [0, 1]
    step_ratio: float = 30.0

    def __post_init__(self):
        self.frame_a = as_raster(self.frame_a)
        self.frame_b = as_raster(self.frame_b)
        if self.frame_a.shape != self.frame_b.shape:
            raise InvalidArgument("frames must have the same size")
        if not (self.lam > 0 and self.mu > 0):
            raise InvalidArgument("lam and mu must be > 0")
        if min(self.n_levels, self.warps_per_level, self.inner_iters, self.alternations) < 1:
            raise InvalidArgument("level, warp and iteration counts must be >= 1")

    def pyramid(self):
        """Frame pairs from coarsest to finest."""
        pairs = [(self.frame_a, self.frame_b)]
        for _ in range(self.n_levels - 1):
            a, b = pairs[-1]
            if min(a.shape) < 8:
                break
            pairs.append((downsample(a), downsample(b)))
        return pairs[::-1]


@dataclass
class FlowSolution:
    v: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    tau_e: float
    mask: np.ndarray
    # one list per linearization
    objective_trace: list = field(default_factory=list)


def shrink(r, t, w):
    """Minimizer over ``e`` of ``(r - e)**2 + t * w * |e|``."""
    r = np.asarray(r, dtype=np.float64)
    return np.sign(r) * np.maximum(np.abs(r) - 0.5 * t * np.asarray(w, dtype=np.float64), 0.0)


def linearize(a, b, v0):
    """Gradient of ``b`` warped by ``v0`` and the temporal difference.

    Returns ``(grad, it)`` with ``grad`` of shape (2, H, W).
    """
    a = as_raster(a)
    b = as_raster(b)
    if a.shape != b.shape:
        raise InvalidArgument("frames must have the same size")
    bw, _ = warp(b, v0)
    gx, gy = gradient(bw)
    return np.stack([gx, gy]), bw - a


def _grad(f):
    """Forward differences with Neumann boundary; (..., H, W) -> (..., 2, H, W)."""
    g = np.zeros(f.shape[:-2] + (2,) + f.shape[-2:])
    g[..., 0, :, :-1] = f[..., :, 1:] - f[..., :, :-1]
    g[..., 1, :-1, :] = f[..., 1:, :] - f[..., :-1, :]
    return g


def _div(p):
    """Negative adjoint of ``_grad``; (..., 2, H, W) -> (..., H, W)."""
    px, py = p[..., 0, :, :], p[..., 1, :, :]
    d = np.zeros(px.shape)
    d[..., :, 0] = px[..., :, 0]
    d[..., :, 1:-1] = px[..., :, 1:-1] - px[..., :, :-2]
    d[..., :, -1] = -px[..., :, -2]
    d[..., 0, :] += py[..., 0, :]
    d[..., 1:-1, :] += py[..., 1:-1, :] - py[..., :-2, :]
    d[..., -1, :] -= py[..., -2, :]
    return d


def tv(v) -> float:
    """Anisotropic total variation: l1 norm of all first differences of ``v``."""
    return float(np.abs(_grad(np.asarray(v))).sum())


def objective(v, e, grad, it0, lam, mu, weights) -> float:
    r = (grad * v).sum(0) + it0
    nz = e != 0
    data = float(((r - e) ** 2).sum()) + mu * tv(v)
    if not nz.any():
        # lam may be inf; an empty support costs nothing
        return data
    return data + lam * float((weights[nz] * np.abs(e[nz])).sum())


class _LinearizedSolver:
    """Alternating minimizer for one fixed linearization and weight field."""

    def __init__(self, grad, it0, lam, mu, weights, inner_iters, step_ratio=1.0):
        self.grad = grad
        self.it0 = it0
        self.lam = lam
        self.mu = mu
        self.w = weights
        self.inner = inner_iters
        self.a2 = (grad ** 2).sum(0)
        # tau * sigma * ||grad||^2 < 1 with ||grad||^2 <= 8
        self.tau = step_ratio * 0.99 / math.sqrt(8.0)
        self.sigma = 0.99 / (step_ratio * math.sqrt(8.0))
        self.p = None

    def objective(self, v, e):
        return objective(v, e, self.grad, self.it0, self.lam, self.mu, self.w)

    def e_step(self, v):
        r = (self.grad * v).sum(0) + self.it0
        if math.isinf(self.lam):
            return np.zeros_like(r)
        return shrink(r, self.lam, self.w)

    def v_step(self, v, e):
        """Primal-dual iterations on ||grad.v - b||^2 + mu TV(v), b = e - it0."""
        tau, sigma = self.tau, self.sigma
        a = self.grad
        b = e - self.it0
        denom = 1.0 + 2.0 * tau * self.a2
        p = np.zeros((2, 2) + v.shape[1:]) if self.p is None else self.p
        x = v.copy()
        xbar = v.copy()
        for _ in range(self.inner):
            p = np.clip(p + sigma * _grad(xbar), -self.mu, self.mu)
            xhat = x + tau * _div(p)
            coeff = 2.0 * tau * ((a * xhat).sum(0) - b) / denom
            x_new = xhat - a * coeff
            xbar = 2.0 * x_new - x
            x = x_new
        self.p = p
        return x

    def run(self, v, e, alternations):
        trace = [self.objective(v, e)]
        for _ in range(alternations):
            cand = self.v_step(v, e)
            f = self.objective(cand, e)
            if f <= trace[-1]:
                v = cand
            else:
                f = trace[-1]
            _record(trace, f)
            e = self.e_step(v)
            _record(trace, self.objective(v, e))
        return v, e, trace


def _record(trace, value, tol=1e-8):
    if value > trace[-1] + tol * max(1.0, abs(trace[-1])):
        trace.append(value)
        raise SolverFailure(f"objective increased from {trace[-2]:.6g} to {value:.6g}", trace)
    trace.append(value)


def solve_level(problem: FlowProblem, level: int, v_init=None, v_lin=None, e_init=None):
    """Solve on pyramid ``level`` (0 = coarsest) from ``v_init``.

    ``v_lin`` fixes the first linearization point (defaults to ``v_init``);
    later linearizations use the current estimate.  Returns a
    :class:`FlowSolution` on the level grid with the mask left unthresholded.
    """
    pairs = problem.pyramid()
    a, b = pairs[level]
    shape = a.shape
    v = np.zeros((2,) + shape) if v_init is None else as_field(v_init, shape).copy()
    v_lin = v.copy() if v_lin is None else as_field(v_lin, shape)
    # with no previous estimate e = 0, so every weight starts at 1 / eps_w
    e = np.zeros(shape) if e_init is None else as_raster(e_init).copy()
    traces = []
    for k in range(problem.warps_per_level):
        lin = v_lin if k == 0 else v
        grad, it = linearize(a, b, lin)
        it0 = it - (grad * lin).sum(0)
        weights = 1.0 / (np.abs(e) + problem.eps_w)
        solver = _LinearizedSolver(grad, it0, problem.lam, problem.mu, weights, problem.inner_iters,
                                  problem.step_ratio)
        # the v-step moves first so motion is not absorbed into e
        v, e, trace = solver.run(v, np.zeros(shape), problem.alternations)
        traces.append(trace)
    r = (grad * v).sum(0) + it0
    return FlowSolution(v=v, e1=e, e2=r - e, tau_e=math.nan, mask=np.zeros(shape, bool),
                        objective_trace=traces)


def occlusion_threshold(e1, factor=3.0) -> float:
    """``factor`` robust standard deviations (1.4826 * MAD) of ``e1``."""
    med = np.median(e1)
    return float(factor * MAD_SCALE * np.median(np.abs(e1 - med)))


def solve(problem: FlowProblem) -> FlowSolution:
    """Coarse-to-fine solve; thresholds ``|e1| > tau_e`` into the mask."""
    pairs = problem.pyramid()
    v = e = None
    traces = []
    for level, (a, _) in enumerate(pairs):
        if v is not None:
            v = upsample_field(v, a.shape)
            # the coarse residual seeds the weights of the first linearization
            e = upsample(sol.e1, a.shape)
        sol = solve_level(problem, level, v, e_init=e)
        v = sol.v
        traces.extend(sol.objective_trace)
    sol.tau_e = occlusion_threshold(sol.e1, problem.tau_factor)
    sol.mask = np.abs(sol.e1) > sol.tau_e
    sol.objective_trace = traces
    return sol


def endpoint_error(v, v_true) -> np.ndarray:
    return np.sqrt(((np.asarray(v) - np.asarray(v_true)) ** 2).sum(0))
