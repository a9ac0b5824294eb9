"""Dynamic time warping and time warping under dynamic constraints.

Series are arrays of shape ``(T,)`` or ``(T, d)``.  A warp path is a list of
index pairs ``(i, k)`` from ``(0, 0)`` to ``(Tx - 1, Ty - 1)`` with steps
``(1, 1)``, ``(1, 0)`` and ``(0, 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imgcore import InvalidArgument

# backtracking and DP tie order: diagonal, then (1, 0), then (0, 1)
STEPS = ((1, 1), (1, 0), (0, 1))
SPECTRAL_BOUND = 1.05
COND_MAX = 1e8


class IllConditioned(ArithmeticError):
    """The deconvolution normal equations are too ill-conditioned to solve."""


def as_series(x, name="series") -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] < 1:
        raise InvalidArgument(f"{name} must have shape (T,) or (T, d)")
    if not np.all(np.isfinite(a)):
        raise InvalidArgument(f"{name} has non-finite values")
    return a


def local_cost(x, y) -> np.ndarray:
    """Squared Euclidean distance between every sample of ``x`` and ``y``."""
    x, y = as_series(x, "x"), as_series(y, "y")
    if x.shape[1] != y.shape[1]:
        raise InvalidArgument("feature dimensions differ")
    return ((x[:, None, :] - y[None, :, :]) ** 2).sum(-1)


def _backtrack(D):
    i, k = D.shape[0] - 1, D.shape[1] - 1
    path = [(i, k)]
    while (i, k) != (0, 0):
        best = None
        for di, dk in STEPS:
            if i - di >= 0 and k - dk >= 0 and (best is None or D[i - di, k - dk] < best[0]):
                best = (D[i - di, k - dk], i - di, k - dk)
        _, i, k = best
        path.append((i, k))
    return path[::-1]


def dtw(x, y):
    """Globally optimal DTW under squared Euclidean local cost.

    Returns ``(cost, path)``.  Among equal-cost predecessors the diagonal
    step is preferred, then ``(1, 0)``.
    """
    c = local_cost(x, y)
    n, m = c.shape
    D = np.full((n, m), np.inf)
    D[0, 0] = c[0, 0]
    for i in range(n):
        for k in range(m):
            if i == 0 and k == 0:
                continue
            best = np.inf
            if i and k:
                best = D[i - 1, k - 1]
            if i and D[i - 1, k] < best:
                best = D[i - 1, k]
            if k and D[i, k - 1] < best:
                best = D[i, k - 1]
            D[i, k] = c[i, k] + best
    return float(D[-1, -1]), _backtrack(D)


def path_cost(c, path) -> float:
    return float(sum(c[i, k] for i, k in path))


def check_path(path, n, m) -> None:
    if path[0] != (0, 0) or path[-1] != (n - 1, m - 1):
        raise InvalidArgument("warp path endpoints are not pinned")
    for (i0, k0), (i1, k1) in zip(path, path[1:]):
        if (i1 - i0, k1 - k0) not in STEPS:
            raise InvalidArgument(f"illegal step {(i0, k0)} -> {(i1, k1)}")


@dataclass(frozen=True)
class LtiModel:
    """``m[t+1] = m[t] + A m[t] + B u`` and ``y = C m + D u`` (forward Euler,
    unit step).  ``D`` defaults to zero; ``A = B = C = 0, D = I`` is a
    pass-through."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    x0: np.ndarray | None = None
    D: np.ndarray | None = None

    def __post_init__(self):
        A, B, C = (np.atleast_2d(np.asarray(M, dtype=np.float64)) for M in (self.A, self.B, self.C))
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n or C.shape[1] != n:
            raise InvalidArgument("inconsistent model dimensions")
        x0 = np.zeros(n) if self.x0 is None else np.asarray(self.x0, dtype=np.float64).reshape(n)
        D = np.zeros((C.shape[0], B.shape[1])) if self.D is None else np.atleast_2d(
            np.asarray(self.D, dtype=np.float64))
        if D.shape != (C.shape[0], B.shape[1]):
            raise InvalidArgument("feedthrough D must be (outputs, inputs)")
        rho = float(np.abs(np.linalg.eigvals(np.eye(n) + A)).max())
        if rho >= SPECTRAL_BOUND:
            raise InvalidArgument(f"spectral radius of I + A is {rho:.3f} >= {SPECTRAL_BOUND}")
        for k, v in zip("ABC", (A, B, C)):
            object.__setattr__(self, k, v)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "D", D)

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @classmethod
    def pass_through(cls, d: int) -> "LtiModel":
        return cls(np.zeros((1, 1)), np.zeros((1, d)), np.zeros((d, 1)), D=np.eye(d))

    def impulse_matrix(self, T: int) -> np.ndarray:
        """``H`` with ``vec(y) = H vec(u) + free response`` for ``T`` samples,
        rows and columns in time-major order."""
        d, m = self.C.shape[0], self.n_inputs
        H = np.zeros((T * d, T * m))
        Phi = np.eye(self.A.shape[0]) + self.A
        blocks = [self.D]
        P = np.eye(self.A.shape[0])
        for _ in range(1, T):
            blocks.append(self.C @ P @ self.B)
            P = Phi @ P
        for t in range(T):
            for s in range(t + 1):
                H[t * d:(t + 1) * d, s * m:(s + 1) * m] = blocks[t - s]
        return H

    def free_response(self, T: int) -> np.ndarray:
        Phi = np.eye(self.A.shape[0]) + self.A
        m, out = self.x0.copy(), []
        for _ in range(T):
            out.append(self.C @ m)
            m = Phi @ m
        return np.array(out)


def warp_input(u, warp=None, T=None) -> np.ndarray:
    """Sample ``u`` at the warped times by linear interpolation.

    ``warp`` is ``None`` (identity), a callable of the integer time, or an
    array of warped indices.
    """
    u = as_series(u, "u")
    T = len(u) if T is None else T
    if warp is None:
        w = np.arange(T, dtype=np.float64)
    elif callable(warp):
        w = np.array([warp(t) for t in range(T)], dtype=np.float64)
    else:
        w = np.asarray(warp, dtype=np.float64)
    if w.shape != (T,):
        raise InvalidArgument("warp must give one index per output sample")
    if w.min() < -1e-9 or w.max() > len(u) - 1 + 1e-9:
        raise InvalidArgument("warped indices leave the input")
    w = np.clip(w, 0, len(u) - 1)
    return np.column_stack([np.interp(w, np.arange(len(u)), u[:, j]) for j in range(u.shape[1])])


def simulate(model: LtiModel, u, warp=None, T=None) -> np.ndarray:
    """Outputs ``(T, d)`` of the model driven by ``u`` read at warped times."""
    uw = warp_input(u, warp, T)
    if uw.shape[1] != model.n_inputs:
        raise InvalidArgument("input dimension does not match the model")
    Phi = np.eye(model.A.shape[0]) + model.A
    m = model.x0.copy()
    out = np.empty((len(uw), model.C.shape[0]))
    for t, ut in enumerate(uw):
        out[t] = model.C @ m + model.D @ ut
        m = Phi @ m + model.B @ ut
    return out


def deconvolve(model: LtiModel, y, lam: float = 1.0, ridge: float = 1e-3):
    """Input estimate minimizing ``|y - H u|^2 + lam |grad u|^2 + ridge |u|^2``.

    Returns ``(u, residual)`` where ``residual`` is the value of that
    objective.  Raises :class:`IllConditioned` when the normal matrix has
    condition number above ``1e8``.
    """
    y = as_series(y, "y")
    T, m = len(y), model.n_inputs
    if y.shape[1] != model.C.shape[0]:
        raise InvalidArgument("output dimension does not match the model")
    H = model.impulse_matrix(T)
    r = (y - model.free_response(T)).ravel()
    G = np.kron(np.diff(np.eye(T), axis=0), np.eye(m))
    N = H.T @ H + lam * G.T @ G + ridge * np.eye(T * m)
    cond = np.linalg.cond(N)
    if not cond <= COND_MAX:
        raise IllConditioned(f"deconvolution condition number {cond:.3g}")
    u = np.linalg.solve(N, H.T @ r)
    res = float(((r - H @ u) ** 2).sum() + lam * ((G @ u) ** 2).sum() + ridge * (u ** 2).sum())
    return u.reshape(T, m), res


def _curvature_dp(c, mu):
    """Min over pinned paths of local cost plus ``mu |step change|^2``.

    Returns ``(cost, path)``.  The state is the step that entered a cell,
    plus a start state at ``(0, 0)`` that any first step leaves for free.
    Anti-diagonals are swept in turn; ties follow the STEPS order.
    """
    n, m = c.shape
    if n == 1 and m == 1:
        return float(c[0, 0]), [(0, 0)]
    pen = np.zeros((4, 3))
    for i, s0 in enumerate(STEPS):
        for j, s1 in enumerate(STEPS):
            pen[i, j] = mu * ((s0[0] - s1[0]) ** 2 + (s0[1] - s1[1]) ** 2)
    D = np.full((n, m, 4), np.inf)
    D[0, 0, 3] = c[0, 0]
    back = np.full((n, m, 3), -1, dtype=np.int64)
    for d in range(1, n + m - 1):
        i = np.arange(max(0, d - m + 1), min(d, n - 1) + 1)
        k = d - i
        for si, (di, dk) in enumerate(STEPS):
            pi, pk = i - di, k - dk
            ok = (pi >= 0) & (pk >= 0)
            if not ok.any():
                continue
            cand = D[pi[ok], pk[ok]] + pen[:, si]
            arg = np.argmin(cand, axis=1)
            D[i[ok], k[ok], si] = cand[np.arange(len(arg)), arg] + c[i[ok], k[ok]]
            back[i[ok], k[ok], si] = arg
    s = int(np.argmin(D[-1, -1, :3]))
    cost = float(D[-1, -1, s])
    i, k, path = n - 1, m - 1, [(n - 1, m - 1)]
    while s != 3:
        prev = back[i, k, s]
        i, k = i - STEPS[s][0], k - STEPS[s][1]
        path.append((i, k))
        s = prev
    return cost, path[::-1]


def curvature(path) -> int:
    steps = [(i1 - i0, k1 - k0) for (i0, k0), (i1, k1) in zip(path, path[1:])]
    return sum((a0 - a1) ** 2 + (b0 - b1) ** 2 for (a0, b0), (a1, b1) in zip(steps, steps[1:]))


def _alternate(us, u0, base, mu, n_outer):
    u0 = u0.copy()
    T0 = len(u0)
    trace, paths = [], []
    for _ in range(n_outer):
        prev, paths, total = paths, [], base
        for u in us:
            cost, path = _curvature_dp(local_cost(u, u0), mu)
            paths.append(path)
            total += cost
        trace.append(total)
        if paths == prev:
            break  # fixed point: u0 would not change either
        acc = np.zeros_like(u0)
        cnt = np.zeros(T0)
        for u, path in zip(us, paths):
            for t, w in path:
                acc[w] += u[t]
                cnt[w] += 1
        u0 = acc / cnt[:, None]
        total = base + sum(path_cost(local_cost(u, u0), p) + mu * curvature(p) for u, p in zip(us, paths))
        trace.append(total)
    return trace, paths, u0


@dataclass
class TwdcResult:
    cost: float
    trace: list = field(default_factory=list)
    paths: list = field(default_factory=list)
    u0: np.ndarray | None = None
    inputs: list = field(default_factory=list)


def twdc(x, y, model: LtiModel, lam: float = 1.0, mu: float = 1.0, n_outer: int = 5,
         ridge: float = 1e-3) -> TwdcResult:
    """Time warping under dynamic constraints.

    Each series is deconvolved into an input estimate (smoothness weight
    ``lam``); then the common input ``u0`` and the warps that carry each
    input estimate onto it are found by alternating a curvature-penalized
    DP (weight ``mu``) with the closed-form update of ``u0``.  The returned
    cost is the objective

        sum_j deconvolution residual_j + sum_j sum_path |u_j(t) - u0(w)|^2
        + mu * sum_j curvature(path_j)

    after at most ``n_outer`` rounds.  Both rounds minimize it exactly, so
    the trace never increases.  The alternation is started once from each
    input estimate and the lower result is kept, which makes the cost
    symmetric in ``x`` and ``y``.
    """
    if lam < 0 or mu < 0:
        raise InvalidArgument("lam and mu must be >= 0")
    x, y = as_series(x, "x"), as_series(y, "y")
    us, base = [], 0.0
    for s in (x, y):
        u, res = deconvolve(model, s, lam, ridge)
        us.append(u)
        base += res
    # alternation from each input estimate as the initial common input; the
    # lower final objective wins, which keeps the cost symmetric
    runs = [_alternate(us, u, base, mu, n_outer) for u in us]
    trace, paths, u0 = min(runs, key=lambda r: r[0][-1])
    tol = 1e-9 * max(1.0, abs(trace[0]))
    if any(b > a + tol for a, b in zip(trace, trace[1:])):
        raise AssertionError(f"TWDC objective increased: {trace}")
    return TwdcResult(trace[-1], trace, paths, u0, us)


__all__ = ["STEPS", "IllConditioned", "as_series", "local_cost", "dtw", "path_cost", "check_path",
           "LtiModel", "warp_input", "simulate", "deconvolve", "curvature", "TwdcResult", "twdc"]
