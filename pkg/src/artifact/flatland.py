"""Cartoon flatland: recognition error of passive and active 1-D observers.

A radiance is ``x(t) = sum_k alpha_k b_k(t)`` over a fixed basis of bumps.
A sensor at scale ``s`` with pixel pitch ``eps`` reads

    y_i = (x * N(0, (s eps)^2))(s t_i) + n_i,   n_i ~ N(0, sigma_n^2),

and the Bayes exponential-loss error between the two classes is the
Bhattacharyya coefficient of the reading distributions, estimated by Monte
Carlo with kernel density estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr
from scipy.stats import gaussian_kde

from .imgcore import InvalidArgument

# with 1e4 samples the estimate for identical classes falls short of 1 by
# about 0.04 at 4 dimensions and more beyond, so readings are pooled to 4
MAX_DIM = 4
N_BOOT = 200


@dataclass(frozen=True)
class Basis:
    """Unit-height bumps: Gaussians of std ``width`` or boxes of half-width
    ``width`` centred at ``centers``."""

    centers: tuple
    width: float
    kind: str = "gauss"

    def __post_init__(self):
        if self.kind not in ("gauss", "box"):
            raise InvalidArgument(f"unknown basis kind {self.kind!r}")
        if not self.width > 0 or not self.centers:
            raise InvalidArgument("basis needs centers and a positive width")

    @property
    def size(self) -> int:
        return len(self.centers)

    def eval(self, t) -> np.ndarray:
        d = np.asarray(t, dtype=np.float64)[:, None] - np.asarray(self.centers)[None]
        if self.kind == "gauss":
            return np.exp(-d ** 2 / (2 * self.width ** 2))
        return (np.abs(d) <= self.width).astype(np.float64)

    def blurred(self, tau, sd: float) -> np.ndarray:
        """Basis convolved with a unit-mass Gaussian of std ``sd``, at ``tau``."""
        if sd <= 0:
            return self.eval(tau)
        d = np.asarray(tau, dtype=np.float64)[:, None] - np.asarray(self.centers)[None]
        w = self.width
        if self.kind == "gauss":
            v = w * w + sd * sd
            return w / math.sqrt(v) * np.exp(-d ** 2 / (2 * v))
        return ndtr((w - d) / sd) - ndtr((-w - d) / sd)


@dataclass(frozen=True)
class FlatScene:
    """One class: coefficients uniform in the ball of ``radius`` about ``mean``."""

    basis: Basis
    mean: tuple
    radius: float
    label: int = 1

    def __post_init__(self):
        if len(self.mean) != self.basis.size:
            raise InvalidArgument("mean and basis sizes differ")
        if self.radius < 0 or self.label not in (1, -1):
            raise InvalidArgument("radius must be >= 0 and label +-1")

    def sample_alpha(self, rng) -> np.ndarray:
        k = self.basis.size
        u = rng.standard_normal(k)
        u /= max(np.linalg.norm(u), 1e-300)
        return np.asarray(self.mean, dtype=np.float64) + self.radius * rng.random() ** (1 / k) * u

    def radiance(self, alpha, t) -> np.ndarray:
        return self.basis.eval(t) @ np.asarray(alpha)


def disjoint(a: FlatScene, b: FlatScene) -> bool:
    """Whether the two coefficient balls do not overlap."""
    gap = np.linalg.norm(np.subtract(a.mean, b.mean))
    return bool(gap > a.radius + b.radius)


@dataclass(frozen=True)
class Sensor:
    scale: float
    eps: float
    sites: tuple
    sigma_n: float = 0.0

    def __post_init__(self):
        if not (self.scale >= 1 and self.eps > 0 and self.sigma_n >= 0 and len(self.sites)):
            raise InvalidArgument("sensor needs scale >= 1, eps > 0, sigma_n >= 0, sites")

    @classmethod
    def grid(cls, n: int, eps: float, scale: float = 1.0, sigma_n: float = 0.0) -> "Sensor":
        """``n`` sites at pitch ``eps`` centred on the origin."""
        return cls(scale, eps, tuple((np.arange(n) - (n - 1) / 2) * eps), sigma_n)

    def at(self, scale: float) -> "Sensor":
        return Sensor(scale, self.eps, self.sites, self.sigma_n)


def expected(scene: FlatScene, sensor: Sensor, alpha, shift: float = 0.0) -> np.ndarray:
    """Noiseless readings for coefficients ``alpha``; ``shift`` translates the
    sensor by that many image units."""
    s = sensor.scale
    tau = s * (np.asarray(sensor.sites) + shift)
    return scene.basis.blurred(tau, s * sensor.eps) @ np.asarray(alpha, dtype=np.float64)


def measure(scene: FlatScene, sensor: Sensor, rng, alpha=None, visible=None,
            background: float = 1.0) -> np.ndarray:
    """One reading vector.

    With ``visible = (a, b)`` only pixels whose footprint
    ``[s t_i - s eps, s t_i + s eps]`` lies inside ``[a, b]`` see the scene;
    the others read white background, uniform on ``[-background, background]``.
    """
    alpha = scene.sample_alpha(rng) if alpha is None else np.asarray(alpha, dtype=np.float64)
    y = expected(scene, sensor, alpha)
    y = y + sensor.sigma_n * rng.standard_normal(len(y))
    if visible is not None:
        a, b = visible
        pos = sensor.scale * np.asarray(sensor.sites)
        half = sensor.scale * sensor.eps
        pure = (pos - half >= a) & (pos + half <= b)
        y = np.where(pure, y, rng.uniform(-background, background, len(y)))
    return y


def _active_read(scene, sensor, rng, n_trans, n_rep):
    """Readings at ``n_trans`` sub-pixel shifts ``k eps / n_trans``, each the
    mean of ``n_rep`` noisy reads; the shifts of one site are pooled."""
    alpha = scene.sample_alpha(rng)
    out = np.zeros(len(sensor.sites))
    for k in range(n_trans):
        mu = expected(scene, sensor, alpha, k * sensor.eps / n_trans)
        noise = rng.standard_normal((n_rep, len(mu))).mean(0) if n_rep > 1 else rng.standard_normal(len(mu))
        out += mu + sensor.sigma_n * noise
    return out / n_trans


def trial_rng(seed: int, label: int, trial: int):
    """Independent stream for one Monte-Carlo trial."""
    return np.random.default_rng([seed, 0 if label > 0 else 1, trial])


def _reduce(Y1, Y0, max_dim=MAX_DIM):
    """Average adjacent coordinates down to ``max_dim``, then keep the
    principal directions with non-negligible spread."""
    d = Y1.shape[1]
    if d > max_dim:
        groups = np.array_split(np.arange(d), max_dim)
        Y1 = np.stack([Y1[:, g].mean(1) for g in groups], 1)
        Y0 = np.stack([Y0[:, g].mean(1) for g in groups], 1)
    Z = np.vstack([Y1, Y0])
    c = Z.mean(0)
    _, sv, vt = np.linalg.svd(Z - c, full_matrices=False)
    keep = sv > 1e-9 * max(sv[0], 1e-300) if len(sv) else np.zeros(0, bool)
    if sv.size and sv[0] <= 1e-12 * max(1.0, np.abs(Z).max()):
        keep[:] = False
    P = vt[keep].T
    return (Y1 - c) @ P, (Y0 - c) @ P


@dataclass(frozen=True)
class BhattacharyyaEstimate:
    value: float
    ci: tuple
    n_mc: int
    dim: int = field(default=0)

    @property
    def half_width(self) -> float:
        return (self.ci[1] - self.ci[0]) / 2


def bhattacharyya_from_samples(Y1, Y0, seed: int = 0, n_boot: int = N_BOOT,
                               level: float = 0.95) -> BhattacharyyaEstimate:
    """Estimate ``int sqrt(p1 p0)`` from samples of the two classes.

    Each class is split in halves and Silverman-bandwidth KDEs are fitted on
    the first halves.  With ``m = (p1 + p0) / 2`` the coefficient is
    ``E_m[sqrt(p1 p0) / m]``, an expectation of a quantity in [0, 1]; it is
    averaged over the held-out second halves, which are draws from ``m``.
    The confidence interval is a percentile bootstrap over those points.
    """
    Y1 = np.atleast_2d(np.asarray(Y1, dtype=np.float64).T).T
    Y0 = np.atleast_2d(np.asarray(Y0, dtype=np.float64).T).T
    if Y1.ndim != 2 or Y1.shape[1] != Y0.shape[1]:
        raise InvalidArgument("sample vectors must share one dimension")
    n = min(len(Y1), len(Y0))
    if n < 8:
        raise InvalidArgument("too few samples")
    Z1, Z0 = _reduce(Y1, Y0)
    dim = Z1.shape[1]
    if dim == 0:
        return BhattacharyyaEstimate(1.0, (1.0, 1.0), n, 0)
    h1, h0 = len(Z1) // 2, len(Z0) // 2
    k1 = gaussian_kde(Z1[:h1].T, bw_method="silverman")
    k0 = gaussian_kde(Z0[:h0].T, bw_method="silverman")
    e = np.hstack([Z1[h1:].T, Z0[h0:].T])
    l1, l0 = k1.logpdf(e), k0.logpdf(e)
    # sqrt(p1 p0) / ((p1 + p0) / 2) = 1 / cosh((l1 - l0) / 2)
    r = 1.0 / np.cosh(np.clip(0.5 * (l1 - l0), -700, 700))
    # weight the two halves equally when their sizes differ
    w = np.concatenate([np.full(len(Z1) - h1, 0.5 / (len(Z1) - h1)),
                        np.full(len(Z0) - h0, 0.5 / (len(Z0) - h0))])
    value = float((w * r).sum())
    rng = np.random.default_rng([seed, 2])
    n1 = len(Z1) - h1
    boots = np.empty(n_boot)
    for b in range(n_boot):
        i1 = rng.integers(0, n1, n1)
        i0 = n1 + rng.integers(0, len(r) - n1, len(r) - n1)
        boots[b] = 0.5 * (r[i1].mean() + r[i0].mean())
    lo, hi = np.quantile(boots, [(1 - level) / 2, (1 + level) / 2])
    return BhattacharyyaEstimate(float(value), (float(lo), float(hi)), n, dim)


def bhattacharyya_error(gen_pos, gen_neg, n_mc: int = 10_000, seed: int = 0,
                        n_boot: int = N_BOOT) -> BhattacharyyaEstimate:
    """Monte-Carlo Bhattacharyya coefficient of two sample generators.

    ``gen(rng)`` returns one sample vector; trial ``i`` of class ``c`` uses
    the stream :func:`trial_rng` ``(seed, c, i)``.
    """
    if n_mc < 1000:
        raise InvalidArgument("n_mc must be >= 1000")
    Y1 = np.array([np.atleast_1d(gen_pos(trial_rng(seed, 1, i))) for i in range(n_mc)])
    Y0 = np.array([np.atleast_1d(gen_neg(trial_rng(seed, -1, i))) for i in range(n_mc)])
    return bhattacharyya_from_samples(Y1, Y0, seed, n_boot)


def _pair_error(pos, neg, sensor, n_trans, n_rep, n_mc, seed):
    return bhattacharyya_error(lambda r: _active_read(pos, sensor, r, n_trans, n_rep),
                               lambda r: _active_read(neg, sensor, r, n_trans, n_rep), n_mc, seed)


def passive_curve(pair, sensor: Sensor, scales, n_mc: int = 10_000, seed: int = 0):
    """``[(s, estimate)]`` for a fixed sensor placed at each scale."""
    pos, neg = pair
    return [(float(s), _pair_error(pos, neg, sensor.at(s), 1, 1, n_mc, seed)) for s in scales]


def active_error(pair, sensor: Sensor, budget, n_mc: int = 10_000,
                 seed: int = 0) -> BhattacharyyaEstimate:
    """Error of an observer that can move to scale ``min_s``, translate by
    ``eps / n_trans`` steps and repeat each read ``n_rep`` times, with
    ``budget = (min_s, n_trans, n_rep)``.  The controller uses all of it.

    With ``budget = (s, 1, 1)`` this is the passive observer at ``s``.
    """
    min_s, n_trans, n_rep = budget
    if int(n_trans) < 1 or int(n_rep) < 1:
        raise InvalidArgument("budget counts must be >= 1")
    pos, neg = pair
    return _pair_error(pos, neg, sensor.at(min_s), int(n_trans), int(n_rep), n_mc, seed)


def fisher_information(scene: FlatScene, sensor: Sensor, n: int = 2000, seed: int = 0) -> float:
    """Trace of the empirical Fisher information of one reading vector with
    respect to the coefficients: the mean outer product of the score
    ``B~^T (y - B~ alpha) / sigma_n^2`` over simulated readings."""
    if not sensor.sigma_n > 0:
        raise InvalidArgument("Fisher information needs sigma_n > 0")
    s = sensor.scale
    Bt = scene.basis.blurred(s * np.asarray(sensor.sites), s * sensor.eps)
    total = 0.0
    for i in range(n):
        rng = trial_rng(seed, scene.label, i)
        alpha = scene.sample_alpha(rng)
        y = measure(scene, sensor, rng, alpha)
        score = Bt.T @ (y - Bt @ alpha) / sensor.sigma_n ** 2
        total += float(score @ score)
    return total / n


# --- experiment configuration ------------------------------------------------

DEFAULTS = {
    "kind": "gauss", "centers": "-0.75,-0.25,0.25,0.75", "width": 0.2,
    "mean_pos": "2,0,2,0", "mean_neg": "0,2,0,2", "radius": 0.5,
    "n_sites": 4, "eps": 0.5, "sigma_n": 0.1,
    "scales": "1,4,16,64", "n_mc": 10_000, "seed": 0,
    "active_min_s": 1, "active_n_trans": 4, "active_n_rep": 16,
}


def parse_config(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment.  Unknown keys are rejected."""
    cfg = dict(DEFAULTS)
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgument(f"line {n}: expected key = value")
        k, v = (p.strip() for p in line.split("=", 1))
        if k not in DEFAULTS:
            raise InvalidArgument(f"line {n}: unknown key {k!r}")
        cfg[k] = v
    return cfg


def _floats(v):
    return tuple(float(x) for x in str(v).split(",") if x.strip())


def build(cfg: dict):
    """``(pair, sensor, scales, n_mc, seed, budget)`` from a parsed config."""
    basis = Basis(_floats(cfg["centers"]), float(cfg["width"]), str(cfg["kind"]))
    pos = FlatScene(basis, _floats(cfg["mean_pos"]), float(cfg["radius"]), 1)
    neg = FlatScene(basis, _floats(cfg["mean_neg"]), float(cfg["radius"]), -1)
    sensor = Sensor.grid(int(cfg["n_sites"]), float(cfg["eps"]), 1.0, float(cfg["sigma_n"]))
    budget = (float(cfg["active_min_s"]), int(cfg["active_n_trans"]), int(cfg["active_n_rep"]))
    return (pos, neg), sensor, _floats(cfg["scales"]), int(cfg["n_mc"]), int(cfg["seed"]), budget


def default_pair():
    pair, sensor, *_ = build(DEFAULTS)
    return pair, sensor


__all__ = ["Basis", "FlatScene", "Sensor", "BhattacharyyaEstimate", "disjoint", "expected",
           "measure", "trial_rng", "bhattacharyya_from_samples", "bhattacharyya_error",
           "passive_curve", "active_error", "fisher_information", "parse_config", "build",
           "default_pair", "DEFAULTS"]
