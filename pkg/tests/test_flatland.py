import math

import numpy as np
import pytest
from scipy import integrate

from artifact import flatland as fl
from artifact.imgcore import InvalidArgument


@pytest.fixture(scope="module")
def setup():
    return fl.default_pair()


def quad_blur(basis, alpha, tau, sd):
    """Convolution with the Gaussian kernel by adaptive quadrature."""
    def f(t):
        x = basis.eval(np.array([t])) @ alpha
        return float(x[0]) * math.exp(-(t - tau) ** 2 / (2 * sd * sd)) / (math.sqrt(2 * math.pi) * sd)
    pts = [c + o for c in basis.centers for o in (-basis.width, basis.width)]
    return integrate.quad(f, tau - 12 * sd, tau + 12 * sd, points=[p for p in pts
                          if tau - 12 * sd < p < tau + 12 * sd], limit=400)[0]


class TestMeasure:
    def test_zero_radiance(self, setup):
        (pos, _), sensor = setup
        scene = fl.FlatScene(pos.basis, (0.0,) * 4, 0.0)
        y = fl.measure(scene, fl.Sensor(3.0, sensor.eps, sensor.sites, 0.0), np.random.default_rng(0))
        assert np.array_equal(y, np.zeros(4))

    @pytest.mark.parametrize("kind", ["gauss", "box"])
    def test_closed_form_blur_matches_quadrature(self, kind):
        basis = fl.Basis((-0.5, 0.3), 0.25, kind)
        alpha = np.array([1.0, -0.7])
        scene = fl.FlatScene(basis, tuple(alpha), 0.0)
        for s in (1.0, 2.5, 7.0):
            sensor = fl.Sensor.grid(5, 0.3, s)
            y = fl.expected(scene, sensor, alpha)
            ref = [quad_blur(basis, alpha, s * t, s * sensor.eps) for t in sensor.sites]
            assert np.allclose(y, ref, atol=1e-8)

    def test_fine_pixels_sample_the_radiance(self, setup):
        (pos, _), _ = setup
        sensor = fl.Sensor(1.0, 1e-3, tuple(np.linspace(-1, 1, 9)), 0.0)
        alpha = pos.sample_alpha(np.random.default_rng(1))
        y = fl.measure(pos, sensor, np.random.default_rng(2), alpha)
        assert np.abs(y - pos.radiance(alpha, sensor.sites)).max() < 1e-2

    def test_resolution_loss(self):
        # a box much narrower than the blur: the readings barely vary and
        # sit near the blurred box value
        basis = fl.Basis((0.0,), 0.05, "box")
        scene = fl.FlatScene(basis, (1.0,), 0.0)
        sigma_n = 0.05
        sensor = fl.Sensor(1.0, 2.0, (-0.1, 0.0, 0.1), sigma_n)
        y0 = fl.expected(scene, sensor, [1.0])
        analytic = math.erf(0.05 / (2.0 * math.sqrt(2)))
        assert np.ptp(y0) < 2 * sigma_n
        assert abs(y0[1] - analytic) < 1e-12

    def test_occluded_pixels_are_background(self, setup):
        (pos, _), sensor = setup
        rng = np.random.default_rng(0)
        alpha = pos.sample_alpha(rng)
        clean = fl.expected(pos, sensor, alpha)
        y = fl.measure(pos, fl.Sensor(1.0, sensor.eps, sensor.sites, 0.0), rng, alpha,
                       visible=(-1.5, 0.3), background=10.0)
        # footprints of the sites at -0.75 and -0.25 lie inside, the others do not
        assert np.allclose(y[:2], clean[:2])
        assert not np.allclose(y[2:], clean[2:])

    def test_alpha_in_ball(self, setup):
        (pos, _), _ = setup
        rng = np.random.default_rng(0)
        for _ in range(200):
            assert np.linalg.norm(pos.sample_alpha(rng) - np.array(pos.mean)) <= pos.radius + 1e-12

    def test_validation(self):
        with pytest.raises(InvalidArgument):
            fl.Sensor(0.5, 1.0, (0.0,))
        with pytest.raises(InvalidArgument):
            fl.Basis((0.0,), 0.0)
        with pytest.raises(InvalidArgument):
            fl.FlatScene(fl.Basis((0.0,), 1.0), (0.0, 1.0), 0.1)


class TestBhattacharyya:
    def test_gaussian_closed_form(self):
        r = fl.bhattacharyya_error(lambda g: g.standard_normal(), lambda g: 2 + g.standard_normal(),
                                   n_mc=10_000)
        assert abs(r.value - math.exp(-0.5)) < 0.05
        assert r.half_width <= 0.05

    def test_identical(self):
        gen = lambda g: g.standard_normal(3)
        r = fl.bhattacharyya_error(gen, gen, n_mc=4000, seed=1)
        assert abs(r.value - 1) < 0.05

    def test_disjoint_noiseless(self, setup):
        (pos, neg), sensor = setup
        quiet = fl.Sensor(1.0, sensor.eps, sensor.sites, 1e-4)
        assert fl.disjoint(pos, neg)
        r = fl.bhattacharyya_error(lambda g: fl.measure(pos, quiet, g),
                                   lambda g: fl.measure(neg, quiet, g), n_mc=2000)
        assert r.value <= 0.05

    def test_degenerate_samples(self):
        r = fl.bhattacharyya_from_samples(np.ones((100, 3)), np.ones((100, 3)))
        assert r.value == 1.0 and r.dim == 0

    def test_deterministic(self):
        gen = lambda g: g.standard_normal(2)
        a = fl.bhattacharyya_error(gen, gen, n_mc=1000, seed=5)
        b = fl.bhattacharyya_error(gen, gen, n_mc=1000, seed=5)
        assert a == b

    def test_needs_enough_trials(self):
        with pytest.raises(InvalidArgument):
            fl.bhattacharyya_error(np.zeros, np.zeros, n_mc=10)


class TestPropositions:
    def test_passive_curve(self, setup):
        pair, sensor = setup
        curve = fl.passive_curve(pair, sensor, [1, 4, 64], n_mc=4000)
        vals = [e.value for _, e in curve]
        assert vals[0] <= 0.2
        assert vals[-1] >= 0.9
        assert vals[0] < vals[1] < vals[2] + 0.02

    def test_identical_classes_at_every_scale(self, setup):
        (pos, _), sensor = setup
        twin = fl.FlatScene(pos.basis, pos.mean, pos.radius, -1)
        for _, e in fl.passive_curve((pos, twin), sensor, [1, 16], n_mc=2000):
            assert abs(e.value - 1) < 0.05

    def test_zero_budget_is_passive(self, setup):
        pair, sensor = setup
        passive = fl.passive_curve(pair, sensor, [16], n_mc=2000)[0][1]
        active = fl.active_error(pair, sensor, (16, 1, 1), n_mc=2000)
        assert active.ci[0] - 1e-12 <= passive.value <= active.ci[1] + 1e-12

    def test_generous_budget(self, setup):
        pair, sensor = setup
        assert fl.active_error(pair, sensor, (1, 4, 16), n_mc=2000).value <= 0.05

    def test_repeats_monotone(self, setup):
        pair, sensor = setup
        vals = [fl.active_error(pair, sensor, (4, 1, r), n_mc=2000).value for r in (1, 2, 4)]
        assert vals[0] >= vals[1] >= vals[2]

    def test_separation_monotone(self, setup):
        (pos, _), sensor = setup
        vals = []
        for k in (0.5, 1.0, 2.0):
            pair = (fl.FlatScene(pos.basis, (2 * k, 0, 2 * k, 0), 0.5, 1),
                    fl.FlatScene(pos.basis, (0, 2 * k, 0, 2 * k), 0.5, -1))
            vals.append(fl.active_error(pair, sensor, (2, 1, 1), n_mc=2000).value)
        assert vals[0] >= vals[1] >= vals[2]

    def test_active_not_worse_than_passive(self, setup):
        pair, sensor = setup
        wins = 0
        cases = [(s, seed) for s in (2, 4, 8, 16) for seed in range(5)]
        for s, seed in cases:
            p = fl.active_error(pair, sensor, (s, 1, 1), n_mc=1000, seed=seed)
            a = fl.active_error(pair, sensor, (1, 2, 4), n_mc=1000, seed=seed)
            wins += a.value <= p.value
        assert wins >= 0.95 * len(cases)

    def test_fisher_information_decreases(self, setup):
        (pos, _), sensor = setup
        fi = [fl.fisher_information(pos, sensor.at(s), n=500) for s in (1, 4, 16)]
        assert fi[0] > fi[1] > fi[2]


class TestConfig:
    def test_parse(self):
        cfg = fl.parse_config("# comment\nsigma_n = 0.2\nscales = 1, 2\n")
        pair, sensor, scales, n_mc, seed, budget = fl.build(cfg)
        assert sensor.sigma_n == 0.2 and scales == (1.0, 2.0)
        assert n_mc == 10_000 and seed == 0 and budget == (1.0, 4, 16)

    def test_unknown_key(self):
        with pytest.raises(InvalidArgument):
            fl.parse_config("bogus = 1")
        with pytest.raises(InvalidArgument):
            fl.parse_config("no equals sign")
