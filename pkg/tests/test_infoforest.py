import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artifact import infoforest as inf
from artifact.imgcore import InvalidArgument

import scenes


def toy(seed=0):
    return inf.Data.make(*scenes.square_texture(seed))


def recount_entropy(F, c, j, theta):
    """Entropy score by explicit counting, no numpy reductions."""
    sides = {True: [0, 0], False: [0, 0]}
    for f, k in zip(F[:, j], c):
        sides[bool(f >= theta)][int(k)] += 1
    n = len(c)
    total = 0.0
    for n0, n1 in sides.values():
        m = n0 + n1
        h = -sum(q / m * math.log2(q / m) for q in (n0, n1) if q)
        total += m / n * h
    return total


class TestScores:
    def test_identical_conditionals_give_zero(self):
        # both classes have the same values on both sides of the split
        y = np.tile(np.arange(8.0), 4)
        c = np.repeat([0, 1, 0, 1], 8)
        F = np.repeat([0.0, 0.0, 1.0, 1.0], 8)
        d = inf.Data.make(y, F, c)
        assert inf.kl_score(d, inf.Stump(0, 1.0), bins=8) == pytest.approx(0, abs=1e-6)

    def test_separating_feature_grows_with_coverage(self):
        # inside S the classes are separated in y, outside they are mixed
        rng = np.random.default_rng(0)
        scores = []
        for frac in (0.2, 0.4, 0.6, 0.8):
            n = 1000
            F = (np.arange(n) < frac * n).astype(float)
            c = rng.integers(0, 2, n)
            y = np.where(F > 0, c + rng.uniform(0, 0.5, n), rng.uniform(0, 1.5, n))
            d = inf.Data.make(y, F, c, y_range=(0, 1.5))
            scores.append(inf.kl_score(d, inf.Stump(0, 1.0)))
        assert np.all(np.diff(scores) > 0)

    def test_empty_side_rejected(self):
        d = inf.Data.make([0.0, 1.0], [0.0, 1.0], [0, 1])
        with pytest.raises(InvalidArgument):
            inf.kl_score(d, inf.Stump(0, 5.0))
        with pytest.raises(InvalidArgument):
            inf.entropy_score(d, inf.Stump(0, 0.0))

    def test_symmetric_flag(self):
        d = toy()
        s = inf.Stump(1, 32.0)
        assert inf.kl_score(d, s, symmetric=True) > inf.kl_score(d, s)

    def test_perfect_split_entropy_zero(self):
        d = inf.Data.make([0, 0, 1, 1], [0.0, 1.0, 2.0, 3.0], [0, 0, 1, 1])
        assert inf.entropy_score(d, inf.Stump(0, 2.0)) == 0.0

    def test_label_independent_stump_keeps_entropy(self):
        c = np.array([0, 1, 1, 0, 0, 1, 1, 0])
        F = np.array([0, 0, 0, 0, 1, 1, 1, 1.0])
        d = inf.Data.make(np.zeros(8), F, c)
        assert inf.entropy_score(d, inf.Stump(0, 1.0)) == pytest.approx(inf.label_entropy(c))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000))
    def test_entropy_recount_and_bound(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 40))
        F = rng.integers(0, 5, (n, 2)).astype(float)
        c = rng.integers(0, 2, n)
        d = inf.Data.make(rng.random(n), F, c)
        for s in inf.candidate_stumps(d, np.arange(n)):
            e = inf.entropy_score(d, s)
            assert e == pytest.approx(recount_entropy(F, c, s.feature, s.theta), abs=1e-12)
            assert e <= inf.label_entropy(c) + 1e-9

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_order_invariance(self, seed):
        rng = np.random.default_rng(seed)
        n = 50
        y, F, c = rng.random(n), rng.random((n, 2)), rng.integers(0, 2, n)
        p = rng.permutation(n)
        a = inf.Data.make(y, F, c)
        b = inf.Data.make(y[p], F[p], c[p])
        for s in inf.candidate_stumps(a, np.arange(n)):
            assert inf.kl_score(a, s) == inf.kl_score(b, s)
            assert inf.entropy_score(a, s) == inf.entropy_score(b, s)

    def test_thresholds_in_range(self):
        d = toy()
        for s in inf.candidate_stumps(d, np.arange(len(d.y))):
            col = d.F[:, s.feature]
            assert col.min() < s.theta <= col.max()


class TestToy:
    def test_global_vs_windowed(self):
        d = toy()
        idx = np.arange(len(d.y))
        stumps = inf.candidate_stumps(d, idx)
        intensity = max(inf.kl_score(d, s) for s in stumps if s.feature == 0)
        location = max(inf.kl_score(d, s) for s in stumps if s.feature > 0)
        assert intensity < 0.05
        assert location > 0.5

    def test_kl_phase_then_entropy(self):
        d = toy()
        tree = inf.grow(d, tau=1.0, max_depth=6)
        ns = inf.nodes(tree)
        assert ns[0][0] == "kl" and ns[0][1] in (1, 2)
        assert all(m == "entropy" for m, _, _ in ns[1:])
        y, F, c = scenes.square_texture(1)
        assert (inf.predict(tree, F) == c).mean() >= 0.9


class TestGrow:
    @pytest.mark.parametrize("seed", range(4))
    def test_tau_zero_is_entropy_growth(self, seed):
        rng = np.random.default_rng(seed)
        n = 200
        F = rng.random((n, 3))
        c = (F[:, 0] + 0.3 * rng.standard_normal(n) > 0.5).astype(int)
        d = inf.Data.make(rng.random(n), F, c)
        a = json.dumps(inf.grow(d, 0.0, max_depth=5))
        b = json.dumps(inf.grow_entropy(d, max_depth=5))
        assert a == b

    def test_toy_tau_zero(self):
        d = toy()
        assert inf.grow(d, 0.0, 4) == inf.grow_entropy(d, 4)

    def test_separable_1d(self):
        x = np.arange(20.0)
        c = (x >= 10).astype(int)
        tree = inf.grow(inf.Data.make(x, x, c), tau=0.0, max_depth=5)
        assert len(inf.nodes(tree)) == 1
        assert {tree["ge"]["posterior"], tree["lt"]["posterior"]} == {0.0, 1.0}

    def test_depth_cap(self):
        rng = np.random.default_rng(3)
        d = inf.Data.make(rng.random(300), rng.random((300, 2)), rng.integers(0, 2, 300))

        def depth(t):
            return 0 if "posterior" in t else 1 + max(depth(t["ge"]), depth(t["lt"]))

        assert depth(inf.grow(d, 0.5, max_depth=3)) <= 3

    def test_json_roundtrip(self):
        tree = inf.grow(toy(), 1.0, 3)
        assert json.loads(json.dumps(tree)) == tree

    def test_bad_inputs(self):
        with pytest.raises(InvalidArgument):
            inf.Data.make([], np.zeros((0, 1)), [])
        with pytest.raises(InvalidArgument):
            inf.Data.make([1.0], [np.nan], [0])
        with pytest.raises(InvalidArgument):
            inf.Data.make([1.0], [1.0], [2])
        with pytest.raises(InvalidArgument):
            inf.grow(inf.Data.make([1.0], [1.0], [0]), tau=-1)
