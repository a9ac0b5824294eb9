import json
import math

import numpy as np
import pytest

from artifact import track
from artifact.detect import Frame
from artifact.imgcore import InvalidArgument

import scenes


def blobs(*specs, n=64):
    y, x = np.mgrid[0:n, 0:n].astype(float)
    return sum(np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * s * s)) for cx, cy, s in specs)


class TestProperlySampled:
    def test_identical(self):
        a = scenes.texture(1, (40, 40))
        assert all(track.properly_sampled(a, a, s) for s in (0.0, 0.5, 1.0, 2.0, 4.0))

    def test_deleted_blob(self):
        a = blobs((24, 32, 3), (42, 30, 3))
        assert not track.properly_sampled(a, blobs((24, 32, 3)), 3.0)

    def test_shift_and_new_blob(self):
        a = blobs((24, 32, 3), (42, 30, 3))
        b = blobs((26, 32, 3), (44, 30, 3))
        assert track.properly_sampled(a, b, 3.0)
        assert not track.properly_sampled(a, b + blobs((34, 50, 3)), 3.0)

    def test_region_and_moving_region(self):
        a = blobs((20, 20, 2), (44, 44, 2))
        b = blobs((24, 20, 2), (44, 44, 2))
        # the fixed window sees the blob move off centre, the moved window does not
        assert track.properly_sampled(a, b, 2.0, (10, 10, 31, 31), (14, 10, 35, 31))
        assert track.properly_sampled(a, b, 2.0, (34, 34, 55, 55))

    def test_size_mismatch(self):
        with pytest.raises(InvalidArgument):
            track.properly_sampled(np.zeros((8, 8)), np.zeros((8, 9)), 1.0)

    def test_independent_noise(self):
        fails = 0
        for t in range(20):
            rng = np.random.default_rng(t)
            fails += not track.properly_sampled(rng.random((32, 32)), rng.random((32, 32)), 1.0)
        assert fails >= 19


class TestCoarsestScale:
    SCHEDULE = [0.5 * 2 ** (k / 2) for k in range(12)]

    def test_identical_gives_first(self):
        a = scenes.texture(2, (40, 40))
        assert track.coarsest_proper_scale(a, a, self.SCHEDULE) == self.SCHEDULE[0]

    def test_large_shift_needs_coarser_scale(self):
        tex = scenes.texture(0, (96, 160))
        window = (16, 16, 80, 80)
        found = [track.coarsest_proper_scale(tex[:, 40:136], tex[:, 40 - d:136 - d],
                                             self.SCHEDULE, window) for d in (0, 2, 8)]
        assert found[0] == self.SCHEDULE[0]
        assert found[1] > self.SCHEDULE[0]
        assert found[2] is not None and found[2] >= found[1]

    def test_noise_has_none(self):
        none = 0
        for t in range(10):
            rng = np.random.default_rng(50 + t)
            none += track.coarsest_proper_scale(rng.random((32, 32)), rng.random((32, 32)),
                                                [0.5, 1.0, 1.5]) is None
        assert none >= 9

    def test_schedule_must_increase(self):
        with pytest.raises(InvalidArgument):
            track.coarsest_proper_scale(np.zeros((4, 4)), np.zeros((4, 4)), [1.0, 1.0])


class TestSelectionTree:
    def test_parent_links(self):
        frames = [Frame(10, 10, 4.0, "LoG"), Frame(12, 10, 2.0, "LoG"),
                  Frame(12.5, 10, 1.0, "LoG"), Frame(40, 40, 1.0, "LoG")]
        tree = track.build_selection_tree(frames)
        assert tree.parent == [-1, 0, 1, -1]
        assert tree.children(0) == [1]

    def test_invariants_on_detections(self):
        cfg = track.TSTConfig()
        frames = cfg.detect(cfg.scale_space(scenes.blob_field(3)))
        tree = track.build_selection_tree(frames)
        for i, p in enumerate(tree.parent):
            seen = {i}
            while p >= 0:
                assert tree.frames[p].sigma > frames[i].sigma
                assert p not in seen
                seen.add(p)
                p = tree.parent[p]


class TestTrack:
    def test_times_increase(self):
        tr = track.Track(0)
        tr.add(0, Frame(1, 1, 1, "LoG"))
        with pytest.raises(InvalidArgument):
            tr.add(0, Frame(1, 1, 1, "LoG"))

    def test_broken_is_final(self):
        tr = track.Track(0)
        tr.add(0, Frame(1, 1, 1, "LoG"))
        tr.break_(1, "occlusion")
        with pytest.raises(InvalidArgument):
            tr.add(2, Frame(1, 1, 1, "LoG"))
        with pytest.raises(InvalidArgument):
            track.Track(1).break_(1, "lost")

    def test_records(self):
        tr = track.Track(3)
        tr.add(0, Frame(1.5, 2.0, 1.0, "LoG"))
        tr.break_(1, "out-of-frame")
        recs = tr.records()
        assert [r["status"] for r in recs] == ["live", "broken"]
        assert set(recs[0]) == {"track_id", "t", "x", "y", "sigma", "theta", "status"}
        assert json.loads(json.dumps(recs))[1]["reason"] == "out-of-frame"


class TestTST:
    def test_static_sequence(self):
        img = scenes.blob_field(4)
        tracks = track.track_sequence([img] * 4)
        assert tracks and all(t.status == "live" for t in tracks)
        for t in tracks:
            assert np.allclose([d[:2] for d in t.displacements], 0.0, atol=1e-9)

    @pytest.mark.parametrize("seed", [0, 1])
    def test_global_shift(self, seed):
        tracks = track.track_sequence(scenes.shift_sequence(seed, n_frames=6))
        good = [t for t in tracks if t.status == "live"
                and all(math.hypot(d[0] - 3, d[1]) <= 0.3 for d in t.displacements)]
        assert len(good) >= 0.9 * len(tracks)
        # displacements are reported at the scale of the frame they came from
        for t in tracks:
            for f, d in zip(t.frames, t.displacements):
                assert d[2] == f.sigma

    def test_scale_consistency(self):
        tracks = track.track_sequence(scenes.shift_sequence(2, n_frames=4))
        est = np.array([d[:2] for t in tracks if t.status == "live" for d in t.displacements])
        assert len(est) and np.ptp(est[:, 0]) < 0.5 and np.ptp(est[:, 1]) < 0.5

    def test_no_correspondence_without_proper_sampling(self):
        a = scenes.blob_field(5)
        b = np.random.default_rng(5).random(a.shape)
        tracks = track.track_sequence([a, b])
        assert all(t.status == "broken" for t in tracks)

    @pytest.mark.parametrize("seed", range(4))
    def test_scripted_occlusion(self, seed):
        frames, (bx, by), k = scenes.occlusion_script(seed)
        tracks = track.track_sequence(frames)
        target = min(tracks, key=lambda t: math.hypot(t.frames[0].x - bx, t.frames[0].y - by))
        assert (target.break_time, target.break_reason) == (k, "topology-change")

    def test_out_of_frame(self):
        seq = [scenes.blob_field(6, n=64, k=1, dx=4.0 * t, margin=12) for t in range(12)]
        tracks = track.track_sequence(seq)
        assert any(t.break_reason == "out-of-frame" for t in tracks)
