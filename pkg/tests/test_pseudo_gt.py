import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import STANDING, make_pose
from posefuse.errors import BoxUndefined, InsufficientData, InvalidDistribution, Unassignable
from posefuse.pseudo_gt import (
    AnchorCodebook,
    assign_anchor_class,
    classification_loss,
    derive_box,
    export_training_targets,
    fit_anchor_codebook,
    kmeans,
    normalize_pose_for_similarity,
)
from posefuse.skeleton import MISSING, AggregatedPose, Keypoint, PoseSequence


class TestBox:
    def test_expanded_example(self):
        box = derive_box(make_pose([(10, 20), (110, 220), (50, 100)]), 0.10)
        assert box.as_list() == pytest.approx([5, 10, 115, 230], abs=1e-12)

    def test_no_expansion(self):
        assert derive_box(make_pose([(10, 20), (110, 220)]), 0.0).as_list() == [10, 20, 110, 220]

    def test_clipped(self):
        box = derive_box(make_pose([(0, 0), (640, 480)]), 0.10, image_size=(640, 480))
        assert box.as_list() == [0, 0, 640, 480]

    def test_degenerate_axis_padded(self):
        box = derive_box(make_pose([(10, 50), (10, 80)]), 0.0)
        assert (box.x_min, box.x_max) == (9.5, 10.5)

    def test_too_few_joints(self):
        with pytest.raises(BoxUndefined):
            derive_box(make_pose([(1, 1)]))

    @settings(max_examples=300)
    @given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=2, max_size=13),
           st.floats(0, 1))
    def test_contains_valid_joints(self, pts, expand):
        pose = make_pose(pts)
        box = derive_box(pose, expand)
        assert all(box.contains(kp, tol=1e-9) for kp in pose if kp.valid)


class TestNormalization:
    def test_translation_and_scale(self):
        pose = make_pose([(5, 10), (25, 110), (15, 60)])
        norm = normalize_pose_for_similarity(pose)
        assert [(kp.x, kp.y) for kp in norm[:3]] == [(0, 0), (0.2, 1.0), (0.1, 0.5)]
        assert not norm[3].valid

    def test_idempotent(self, standing):
        once = normalize_pose_for_similarity(standing)
        assert normalize_pose_for_similarity(once) == once

    def test_translation_removed(self, standing):
        moved = tuple(kp.translated(37.5, -12.25) for kp in standing)
        a = normalize_pose_for_similarity(standing)
        b = normalize_pose_for_similarity(moved)
        for p, q in zip(a, b):
            assert (p.x, p.y) == pytest.approx((q.x, q.y), abs=1e-12)


def _cluster_data():
    rng = np.random.default_rng(0)
    offsets = np.array([[-1, -1], [1, -1], [-1, 1], [1, 1]]) * 0.01
    c0, c1 = rng.normal(0, 1, 26), rng.normal(5, 1, 26)
    X = []
    for c in (c0, c1):
        for o in offsets:
            X.append(c + np.tile(o, 13))
    return np.array(X), c0, c1


class TestKMeans:
    def test_two_clusters_recover_centroids(self):
        X, _, _ = _cluster_data()
        centers, labels, _ = kmeans(X, 2, seed=3)
        assert len(set(labels[:4])) == 1 and len(set(labels[4:])) == 1
        # brute-force centroids over the known membership
        truth = [X[:4].mean(axis=0), X[4:].mean(axis=0)]
        for g, t in zip(sorted(centers, key=lambda c: c.mean()), sorted(truth, key=lambda c: c.mean())):
            np.testing.assert_allclose(g, t, atol=1e-6)

    def test_single_cluster_is_mean(self):
        X, *_ = _cluster_data()
        centers, _, _ = kmeans(X, 1)
        np.testing.assert_allclose(centers[0], X.mean(axis=0), atol=1e-12)

    def test_identical_points_two_anchors(self):
        X = np.tile(np.arange(26.0), (5, 1))
        centers, _, _ = kmeans(X, 2)
        np.testing.assert_array_equal(centers[0], X[0])
        np.testing.assert_array_equal(centers[1], X[0])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 1000), st.integers(1, 6))
    def test_objective_non_increasing(self, seed, k):
        X = np.random.default_rng(seed).normal(size=(40, 26))
        _, _, hist = kmeans(X, k, seed=seed)
        assert all(b <= a + 1e-9 * max(1.0, a) for a, b in zip(hist, hist[1:]))

    def test_insufficient(self):
        with pytest.raises(InsufficientData):
            kmeans(np.zeros((2, 26)), 3)


def _poses_near(base, n, scale, rng):
    return [tuple(Keypoint(x + rng.normal(0, scale), y + rng.normal(0, scale)) for x, y in base) for _ in range(n)]


class TestCodebook:
    def test_fit_skips_incomplete(self, standing):
        incomplete = (MISSING,) + standing[1:]
        norm = normalize_pose_for_similarity(standing)
        with pytest.raises(InsufficientData):
            fit_anchor_codebook([norm, incomplete], B=2)
        book = fit_anchor_codebook([norm, incomplete], B=1)
        assert book.B == 1

    def test_deterministic_bytes(self):
        rng = np.random.default_rng(4)
        poses = [normalize_pose_for_similarity(p) for p in _poses_near(STANDING, 60, 8.0, rng)]
        a = fit_anchor_codebook(poses, B=4, seed=11).to_json()
        b = fit_anchor_codebook(poses, B=4, seed=11).to_json()
        assert a == b
        back = AnchorCodebook.from_json(a)
        assert back.to_json() == a

    def test_assign_exact_match(self):
        anchors = np.random.default_rng(0).uniform(0, 1, (5, 13, 2))
        anchors[3] = [(kp.x, kp.y) for kp in normalize_pose_for_similarity(make_pose(STANDING))]
        cls, s = assign_anchor_class(make_pose(STANDING), AnchorCodebook(anchors))
        assert (cls, s) == (3, 0.0)

    def test_assign_closer_and_tie(self, standing):
        norm = np.array([(kp.x, kp.y) for kp in normalize_pose_for_similarity(standing)])
        book = AnchorCodebook(np.stack([norm + 0.3, norm + 0.1]))
        assert assign_anchor_class(standing, book)[0] == 1
        shift = np.array([0.2, 0.0])
        book = AnchorCodebook(np.stack([norm + shift, norm + 1.0, norm - shift]))
        cls, s = assign_anchor_class(standing, book)
        assert cls == 0 and s == pytest.approx(0.2)

    def test_assign_invariances(self, standing):
        rng = np.random.default_rng(2)
        book = AnchorCodebook(rng.uniform(0, 0.8, (6, 13, 2)))
        base = assign_anchor_class(standing, book)
        moved = tuple(kp.translated(120.0, -33.0) for kp in standing)
        assert assign_anchor_class(moved, book) == (base[0], pytest.approx(base[1], abs=1e-12))
        scaled = tuple(Keypoint(kp.x * 2.5, kp.y * 2.5) for kp in standing)
        assert assign_anchor_class(scaled, book)[0] == base[0]

    def test_unassignable(self):
        with pytest.raises(Unassignable):
            assign_anchor_class(make_pose([(1, 1)]), AnchorCodebook(np.zeros((1, 13, 2))))


class TestLoss:
    @pytest.mark.parametrize("p,want", [(1.0, 0.0), (0.5, math.log(2)), (math.exp(-1), 1.0)])
    def test_values(self, p, want):
        u = [p, 1 - p] if p < 1 else [1.0, 0.0]
        assert classification_loss(u, 0) == pytest.approx(want, abs=1e-12)

    def test_zero_probability(self):
        assert classification_loss([1.0, 0.0], 1) == math.inf

    @pytest.mark.parametrize("u", [[0.5, 0.6], [-0.1, 1.1], [], [math.nan, 1.0]])
    def test_invalid(self, u):
        with pytest.raises(InvalidDistribution):
            classification_loss(u, 0)

    @given(st.floats(1e-9, 1.0), st.floats(1e-9, 1.0))
    def test_strictly_decreasing(self, a, b):
        if a == b:
            return
        lo, hi = sorted((a, b))
        assert classification_loss([hi, 1 - hi], 0) < classification_loss([lo, 1 - lo], 0)


class TestExport:
    def _seq(self, standing, confs):
        frames = tuple(AggregatedPose(t, standing, c, (), c >= 0.18) for t, c in enumerate(confs))
        return PoseSequence(0, frames, "v1", (640, 480))

    def test_counts_retained_only(self, standing):
        seq = self._seq(standing, [0.9, 0.1, 0.5, 0.05, 0.3])
        book = fit_anchor_codebook([normalize_pose_for_similarity(standing)], B=1)
        lines = export_training_targets([seq], book, gamma=0.18).splitlines()
        header = json.loads(lines[0])["header"]
        assert header["B"] == 1 and header["loss"]["L_loc"].startswith("EXTERNAL")
        records = [json.loads(x) for x in lines[1:]]
        assert [r["t"] for r in records] == [0, 2, 4]
        assert set(records[0]) == {"video", "person", "t", "box", "class", "conf"}

    def test_empty(self):
        book = AnchorCodebook(np.zeros((1, 13, 2)))
        text = export_training_targets([], book)
        assert len(text.splitlines()) == 1 and "header" in json.loads(text)

    def test_deterministic(self, standing):
        rng = np.random.default_rng(0)
        seqs = [PoseSequence(p, tuple(AggregatedPose(t, pose, 0.5) for t, pose in enumerate(_poses_near(STANDING, 5, 5, rng))), f"v{p % 2}")
                for p in (3, 1, 2)]
        book = fit_anchor_codebook([normalize_pose_for_similarity(f.joints) for s in seqs for f in s.frames], B=3)
        a = export_training_targets(seqs, book)
        assert a == export_training_targets(list(reversed(seqs)), book)
        keys = [(r["video"], r["person"], r["t"]) for r in map(json.loads, a.splitlines()[1:])]
        assert keys == sorted(keys)
