"""
This module contains tests for world generation, streaming and evaluation.

It includes tests for:
- Deterministic worlds, planned forward/reverse overlaps and infeasible plans
- The odometry drift random walk
- Stream interleaving
- Metrics on perfect, empty and partially matched results
"""

import math
from collections import Counter

import numpy as np
import pytest

from .cluster import Partition
from .dataset import MergeResult
from .errors import InfeasibleOverlapPlan, InvalidParameter, KeyMismatch
from .geometry import IDENTITY, Pose2, between, wrap_angle
from .lcd import LoopCandidate, LoopClosure
from .models import OverlapPlanEntry, WorldSpec
from .sim import (default_overlap_plan, drift_odometry, evaluate, generate_world,
                  place_recognition_recall, stream)


def plan(*entries):
    return [OverlapPlanEntry(seg_a=a, seg_b=b, overlap_length=length, direction=direction)
            for a, b, length, direction in entries]


def truth_result(truth, overlaps=None):
    """A result that matches every true overlap pair with exact relative poses."""
    closures = []
    for overlap in (truth.overlaps if overlaps is None else overlaps):
        for k_a, k_b in overlap.pairs:
            pose_a = truth.poses[(overlap.seg_a, k_a)]
            pose_b = truth.poses[(overlap.seg_b, k_b)]
            closures.append(LoopClosure(overlap.seg_a, overlap.seg_b, LoopCandidate(k_a, k_b, -3.0),
                                        between(pose_a, pose_b), 1.0))
    return MergeResult(closures, Partition.from_groups(truth.partition), dict(truth.poses))


def test_generate_world_is_deterministic():
    """
    Test that the same spec yields identical odometry, descriptors and ground truth.
    """
    spec = WorldSpec(seed=11, n_segments=6, segment_length=300.0, odom_noise=(0.01, 0.001),
                     descriptor_noise=0.05)
    first, truth_a = generate_world(spec)
    second, truth_b = generate_world(spec)
    assert truth_a.to_dict() == truth_b.to_dict()
    for seg_a, seg_b in zip(first, second):
        assert np.array_equal(seg_a.poses, seg_b.poses)
        assert np.array_equal(seg_a.descriptors, seg_b.descriptors)
    other, _ = generate_world(spec.model_copy(update={"seed": 12}))
    assert not np.array_equal(first[0].poses, other[0].poses)


def test_single_segment_zero_noise_odometry_is_ground_truth():
    """
    Test that a lone noise-free segment reports its ground truth as odometry.
    """
    segments, truth = generate_world(WorldSpec(seed=2, n_segments=1, segment_length=500.0))
    assert len(segments) == 1 and len(segments[0]) == 100
    for kf in segments[0].keyframes:
        assert np.allclose(kf.odom.to_array(), truth.poses[(0, kf.index)].to_array(), atol=1e-9)
    assert truth.overlaps == [] and truth.partition == [[0]]


def test_forward_overlap_pairs_share_positions():
    """
    Test that a 200 m overlap yields 40 matched pairs at identical positions and headings.
    """
    spec = WorldSpec(seed=5, n_segments=2, segment_length=1000.0, alias_pairs=0,
                     overlap_plan=plan((0, 1, 200.0, "forward")))
    _, truth = generate_world(spec)
    (overlap,) = truth.overlaps
    assert len(overlap.pairs) == 40
    for k_a, k_b in overlap.pairs:
        pose_a, pose_b = truth.poses[(0, k_a)], truth.poses[(1, k_b)]
        assert math.hypot(pose_a.x - pose_b.x, pose_a.y - pose_b.y) == pytest.approx(0.0, abs=1e-9)
        assert wrap_angle(pose_a.yaw - pose_b.yaw) == pytest.approx(0.0, abs=1e-9)
    assert truth.partition == [[0, 1]]


def test_reverse_overlap_flips_order_and_heading():
    """
    Test that a reverse overlap runs the shared stretch backwards with headings turned by pi.
    """
    spec = WorldSpec(seed=5, n_segments=2, segment_length=300.0, alias_pairs=0,
                     overlap_plan=plan((0, 1, 60.0, "reverse")))
    _, truth = generate_world(spec)
    (overlap,) = truth.overlaps
    assert overlap.direction == "reverse" and len(overlap.pairs) == 12
    parent_rows = [k_a for k_a, _ in overlap.pairs]
    assert parent_rows == sorted(parent_rows, reverse=True)
    for k_a, k_b in overlap.pairs:
        pose_a, pose_b = truth.poses[(0, k_a)], truth.poses[(1, k_b)]
        assert math.hypot(pose_a.x - pose_b.x, pose_a.y - pose_b.y) == pytest.approx(0.0, abs=1e-9)
        assert abs(wrap_angle(pose_a.yaw - pose_b.yaw)) == pytest.approx(math.pi, abs=1e-9)


def test_default_overlap_plan_chains_by_three():
    """
    Test the default plan: forward then reverse overlaps inside each group of three.
    """
    entries = default_overlap_plan(7, 1000.0, 5.0)
    assert [(e.seg_a, e.seg_b, e.direction) for e in entries] == [
        (0, 1, "forward"), (1, 2, "reverse"), (3, 4, "forward"), (4, 5, "reverse")]
    assert entries[0].overlap_length == 200.0 and entries[1].overlap_length == 150.0
    _, truth = generate_world(WorldSpec(seed=1, n_segments=6, segment_length=300.0))
    assert truth.partition == [[0, 1, 2], [3, 4, 5]]


@pytest.mark.parametrize("entries", [
    [(0, 1, 400.0, "forward")],
    [(0, 5, 50.0, "forward")],
    [(0, 2, 50.0, "forward"), (1, 2, 50.0, "forward")],
    [(0, 1, 5.0, "forward")],
    [(0, 1, 150.0, "forward"), (0, 2, 150.0, "reverse")],
])
def test_generate_world_rejects_infeasible_plans(entries):
    """
    Test overlong, out-of-range, doubly-derived, too-short and crowded overlaps.
    """
    spec = WorldSpec(n_segments=3, segment_length=300.0, overlap_plan=plan(*entries))
    with pytest.raises(InfeasibleOverlapPlan):
        generate_world(spec)


def test_aliases_share_descriptors_across_components():
    """
    Test that planted aliasing decoys get identical descriptors in different components.
    """
    spec = WorldSpec(seed=4, n_segments=6, segment_length=300.0, alias_pairs=2)
    segments, truth = generate_world(spec)
    assert len(truth.aliases) == 2
    component_of = {a: n for n, comp in enumerate(truth.partition) for a in comp}
    for (s_a, k_a), (s_b, k_b) in truth.aliases:
        assert component_of[s_a] != component_of[s_b]
        assert np.array_equal(segments[s_a].keyframes[k_a].descriptor,
                              segments[s_b].keyframes[k_b].descriptor)


def test_polar_histogram_worlds_carry_clouds():
    """
    Test that the polar-histogram source attaches local point clouds to every keyframe.
    """
    spec = WorldSpec(seed=6, n_segments=2, segment_length=100.0, alias_pairs=0,
                     descriptor_source="polar_histogram",
                     overlap_plan=plan((0, 1, 30.0, "forward")))
    segments, _ = generate_world(spec)
    assert all(seg.has_clouds for seg in segments)
    assert segments[0].descriptors.shape == (20, spec.bins_radial * spec.bins_angular)


def test_drift_odometry_random_walk_band():
    """
    Test that 1 km of translation noise 0.01 per sqrt(m) drifts by about 0.01 * sqrt(2 * 1000).
    """
    gt = [Pose2(5.0 * k, 0.0, 0.0) for k in range(201)]
    finals = []
    for seed in range(300):
        odom = drift_odometry(gt, 0.01, 0.0, np.random.default_rng(seed))
        finals.append((odom[-1].x - gt[-1].x, odom[-1].y - gt[-1].y))
    rms = math.sqrt(np.mean(np.sum(np.square(finals), axis=1)))
    assert 0.85 <= rms / (0.01 * math.sqrt(2 * 1000.0)) <= 1.15
    assert drift_odometry([], 0.01, 0.0, np.random.default_rng(0)) == []
    assert drift_odometry(gt[:1], 0.01, 0.0, np.random.default_rng(0)) == [IDENTITY]


def test_stream_interleaves_every_keyframe_once():
    """
    Test the multiset, the per-segment order, batching and seed dependence.
    """
    segments, _ = generate_world(WorldSpec(seed=1, n_segments=3, segment_length=100.0))
    total = sum(len(seg) for seg in segments)
    batches = stream(segments, order_seed=3, batch=7)
    assert all(len(b) == 7 for b in batches[:-1]) and 1 <= len(batches[-1]) <= 7
    flat = [(kf.segment, kf.index) for b in batches for kf in b]
    assert len(flat) == total and len(set(flat)) == total
    for seg in segments:
        assert [k for s, k in flat if s == seg.id] == list(range(len(seg)))

    (single,) = stream(segments, order_seed=3, batch=total)
    assert [(kf.segment, kf.index) for kf in single] == flat
    other = [(kf.segment, kf.index) for b in stream(segments, order_seed=4, batch=7) for kf in b]
    assert other != flat and Counter(other) == Counter(flat)
    with pytest.raises(InvalidParameter) as exc:
        stream(segments, order_seed=0, batch=0)
    assert exc.value.module == "sim"


def three_overlap_truth():
    spec = WorldSpec(seed=8, n_segments=4, segment_length=300.0, alias_pairs=0,
                     overlap_plan=plan((0, 1, 50.0, "forward"), (1, 2, 50.0, "reverse"),
                                       (2, 3, 50.0, "forward")))
    return generate_world(spec)[1]


def test_evaluate_perfect_result():
    """
    Test that a result matching ground truth scores perfectly.
    """
    truth = three_overlap_truth()
    report = evaluate(truth_result(truth), truth, top_n=5)
    assert report.recall_at_k == [1.0] * 5
    assert report.precision == 1.0
    assert report.merging_accuracy == 1.0
    assert report.false_merges == 0
    assert report.partition_exact and report.rand_index == 1.0
    assert report.ate_per_cluster["0,1,2,3"] == pytest.approx(0.0, abs=1e-9)
    assert report.pr_curve[0].precision == 1.0 and report.pr_curve[0].recall == 1.0


def test_evaluate_empty_result():
    """
    Test that no closures give zero recall and merging accuracy with a single PR point.
    """
    truth = three_overlap_truth()
    result = MergeResult([], Partition.from_groups([[0], [1], [2], [3]]), {})
    report = evaluate(result, truth, top_n=3)
    assert report.recall_at_k == [0.0, 0.0, 0.0]
    assert report.merging_accuracy == 0.0
    assert report.precision == 1.0
    assert [(p.threshold, p.precision, p.recall) for p in report.pr_curve] == [(1.0, 1.0, 0.0)]
    assert not report.partition_exact and report.rand_index < 1.0


def test_evaluate_missed_overlap_and_false_merge():
    """
    Test one missed overlap out of three and the count of closures between unrelated segments.
    """
    truth = three_overlap_truth()
    partial = truth_result(truth, truth.overlaps[:2])
    wrong = LoopClosure(0, 3, LoopCandidate(0, 0, -2.5), IDENTITY, 0.4)
    result = MergeResult(partial.closures + [wrong], partial.partition, partial.global_poses)
    report = evaluate(result, truth, top_n=3)
    assert report.merging_accuracy == pytest.approx(2.0 / 3.0)
    assert report.found_overlaps == 2 and report.true_overlaps == 3
    assert report.false_merges == 1
    assert report.precision < 1.0
    assert all(a <= b for a, b in zip(report.recall_at_k, report.recall_at_k[1:]))
    assert [p.threshold for p in report.pr_curve] == [1.0, 0.4]


def test_evaluate_rejects_unknown_keys():
    """
    Test that closures or poses outside the ground truth raise KeyMismatch.
    """
    truth = three_overlap_truth()
    bad = LoopClosure(0, 1, LoopCandidate(999, 0, -3.0), IDENTITY, 1.0)
    with pytest.raises(KeyMismatch):
        evaluate(MergeResult([bad], Partition.from_groups([[0, 1], [2], [3]]), {}), truth)
    with pytest.raises(InvalidParameter):
        evaluate(truth_result(truth), truth, top_n=0)


def test_place_recognition_recall_table():
    """
    Test the retrieval table layout and perfect recall for unchanged viewpoints.
    """
    table = place_recognition_recall(seed=0, n_places=50, displacements=(0.0, 3.0),
                                     yaw_offsets_deg=(0.0, 30.0))
    assert list(table.columns) == ["displacement", "yaw_deg", "recall"]
    assert len(table) == 4
    assert table.iloc[0]["recall"] == 1.0
    assert table["recall"].between(0.0, 1.0).all()
