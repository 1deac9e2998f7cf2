"""
This module contains tests for rough alignment and pose-graph optimization.
"""

import math

import numpy as np
import pytest

from .cluster import Partition
from .errors import DisconnectedCluster, InvalidParameter, KeyMismatch, SingularSystem
from .geometry import IDENTITY, Pose2, between, compose, inverse
from .lcd import LoopCandidate, LoopClosure, detect_loops
from .models import LcdConfig, OptConfig, OverlapPlanEntry, WorldSpec
from .posegraph import (PoseEdge, _EdgeArrays, ate, build_edges, chi2_value, edge_residuals,
                        optimize, optimize_cluster, rough_align)
from .sim import generate_world
from .trajectory import Keyframe, Segment

INFO = np.eye(3)


def make_segment(seg_id, poses):
    seg = Segment(seg_id)
    for k, pose in enumerate(poses):
        seg.append(Keyframe(seg_id, k, pose, np.ones(4)))
    return seg


def square_loop(perturb=0.0):
    """Four poses around a 10 m square with a closing edge; edge 0 is perturbed."""
    truth = [Pose2(0, 0, 0), Pose2(10, 0, math.pi / 2), Pose2(10, 10, math.pi),
             Pose2(0, 10, -math.pi / 2)]
    keys = [(0, k) for k in range(4)]
    edges = []
    for a in range(4):
        b = (a + 1) % 4
        z = between(truth[a], truth[b])
        if a == 0:
            z = Pose2(z.x + perturb, z.y, z.yaw + perturb / 10)
        edges.append(PoseEdge(keys[a], keys[b], z, INFO))
    initial = {keys[0]: truth[0]}
    for a in range(3):
        initial[keys[a + 1]] = compose(initial[keys[a]], edges[a].measurement)
    return keys, truth, initial, edges


def test_jacobians_match_finite_differences():
    """
    Test the analytic residual Jacobians against central differences at random points.
    """
    rng = np.random.default_rng(0)
    h = 1e-6
    for _ in range(100):
        x = np.column_stack([rng.uniform(-10, 10, (2, 2)), rng.uniform(-math.pi, math.pi, 2)])
        z = Pose2(*rng.uniform(-5, 5, 2), rng.uniform(-math.pi, math.pi))
        arrays = _EdgeArrays([PoseEdge((0, 0), (0, 1), z, INFO)], {(0, 0): 0, (0, 1): 1})
        jac_i, jac_j = arrays.jacobians(x)
        for node, jac in ((0, jac_i[0]), (1, jac_j[0])):
            numeric = np.zeros((3, 3))
            for q in range(3):
                up, down = x.copy(), x.copy()
                up[node, q] += h
                down[node, q] -= h
                diff = arrays.residuals(up)[0] - arrays.residuals(down)[0]
                diff[2] = (diff[2] + math.pi) % (2 * math.pi) - math.pi
                numeric[:, q] = diff / (2 * h)
            assert np.allclose(jac, numeric, rtol=1e-6, atol=1e-6)


def test_edge_residuals_zero_at_measurement():
    """
    Test that poses agreeing with every measurement give zero residuals.
    """
    keys, truth, _, edges = square_loop()
    poses = dict(zip(keys, truth))
    assert np.allclose(edge_residuals(poses, edges), 0.0, atol=1e-12)
    assert chi2_value(poses, edges) == pytest.approx(0.0, abs=1e-20)


def test_pose_edge_rejects_bad_information():
    """
    Test that non-symmetric or indefinite information matrices are refused.
    """
    with pytest.raises(InvalidParameter):
        PoseEdge((0, 0), (0, 1), IDENTITY, np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(InvalidParameter):
        PoseEdge((0, 0), (0, 1), IDENTITY, np.array([[1.0, 0.5, 0], [0, 1.0, 0], [0, 0, 1.0]]))


def test_optimize_zero_noise_is_unchanged():
    """
    Test that a consistent graph keeps chi2 at zero and every pose in place.
    """
    keys, truth, _, edges = square_loop()
    result = optimize(dict(zip(keys, truth)), edges)
    assert result.chi2 == pytest.approx(0.0, abs=1e-20)
    for key, pose in zip(keys, truth):
        assert np.allclose(result.poses[key].to_array(), pose.to_array(), atol=1e-10)


def test_optimize_reduces_chi2_monotonically():
    """
    Test that a perturbed loop ends strictly below its initial chi2 with a non-increasing trace.
    """
    keys, _, initial, edges = square_loop(perturb=0.5)
    result = optimize(initial, edges, OptConfig(max_iter=50))
    assert result.initial_chi2 > 0.0
    assert result.chi2 < result.initial_chi2
    assert result.history[0] == result.initial_chi2
    assert all(b <= a for a, b in zip(result.history, result.history[1:]))
    assert result.poses[keys[0]] == initial[keys[0]]
    assert result.iterations >= 1


def test_optimize_is_gauge_invariant():
    """
    Test that moving every initial pose rigidly leaves the optimized relative poses unchanged.
    """
    keys, _, initial, edges = square_loop(perturb=0.5)
    shift = Pose2(25.0, -7.0, 1.1)
    moved = {k: compose(shift, p) for k, p in initial.items()}
    plain = optimize(initial, edges).poses
    shifted = optimize(moved, edges).poses
    for a in keys:
        for b in keys:
            rel_plain = between(plain[a], plain[b]).to_array()
            rel_shifted = between(shifted[a], shifted[b]).to_array()
            assert np.allclose(rel_plain, rel_shifted, atol=1e-5)


def test_optimize_errors():
    """
    Test unknown nodes, an unknown fixed node and an unconstrained free node.
    """
    keys, _, initial, edges = square_loop(perturb=0.5)
    with pytest.raises(KeyMismatch):
        optimize({k: initial[k] for k in keys[:3]}, edges)
    with pytest.raises(KeyMismatch):
        optimize(initial, edges, fixed=(9, 9))
    with pytest.raises(SingularSystem):
        optimize({**initial, (5, 0): IDENTITY}, edges)
    assert optimize({}, []).poses == {}


def two_segment_world():
    """Segment 1 is segment 0's path seen from a frame moved by a planted transform."""
    planted = Pose2(40.0, -15.0, 0.7)
    gt = [Pose2(5.0 * k, 0.3 * k * k, 0.06 * k) for k in range(12)]
    seg0 = make_segment(0, gt)
    seg1 = make_segment(1, [compose(inverse(planted), p) for p in gt])
    closures = [LoopClosure(0, 1, LoopCandidate(k, k, -3.0),
                            between(seg0.keyframes[k].odom, compose(planted, seg1.keyframes[k].odom)),
                            1.0) for k in range(2, 9)]
    return planted, gt, {0: seg0, 1: seg1}, closures


def test_rough_align_exact_transform():
    """
    Test that noise-free closures place the second segment exactly.
    """
    _, gt, segments, closures = two_segment_world()
    poses = rough_align(Partition.from_groups([[0, 1]]), segments, closures)
    for k, pose in enumerate(gt):
        assert np.allclose(poses[(0, k)].to_array(), pose.to_array(), atol=1e-9)
        assert np.allclose(poses[(1, k)].to_array(), pose.to_array(), atol=1e-9)


def test_rough_align_singletons_and_disconnected():
    """
    Test raw odometry for singleton clusters and the disconnected-cluster error.
    """
    _, _, segments, closures = two_segment_world()
    poses = rough_align(Partition.from_groups([[0], [1]]), segments, closures)
    assert np.allclose(poses[(1, 3)].to_array(), segments[1].keyframes[3].odom.to_array())
    with pytest.raises(DisconnectedCluster):
        rough_align(Partition.from_groups([[0, 1]]), segments, [])


def test_build_edges_counts_and_scaling():
    """
    Test one odometry edge per consecutive pair and confidence-scaled loop information.
    """
    _, _, segments, closures = two_segment_world()
    halved = [LoopClosure(c.seg_i, c.seg_j, c.candidate, c.relative_pose, 0.5) for c in closures]
    cfg = OptConfig()
    edges = build_edges([segments[0], segments[1]], halved, cfg)
    assert sum(e.kind == "odometry" for e in edges) == 22
    loops = [e for e in edges if e.kind == "loop"]
    assert len(loops) == len(closures)
    assert loops[0].information[0, 0] == pytest.approx(0.5 * cfg.loop_sigma_trans ** -2)
    assert len(build_edges([segments[0]], halved, cfg)) == 11


def test_optimize_cluster_reproduces_ground_truth():
    """
    Test that alignment plus optimization on a noise-free generated pair gives near-zero ATE.
    """
    spec = WorldSpec(seed=3, n_segments=2, segment_length=300.0, alias_pairs=0,
                     overlap_plan=[OverlapPlanEntry(seg_a=0, seg_b=1, overlap_length=80.0)])
    world, truth = generate_world(spec)
    segments = {seg.id: seg for seg in world}
    closures = detect_loops(segments[0], segments[1], LcdConfig())
    result = optimize_cluster([0, 1], segments, closures)
    assert ate(result.poses, {k: truth.poses[k] for k in result.poses}) <= 1e-6


def test_ate_values_and_errors():
    """
    Test identity, shifted and rotated estimates plus the key and size checks.
    """
    gt = {(0, k): Pose2(3.0 * k, math.sin(k), 0.0) for k in range(20)}
    assert ate(gt, gt) == pytest.approx(0.0, abs=1e-9)
    shifted = {k: Pose2(p.x + 5.0, p.y + 5.0, p.yaw) for k, p in gt.items()}
    assert ate(shifted, gt) == pytest.approx(0.0, abs=1e-9)
    moved = {k: compose(Pose2(-3.0, 8.0, 2.0), p) for k, p in gt.items()}
    assert ate(moved, gt) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(KeyMismatch):
        ate({(0, 0): IDENTITY, (0, 1): IDENTITY}, {(0, 0): IDENTITY, (0, 2): IDENTITY})
    with pytest.raises(InvalidParameter):
        ate({(0, 0): IDENTITY}, {(0, 0): IDENTITY})


def test_ate_gaussian_noise_band():
    """
    Test that i.i.d. 0.1 m position noise gives an ATE near 0.1 * sqrt(2) on average.
    """
    rng = np.random.default_rng(4)
    gt = {(0, k): Pose2(5.0 * k, 10.0 * math.sin(k / 5.0), 0.0) for k in range(50)}
    values = []
    for _ in range(200):
        noise = rng.normal(0.0, 0.1, size=(50, 2))
        est = {key: Pose2(p.x + noise[n, 0], p.y + noise[n, 1], p.yaw)
               for n, (key, p) in enumerate(gt.items())}
        values.append(ate(est, gt))
    assert 0.125 <= float(np.mean(values)) <= 0.155
