"""
This module contains tests for the planar geometry primitives.

It includes tests for:
- Yaw wrapping and pose composition identities
- The closed-form rigid fit on planted transforms and degenerate inputs
- ICP refinement of a shifted cloud
"""

import math

import numpy as np
import pytest

from .errors import DegenerateInput, NoConvergence
from .geometry import (IDENTITY, Pose2, between, compose, estimate_rigid_transform, icp_refine,
                       inverse, wrap_angle)


def random_pose(rng):
    return Pose2(*rng.uniform(-50, 50, 2), rng.uniform(-math.pi, math.pi))


def test_wrap_angle_range():
    """
    Test that wrapped angles land in (-pi, pi] and in-range values are untouched.
    """
    assert wrap_angle(math.pi) == math.pi
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(0.25) == 0.25
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    for theta in np.linspace(-20, 20, 401):
        wrapped = wrap_angle(theta)
        assert -math.pi < wrapped <= math.pi
        assert math.cos(wrapped) == pytest.approx(math.cos(theta), abs=1e-12)


def test_compose_between_roundtrip():
    """
    Test that compose(a, between(a, b)) recovers b on random poses.
    """
    rng = np.random.default_rng(0)
    for _ in range(100):
        a, b = random_pose(rng), random_pose(rng)
        back = compose(a, between(a, b))
        assert np.allclose(back.to_array(), b.to_array(), atol=1e-9)
        ident = compose(a, inverse(a))
        assert np.allclose(ident.to_array(), IDENTITY.to_array(), atol=1e-9)


def test_rigid_transform_recovers_planted_motion():
    """
    Test that the rigid fit recovers an exact planted transform.
    """
    rng = np.random.default_rng(1)
    src = rng.uniform(-20, 20, (30, 2))
    planted = Pose2(3.0, -7.5, 0.8)
    fitted = estimate_rigid_transform(src, planted.transform_points(src))
    assert np.allclose(fitted.to_array(), planted.to_array(), atol=1e-9)


def test_rigid_transform_identity_and_degenerate():
    """
    Test identical sets give the identity, and coincident or short inputs raise DegenerateInput.
    """
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    fitted = estimate_rigid_transform(pts, pts)
    assert np.allclose(fitted.to_array(), 0.0, atol=1e-12)
    with pytest.raises(DegenerateInput):
        estimate_rigid_transform([[1.0, 1.0]], [[2.0, 2.0]])
    with pytest.raises(DegenerateInput):
        estimate_rigid_transform([[1.0, 1.0]] * 4, [[0.0, 0.0], [1, 0], [0, 1], [1, 1]])


def test_icp_refines_shifted_cloud():
    """
    Test that ICP started at the identity recovers a small planted shift.
    """
    rng = np.random.default_rng(2)
    dst = rng.uniform(0, 10, (80, 2))
    src = dst - np.array([0.3, 0.0])
    result = icp_refine(src, dst, IDENTITY)
    assert result.converged
    assert result.pose.x == pytest.approx(0.3, abs=1e-6)
    assert result.pose.y == pytest.approx(0.0, abs=1e-6)
    assert result.residual < 1e-6
    assert result.raise_for_convergence() is result


def test_icp_without_correspondences_reports_no_convergence():
    """
    Test that clouds farther apart than the reject radius return the initial pose unconverged.
    """
    src = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    dst = src + 100.0
    result = icp_refine(src, dst, IDENTITY)
    assert not result.converged
    assert result.pose == IDENTITY
    with pytest.raises(NoConvergence):
        result.raise_for_convergence()
