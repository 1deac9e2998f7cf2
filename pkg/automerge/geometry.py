"""
This module provides planar rigid-body geometry for the merge pipeline.

It includes:
- Pose2, an SE(2) pose with yaw kept in (-pi, pi].
- compose / between / inverse for relative poses along odometry chains.
- A closed-form rigid least-squares fit between index-paired point sets.
- A point-to-point ICP refiner with a nearest-neighbour reject radius.

All functions are pure and safe to call from concurrent workers.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from automerge.errors import DegenerateInput, NoConvergence

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """
    Wraps an angle into (-pi, pi].

    Values already inside the interval are returned unchanged so that exact
    inputs stay exact.

    Args:
        theta (float): Angle in radians.

    Returns:
        float: The equivalent angle in (-pi, pi].
    """
    if -math.pi < theta <= math.pi:
        return theta
    theta = math.fmod(theta, TWO_PI)
    if theta <= -math.pi:
        theta += TWO_PI
    elif theta > math.pi:
        theta -= TWO_PI
    return theta


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    """Vectorized wrap_angle; in-range entries are left untouched."""
    theta = np.asarray(theta, dtype=float)
    out = np.mod(theta + np.pi, TWO_PI) - np.pi
    out = np.where(out == -np.pi, np.pi, out)
    inside = (theta > -np.pi) & (theta <= np.pi)
    return np.where(inside, theta, out)


@dataclass(frozen=True)
class Pose2:
    """
    A planar pose.

    Attributes:
        x (float): Position in meters.
        y (float): Position in meters.
        yaw (float): Heading in radians, normalized into (-pi, pi].
    """

    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @classmethod
    def from_array(cls, values) -> "Pose2":
        return cls(float(values[0]), float(values[1]), float(values[2]))

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.yaw])

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return np.array([[c, -s], [s, c]])

    def as_matrix(self) -> np.ndarray:
        """Returns the 3x3 homogeneous matrix of the pose."""
        m = np.eye(3)
        m[:2, :2] = self.rotation()
        m[:2, 2] = (self.x, self.y)
        return m

    def transform_points(self, points) -> np.ndarray:
        """
        Maps points from this pose's frame into the parent frame.

        Args:
            points (array-like): (N, 2) coordinates.

        Returns:
            np.ndarray: (N, 2) coordinates R p + t.
        """
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return pts @ self.rotation().T + np.array([self.x, self.y])


IDENTITY = Pose2(0.0, 0.0, 0.0)


def compose(a: Pose2, b: Pose2) -> Pose2:
    """
    Composes two poses, a o b.

    Args:
        a (Pose2): Left pose.
        b (Pose2): Right pose, expressed in a's frame.

    Returns:
        Pose2: The composed pose.
    """
    c, s = math.cos(a.yaw), math.sin(a.yaw)
    return Pose2(a.x + c * b.x - s * b.y,
                 a.y + s * b.x + c * b.y,
                 a.yaw + b.yaw)


def inverse(a: Pose2) -> Pose2:
    c, s = math.cos(a.yaw), math.sin(a.yaw)
    return Pose2(-c * a.x - s * a.y, s * a.x - c * a.y, -a.yaw)


def between(a: Pose2, b: Pose2) -> Pose2:
    """
    Returns the pose of b expressed in a's frame, so compose(a, between(a, b)) == b.

    Args:
        a (Pose2): Reference pose.
        b (Pose2): Target pose.

    Returns:
        Pose2: The relative pose a^-1 o b.
    """
    c, s = math.cos(a.yaw), math.sin(a.yaw)
    dx, dy = b.x - a.x, b.y - a.y
    return Pose2(c * dx + s * dy, -s * dx + c * dy, b.yaw - a.yaw)


def estimate_rigid_transform(src, dst) -> Pose2:
    """
    Fits the rigid motion that best maps src onto dst in the least-squares sense.

    The rotation comes from the polar part of the 2x2 cross-covariance, which in
    the plane reduces to a single atan2.

    Args:
        src (array-like): (N, 2) source points.
        dst (array-like): (N, 2) destination points, index-paired with src.

    Returns:
        Pose2: T minimizing sum ||T(src_k) - dst_k||^2.

    Raises:
        DegenerateInput: If fewer than 2 pairs are given, the shapes differ, or
            the source points coincide.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    if src.shape != dst.shape:
        raise DegenerateInput(f"point sets differ in size: {len(src)} vs {len(dst)}")
    if len(src) < 2:
        raise DegenerateInput("at least 2 correspondences are required")
    src_c = src.mean(axis=0)
    dst_c = dst.mean(axis=0)
    ps = src - src_c
    pd = dst - dst_c
    spread = float(np.sum(ps * ps))
    if spread <= 1e-18 * max(1.0, float(np.sum(src * src))):
        raise DegenerateInput("source points coincide")
    h = ps.T @ pd
    sin_part = h[0, 1] - h[1, 0]
    cos_part = h[0, 0] + h[1, 1]
    if abs(sin_part) + abs(cos_part) <= 1e-15 * spread:
        raise DegenerateInput("cross-covariance has no polar part")
    yaw = math.atan2(sin_part, cos_part)
    c, s = math.cos(yaw), math.sin(yaw)
    tx = dst_c[0] - (c * src_c[0] - s * src_c[1])
    ty = dst_c[1] - (s * src_c[0] + c * src_c[1])
    return Pose2(tx, ty, yaw)


@dataclass(frozen=True)
class IcpResult:
    """
    Outcome of an ICP refinement.

    Attributes:
        pose (Pose2): Best pose found.
        residual (float): Mean truncated nearest-neighbour distance at pose.
        converged (bool): False when no correspondences were ever found.
        iterations (int): Iterations actually run.
    """

    pose: Pose2
    residual: float
    converged: bool
    iterations: int

    def raise_for_convergence(self) -> "IcpResult":
        """Returns self, or raises NoConvergence when no correspondences were found."""
        if not self.converged:
            raise NoConvergence(f"no correspondences after {self.iterations} iterations, "
                                f"residual {self.residual:.3f}")
        return self


def _icp_residual(tree: cKDTree, points: np.ndarray, reject_radius: float):
    dist, idx = tree.query(points, distance_upper_bound=reject_radius)
    inliers = np.isfinite(dist)
    truncated = np.where(inliers, dist, reject_radius)
    return float(truncated.mean()), inliers, idx


def icp_refine(src, dst, init: Pose2, max_iter: int = 30, tol: float = 1e-6,
               reject_radius: float = 2.0) -> IcpResult:
    """
    Refines a rough alignment of src onto dst by point-to-point ICP.

    The residual is the mean nearest-neighbour distance truncated at the reject
    radius, so it is comparable across iterations. The best pose seen is
    returned, which makes the result never worse than init.

    Args:
        src (array-like): (N, 2) cloud to move.
        dst (array-like): (M, 2) fixed cloud.
        init (Pose2): Initial guess mapping src into dst's frame.
        max_iter (int): Iteration cap.
        tol (float): Stop once the pose update is below this (meters / radians).
        reject_radius (float): Correspondences farther than this are dropped.

    Returns:
        IcpResult: Best pose, its residual and a convergence flag.

    Raises:
        DegenerateInput: If either cloud is empty.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    if len(src) == 0 or len(dst) == 0:
        raise DegenerateInput("ICP needs two non-empty clouds")
    tree = cKDTree(dst)
    pose = init
    best_res, inliers, idx = _icp_residual(tree, pose.transform_points(src), reject_radius)
    best = pose
    if inliers.sum() < 2:
        return IcpResult(init, best_res, False, 0)

    iterations = 0
    for iterations in range(1, max_iter + 1):
        if inliers.sum() < 2:
            break
        prev = pose
        try:
            pose = estimate_rigid_transform(src[inliers], dst[idx[inliers]])
        except DegenerateInput:
            break
        res, inliers, idx = _icp_residual(tree, pose.transform_points(src), reject_radius)
        step = between(prev, pose)
        if res < best_res:
            best, best_res = pose, res
        if math.hypot(step.x, step.y) < tol and abs(step.yaw) < tol:
            break
    return IcpResult(best, best_res, True, iterations)
