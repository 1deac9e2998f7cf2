"""
This module places the segments of each cluster in a shared frame and refines
the result with pose-graph optimization.

It includes:
- PoseNode / PoseEdge: graph elements keyed by (segment, keyframe index).
- rough_align: spanning-tree chaining of segment-to-segment rigid fits.
- build_edges: odometry and loop-closure edges with their information matrices.
- optimize: Levenberg-Marquardt over SE(2) residuals with a frozen root node.
- ate: absolute trajectory error after a best-fit rigid alignment.
"""

import logging
from dataclasses import dataclass, field
from typing import Literal, Mapping, Optional, Sequence

import networkx as nx
import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from automerge.errors import (DegenerateInput, DisconnectedCluster, InvalidParameter,
                              KeyMismatch, SingularSystem)
from automerge.geometry import IDENTITY, Pose2, compose, estimate_rigid_transform, inverse, wrap_angles
from automerge.lcd import LoopClosure
from automerge.models import OptConfig
from automerge.trajectory import Segment

logger = logging.getLogger(__name__)

NodeKey = tuple[int, int]

_CHI2_ZERO = 1e-20
_LAMBDA_MAX = 1e12


@dataclass(frozen=True)
class PoseNode:
    segment: int
    index: int
    pose: Pose2

    @property
    def key(self) -> NodeKey:
        return (self.segment, self.index)


@dataclass(frozen=True)
class PoseEdge:
    """
    A relative-pose constraint between two nodes.

    Attributes:
        frm (tuple): Key of the reference node.
        to (tuple): Key of the target node.
        measurement (Pose2): Measured pose of `to` in `frm`'s frame.
        information (np.ndarray): 3x3 symmetric positive-definite weight.
        kind (str): "odometry" or "loop".
    """

    frm: NodeKey
    to: NodeKey
    measurement: Pose2
    information: np.ndarray = field(repr=False)
    kind: Literal["odometry", "loop"] = "odometry"

    def __post_init__(self):
        info = np.asarray(self.information, dtype=float)
        if info.shape != (3, 3) or not np.allclose(info, info.T):
            raise InvalidParameter("information matrix must be a symmetric 3x3 matrix",
                                   module="posegraph")
        try:
            np.linalg.cholesky(info)
        except np.linalg.LinAlgError as exc:
            raise InvalidParameter("information matrix is not positive definite",
                                   module="posegraph") from exc
        object.__setattr__(self, "information", info)


@dataclass(frozen=True)
class OptimizeResult:
    """
    Attributes:
        poses (dict): Optimized pose per node key.
        chi2 (float): Final weighted squared error.
        initial_chi2 (float): Error at the initial estimate.
        iterations (int): LM iterations run.
        history (list[float]): chi2 after each accepted step, starting with the initial value.
    """

    poses: dict[NodeKey, Pose2]
    chi2: float
    initial_chi2: float
    iterations: int
    history: list[float]


def _pair_closures(closures: Sequence[LoopClosure]) -> dict[tuple[int, int], list[LoopClosure]]:
    by_pair: dict[tuple[int, int], list[LoopClosure]] = {}
    for c in closures:
        by_pair.setdefault((min(c.seg_i, c.seg_j), max(c.seg_i, c.seg_j)), []).append(c)
    return by_pair


def _child_transform(parent: Segment, child: Segment, links: Sequence[LoopClosure]) -> Pose2:
    """Maps the child's odometry frame into the parent's odometry frame."""
    parent_pts, child_pts = [], []
    for c in links:
        if c.seg_i == parent.id:
            parent_pts.append(parent.positions[c.k_i])
            child_pts.append(child.positions[c.k_j])
        else:
            parent_pts.append(parent.positions[c.k_j])
            child_pts.append(child.positions[c.k_i])
    try:
        return estimate_rigid_transform(child_pts, parent_pts)
    except DegenerateInput:
        best = max(links, key=lambda c: (c.confidence, -c.k_i, -c.k_j))
        if best.seg_i == parent.id:
            return compose(parent.keyframes[best.k_i].odom,
                           compose(best.relative_pose, inverse(child.keyframes[best.k_j].odom)))
        t_cp = compose(child.keyframes[best.k_i].odom,
                       compose(best.relative_pose, inverse(parent.keyframes[best.k_j].odom)))
        return inverse(t_cp)


def segment_transforms(cluster: Sequence[int], segments: Mapping[int, Segment],
                       closures: Sequence[LoopClosure]) -> dict[int, Pose2]:
    """
    Chains segment frames from the lowest id along a maximum-confidence spanning tree.

    Returns:
        dict[int, Pose2]: Transform from each segment's odometry frame into the root's.

    Raises:
        DisconnectedCluster: If the closures do not connect the cluster.
    """
    members = sorted(cluster)
    root = members[0]
    inside = set(members)
    by_pair = {pair: links for pair, links in _pair_closures(closures).items()
               if pair[0] in inside and pair[1] in inside}
    graph = nx.Graph()
    graph.add_nodes_from(members)
    for (a, b) in sorted(by_pair):
        graph.add_edge(a, b, weight=sum(c.confidence for c in by_pair[(a, b)]))
    if not nx.is_connected(graph):
        raise DisconnectedCluster(f"closures do not connect cluster {members}")
    tree = nx.maximum_spanning_tree(graph)
    transforms = {root: IDENTITY}
    for parent, child in nx.bfs_edges(tree, root, sort_neighbors=sorted):
        links = by_pair[(min(parent, child), max(parent, child))]
        local = _child_transform(segments[parent], segments[child], links)
        transforms[child] = compose(transforms[parent], local)
    return transforms


def rough_align(partition, segments: Mapping[int, Segment],
                closures: Sequence[LoopClosure]) -> dict[NodeKey, Pose2]:
    """
    Places every keyframe of every cluster in its cluster root's frame.

    Args:
        partition (Partition): Clusters to align.
        segments (dict): Segment per id.
        closures (list[LoopClosure]): Accepted closures.

    Returns:
        dict: Global pose per (segment, index) key.

    Raises:
        DisconnectedCluster: If a cluster's closure graph is not connected.
    """
    poses: dict[NodeKey, Pose2] = {}
    for cluster in partition.clusters:
        for seg_id, transform in segment_transforms(cluster, segments, closures).items():
            for kf in segments[seg_id].keyframes:
                poses[(seg_id, kf.index)] = compose(transform, kf.odom)
    return poses


def build_edges(segments: Sequence[Segment], closures: Sequence[LoopClosure],
                cfg: Optional[OptConfig] = None) -> list[PoseEdge]:
    """
    Creates odometry edges between consecutive keyframes and one edge per closure.

    Loop-edge information is the base loop information scaled by the closure's
    confidence.
    """
    cfg = cfg or OptConfig()
    odom_info = np.diag([cfg.odom_sigma_trans ** -2, cfg.odom_sigma_trans ** -2,
                         cfg.odom_sigma_rot ** -2])
    loop_info = np.diag([cfg.loop_sigma_trans ** -2, cfg.loop_sigma_trans ** -2,
                         cfg.loop_sigma_rot ** -2])
    edges = []
    for seg in segments:
        for prev, cur in zip(seg.keyframes, seg.keyframes[1:]):
            edges.append(PoseEdge((seg.id, prev.index), (seg.id, cur.index),
                                  compose(inverse(prev.odom), cur.odom), odom_info, "odometry"))
    ids = {seg.id for seg in segments}
    for c in closures:
        if c.seg_i in ids and c.seg_j in ids and c.confidence > 0:
            edges.append(PoseEdge((c.seg_i, c.k_i), (c.seg_j, c.k_j), c.relative_pose,
                                  c.confidence * loop_info, "loop"))
    return edges


class _EdgeArrays:
    """Edge data laid out as arrays for vectorized linearization."""

    def __init__(self, edges: Sequence[PoseEdge], index: Mapping[NodeKey, int]):
        self.frm = np.array([index[e.frm] for e in edges], dtype=int)
        self.to = np.array([index[e.to] for e in edges], dtype=int)
        self.z = np.array([e.measurement.to_array() for e in edges]).reshape(-1, 3)
        # Lambda = L L^T, so r^T Lambda r = |L^T r|^2.
        self.sqrt_info = np.array([np.linalg.cholesky(e.information).T for e in edges]).reshape(-1, 3, 3)

    def residuals(self, x: np.ndarray) -> np.ndarray:
        xi, xj = x[self.frm], x[self.to]
        ci, si = np.cos(xi[:, 2]), np.sin(xi[:, 2])
        dx, dy = xj[:, 0] - xi[:, 0], xj[:, 1] - xi[:, 1]
        qx = ci * dx + si * dy - self.z[:, 0]
        qy = -si * dx + ci * dy - self.z[:, 1]
        cz, sz = np.cos(self.z[:, 2]), np.sin(self.z[:, 2])
        return np.column_stack([cz * qx + sz * qy, -sz * qx + cz * qy,
                                wrap_angles(xj[:, 2] - xi[:, 2] - self.z[:, 2])])

    def jacobians(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xi, xj = x[self.frm], x[self.to]
        ci, si = np.cos(xi[:, 2]), np.sin(xi[:, 2])
        dx, dy = xj[:, 0] - xi[:, 0], xj[:, 1] - xi[:, 1]
        a = ci * dx + si * dy
        b = -si * dx + ci * dy
        cz, sz = np.cos(self.z[:, 2]), np.sin(self.z[:, 2])
        phi = xi[:, 2] + self.z[:, 2]
        cm, sm = np.cos(phi), np.sin(phi)
        n = len(self.frm)
        jac_j = np.zeros((n, 3, 3))
        jac_j[:, 0, 0], jac_j[:, 0, 1] = cm, sm
        jac_j[:, 1, 0], jac_j[:, 1, 1] = -sm, cm
        jac_j[:, 2, 2] = 1.0
        jac_i = -jac_j
        jac_i[:, 0, 2] = cz * b - sz * a
        jac_i[:, 1, 2] = -sz * b - cz * a
        return jac_i, jac_j

    def whitened(self, x: np.ndarray) -> np.ndarray:
        return np.einsum("eij,ej->ei", self.sqrt_info, self.residuals(x))


def edge_residuals(poses: Mapping[NodeKey, Pose2], edges: Sequence[PoseEdge]) -> np.ndarray:
    """Returns the (E, 3) unweighted residuals between(measurement, between(from, to))."""
    keys = sorted(poses)
    index = {k: n for n, k in enumerate(keys)}
    x = np.array([poses[k].to_array() for k in keys]).reshape(-1, 3)
    return _EdgeArrays(edges, index).residuals(x)


def chi2_value(poses: Mapping[NodeKey, Pose2], edges: Sequence[PoseEdge]) -> float:
    keys = sorted(poses)
    index = {k: n for n, k in enumerate(keys)}
    x = np.array([poses[k].to_array() for k in keys]).reshape(-1, 3)
    return float(np.sum(_EdgeArrays(edges, index).whitened(x) ** 2))


def _normal_equations(arrays: _EdgeArrays, x: np.ndarray, column: np.ndarray, n_free: int):
    r = arrays.whitened(x).ravel()
    jac_i, jac_j = arrays.jacobians(x)
    jac_i = arrays.sqrt_info @ jac_i
    jac_j = arrays.sqrt_info @ jac_j
    rows, cols, vals = [], [], []
    row_base = 3 * np.arange(len(arrays.frm))
    for node, jac in ((arrays.frm, jac_i), (arrays.to, jac_j)):
        col_base = column[node]
        keep = col_base >= 0
        for p in range(3):
            for q in range(3):
                rows.append(row_base[keep] + p)
                cols.append(col_base[keep] + q)
                vals.append(jac[keep, p, q])
    jac = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(len(r), 3 * n_free)).tocsr()
    hessian = (jac.T @ jac).tocsc()
    gradient = jac.T @ r
    return hessian, gradient, float(r @ r)


def optimize(nodes: Mapping[NodeKey, Pose2], edges: Sequence[PoseEdge],
             cfg: Optional[OptConfig] = None, fixed: Optional[NodeKey] = None) -> OptimizeResult:
    """
    Minimizes sum r^T Lambda r over all edges by Levenberg-Marquardt.

    Args:
        nodes (dict): Initial pose per node key.
        edges (list[PoseEdge]): Constraints; every endpoint must be a node.
        cfg (OptConfig, optional): Iteration cap, initial damping and tolerance.
        fixed (tuple, optional): Node frozen to remove the gauge freedom;
            defaults to the smallest key.

    Returns:
        OptimizeResult: Optimized poses and the chi2 trace.

    Raises:
        KeyMismatch: If an edge references an unknown node.
        SingularSystem: If a free node is unconstrained or the damped system cannot be solved.
    """
    cfg = cfg or OptConfig()
    keys = sorted(nodes)
    if not keys:
        return OptimizeResult({}, 0.0, 0.0, 0, [0.0])
    index = {k: n for n, k in enumerate(keys)}
    missing = {k for e in edges for k in (e.frm, e.to)} - set(index)
    if missing:
        raise KeyMismatch(f"edges reference unknown nodes {sorted(missing)[:5]}")
    fixed = keys[0] if fixed is None else fixed
    if fixed not in index:
        raise KeyMismatch(f"fixed node {fixed} is not in the graph")

    x = np.array([nodes[k].to_array() for k in keys]).reshape(-1, 3)
    column = np.full(len(keys), -1, dtype=int)
    free = [n for n, k in enumerate(keys) if k != fixed]
    column[free] = 3 * np.arange(len(free))
    arrays = _EdgeArrays(edges, index) if edges else None

    chi2 = float(np.sum(arrays.whitened(x) ** 2)) if arrays else 0.0
    history = [chi2]
    if arrays is None or not free or chi2 <= _CHI2_ZERO:
        return OptimizeResult({k: Pose2.from_array(x[index[k]]) for k in keys}, chi2, chi2, 0,
                              history)

    lam = cfg.lambda_init
    iterations = 0
    hessian, gradient, _ = _normal_equations(arrays, x, column, len(free))
    for iterations in range(1, cfg.max_iter + 1):
        diag = hessian.diagonal()
        if np.any(diag <= 0.0):
            raise SingularSystem("a free node has no constraining edge")
        step = spsolve(hessian + lam * sparse.diags(diag, format="csc"), -gradient)
        if not np.all(np.isfinite(step)):
            raise SingularSystem("damped normal equations could not be solved")
        candidate = x.copy()
        candidate[free] += step.reshape(-1, 3)
        candidate[:, 2] = wrap_angles(candidate[:, 2])
        new_chi2 = float(np.sum(arrays.whitened(candidate) ** 2))
        if new_chi2 < chi2:
            converged = (chi2 - new_chi2) / chi2 < cfg.tol
            x, chi2 = candidate, new_chi2
            history.append(chi2)
            lam = max(lam / 10.0, 1e-12)
            if converged or chi2 <= _CHI2_ZERO:
                break
            hessian, gradient, _ = _normal_equations(arrays, x, column, len(free))
        else:
            lam *= 10.0
            if lam > _LAMBDA_MAX:
                break
    logger.debug("LM finished after %d iterations: chi2 %.6g -> %.6g", iterations,
                 history[0], chi2)
    return OptimizeResult({k: Pose2.from_array(x[index[k]]) for k in keys}, chi2, history[0],
                          iterations, history)


def optimize_cluster(cluster: Sequence[int], segments: Mapping[int, Segment],
                     closures: Sequence[LoopClosure],
                     cfg: Optional[OptConfig] = None) -> OptimizeResult:
    """
    Rough-aligns one cluster and refines it, freezing the first keyframe of
    the lowest segment id.
    """
    members = sorted(cluster)
    inside = set(members)
    own = [c for c in closures if c.seg_i in inside and c.seg_j in inside]
    transforms = segment_transforms(members, segments, own)
    initial = {(s, kf.index): compose(transforms[s], kf.odom)
               for s in members for kf in segments[s].keyframes}
    edges = build_edges([segments[s] for s in members], own, cfg)
    root = segments[members[0]]
    return optimize(initial, edges, cfg, fixed=(root.id, root.keyframes[0].index))


def ate(estimated: Mapping, ground_truth: Mapping) -> float:
    """
    Computes the absolute trajectory error.

    Args:
        estimated (dict): Pose2 per key.
        ground_truth (dict): Pose2 per key.

    Returns:
        float: RMSE of the translational residuals after rigidly aligning the
        estimate onto ground truth.

    Raises:
        KeyMismatch: If the key sets differ.
    """
    if set(estimated) != set(ground_truth):
        raise KeyMismatch("estimated and ground-truth keys differ")
    keys = sorted(estimated)
    if len(keys) < 2:
        raise InvalidParameter("ATE needs at least two poses", module="posegraph")
    est = np.array([[estimated[k].x, estimated[k].y] for k in keys])
    gt = np.array([[ground_truth[k].x, ground_truth[k].y] for k in keys])
    aligned = estimate_rigid_transform(est, gt).transform_points(est)
    return float(np.sqrt(np.mean(np.sum((aligned - gt) ** 2, axis=1))))
