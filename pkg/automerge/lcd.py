"""
This module implements adaptive loop-closure detection between two segments.

The pipeline is:
- difference_matrix: cosine distances between the two descriptor sequences.
- sequence_match: straight-line search over the contrast-normalized matrix.
- cluster_zones: k-means zoning of the candidates in index space.
- ransac_edge_filter: edge-length consistency check inside each zone.
- detect_loops: the composition above plus a rigid fit per zone that turns
  inliers into loop closures.
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.cluster import KMeans

from automerge.descriptor import cosine_distance
from automerge.errors import (DegenerateInput, DimensionMismatch, EmptySequence,
                              InvalidParameter, NoConvergence, WindowTooLarge, ZeroVector)
from automerge.geometry import Pose2, between, compose, estimate_rigid_transform, icp_refine
from automerge.models import LcdConfig
from automerge.trajectory import Segment

logger = logging.getLogger(__name__)

NORM_EPS = 1e-4
_ROW_CHUNK = 32


@dataclass(frozen=True)
class DifferenceMatrix:
    """
    Pairwise cosine distances between two descriptor sequences.

    Attributes:
        d (np.ndarray): (N_i, N_j) distances in [0, 2].
        seg_i (int): Row segment id.
        seg_j (int): Column segment id.
    """

    d: np.ndarray
    seg_i: int = -1
    seg_j: int = -1

    @property
    def rows(self) -> int:
        return self.d.shape[0]

    @property
    def cols(self) -> int:
        return self.d.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.d.shape

    def transpose(self) -> "DifferenceMatrix":
        return DifferenceMatrix(self.d.T.copy(), self.seg_j, self.seg_i)


@dataclass(frozen=True)
class LoopCandidate:
    """
    A potential correspondence (k_i, k_j) found by sequence matching.

    Attributes:
        k_i (int): Keyframe index in the row segment.
        k_j (int): Keyframe index in the column segment.
        score (float): Mean normalized difference along the best line; lower is better.
        zone (int, optional): Zone id assigned by cluster_zones.
    """

    k_i: int
    k_j: int
    score: float
    zone: Optional[int] = None


@dataclass(frozen=True)
class LoopClosure:
    """
    A validated inter-segment correspondence.

    Attributes:
        seg_i (int): Row segment id.
        seg_j (int): Column segment id.
        candidate (LoopCandidate): The surviving candidate.
        relative_pose (Pose2): Pose of keyframe k_j expressed in keyframe k_i's frame.
        confidence (float): Inlier ratio of the candidate's zone, in [0, 1].
    """

    seg_i: int
    seg_j: int
    candidate: LoopCandidate
    relative_pose: Pose2
    confidence: float

    @property
    def k_i(self) -> int:
        return self.candidate.k_i

    @property
    def k_j(self) -> int:
        return self.candidate.k_j

    @property
    def key(self) -> tuple[int, int, int, int]:
        return (self.seg_i, self.k_i, self.seg_j, self.k_j)


def _unit_rows(features) -> np.ndarray:
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise EmptySequence("descriptor sequence is empty")
    norms = np.sqrt(np.sum(feats * feats, axis=1))
    if np.any(norms == 0.0):
        raise ZeroVector("descriptor sequence contains a zero vector")
    return feats / norms[:, None]


def _cosine_block(unit_i: np.ndarray, unit_j: np.ndarray) -> np.ndarray:
    # Elementwise product + last-axis sum matches cosine_distance exactly.
    out = np.empty((unit_i.shape[0], unit_j.shape[0]))
    for start in range(0, unit_i.shape[0], _ROW_CHUNK):
        stop = start + _ROW_CHUNK
        dots = np.sum(unit_i[start:stop, None, :] * unit_j[None, :, :], axis=-1)
        out[start:stop] = np.clip(1.0 - dots, 0.0, 2.0)
    return out


def _distance_block(f_i: np.ndarray, f_j: np.ndarray, angular_bins: Optional[int]) -> np.ndarray:
    unit_i = _unit_rows(f_i)
    unit_j = _unit_rows(f_j)
    if not angular_bins:
        return _cosine_block(unit_i, unit_j)
    if unit_j.shape[1] % angular_bins:
        raise DimensionMismatch(f"descriptor length {unit_j.shape[1]} does not fit "
                                f"{angular_bins} angular bins")
    grid = unit_j.reshape(unit_j.shape[0], -1, angular_bins)
    best = None
    for shift in range(angular_bins):
        rolled = np.roll(grid, -shift, axis=2).reshape(unit_j.shape)
        block = _cosine_block(unit_i, rolled)
        best = block if best is None else np.minimum(best, block)
    return best


def _check_sequences(f_i, f_j) -> tuple[np.ndarray, np.ndarray]:
    f_i = np.asarray(f_i, dtype=np.float64)
    f_j = np.asarray(f_j, dtype=np.float64)
    if f_i.size == 0 or f_j.size == 0 or len(f_i) == 0 or len(f_j) == 0:
        raise EmptySequence("both descriptor sequences must be non-empty")
    if f_i.ndim != 2 or f_j.ndim != 2 or f_i.shape[1] != f_j.shape[1]:
        raise DimensionMismatch("descriptor sequences must share one descriptor length")
    return f_i, f_j


def difference_matrix(f_i, f_j, seg_i: int = -1, seg_j: int = -1,
                      angular_bins: Optional[int] = None) -> DifferenceMatrix:
    """
    Builds the difference matrix between two descriptor sequences.

    Args:
        f_i (array-like): (N_i, C) descriptors of the row segment.
        f_j (array-like): (N_j, C) descriptors of the column segment.
        seg_i (int): Row segment id.
        seg_j (int): Column segment id.
        angular_bins (int, optional): When set, each entry is the minimum over
            circular angular shifts (polar-histogram descriptors).

    Returns:
        DifferenceMatrix: d[a][b] = cosine_distance(f_i[a], f_j[b]).

    Raises:
        EmptySequence: If either sequence is empty.
    """
    f_i, f_j = _check_sequences(f_i, f_j)
    return DifferenceMatrix(_distance_block(f_i, f_j, angular_bins), seg_i, seg_j)


def extend_difference_matrix(dm: DifferenceMatrix, f_i, f_j,
                             angular_bins: Optional[int] = None) -> DifferenceMatrix:
    """
    Grows a difference matrix to longer sequences, computing only the new strips.

    Args:
        dm (DifferenceMatrix): Matrix over prefixes of f_i and f_j.
        f_i (array-like): Full row descriptors (a prefix of length dm.rows already seen).
        f_j (array-like): Full column descriptors.
        angular_bins (int, optional): As in difference_matrix.

    Returns:
        DifferenceMatrix: The matrix over the full sequences.
    """
    f_i, f_j = _check_sequences(f_i, f_j)
    old_i, old_j = dm.shape
    if old_i > len(f_i) or old_j > len(f_j):
        raise DimensionMismatch("sequences are shorter than the cached matrix")
    d = np.empty((len(f_i), len(f_j)))
    d[:old_i, :old_j] = dm.d
    if old_j < len(f_j) and old_i > 0:
        d[:old_i, old_j:] = _distance_block(f_i[:old_i], f_j[old_j:], angular_bins)
    if old_i < len(f_i):
        d[old_i:, :] = _distance_block(f_i[old_i:], f_j, angular_bins)
    return DifferenceMatrix(d, dm.seg_i, dm.seg_j)


def local_contrast_normalize(dm: DifferenceMatrix, window: int) -> DifferenceMatrix:
    """
    Normalizes each entry against the rows around it in the same column.

    Args:
        dm (DifferenceMatrix): Raw distances.
        window (int): Half-width of the row window (rows a-window .. a+window).

    Returns:
        DifferenceMatrix: (d - mean) / max(std, eps) per entry.
    """
    if window < 1:
        raise InvalidParameter("normalization window must be >= 1")
    d = dm.d
    out = np.empty_like(d)
    n_rows = d.shape[0]
    for a in range(n_rows):
        block = d[max(0, a - window):min(n_rows, a + window + 1)]
        out[a] = (d[a] - block.mean(axis=0)) / np.maximum(block.std(axis=0), NORM_EPS)
    return DifferenceMatrix(out, dm.seg_i, dm.seg_j)


def line_offsets(win: int, v_min: float, v_max: float, v_steps: int,
                 allow_reverse: bool) -> list[np.ndarray]:
    """
    Column offsets of every searched line, one array of length win per slope/direction.

    Offset t of a slope-v line is floor(v * t + 0.5), negated for reverse lines.
    """
    t = np.arange(win)
    offsets = []
    for v in np.linspace(v_min, v_max, v_steps):
        delta = np.floor(v * t + 0.5).astype(int)
        offsets.append(delta)
        if allow_reverse:
            offsets.append(-delta)
    return offsets


def line_scores(normalized: np.ndarray, win: int, offsets: Sequence[np.ndarray]) -> np.ndarray:
    """
    Scores every cell by the best line passing through it.

    A line starts at (r0, c0), covers rows r0 .. r0+win-1 and columns
    c0 + offset[t]; it must lie inside the matrix. Its score is the mean of
    the normalized values it covers.

    Args:
        normalized (np.ndarray): Contrast-normalized difference matrix.
        win (int): Rows per line.
        offsets (list): Column offsets from line_offsets.

    Returns:
        np.ndarray: Per-cell minimum line score, +inf where no line passes.
    """
    n_i, n_j = normalized.shape
    best = np.full((n_i, n_j), np.inf)
    n_starts = n_i - win + 1
    cols = np.arange(n_j)
    for delta in offsets:
        total = np.zeros((n_starts, n_j))
        valid = np.ones(n_j, dtype=bool)
        for t in range(win):
            c = cols + delta[t]
            valid &= (c >= 0) & (c < n_j)
            total = total + normalized[t:t + n_starts][:, np.clip(c, 0, n_j - 1)]
        score = np.where(valid[None, :], total / win, np.inf)
        for t in range(win):
            target = cols + delta[t]
            inside = (target >= 0) & (target < n_j)
            rows = best[t:t + n_starts]
            picked = rows[:, target[inside]]
            rows[:, target[inside]] = np.minimum(picked, score[:, inside])
    return best


def sequence_match(dm: DifferenceMatrix, win: int = 7, v_min: float = 0.8, v_max: float = 1.2,
                   v_steps: int = 5, score_thresh: float = -2.0, allow_reverse: bool = True,
                   norm_window: int = 5) -> list[LoopCandidate]:
    """
    Finds loop candidates as low-valued straight-line structures in D.

    At most one candidate is emitted per row: the column with the smallest
    score, ties going to the smallest column.

    Args:
        dm (DifferenceMatrix): Raw difference matrix.
        win (int): Rows per line, odd and >= 3.
        v_min (float): Smallest slope.
        v_max (float): Largest slope.
        v_steps (int): Number of slopes in linspace(v_min, v_max).
        score_thresh (float): Candidates need a score strictly below this.
        allow_reverse (bool): Also search negative slopes.
        norm_window (int): Half-width of local contrast normalization.

    Returns:
        list[LoopCandidate]: Candidates ordered by k_i.

    Raises:
        InvalidParameter: On an even or too-small window or bad slopes.
        WindowTooLarge: If win exceeds either dimension of D.
    """
    if win < 3 or win % 2 == 0:
        raise InvalidParameter(f"window must be odd and >= 3, got {win}")
    if not 0 < v_min <= v_max or v_steps < 1:
        raise InvalidParameter(f"invalid slope range [{v_min}, {v_max}] x {v_steps}")
    if win > min(dm.shape):
        raise WindowTooLarge(f"window {win} exceeds matrix shape {dm.shape}")
    normalized = local_contrast_normalize(dm, norm_window).d
    scores = line_scores(normalized, win, line_offsets(win, v_min, v_max, v_steps, allow_reverse))
    best_cols = np.argmin(scores, axis=1)
    candidates = []
    for k_i, k_j in enumerate(best_cols):
        score = scores[k_i, k_j]
        if score < score_thresh:
            candidates.append(LoopCandidate(int(k_i), int(k_j), float(score)))
    return candidates


def cluster_zones(cands: Sequence[LoopCandidate], max_k: int, seed: int,
                  shape: Optional[tuple[int, int]] = None, zone_radius: float = 0.05,
                  elbow_gain: float = 0.1) -> list[LoopCandidate]:
    """
    Groups candidates into spatial zones of the difference matrix with k-means.

    Coordinates are (k_i, k_j) scaled into [0, 1]^2 by the matrix shape. A
    compact set (rms spread below zone_radius) is one zone; otherwise k grows
    until the next inertia gain falls below elbow_gain of the one-zone inertia.

    Args:
        cands (list[LoopCandidate]): Candidates to zone.
        max_k (int): Largest zone count considered.
        seed (int): k-means seed.
        shape (tuple, optional): (N_i, N_j) used for scaling.
        zone_radius (float): Spread under which everything is one zone.
        elbow_gain (float): Relative inertia gain that stops the elbow search.

    Returns:
        list[LoopCandidate]: The candidates with zone ids numbered by first appearance.
    """
    if not cands:
        return []
    pts = np.array([[c.k_i, c.k_j] for c in cands], dtype=float)
    if shape is None:
        shape = (int(pts[:, 0].max()) + 1, int(pts[:, 1].max()) + 1)
    scaled = pts / np.array([max(shape[0] - 1, 1), max(shape[1] - 1, 1)], dtype=float)
    k_cap = min(max_k, len(np.unique(scaled, axis=0)))
    spread = np.sqrt(np.mean(np.sum((scaled - scaled.mean(axis=0)) ** 2, axis=1)))

    if k_cap <= 1 or spread <= zone_radius:
        labels = np.zeros(len(cands), dtype=int)
    else:
        def fit(k):
            return KMeans(n_clusters=k, n_init=10, random_state=seed).fit(scaled)

        current = fit(1)
        base_inertia = current.inertia_
        for k in range(1, k_cap):
            following = fit(k + 1)
            if current.inertia_ - following.inertia_ < elbow_gain * base_inertia:
                break
            current = following
        labels = current.labels_

    remap: dict[int, int] = {}
    zoned = []
    for cand, label in zip(cands, labels):
        zone = remap.setdefault(int(label), len(remap))
        zoned.append(replace(cand, zone=zone))
    return zoned


def _positions(poses) -> np.ndarray:
    if len(poses) and isinstance(poses[0], Pose2):
        return np.array([[p.x, p.y] for p in poses])
    return np.asarray(poses, dtype=float)[:, :2]


def edge_consistency(cands: Sequence[LoopCandidate], pos_i: np.ndarray, pos_j: np.ndarray,
                     beta: float) -> np.ndarray:
    """
    Returns the boolean matrix of candidate pairs whose edges satisfy both
    ||edge_i|| >= beta ||edge_j|| and ||edge_j|| >= beta ||edge_i||.
    """
    pi = pos_i[[c.k_i for c in cands]]
    pj = pos_j[[c.k_j for c in cands]]
    edge_i = cdist(pi, pi)
    edge_j = cdist(pj, pj)
    return (edge_i >= beta * edge_j) & (edge_j >= beta * edge_i)


def ransac_edge_filter(zone_cands: Sequence[LoopCandidate], poses_i, poses_j, beta: float = 0.9,
                       iterations: int = 200, sample_n: int = 4, min_inliers: int = 3,
                       seed: int = 0) -> list[LoopCandidate]:
    """
    Keeps the largest geometrically consistent subset of a zone.

    Each iteration samples sample_n candidates; a sample whose members are
    pairwise consistent proposes a consensus of every candidate consistent
    with all of them. The best consensus is then pruned, most violations
    first, until every survivor pair is consistent.

    Args:
        zone_cands (list[LoopCandidate]): Candidates of one zone.
        poses_i (array-like): Row segment poses (Pose2 list or (N, 3) array).
        poses_j (array-like): Column segment poses.
        beta (float): Edge-length equality factor in [0, 1].
        iterations (int): Number of samples drawn.
        sample_n (int): Candidates per sample, >= 2.
        min_inliers (int): Smallest accepted consensus.
        seed (int): Sampling seed.

    Returns:
        list[LoopCandidate]: Surviving candidates in input order; empty on rejection.
    """
    if not 0.0 <= beta <= 1.0 or sample_n < 2:
        raise InvalidParameter(f"invalid RANSAC parameters beta={beta}, sample_n={sample_n}")
    n = len(zone_cands)
    if n == 0 or n < min_inliers:
        return []
    consistent = edge_consistency(zone_cands, _positions(poses_i), _positions(poses_j), beta)
    rng = np.random.default_rng(seed)
    size = min(sample_n, n)
    best = None
    for _ in range(iterations):
        sample = rng.choice(n, size=size, replace=False)
        if not consistent[np.ix_(sample, sample)].all():
            continue
        members = np.flatnonzero(consistent[:, sample].all(axis=1))
        if best is None or len(members) > len(best):
            best = members
    if best is None:
        return []

    members = [int(m) for m in best]
    while members:
        violations = (~consistent[np.ix_(members, members)]).sum(axis=1)
        if violations.max() == 0:
            break
        members.pop(int(np.flatnonzero(violations == violations.max())[-1]))
    if len(members) < min_inliers:
        return []
    return [zone_cands[m] for m in sorted(members)]


def detect_loops(seg_i: Segment, seg_j: Segment, cfg: LcdConfig,
                 diff: Optional[DifferenceMatrix] = None) -> list[LoopClosure]:
    """
    Detects loop closures between two segments.

    Args:
        seg_i (Segment): Row segment.
        seg_j (Segment): Column segment.
        cfg (LcdConfig): Detection parameters and seeds.
        diff (DifferenceMatrix, optional): Precomputed difference matrix.

    Returns:
        list[LoopClosure]: Closures ordered by zone then k_i.

    Raises:
        InvalidParameter: If both segments share an id.
        WindowTooLarge: If a segment is shorter than the sequence window.
    """
    if seg_i.id == seg_j.id:
        raise InvalidParameter("loop detection needs two distinct segments")
    if min(len(seg_i), len(seg_j)) < cfg.win:
        raise WindowTooLarge(f"segments {seg_i.id}/{seg_j.id} are shorter than window {cfg.win}")
    dm = diff if diff is not None else difference_matrix(
        seg_i.descriptors, seg_j.descriptors, seg_i.id, seg_j.id, cfg.rotation_bins)
    cands = sequence_match(dm, cfg.win, cfg.v_min, cfg.v_max, cfg.v_steps, cfg.score_thresh,
                           cfg.allow_reverse, cfg.norm_window)
    if not cands:
        return []
    zoned = cluster_zones(cands, cfg.max_k, cfg.kmeans_seed, dm.shape, cfg.zone_radius,
                          cfg.elbow_gain)
    use_icp = seg_i.has_clouds and seg_j.has_clouds
    closures = []
    for zone in sorted({c.zone for c in zoned}):
        members = [c for c in zoned if c.zone == zone]
        inliers = ransac_edge_filter(members, seg_i.poses, seg_j.poses, cfg.beta,
                                     cfg.ransac_iterations, cfg.sample_n, cfg.min_inliers,
                                     seed=cfg.ransac_seed + zone)
        if not inliers:
            continue
        k_i = [c.k_i for c in inliers]
        k_j = [c.k_j for c in inliers]
        try:
            t_ij = estimate_rigid_transform(seg_j.positions[k_j], seg_i.positions[k_i])
        except DegenerateInput:
            logger.debug("zone %d of pair (%d, %d) has degenerate geometry", zone,
                         seg_i.id, seg_j.id)
            continue
        confidence = len(inliers) / len(members)
        for cand in inliers:
            kf_i = seg_i.keyframes[cand.k_i]
            kf_j = seg_j.keyframes[cand.k_j]
            rel = between(kf_i.odom, compose(t_ij, kf_j.odom))
            if use_icp:
                refined = icp_refine(kf_j.cloud, kf_i.cloud, rel, cfg.icp_max_iter, cfg.icp_tol,
                                     cfg.icp_reject_radius)
                try:
                    rel = refined.raise_for_convergence().pose
                except NoConvergence as exc:
                    logger.debug("closure %s keeps its odometry pose: %s", cand, exc)
            closures.append(LoopClosure(seg_i.id, seg_j.id, cand, rel, confidence))
    logger.debug("pair (%d, %d): %d candidates, %d closures", seg_i.id, seg_j.id,
                 len(cands), len(closures))
    return closures


def prefilter_pass(dm: DifferenceMatrix, stride: int, max_distance: float) -> bool:
    """Cheap test on a row subsample: does any entry come close enough to matter?"""
    return bool(dm.d[::stride].min() <= max_distance)


def overlap_evidence(closures: Sequence[LoopClosure], seg_i: Segment,
                     seg_j: Segment) -> tuple[float, float]:
    """
    Summarizes a pair's closures as (overlap length L_ij, feature gap).

    L_ij is the odometry arc length of seg_i spanned by the closures; the
    feature gap is the mean cosine distance of the matched descriptors.
    """
    if not closures:
        return 0.0, 0.0
    arc = seg_i.arc_length
    rows = [c.k_i for c in closures]
    length = float(arc[max(rows)] - arc[min(rows)])
    gaps = [cosine_distance(seg_i.keyframes[c.k_i].descriptor, seg_j.keyframes[c.k_j].descriptor)
            for c in closures]
    return length, float(np.mean(gaps))
