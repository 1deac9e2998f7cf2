"""
This module generates synthetic multi-agent worlds and scores merge results against them.

It includes:
- default_overlap_plan / generate_world: segment trees with planned forward and
  reverse overlaps, drifted odometry and synthetic or polar-histogram descriptors.
- drift_odometry: integrates noisy relative motion along a ground-truth path.
- stream: seeded interleaving of all keyframes into batches.
- evaluate: recall@k, precision-recall, merging accuracy, ATE and partition checks.
- place_recognition_recall: top-N retrieval of the synthetic descriptor under
  viewpoint changes.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import networkx as nx
import numpy as np
import pandas as pd
from sklearn.metrics import rand_score

from automerge.descriptor import polar_histogram_descriptor, synthetic_descriptor
from automerge.errors import DegenerateInput, InfeasibleOverlapPlan, InvalidParameter, KeyMismatch
from automerge.geometry import IDENTITY, Pose2, between, compose
from automerge.models import MetricsReport, OverlapPlanEntry, PrPoint, WorldSpec
from automerge.posegraph import ate
from automerge.trajectory import Keyframe, Segment

logger = logging.getLogger(__name__)

SUCCESS_RADIUS = 10.0
LANDMARK_CELL = 5.0
LANDMARKS_PER_CELL = 2

_BRANCH_TURN = math.pi / 3.0
_CURVATURE_STEP = 0.002
_CURVATURE_MAX = 0.02
_MIN_GAP = 1


@dataclass(frozen=True)
class TrueOverlap:
    """
    A planned overlap and its matched keyframes.

    Attributes:
        seg_a (int): Parent segment.
        seg_b (int): Child segment.
        direction (str): "forward" or "reverse".
        pairs (tuple): (k_a, k_b) keyframe pairs at identical ground-truth positions.
    """

    seg_a: int
    seg_b: int
    direction: str
    pairs: tuple[tuple[int, int], ...]

    @property
    def pair(self) -> tuple[int, int]:
        return (min(self.seg_a, self.seg_b), max(self.seg_a, self.seg_b))


@dataclass
class GroundTruth:
    """
    Reference for evaluation.

    Attributes:
        poses (dict): World pose per (segment, index).
        overlaps (list[TrueOverlap]): Planned overlaps.
        partition (list[list[int]]): Connected components of the overlap plan.
        aliases (list[list[tuple]]): Keyframes sharing a perceptual-aliasing group.
    """

    poses: dict[tuple[int, int], Pose2] = field(default_factory=dict)
    overlaps: list[TrueOverlap] = field(default_factory=list)
    partition: list[list[int]] = field(default_factory=list)
    aliases: list[list[tuple[int, int]]] = field(default_factory=list)

    def overlap_pairs(self) -> set[tuple[int, int]]:
        return {o.pair for o in self.overlaps}

    def to_dict(self) -> dict:
        return {
            "partition": [list(c) for c in self.partition],
            "overlaps": [{"seg_a": o.seg_a, "seg_b": o.seg_b, "direction": o.direction,
                          "pairs": [list(p) for p in o.pairs]} for o in self.overlaps],
            "aliases": [[list(k) for k in group] for group in self.aliases],
        }

    @classmethod
    def from_dict(cls, data: dict, poses: dict) -> "GroundTruth":
        overlaps = [TrueOverlap(int(o["seg_a"]), int(o["seg_b"]), o["direction"],
                                tuple((int(a), int(b)) for a, b in o["pairs"]))
                    for o in data.get("overlaps", [])]
        aliases = [[(int(s), int(k)) for s, k in group] for group in data.get("aliases", [])]
        return cls(dict(poses), overlaps, [sorted(int(a) for a in c) for c in data["partition"]],
                   aliases)


def default_overlap_plan(n_segments: int, segment_length: float,
                         spacing: float) -> list[OverlapPlanEntry]:
    """
    Groups segments by three into chains: a forward overlap of 0.2 L between the
    first two and a reverse overlap of 0.15 L between the last two.
    """
    plan = []
    for start in range(0, n_segments, 3):
        group = list(range(start, min(start + 3, n_segments)))
        for (a, b), share, direction in zip(zip(group, group[1:]), (0.2, 0.15),
                                            ("forward", "reverse")):
            length = share * segment_length
            if length >= 2.0 * spacing:
                plan.append(OverlapPlanEntry(seg_a=a, seg_b=b, overlap_length=length,
                                             direction=direction))
    return plan


def drift_odometry(gt_poses: Sequence[Pose2], sigma_trans: float, sigma_rot: float,
                   rng: np.random.Generator) -> list[Pose2]:
    """
    Integrates noisy relative motion along a ground-truth path.

    Each step between consecutive poses of length s gets independent Gaussian
    noise with std sigma_trans * sqrt(s) per translation axis and
    sigma_rot * sqrt(s) on yaw. The first odometry pose is the identity.

    Args:
        gt_poses (list[Pose2]): Ground-truth path.
        sigma_trans (float): Translation noise per sqrt(meter).
        sigma_rot (float): Rotation noise per sqrt(meter).
        rng (np.random.Generator): Noise source.

    Returns:
        list[Pose2]: Odometry poses in the segment's own frame.
    """
    if not gt_poses:
        return []
    noise = rng.standard_normal((max(len(gt_poses) - 1, 0), 3))
    odom = [IDENTITY]
    for n, (prev, cur) in enumerate(zip(gt_poses, gt_poses[1:])):
        step = between(prev, cur)
        scale = math.sqrt(math.hypot(step.x, step.y))
        noisy = Pose2(step.x + sigma_trans * scale * noise[n, 0],
                      step.y + sigma_trans * scale * noise[n, 1],
                      step.yaw + sigma_rot * scale * noise[n, 2])
        odom.append(compose(odom[-1], noisy))
    return odom


def _walk(start: Pose2, heading: float, n: int, spacing: float,
          rng: np.random.Generator) -> list[Pose2]:
    """Smooth random path of n poses leaving start along heading; yaw is the travel direction."""
    poses = []
    x, y, kappa = start.x, start.y, 0.0
    for _ in range(n):
        x += spacing * math.cos(heading)
        y += spacing * math.sin(heading)
        poses.append(Pose2(x, y, heading))
        kappa = float(np.clip(kappa + rng.normal(0.0, _CURVATURE_STEP),
                              -_CURVATURE_MAX, _CURVATURE_MAX))
        heading += kappa * spacing
    return poses


def _flip(pose: Pose2) -> Pose2:
    return Pose2(pose.x, pose.y, pose.yaw + math.pi)


@dataclass(frozen=True)
class _Link:
    parent: int
    length: int
    direction: str


def _resolve_plan(spec: WorldSpec, plan: Sequence[OverlapPlanEntry],
                  n_kf: int) -> dict[int, _Link]:
    links: dict[int, _Link] = {}
    for entry in plan:
        a, b = sorted((entry.seg_a, entry.seg_b))
        if a == b or b >= spec.n_segments:
            raise InfeasibleOverlapPlan(f"overlap ({entry.seg_a}, {entry.seg_b}) references "
                                        f"an invalid segment pair")
        if entry.overlap_length < 2.0 * spec.keyframe_spacing:
            raise InfeasibleOverlapPlan(f"overlap ({a}, {b}) is shorter than two keyframes")
        length = int(round(entry.overlap_length / spec.keyframe_spacing))
        if length > n_kf:
            raise InfeasibleOverlapPlan(f"overlap ({a}, {b}) is longer than the segments")
        if b in links:
            raise InfeasibleOverlapPlan(f"segment {b} would derive from both {links[b].parent} "
                                        f"and {a}")
        links[b] = _Link(a, length, entry.direction)
    return links


def _layout_windows(links: dict[int, _Link], n_segments: int, n_kf: int,
                    rng: np.random.Generator) -> tuple[dict, dict]:
    """Places every overlap window on its segments so that windows never overlap."""
    own_start: dict[int, int] = {}
    child_start: dict[int, int] = {}
    for sid in range(n_segments):
        items = [("own", sid, links[sid].length)] if sid in links else []
        items += [("child", c, link.length) for c, link in sorted(links.items())
                  if link.parent == sid]
        if not items:
            continue
        order = rng.permutation(len(items))
        total = sum(length for _, _, length in items)
        gap = (n_kf - total) // (len(items) + 1)
        if gap < _MIN_GAP:
            raise InfeasibleOverlapPlan(f"overlap windows do not fit on segment {sid}")
        cursor = 0
        for pos in order:
            kind, ref, length = items[pos]
            cursor += gap
            (own_start if kind == "own" else child_start)[ref] = cursor
            cursor += length
    return own_start, child_start


def _components(n_segments: int, links: dict[int, _Link]) -> list[list[int]]:
    graph = nx.Graph()
    graph.add_nodes_from(range(n_segments))
    graph.add_edges_from((link.parent, child) for child, link in links.items())
    return sorted(sorted(c) for c in nx.connected_components(graph))


def _occupied(sid: int, links: dict[int, _Link], own_start: dict, child_start: dict) -> set[int]:
    taken = set()
    if sid in links:
        taken.update(range(own_start[sid], own_start[sid] + links[sid].length))
    for child, link in links.items():
        if link.parent == sid:
            taken.update(range(child_start[child], child_start[child] + link.length))
    return taken


def _plant_aliases(spec: WorldSpec, links, own_start, child_start, components, n_kf,
                   rng: np.random.Generator) -> list[list[tuple[int, int]]]:
    groups = [[(int(s), int(k)) for s, k in group] for group in spec.alias_groups]
    component_of = {sid: n for n, comp in enumerate(components) for sid in comp}
    candidates = [(a, b) for a in range(spec.n_segments) for b in range(a + 1, spec.n_segments)
                  if component_of[a] != component_of[b]]
    used: set[tuple[int, int]] = {k for group in groups for k in group}
    for _ in range(spec.alias_pairs):
        if not candidates:
            logger.debug("no segment pair left for an aliasing decoy")
            break
        a, b = candidates[int(rng.integers(len(candidates)))]
        picks = []
        for sid in (a, b):
            free = [k for k in range(n_kf) if k not in _occupied(sid, links, own_start, child_start)
                    and (sid, k) not in used]
            if not free:
                break
            picks.append((sid, int(free[int(rng.integers(len(free)))])))
        if len(picks) == 2:
            groups.append(picks)
            used.update(picks)
    return groups


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = np.asarray(x, dtype=np.uint64) + np.uint64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return x ^ (x >> np.uint64(31))


def _zigzag(values: np.ndarray) -> np.ndarray:
    return np.where(values >= 0, 2 * values, -2 * values - 1).astype(np.uint64)


def landmarks_near(seed: int, center, radius: float) -> np.ndarray:
    """
    Returns the hashed-lattice landmarks within radius of center.

    Every LANDMARK_CELL square holds LANDMARKS_PER_CELL points whose offsets
    are hashed from (seed, cell, slot), so any two queries see the same world.
    """
    cx, cy = float(center[0]), float(center[1])
    ii = np.arange(math.floor((cx - radius) / LANDMARK_CELL),
                   math.floor((cx + radius) / LANDMARK_CELL) + 1)
    jj = np.arange(math.floor((cy - radius) / LANDMARK_CELL),
                   math.floor((cy + radius) / LANDMARK_CELL) + 1)
    gi, gj, slot = (g.ravel() for g in np.meshgrid(ii, jj, np.arange(LANDMARKS_PER_CELL),
                                                    indexing="ij"))
    key = _splitmix64(_splitmix64(_splitmix64(np.full(gi.shape, seed, dtype=np.uint64)
                                              ^ _zigzag(gi)) ^ _zigzag(gj))
                      ^ slot.astype(np.uint64))
    u = (key >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
    v = (_splitmix64(key) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
    pts = np.column_stack(((gi + u) * LANDMARK_CELL, (gj + v) * LANDMARK_CELL))
    return pts[np.hypot(pts[:, 0] - cx, pts[:, 1] - cy) < radius]


def _observe_cloud(spec: WorldSpec, gt: Pose2, rng: np.random.Generator) -> np.ndarray:
    pts = landmarks_near(spec.seed, (gt.x, gt.y), spec.max_range)
    local = (pts - np.array([gt.x, gt.y])) @ gt.rotation()
    if spec.descriptor_noise > 0:
        local = local + rng.normal(0.0, spec.descriptor_noise, local.shape)
    return local


def generate_world(spec: WorldSpec) -> tuple[list[Segment], GroundTruth]:
    """
    Generates a deterministic synthetic world.

    Segments form trees: each segment re-traverses at most one lower-id parent,
    forward or reversed, and branches away from it with a sharp turn. Roots are
    placed far apart so that only planned overlaps exist.

    Args:
        spec (WorldSpec): World settings.

    Returns:
        tuple: (segments ordered by id, ground truth).

    Raises:
        InfeasibleOverlapPlan: If the plan cannot be realized.
    """
    n_kf = int(round(spec.segment_length / spec.keyframe_spacing))
    if n_kf < 1:
        raise InfeasibleOverlapPlan("segments must hold at least one keyframe")
    plan = spec.overlap_plan
    if plan is None:
        plan = default_overlap_plan(spec.n_segments, spec.segment_length, spec.keyframe_spacing)
    links = _resolve_plan(spec, plan, n_kf)
    geo_rng = np.random.default_rng([spec.seed, 0])
    own_start, child_start = _layout_windows(links, spec.n_segments, n_kf, geo_rng)
    components = _components(spec.n_segments, links)
    anchor_of = {comp[0]: n for n, comp in enumerate(components)}
    spread = 4.0 * spec.segment_length
    columns = max(1, math.ceil(math.sqrt(len(components))))

    gt_paths: dict[int, list[Pose2]] = {}
    overlaps: list[TrueOverlap] = []
    for sid in range(spec.n_segments):
        if sid not in links:
            slot = anchor_of[sid]
            if slot == 0:
                start = IDENTITY
            else:
                start = Pose2(spread * (slot % columns), spread * (slot // columns),
                              float(geo_rng.uniform(-math.pi, math.pi)))
            gt_paths[sid] = [start] + _walk(start, start.yaw, n_kf - 1, spec.keyframe_spacing,
                                            geo_rng)
            continue
        link = links[sid]
        parent = gt_paths[link.parent]
        w, p, m = child_start[sid], own_start[sid], link.length
        if link.direction == "forward":
            shared = [parent[w + t] for t in range(m)]
            pairs = tuple((w + t, p + t) for t in range(m))
        else:
            shared = [_flip(parent[w + m - 1 - t]) for t in range(m)]
            pairs = tuple((w + m - 1 - t, p + t) for t in range(m))
        overlaps.append(TrueOverlap(link.parent, sid, link.direction, pairs))
        turn = _BRANCH_TURN if geo_rng.random() < 0.5 else -_BRANCH_TURN
        away = _walk(shared[0], shared[0].yaw + math.pi + turn, p, spec.keyframe_spacing, geo_rng)
        prefix = [_flip(pose) for pose in reversed(away)]
        turn = _BRANCH_TURN if geo_rng.random() < 0.5 else -_BRANCH_TURN
        suffix = _walk(shared[-1], shared[-1].yaw + turn, n_kf - p - m, spec.keyframe_spacing,
                       geo_rng)
        gt_paths[sid] = prefix + shared + suffix

    aliases = _plant_aliases(spec, links, own_start, child_start, components, n_kf,
                             np.random.default_rng([spec.seed, 1]))
    alias_of = {key: g for g, group in enumerate(aliases) for key in group}

    segments = []
    poses = {}
    sigma_trans, sigma_rot = spec.odom_noise
    for sid in range(spec.n_segments):
        gt_path = gt_paths[sid]
        odom = drift_odometry(gt_path, sigma_trans, sigma_rot,
                              np.random.default_rng([spec.seed, 3, sid]))
        seg = Segment(sid)
        for k, (gt, od) in enumerate(zip(gt_path, odom)):
            cloud = None
            if spec.descriptor_source == "polar_histogram":
                cloud = _observe_cloud(spec, gt, np.random.default_rng([spec.seed, 4, sid, k]))
                desc = polar_histogram_descriptor(cloud, spec.bins_radial, spec.bins_angular,
                                                  spec.max_range)
            else:
                desc = synthetic_descriptor(spec.seed, (gt.x, gt.y), gt.yaw, spec.descriptor_noise,
                                            alias_of.get((sid, k)), spec.descriptor_dim,
                                            observation_id=sid)
            seg.append(Keyframe(sid, k, od, desc, gt, cloud))
            poses[(sid, k)] = gt
        segments.append(seg)
    logger.info("generated %d segments x %d keyframes, %d overlaps, %d alias groups",
                spec.n_segments, n_kf, len(overlaps), len(aliases))
    return segments, GroundTruth(poses, overlaps, components, aliases)


def stream(world: Sequence[Segment], order_seed: int, batch: int) -> list[list[Keyframe]]:
    """
    Interleaves all keyframes in a seeded random order, keeping per-segment order.

    Args:
        world (list[Segment]): Complete segments.
        order_seed (int): Interleaving seed.
        batch (int): Keyframes per batch, >= 1.

    Returns:
        list[list[Keyframe]]: Consecutive batches; the last may be shorter.
    """
    if batch < 1:
        raise InvalidParameter("batch must be >= 1", module="sim")
    labels = np.concatenate([np.full(len(seg), n, dtype=int) for n, seg in enumerate(world)]
                            or [np.zeros(0, dtype=int)])
    order = np.random.default_rng(order_seed).permutation(labels)
    cursor = [0] * len(world)
    flat = []
    for n in order:
        flat.append(world[n].keyframes[cursor[n]])
        cursor[n] += 1
    return [flat[i:i + batch] for i in range(0, len(flat), batch)]


def _gt_distance(gt: GroundTruth, a: tuple[int, int], b: tuple[int, int]) -> float:
    pa, pb = gt.poses[a], gt.poses[b]
    return math.hypot(pa.x - pb.x, pa.y - pb.y)


def evaluate(result, gt: GroundTruth, top_n: int = 25) -> MetricsReport:
    """
    Scores a merge result against ground truth.

    Args:
        result: Any object exposing `closures` (list[LoopClosure]), `partition`
            (Partition) and `global_poses` (dict of Pose2 per node).
        gt (GroundTruth): The reference.
        top_n (int): Largest k of recall@k.

    Returns:
        MetricsReport: The metrics.

    Raises:
        KeyMismatch: If the result references keyframes absent from the ground truth.
    """
    if top_n < 1:
        raise InvalidParameter("top_n must be >= 1", module="sim")
    closures = sorted(result.closures, key=lambda c: (-c.confidence, c.key))
    unknown = [key for key in result.global_poses if key not in gt.poses]
    unknown += [key for c in closures for key in ((c.seg_i, c.k_i), (c.seg_j, c.k_j))
                if key not in gt.poses]
    if unknown:
        raise KeyMismatch(f"{len(unknown)} result keys have no ground truth, e.g. {unknown[0]}")
    correct = [_gt_distance(gt, (c.seg_i, c.k_i), (c.seg_j, c.k_j)) <= SUCCESS_RADIUS
               for c in closures]

    queries = sorted({(o.seg_a, a) for o in gt.overlaps for a, _ in o.pairs}
                     | {(o.seg_b, b) for o in gt.overlaps for _, b in o.pairs})
    retrieved: dict[tuple[int, int], list[tuple[int, int, float]]] = {q: [] for q in queries}
    for c in closures:
        for mine, other in (((c.seg_i, c.k_i), (c.seg_j, c.k_j)),
                            ((c.seg_j, c.k_j), (c.seg_i, c.k_i))):
            if mine in retrieved:
                retrieved[mine].append((*other, c.confidence))

    def hit_rank(q):
        for rank, (s, k, _) in enumerate(retrieved[q]):
            if _gt_distance(gt, q, (s, k)) <= SUCCESS_RADIUS:
                return rank
        return None

    ranks = [hit_rank(q) for q in queries]
    recall_at_k = [sum(1 for r in ranks if r is not None and r < k) / len(queries) if queries
                   else 0.0 for k in range(1, top_n + 1)]

    pr_curve = []
    for threshold in sorted({c.confidence for c in closures}, reverse=True):
        kept = [ok for c, ok in zip(closures, correct) if c.confidence >= threshold]
        found = sum(1 for q in queries
                    if any(conf >= threshold and _gt_distance(gt, q, (s, k)) <= SUCCESS_RADIUS
                           for s, k, conf in retrieved[q]))
        pr_curve.append(PrPoint(threshold=threshold, precision=sum(kept) / len(kept),
                                recall=found / len(queries) if queries else 0.0))
    if not pr_curve:
        pr_curve.append(PrPoint(threshold=1.0, precision=1.0, recall=0.0))

    true_pairs = gt.overlap_pairs()
    closed_pairs = {(min(c.seg_i, c.seg_j), max(c.seg_i, c.seg_j)) for c in closures}
    found_overlaps = len(true_pairs & closed_pairs)
    false_merges = sum(1 for c in closures
                       if (min(c.seg_i, c.seg_j), max(c.seg_i, c.seg_j)) not in true_pairs)

    ate_per_cluster = {}
    for cluster in result.partition.clusters:
        keys = [key for key in result.global_poses if key[0] in cluster]
        if len(keys) < 2:
            continue
        try:
            ate_per_cluster[",".join(map(str, cluster))] = ate(
                {key: result.global_poses[key] for key in keys},
                {key: gt.poses[key] for key in keys})
        except DegenerateInput:
            logger.debug("cluster %s has degenerate poses, ATE skipped", cluster)

    segments = sorted(a for comp in gt.partition for a in comp)
    truth_clusters = {tuple(sorted(c)) for c in gt.partition}
    predicted = {}
    for n, cluster in enumerate(result.partition.clusters):
        for a in cluster:
            predicted[a] = n
    next_label = len(result.partition.clusters)
    labels_pred = []
    for a in segments:
        if a not in predicted:
            predicted[a] = next_label
            next_label += 1
        labels_pred.append(predicted[a])
    labels_true = [next(n for n, comp in enumerate(gt.partition) if a in comp) for a in segments]

    return MetricsReport(
        recall_at_k=recall_at_k,
        pr_curve=pr_curve,
        precision=sum(correct) / len(correct) if closures else 1.0,
        merging_accuracy=found_overlaps / len(true_pairs) if true_pairs else 1.0,
        found_overlaps=found_overlaps,
        true_overlaps=len(true_pairs),
        false_merges=false_merges,
        n_closures=len(closures),
        n_queries=len(queries),
        ate_per_cluster=ate_per_cluster,
        partition_exact=set(result.partition.clusters) == truth_clusters,
        rand_index=float(rand_score(labels_true, labels_pred)) if segments else 1.0,
    )


def place_recognition_recall(seed: int = 0, n_places: int = 200, top_n: int = 1,
                             displacements: Iterable[float] = (0.0, 1.0, 2.0, 3.0, 4.0),
                             yaw_offsets_deg: Iterable[float] = (0.0, 15.0, 30.0),
                             noise_sigma: float = 0.0, dim: int = 64,
                             area: float = 10000.0) -> pd.DataFrame:
    """
    Measures top-N retrieval of synthetic descriptors under viewpoint changes.

    A database of random places is queried from positions displaced by a fixed
    distance in a random direction and rotated by a fixed yaw offset.

    Returns:
        pd.DataFrame: One row per (displacement, yaw_deg) with its recall.
    """
    rng = np.random.default_rng([seed, 5])
    places = rng.uniform(0.0, area, size=(n_places, 2))
    yaws = rng.uniform(-math.pi, math.pi, size=n_places)
    database = np.array([synthetic_descriptor(seed, p, y, noise_sigma, dim=dim)
                         for p, y in zip(places, yaws)])
    rows = []
    for displacement in displacements:
        directions = rng.uniform(-math.pi, math.pi, size=n_places)
        offsets = displacement * np.column_stack((np.cos(directions), np.sin(directions)))
        for yaw_deg in yaw_offsets_deg:
            queries = np.array([
                synthetic_descriptor(seed, p + o, y + math.radians(yaw_deg), noise_sigma, dim=dim,
                                     observation_id=1)
                for p, o, y in zip(places, offsets, yaws)])
            distance = 1.0 - queries @ database.T
            ranked = np.argsort(distance, axis=1, kind="stable")[:, :top_n]
            hits = np.any(ranked == np.arange(n_places)[:, None], axis=1)
            rows.append({"displacement": float(displacement), "yaw_deg": float(yaw_deg),
                         "recall": float(hits.mean())})
    return pd.DataFrame(rows)
