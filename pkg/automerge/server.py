"""
This module implements the merge server: it ingests streamed keyframes, schedules
pairwise loop detection, updates the connection graph and re-optimizes the
clusters whose evidence changed.

It includes:
- MergeState: everything the server knows, mutated only through ingest and step.
- ingest / step / quiescent: the streaming primitives.
- run_offline / run_incremental: complete runs over a world.
- MergeServer: a lock-guarded wrapper handing out immutable snapshots.
- state_to_dict: deterministic checkpoint of a state.
"""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import pandas as pd

from automerge.cluster import ClusterState, Partition, connection_weight, incremental_update
from automerge.errors import AutoMergeError, OutOfOrderKeyframe
from automerge.geometry import Pose2
from automerge.lcd import (DifferenceMatrix, LoopClosure, detect_loops, difference_matrix,
                           extend_difference_matrix, overlap_evidence, prefilter_pass)
from automerge.models import ClusterConfig, LcdConfig, OptConfig, RunConfig
from automerge.posegraph import NodeKey, optimize_cluster
from automerge.sim import stream
from automerge.trajectory import Keyframe, Segment

logger = logging.getLogger(__name__)

Pair = tuple[int, int]

_MAX_STEPS = 1000


@dataclass
class MergeState:
    """
    Server-side merge state.

    Attributes:
        segments (dict): Append-only segments by id.
        pair_closures (dict): Accepted closures per segment pair (i < j). A new
            detection only adds closures with unseen keys; accepted ones stay.
        clustering (ClusterState): Connection graph, partition and dirty clusters.
        global_poses (dict): Optimized pose per node of every optimized cluster.
        pair_cursor (dict): Segment lengths at the last detection of each pair.
        lcd_queue (set): Pairs waiting for detection.
        grown (set): Segments that received keyframes since the last step.
        failed_clusters (set): Clusters whose last optimization failed.
        diff_cache (dict): Difference matrix of each pair at its cursor.
    """

    segments: dict[int, Segment] = field(default_factory=dict)
    pair_closures: dict[Pair, list[LoopClosure]] = field(default_factory=dict)
    clustering: ClusterState = field(default_factory=ClusterState)
    global_poses: dict[NodeKey, Pose2] = field(default_factory=dict)
    pair_cursor: dict[Pair, tuple[int, int]] = field(default_factory=dict)
    lcd_queue: set[Pair] = field(default_factory=set)
    grown: set[int] = field(default_factory=set)
    failed_clusters: set[tuple[int, ...]] = field(default_factory=set)
    diff_cache: dict[Pair, DifferenceMatrix] = field(default_factory=dict, repr=False)

    @property
    def closures(self) -> list[LoopClosure]:
        return [c for pair in sorted(self.pair_closures) for c in self.pair_closures[pair]]

    @property
    def partition(self) -> Partition:
        return self.clustering.partition

    @property
    def graph(self):
        return self.clustering.graph

    @property
    def dirty(self) -> frozenset:
        return self.clustering.dirty


def ingest(state: MergeState, batch: Iterable[Keyframe]) -> MergeState:
    """
    Appends a batch of keyframes and queues every pair touching a grown segment.

    Args:
        state (MergeState): State to extend.
        batch (list[Keyframe]): Keyframes, in order within each segment.

    Returns:
        MergeState: The same state object.

    Raises:
        OutOfOrderKeyframe: If a keyframe index is not the next one of its
            segment; the state is left untouched.
    """
    batch = list(batch)
    expected = {sid: len(seg) for sid, seg in state.segments.items()}
    for kf in batch:
        if kf.index != expected.get(kf.segment, 0):
            raise OutOfOrderKeyframe(f"segment {kf.segment} expected keyframe "
                                     f"{expected.get(kf.segment, 0)}, got {kf.index}")
        expected[kf.segment] = kf.index + 1

    for kf in batch:
        state.segments.setdefault(kf.segment, Segment(kf.segment)).append(kf)
        state.grown.add(kf.segment)
    for sid in state.grown:
        for other in state.segments:
            if other != sid:
                state.lcd_queue.add((min(sid, other), max(sid, other)))
    return state


def _detect_pair(state: MergeState, pair: Pair, cfg: LcdConfig):
    seg_a, seg_b = state.segments[pair[0]], state.segments[pair[1]]
    if min(len(seg_a), len(seg_b)) < cfg.win:
        return pair, None, None
    cached = state.diff_cache.get(pair)
    if cached is not None:
        dm = extend_difference_matrix(cached, seg_a.descriptors, seg_b.descriptors,
                                      cfg.rotation_bins)
    else:
        dm = difference_matrix(seg_a.descriptors, seg_b.descriptors, seg_a.id, seg_b.id,
                               cfg.rotation_bins)
    if not prefilter_pass(dm, cfg.prefilter_stride, cfg.prefilter_max):
        return pair, dm, []
    return pair, dm, detect_loops(seg_a, seg_b, cfg, diff=dm)


def _optimize_dirty(state: MergeState, clusters: Sequence[tuple[int, ...]],
                    opt_cfg: OptConfig) -> None:
    closures = state.closures
    for cluster in clusters:
        members = set(cluster)
        for key in [key for key in state.global_poses if key[0] in members]:
            del state.global_poses[key]
        try:
            result = optimize_cluster(cluster, state.segments, closures, opt_cfg)
        except AutoMergeError as exc:
            logger.warning("optimization of cluster %s failed in %s: %s", list(cluster),
                           exc.module, exc)
            state.failed_clusters.add(cluster)
            continue
        state.failed_clusters.discard(cluster)
        state.global_poses.update(result.poses)
        logger.info("cluster %s optimized: chi2 %.6g -> %.6g", list(cluster),
                    result.initial_chi2, result.chi2)


def step(state: MergeState, lcd_cfg: Optional[LcdConfig] = None,
         cluster_cfg: Optional[ClusterConfig] = None, opt_cfg: Optional[OptConfig] = None,
         jobs: Optional[int] = None) -> MergeState:
    """
    Runs one detect / weigh / cluster / optimize round.

    Queued pairs are detected in a worker pool; the results are applied in
    pair order so the outcome does not depend on scheduling.

    Args:
        state (MergeState): State to advance.
        lcd_cfg (LcdConfig, optional): Detection parameters.
        cluster_cfg (ClusterConfig, optional): Clustering parameters.
        opt_cfg (OptConfig, optional): Optimization parameters.
        jobs (int, optional): Worker count; None lets the pool decide.

    Returns:
        MergeState: The same state object.
    """
    lcd_cfg = lcd_cfg or LcdConfig()
    cluster_cfg = cluster_cfg or ClusterConfig()
    opt_cfg = opt_cfg or OptConfig()

    pairs = sorted(state.lcd_queue)
    state.lcd_queue.clear()
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(lambda pair: _detect_pair(state, pair, lcd_cfg), pairs))

    changes = []
    touched: set[int] = set()
    for pair, dm, closures in results:
        if dm is None:
            continue
        state.diff_cache[pair] = dm
        state.pair_cursor[pair] = dm.shape
        previous = state.pair_closures.get(pair, [])
        known = {c.key for c in previous}
        added = [c for c in closures if c.key not in known]
        if not added:
            continue
        accepted = previous + added
        state.pair_closures[pair] = accepted
        touched.update(pair)
        length, gap = overlap_evidence(accepted, state.segments[pair[0]],
                                       state.segments[pair[1]])
        weight = connection_weight(gap, length, cluster_cfg.c_w)
        changes.append((pair[0], pair[1], weight, (length, gap)))
        logger.debug("pair %s: %d new closures, %d accepted, L=%.1f gap=%.4f w=%.6f", pair,
                     len(added), len(accepted), length, gap, weight)

    clustering = incremental_update(state.clustering, changes, cluster_cfg,
                                    agents=sorted(state.segments))
    stale = set(touched) | state.grown
    dirty = sorted(set(clustering.dirty)
                   | {c for c in clustering.partition.clusters if stale & set(c)})
    _optimize_dirty(state, dirty, opt_cfg)
    state.failed_clusters &= set(clustering.partition.clusters)
    state.clustering = ClusterState(clustering.graph, clustering.partition, frozenset())
    state.grown.clear()
    return state


def quiescent(state: MergeState) -> bool:
    return not state.lcd_queue and not state.grown and not state.clustering.dirty


def _settle(state: MergeState, cfg: RunConfig, jobs: Optional[int]) -> MergeState:
    for _ in range(_MAX_STEPS):
        if quiescent(state):
            break
        step(state, cfg.lcd, cfg.cluster, cfg.opt, jobs)
    return state


def run_offline(segments: Sequence[Segment], cfg: Optional[RunConfig] = None,
                jobs: Optional[int] = None) -> MergeState:
    """
    Merges complete segments: ingest everything, then step until quiescent.
    """
    cfg = cfg or RunConfig()
    state = ingest(MergeState(), [kf for seg in segments for kf in seg.keyframes])
    return _settle(state, cfg, jobs)


def run_incremental(segments: Sequence[Segment], cfg: Optional[RunConfig] = None,
                    order_seed: Optional[int] = None, batch: Optional[int] = None,
                    jobs: Optional[int] = None) -> tuple[MergeState, pd.DataFrame]:
    """
    Streams the segments in a seeded interleaved order and settles after every batch.

    Args:
        segments (list[Segment]): Complete segments.
        cfg (RunConfig, optional): Run configuration.
        order_seed (int, optional): Streaming seed; defaults to cfg.seeds.order.
        batch (int, optional): Keyframes per batch; defaults to cfg.batch.
        jobs (int, optional): Detection worker count.

    Returns:
        tuple: Final state and a timeline with one row per batch
        (batch, keyframes, clusters, closures).
    """
    cfg = cfg or RunConfig()
    order_seed = cfg.seeds.order if order_seed is None else order_seed
    batch = cfg.batch if batch is None else batch
    state = MergeState()
    rows = []
    seen = 0
    for n, chunk in enumerate(stream(segments, order_seed, batch)):
        ingest(state, chunk)
        _settle(state, cfg, jobs)
        seen += len(chunk)
        rows.append({"batch": n, "keyframes": seen, "clusters": state.partition.k,
                     "closures": len(state.closures)})
    timeline = pd.DataFrame(rows, columns=["batch", "keyframes", "clusters", "closures"])
    return state, timeline


@dataclass(frozen=True)
class MergeSnapshot:
    """Read-only view of a merge state at one instant."""

    partition: Partition
    closures: tuple[LoopClosure, ...]
    global_poses: dict[NodeKey, Pose2]
    segment_lengths: dict[int, int]


class MergeServer:
    """
    Serializes every state mutation behind one lock; readers get snapshots.

    Args:
        cfg (RunConfig, optional): Run configuration.
        jobs (int, optional): Detection worker count.
    """

    def __init__(self, cfg: Optional[RunConfig] = None, jobs: Optional[int] = None):
        self.cfg = cfg or RunConfig()
        self.jobs = jobs
        self._state = MergeState()
        self._lock = threading.Lock()

    def submit(self, batch: Iterable[Keyframe]) -> MergeSnapshot:
        with self._lock:
            ingest(self._state, batch)
            _settle(self._state, self.cfg, self.jobs)
            return self._snapshot()

    def snapshot(self) -> MergeSnapshot:
        with self._lock:
            return self._snapshot()

    def _snapshot(self) -> MergeSnapshot:
        state = self._state
        return MergeSnapshot(state.partition, tuple(state.closures), dict(state.global_poses),
                             {sid: len(seg) for sid, seg in sorted(state.segments.items())})


def closure_record(c: LoopClosure) -> dict:
    pose = c.relative_pose
    return {"seg_i": c.seg_i, "k_i": c.k_i, "seg_j": c.seg_j, "k_j": c.k_j,
            "score": c.candidate.score, "zone": c.candidate.zone,
            "confidence": c.confidence, "dx": pose.x, "dy": pose.y, "dyaw": pose.yaw}


def state_to_dict(state: MergeState) -> dict:
    """Returns a JSON-ready checkpoint whose content depends only on the state."""
    graph = state.graph
    return {
        "segments": [{"id": sid, "keyframes": len(seg)} for sid, seg in sorted(state.segments.items())],
        "closures": [closure_record(c) for c in state.closures],
        "partition": state.partition.to_dict(),
        "weights": {"agents": list(graph.agents), "w": graph.w.tolist()},
        "pair_cursor": [[a, b, int(n_a), int(n_b)]
                        for (a, b), (n_a, n_b) in sorted(state.pair_cursor.items())],
        "poses": [[s, k, p.x, p.y, p.yaw] for (s, k), p in sorted(state.global_poses.items())],
        "failed_clusters": sorted(list(c) for c in state.failed_clusters),
    }
