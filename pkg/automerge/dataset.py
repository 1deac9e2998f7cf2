"""
This module reads and writes the on-disk datasets and merge results.

It includes:
- world.jsonl: one KeyframeRecord per line, grouped into segments with pandas.
- truth.json: the ground-truth overlaps, partition and aliasing groups.
- Result directories: partition.json, closures.csv and poses.csv loaded back
  into a MergeResult for evaluation and plotting.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from automerge.cluster import Partition
from automerge.geometry import Pose2
from automerge.lcd import LoopCandidate, LoopClosure
from automerge.models import KeyframeRecord
from automerge.server import closure_record
from automerge.sim import GroundTruth
from automerge.trajectory import Keyframe, Segment

WORLD_FILE = "world.jsonl"
TRUTH_FILE = "truth.json"
PARTITION_FILE = "partition.json"
CLOSURES_FILE = "closures.csv"
POSES_FILE = "poses.csv"
STATE_FILE = "state.json"
TIMELINE_FILE = "timeline.csv"
METRICS_FILE = "metrics.json"
PR_FILE = "pr_curve.csv"

CLOSURE_COLUMNS = ["seg_i", "k_i", "seg_j", "k_j", "score", "zone", "confidence",
                   "dx", "dy", "dyaw"]
POSE_COLUMNS = ["segment", "index", "x", "y", "yaw"]


@dataclass(frozen=True)
class MergeResult:
    """Closures, partition and optimized poses read back from a result directory."""

    closures: list[LoopClosure] = field(default_factory=list)
    partition: Partition = field(default_factory=Partition)
    global_poses: dict[tuple[int, int], Pose2] = field(default_factory=dict)


def keyframe_record(kf: Keyframe) -> KeyframeRecord:
    gt = kf.gt if kf.gt is not None else kf.odom
    cloud = kf.cloud.tolist() if kf.cloud is not None else None
    return KeyframeRecord(seg=kf.segment, k=kf.index, odom=kf.odom.to_array().tolist(),
                          gt=gt.to_array().tolist(), desc=np.asarray(kf.descriptor).tolist(),
                          cloud=cloud)


def dumps_world(segments: Sequence[Segment]) -> str:
    lines = [keyframe_record(kf).model_dump_json(exclude_none=True)
             for seg in segments for kf in seg.keyframes]
    return "".join(line + "\n" for line in lines)


def dumps_truth(gt: GroundTruth) -> str:
    return json.dumps(gt.to_dict(), indent=2, sort_keys=True) + "\n"


def read_world(dataset_dir: Path) -> tuple[list[Segment], dict[tuple[int, int], Pose2]]:
    """
    Loads world.jsonl into segments ordered by id.

    Args:
        dataset_dir (Path): Directory holding world.jsonl.

    Returns:
        tuple: (segments, ground-truth pose per (segment, index)).

    Raises:
        FileNotFoundError: If world.jsonl is missing.
    """
    path = Path(dataset_dir) / WORLD_FILE
    with path.open(encoding="utf-8") as handle:
        records = [KeyframeRecord.model_validate_json(line) for line in handle if line.strip()]
    if not records:
        return [], {}
    df = pd.DataFrame({"seg": [r.seg for r in records], "k": [r.k for r in records],
                       "row": range(len(records))})
    segments = []
    gt_poses = {}
    for seg_id, group in df.sort_values(["seg", "k"], kind="stable").groupby("seg", sort=True):
        seg = Segment(int(seg_id))
        for row in group["row"]:
            rec = records[row]
            gt = Pose2.from_array(rec.gt)
            cloud = None
            if rec.cloud is not None:
                cloud = np.array(rec.cloud, dtype=float).reshape(-1, 2)
            seg.append(Keyframe(rec.seg, rec.k, Pose2.from_array(rec.odom),
                                np.array(rec.desc, dtype=float), gt, cloud))
            gt_poses[(rec.seg, rec.k)] = gt
        segments.append(seg)
    return segments, gt_poses


def read_truth(dataset_dir: Path) -> GroundTruth:
    """Loads truth.json together with the ground-truth poses of world.jsonl."""
    _, gt_poses = read_world(dataset_dir)
    data = json.loads((Path(dataset_dir) / TRUTH_FILE).read_text(encoding="utf-8"))
    return GroundTruth.from_dict(data, gt_poses)


def closures_frame(closures: Sequence[LoopClosure]) -> pd.DataFrame:
    return pd.DataFrame([closure_record(c) for c in closures], columns=CLOSURE_COLUMNS)


def poses_frame(poses: dict[tuple[int, int], Pose2]) -> pd.DataFrame:
    rows = [(s, k, p.x, p.y, p.yaw) for (s, k), p in sorted(poses.items())]
    return pd.DataFrame(rows, columns=POSE_COLUMNS)


def _require_columns(df: pd.DataFrame, columns: Sequence[str], path: Path) -> pd.DataFrame:
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise KeyError(f"{path.name} lacks columns {missing}")
    return df


def read_result(result_dir: Path) -> MergeResult:
    """
    Loads a merge result directory.

    Raises:
        FileNotFoundError: If partition.json, closures.csv or poses.csv is missing.
        ValueError: If a file is not valid JSON or CSV.
        KeyError: If an expected key or column is absent.
    """
    result_dir = Path(result_dir)
    part = json.loads((result_dir / PARTITION_FILE).read_text(encoding="utf-8"))
    partition = Partition.from_groups(part["clusters"], part.get("theta", 0.0),
                                      part.get("eigenvalues", ()))
    closures_df = _require_columns(
        pd.read_csv(result_dir / CLOSURES_FILE, float_precision="round_trip"),
        CLOSURE_COLUMNS, result_dir / CLOSURES_FILE)
    closures = [
        LoopClosure(int(r.seg_i), int(r.seg_j),
                    LoopCandidate(int(r.k_i), int(r.k_j), float(r.score),
                                  None if pd.isna(r.zone) else int(r.zone)),
                    Pose2(float(r.dx), float(r.dy), float(r.dyaw)), float(r.confidence))
        for r in closures_df.itertuples(index=False)]
    poses_df = _require_columns(
        pd.read_csv(result_dir / POSES_FILE, float_precision="round_trip"),
        POSE_COLUMNS, result_dir / POSES_FILE)
    poses = {(int(s), int(k)): Pose2(float(x), float(y), float(yaw))
             for s, k, x, y, yaw in zip(*(poses_df[c] for c in POSE_COLUMNS))}
    return MergeResult(closures, partition, poses)
