"""
This module defines the pydantic schemas of the merge pipeline.

It includes:
- Run configuration sections (world, lcd, cluster, opt, seeds) validated from TOML.
- The keyframe record written to and read from world.jsonl.
- The metrics report produced by evaluation.
"""

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class OverlapPlanEntry(BaseModel):
    """
    One planned overlap between two segments of a synthetic world.

    Attributes:
        seg_a (int): Parent segment id.
        seg_b (int): Child segment id; it re-traverses part of seg_a.
        overlap_length (float): Shared path length in meters.
        direction (str): "forward" or "reverse" traversal of the shared part.
    """

    model_config = ConfigDict(extra="forbid")

    seg_a: int = Field(ge=0)
    seg_b: int = Field(ge=0)
    overlap_length: float = Field(gt=0)
    direction: Literal["forward", "reverse"] = "forward"


class WorldSpec(BaseModel):
    """
    Geometry, noise and descriptor settings of a synthetic multi-agent world.

    An empty overlap_plan (None) selects the grouped default plan.
    """

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "seed": 7,
                "n_segments": 3,
                "segment_length": 300.0,
                "keyframe_spacing": 5.0,
                "overlap_plan": [{"seg_a": 0, "seg_b": 1, "overlap_length": 100.0,
                                  "direction": "reverse"}],
                "odom_noise": [0.01, 0.0],
                "descriptor_noise": 0.05,
            }
        },
    )

    seed: int = Field(default=0, ge=0)
    n_segments: int = Field(default=12, ge=1)
    segment_length: float = Field(default=1000.0, gt=0)
    keyframe_spacing: float = Field(default=5.0, gt=0)
    overlap_plan: Optional[list[OverlapPlanEntry]] = None
    odom_noise: tuple[float, float] = (0.0, 0.0)
    descriptor_noise: float = Field(default=0.0, ge=0)
    descriptor_dim: int = Field(default=64, ge=1)
    alias_groups: list[list[tuple[int, int]]] = Field(default_factory=list)
    alias_pairs: int = Field(default=2, ge=0)
    descriptor_source: Literal["synthetic", "polar_histogram"] = "synthetic"
    bins_radial: int = Field(default=4, ge=1)
    bins_angular: int = Field(default=16, ge=1)
    max_range: float = Field(default=50.0, gt=0)

    @model_validator(mode="after")
    def _check_noise(self):
        if min(self.odom_noise) < 0:
            raise ValueError("odom_noise entries must be non-negative")
        return self


class LcdConfig(BaseModel):
    """Parameters of adaptive loop-closure detection."""

    model_config = ConfigDict(extra="forbid")

    win: int = 7
    v_min: float = 0.8
    v_max: float = 1.2
    v_steps: int = Field(default=5, ge=1)
    score_thresh: float = -2.0
    allow_reverse: bool = True
    norm_window: int = Field(default=5, ge=1)
    max_k: int = Field(default=8, ge=1)
    zone_radius: float = 0.05
    elbow_gain: float = 0.1
    beta: float = Field(default=0.9, ge=0.0, le=1.0)
    ransac_iterations: int = Field(default=200, ge=1)
    sample_n: int = Field(default=4, ge=2)
    min_inliers: int = Field(default=3, ge=1)
    prefilter_stride: int = Field(default=4, ge=1)
    prefilter_max: float = 0.6
    rotation_bins: Optional[int] = None
    icp_max_iter: int = 30
    icp_tol: float = 1e-6
    icp_reject_radius: float = 2.0
    kmeans_seed: int = 0
    ransac_seed: int = 0


class ClusterConfig(BaseModel):
    """Parameters of connection weighting and spectral clustering."""

    model_config = ConfigDict(extra="forbid")

    theta: float = Field(default=0.1, gt=0)
    c_w: float = Field(default=1.0, ge=0)
    k_max: Optional[int] = Field(default=None, ge=1)
    kmeans_seed: int = 0


class OptConfig(BaseModel):
    """Levenberg-Marquardt settings and base edge uncertainties."""

    model_config = ConfigDict(extra="forbid")

    max_iter: int = Field(default=50, ge=1)
    lambda_init: float = Field(default=1e-4, gt=0)
    tol: float = Field(default=1e-9, ge=0)
    odom_sigma_trans: float = Field(default=0.05, gt=0)
    odom_sigma_rot: float = Field(default=0.005, gt=0)
    loop_sigma_trans: float = Field(default=0.1, gt=0)
    loop_sigma_rot: float = Field(default=0.01, gt=0)


class Seeds(BaseModel):
    model_config = ConfigDict(extra="forbid")

    world: int = Field(default=0, ge=0)
    order: int = Field(default=0, ge=0)
    kmeans: int = Field(default=0, ge=0)
    ransac: int = Field(default=0, ge=0)


class RunConfig(BaseModel):
    """
    Complete configuration of a generate / merge / evaluate run.

    The seeds section is the single source of every seed; a validator copies
    the seeds into the sections that consume them.
    """

    model_config = ConfigDict(extra="forbid")

    world: WorldSpec = Field(default_factory=WorldSpec)
    lcd: LcdConfig = Field(default_factory=LcdConfig)
    cluster: ClusterConfig = Field(default_factory=ClusterConfig)
    opt: OptConfig = Field(default_factory=OptConfig)
    seeds: Seeds = Field(default_factory=Seeds)
    batch: int = Field(default=50, ge=1)

    @model_validator(mode="after")
    def _propagate_seeds(self):
        self.world = self.world.model_copy(update={"seed": self.seeds.world})
        self.lcd = self.lcd.model_copy(update={"kmeans_seed": self.seeds.kmeans,
                                               "ransac_seed": self.seeds.ransac})
        self.cluster = self.cluster.model_copy(update={"kmeans_seed": self.seeds.kmeans})
        return self


class KeyframeRecord(BaseModel):
    """
    One line of world.jsonl.

    Attributes:
        seg (int): Segment id.
        k (int): Keyframe index along the segment.
        odom (list[float]): Odometry pose [x, y, yaw] in the segment frame.
        gt (list[float]): Ground-truth pose [x, y, yaw] in the world frame.
        desc (list[float]): Descriptor entries.
        cloud (list, optional): Local (x, y) points; present for polar-histogram worlds.
    """

    seg: int
    k: int
    odom: list[float]
    gt: list[float]
    desc: list[float]
    cloud: Optional[list[tuple[float, float]]] = None


class PrPoint(BaseModel):
    threshold: float
    precision: float
    recall: float


class MetricsReport(BaseModel):
    """
    Evaluation of a merge result against ground truth.

    Attributes:
        recall_at_k (list[float]): recall@1 .. recall@top_n.
        pr_curve (list[PrPoint]): Precision/recall swept over closure confidence.
        precision (float): Fraction of accepted closures within the success radius.
        merging_accuracy (float): Fraction of true overlaps with an accepted closure.
        false_merges (int): Accepted closures between segments that do not overlap.
        ate_per_cluster (dict): ATE in meters keyed by the cluster's member list.
        partition_exact (bool): Whether the partition equals the true partition.
        rand_index (float): Rand index between the two partitions.
    """

    recall_at_k: list[float]
    pr_curve: list[PrPoint]
    precision: float
    merging_accuracy: float
    found_overlaps: int
    true_overlaps: int
    false_merges: int
    n_closures: int
    n_queries: int
    ate_per_cluster: dict[str, float]
    partition_exact: bool
    rand_index: float
