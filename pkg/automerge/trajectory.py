"""
This module defines keyframes and segments, the units streamed to the merge server.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from automerge.geometry import Pose2


@dataclass(frozen=True)
class Keyframe:
    """
    One sub-map sample along a segment.

    Attributes:
        segment (int): Owning segment id.
        index (int): Position along the segment.
        odom (Pose2): Odometry pose in the segment's own frame.
        descriptor (np.ndarray): Place descriptor.
        gt (Pose2, optional): Ground-truth world pose, only known in simulation.
        cloud (np.ndarray, optional): (N, 2) local points in the keyframe frame.
    """

    segment: int
    index: int
    odom: Pose2
    descriptor: np.ndarray = field(repr=False)
    gt: Optional[Pose2] = None
    cloud: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass
class Segment:
    """
    An agent's ordered keyframe sequence.

    Keyframes are append-only; the cached arrays are invalidated on append.
    """

    id: int
    keyframes: list[Keyframe] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.keyframes)

    def append(self, keyframe: Keyframe) -> None:
        self.keyframes.append(keyframe)
        for name in ("poses", "descriptors", "arc_length"):
            self.__dict__.pop(name, None)

    @cached_property
    def poses(self) -> np.ndarray:
        """(N, 3) odometry poses."""
        return np.array([kf.odom.to_array() for kf in self.keyframes]).reshape(-1, 3)

    @property
    def positions(self) -> np.ndarray:
        return self.poses[:, :2]

    @cached_property
    def descriptors(self) -> np.ndarray:
        return np.vstack([kf.descriptor for kf in self.keyframes])

    @cached_property
    def arc_length(self) -> np.ndarray:
        """Cumulative odometry path length at each keyframe."""
        if len(self.keyframes) == 0:
            return np.zeros(0)
        steps = np.hypot(*np.diff(self.positions, axis=0).T) if len(self) > 1 else np.zeros(0)
        return np.concatenate([[0.0], np.cumsum(steps)])

    @property
    def has_clouds(self) -> bool:
        return bool(self.keyframes) and all(kf.cloud is not None for kf in self.keyframes)

    def prefix(self, n: int) -> "Segment":
        return Segment(self.id, list(self.keyframes[:n]))
