"""
This module defines the exception hierarchy shared by the merge pipeline.

Every error carries the name of the module that raised it so the command line
front end can report where a run failed.
"""

from typing import Optional


class AutoMergeError(Exception):
    """
    Base class for every pipeline error.

    Attributes:
        module (str): Name of the pipeline module that raised the error.
    """

    module = "automerge"


class ConfigError(AutoMergeError):
    """Raised when a run configuration cannot be parsed or validated."""

    module = "config"


class DegenerateInput(AutoMergeError):
    """Raised when a rigid fit has too few or coincident points."""

    module = "geometry"


class NoConvergence(AutoMergeError):
    """Marks an ICP run that never found overlapping correspondences."""

    module = "geometry"


class ZeroVector(AutoMergeError):
    """Raised when a descriptor that must be normalized is a zero vector."""

    module = "descriptor"


class DimensionMismatch(AutoMergeError):
    """Raised when descriptor inputs disagree in shape or hold non-finite values."""

    module = "descriptor"


class EmptySet(AutoMergeError):
    """Raised when a feature set that must be non-empty is empty."""

    module = "descriptor"


class EmptyCloud(AutoMergeError):
    """Raised when a polar histogram is built from an empty cloud."""

    module = "descriptor"


class LayoutMismatch(AutoMergeError):
    """Raised when two polar histograms use different bin layouts."""

    module = "descriptor"


class EmptySequence(AutoMergeError):
    """Raised when a difference matrix is built from an empty segment."""

    module = "lcd"


class WindowTooLarge(AutoMergeError):
    """Raised when the sequence window exceeds a segment length."""

    module = "lcd"


class InvalidParameter(AutoMergeError):
    """
    Raised when a numeric parameter is outside its valid range.

    Args:
        message (str): What is wrong with the parameter.
        module (str, optional): Module that checked it; defaults to "lcd".
    """

    module = "lcd"

    def __init__(self, message: str, module: Optional[str] = None):
        super().__init__(message)
        if module is not None:
            self.module = module


class ZeroVolume(AutoMergeError):
    """Raised when a cut is evaluated on a cluster with zero total weight."""

    module = "cluster"


class DisconnectedCluster(AutoMergeError):
    """Raised when a cluster has no closure path between its segments."""

    module = "posegraph"


class SingularSystem(AutoMergeError):
    """Raised when the pose-graph normal equations cannot be solved."""

    module = "posegraph"


class KeyMismatch(AutoMergeError):
    """Raised when pose or node key sets do not match."""

    module = "posegraph"


class InfeasibleOverlapPlan(AutoMergeError):
    """Raised when an overlap plan cannot be laid out on the segments."""

    module = "sim"


class OutOfOrderKeyframe(AutoMergeError):
    """Raised when a keyframe is not the next index of its segment."""

    module = "server"
