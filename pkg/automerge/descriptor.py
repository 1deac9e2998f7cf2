"""
This module contains the place-descriptor math used for loop-closure detection.

It includes:
- cosine_distance, the similarity measure behind every difference matrix.
- self_attention and cross_attention_fuse, the fusion path that combines a
  point branch and a spherical branch into one descriptor (fixed parameters,
  no training).
- The lazy quadruplet loss.
- Two deterministic descriptor sources: a polar occupancy histogram computed
  from a local cloud, and a synthetic generator conditioned on world position.

Descriptors are plain 1-D float64 numpy arrays and are treated as immutable.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit, softmax

from automerge.errors import (DimensionMismatch, EmptyCloud, EmptySet, InvalidParameter,
                              LayoutMismatch, ZeroVector)

DEFAULT_DIM = 64
LATTICE_CELL = 2.0

_OPEN_LOW = np.finfo(float).tiny
_OPEN_HIGH = 1.0 - np.finfo(float).epsneg


def as_descriptor(values) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64).ravel()
    if not np.all(np.isfinite(vec)):
        raise DimensionMismatch("descriptor entries must be finite")
    return vec


def unit(values) -> np.ndarray:
    """
    L2-normalizes a descriptor.

    Args:
        values (array-like): Descriptor entries.

    Returns:
        np.ndarray: The normalized descriptor.

    Raises:
        ZeroVector: If the descriptor has zero norm.
    """
    vec = as_descriptor(values)
    norm = np.sqrt(np.sum(vec * vec))
    if norm == 0.0:
        raise ZeroVector("cannot normalize a zero descriptor")
    return vec / norm


def cosine_distance(f, g) -> float:
    """
    Returns 1 - cos(f, g), clipped into [0, 2].

    The arithmetic (normalize, multiply, pairwise sum) is the same one the
    difference matrix uses, so both agree bit for bit.

    Args:
        f (array-like): First descriptor.
        g (array-like): Second descriptor.

    Returns:
        float: The cosine distance.

    Raises:
        DimensionMismatch: If lengths differ.
        ZeroVector: If either descriptor is zero.
    """
    f = as_descriptor(f)
    g = as_descriptor(g)
    if f.shape != g.shape:
        raise DimensionMismatch(f"descriptor lengths differ: {f.size} vs {g.size}")
    return float(np.clip(1.0 - np.sum(unit(f) * unit(g)), 0.0, 2.0))


def attention_map(v) -> np.ndarray:
    """Returns softmax_rows(V V^T), the attention map of a descriptor."""
    v = as_descriptor(v)
    return softmax(np.outer(v, v), axis=1)


def self_attention(v, gamma: float) -> np.ndarray:
    """
    Enhances a descriptor with its own row-softmax attention map.

    V_SA = V + gamma * A^T V, where A = softmax_rows(V V^T).

    Args:
        v (array-like): Descriptor of length C.
        gamma (float): Attention scale, >= 0.

    Returns:
        np.ndarray: The enhanced descriptor, length C.
    """
    v = as_descriptor(v)
    if gamma == 0.0:
        return v.copy()
    attention = attention_map(v)
    return v + gamma * (attention.T @ v)


@dataclass(frozen=True)
class FusionParams:
    """
    Fixed parameters of the fusion layers.

    Attributes:
        gamma (float): Self-attention scale.
        fc_weights (np.ndarray): (2C, 2C) weights of the channel-importance layer.
        fc_bias (np.ndarray): Length-2C bias.
    """

    gamma: float
    fc_weights: np.ndarray = field(repr=False)
    fc_bias: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.asarray(self.fc_weights, dtype=float)
        b = np.asarray(self.fc_bias, dtype=float).ravel()
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] != b.size:
            raise DimensionMismatch(f"fc layer shapes {w.shape} / {b.shape} are inconsistent")
        if self.gamma < 0:
            raise InvalidParameter("gamma must be non-negative", module="descriptor")
        object.__setattr__(self, "fc_weights", w)
        object.__setattr__(self, "fc_bias", b)

    @property
    def channels(self) -> int:
        return self.fc_bias.size

    @classmethod
    def identity(cls, dim: int, gamma: float = 0.5) -> "FusionParams":
        return cls(gamma, np.eye(2 * dim), np.zeros(2 * dim))

    @classmethod
    def seeded(cls, dim: int, seed: int, gamma: float = 0.5, scale: float = 0.1) -> "FusionParams":
        rng = np.random.default_rng(seed)
        return cls(gamma,
                   rng.normal(0.0, scale, size=(2 * dim, 2 * dim)),
                   rng.normal(0.0, scale, size=2 * dim))


def channel_weights(v_cat, params: FusionParams) -> np.ndarray:
    """
    Computes the channel-importance weights alpha_w in the open interval (0, 1).

    alpha_corr = E . rowmean(E) with E = V_cat V_cat^T, then
    alpha_w = sigmoid(W alpha_corr + b).
    """
    v_cat = as_descriptor(v_cat)
    if v_cat.size != params.channels:
        raise DimensionMismatch(f"expected {params.channels} channels, got {v_cat.size}")
    energy = np.outer(v_cat, v_cat)
    alpha_corr = energy @ energy.mean(axis=1)
    # expit saturates to exactly 0 or 1 in float64; the weights must stay open.
    return np.clip(expit(params.fc_weights @ alpha_corr + params.fc_bias), _OPEN_LOW, _OPEN_HIGH)


def cross_attention_fuse(v_point, v_sphere, params: FusionParams) -> np.ndarray:
    """
    Re-weighs the concatenated point and spherical descriptors channel by channel.

    Args:
        v_point (array-like): Point-branch descriptor, length C.
        v_sphere (array-like): Spherical-branch descriptor, length C.
        params (FusionParams): Fixed fusion parameters for 2C channels.

    Returns:
        np.ndarray: V_CA = alpha_w * V_cat, length 2C.

    Raises:
        DimensionMismatch: If the branch lengths or parameter shapes disagree.
    """
    v_point = as_descriptor(v_point)
    v_sphere = as_descriptor(v_sphere)
    if v_point.size != v_sphere.size:
        raise DimensionMismatch(f"branch lengths differ: {v_point.size} vs {v_sphere.size}")
    v_cat = np.concatenate([v_point, v_sphere])
    return channel_weights(v_cat, params) * v_cat


def fuse_descriptors(v_point, v_sphere, params: FusionParams) -> np.ndarray:
    """Runs self-attention on both branches, cross-attention fusion, then normalizes."""
    fused = cross_attention_fuse(self_attention(v_point, params.gamma),
                                 self_attention(v_sphere, params.gamma), params)
    return unit(fused)


@dataclass(frozen=True)
class QuadrupletTuple:
    """
    A training tuple for the lazy quadruplet loss.

    Attributes:
        anchor (np.ndarray): Query descriptor.
        positives (list): Descriptors of places near the anchor.
        negatives (list): Descriptors of places far from the anchor.
        hard_negative (np.ndarray): A negative far from every other negative.
    """

    anchor: np.ndarray
    positives: Sequence[np.ndarray]
    negatives: Sequence[np.ndarray]
    hard_negative: np.ndarray


def lazy_quadruplet_hinge(d_pos, d_neg, d_hard, margin1: float, margin2: float) -> float:
    """
    Evaluates the loss on precomputed distances.

    Args:
        d_pos (array-like): Anchor-to-positive distances.
        d_neg (array-like): Anchor-to-negative distances.
        d_hard (array-like): Hard-negative-to-negative distances.
        margin1 (float): Margin of the first hinge.
        margin2 (float): Margin of the second hinge.

    Returns:
        float: max_ij [m1 + d_pos_i - d_neg_j]_+ + max_ik [m2 + d_pos_i - d_hard_k]_+.
    """
    d_pos = np.asarray(d_pos, dtype=float)
    d_neg = np.asarray(d_neg, dtype=float)
    d_hard = np.asarray(d_hard, dtype=float)
    if d_pos.size == 0 or d_neg.size == 0 or d_hard.size == 0:
        raise EmptySet("positives and negatives must be non-empty")
    worst_pos = d_pos.max()
    first = max(0.0, float((margin1 + worst_pos) - d_neg.min()))
    second = max(0.0, float((margin2 + worst_pos) - d_hard.min()))
    return first + second


def lazy_quadruplet_loss(t: QuadrupletTuple, margin1: float = 0.5, margin2: float = 0.2) -> float:
    """
    Computes the lazy quadruplet loss of a tuple with cosine distances.

    Args:
        t (QuadrupletTuple): Anchor, positives, negatives and hard negative.
        margin1 (float): Margin of the anchor hinge.
        margin2 (float): Margin of the hard-negative hinge.

    Returns:
        float: The non-negative loss.

    Raises:
        EmptySet: If positives or negatives are empty.
    """
    if len(t.positives) == 0 or len(t.negatives) == 0:
        raise EmptySet("positives and negatives must be non-empty")
    d_pos = [cosine_distance(t.anchor, p) for p in t.positives]
    d_neg = [cosine_distance(t.anchor, n) for n in t.negatives]
    d_hard = [cosine_distance(t.hard_negative, n) for n in t.negatives]
    return lazy_quadruplet_hinge(d_pos, d_neg, d_hard, margin1, margin2)


def polar_histogram_descriptor(cloud, bins_radial: int = 4, bins_angular: int = 16,
                               max_range: float = 50.0) -> np.ndarray:
    """
    Builds an L2-normalized occupancy histogram over polar cells around the origin.

    The layout is (bins_radial, bins_angular) flattened row-major, so rotating
    the cloud by one angular bin width rolls every radial row by one.

    Args:
        cloud (array-like): (N, 2) points in the keyframe frame.
        bins_radial (int): Number of rings.
        bins_angular (int): Number of sectors.
        max_range (float): Points at or beyond this range are ignored.

    Returns:
        np.ndarray: Descriptor of length bins_radial * bins_angular.

    Raises:
        EmptyCloud: If no point falls inside max_range.
    """
    pts = np.asarray(cloud, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise EmptyCloud("cloud is empty")
    rng = np.hypot(pts[:, 0], pts[:, 1])
    keep = rng < max_range
    if not keep.any():
        raise EmptyCloud(f"no point within {max_range} m")
    pts, rng = pts[keep], rng[keep]
    angle = np.arctan2(pts[:, 1], pts[:, 0])
    a_bin = np.floor((angle + math.pi) / (2.0 * math.pi) * bins_angular).astype(int) % bins_angular
    r_bin = np.minimum((rng / max_range * bins_radial).astype(int), bins_radial - 1)
    hist = np.zeros((bins_radial, bins_angular))
    np.add.at(hist, (r_bin, a_bin), 1.0)
    return unit(hist.ravel())


def rotation_search_distance(f_ref, f_test, bins_angular: int) -> tuple[float, int]:
    """
    Finds the circular angular shift that best aligns two polar histograms.

    Args:
        f_ref (array-like): Reference histogram descriptor.
        f_test (array-like): Test histogram descriptor.
        bins_angular (int): Sector count of the shared layout.

    Returns:
        tuple[float, int]: Minimum cosine distance and the shift k such that
        f_test is f_ref rolled by k sectors.

    Raises:
        LayoutMismatch: If the descriptors do not share a polar layout.
    """
    ref = as_descriptor(f_ref)
    test = as_descriptor(f_test)
    if ref.size != test.size or bins_angular < 1 or ref.size % bins_angular:
        raise LayoutMismatch(f"descriptors of length {ref.size}/{test.size} do not fit "
                             f"{bins_angular} angular bins")
    grid = test.reshape(-1, bins_angular)
    best, best_shift = math.inf, 0
    for shift in range(bins_angular):
        d = cosine_distance(ref, np.roll(grid, -shift, axis=1).ravel())
        if d < best:
            best, best_shift = d, shift
    return best, best_shift


def _zigzag(i: int) -> int:
    return 2 * i if i >= 0 else -2 * i - 1


def _float_bits(value: float) -> int:
    return int(np.float64(value).view(np.uint64))


def _lattice_vector(world_seed: int, i: int, j: int, dim: int) -> np.ndarray:
    seq = np.random.SeedSequence([world_seed, 0, _zigzag(i), _zigzag(j)])
    return np.random.default_rng(seq).standard_normal(dim)


def _alias_vector(world_seed: int, group: int, dim: int) -> np.ndarray:
    seq = np.random.SeedSequence([world_seed, 1, group])
    return np.random.default_rng(seq).standard_normal(dim)


def synthetic_descriptor(world_seed: int, location, yaw: float, noise_sigma: float,
                         alias_group: Optional[int] = None, dim: int = DEFAULT_DIM,
                         cell_size: float = LATTICE_CELL, observation_id: int = 0) -> np.ndarray:
    """
    Generates a viewpoint-tolerant descriptor for a world position.

    The base vector is a bilinear blend of hashed lattice vectors, so nearby
    positions look alike and distant ones are independent. Yaw does not affect
    the base. Places sharing an alias group get the same base regardless of
    where they are.

    Args:
        world_seed (int): Seed of the world, >= 0.
        location (tuple): (x, y) position in meters.
        yaw (float): Heading in radians, only used to seed the noise.
        noise_sigma (float): Noise magnitude relative to the unit base.
        alias_group (int, optional): Perceptual-aliasing group id.
        dim (int): Descriptor length.
        cell_size (float): Lattice spacing in meters.
        observation_id (int): Distinguishes the noise of co-located observations.

    Returns:
        np.ndarray: A unit-norm descriptor.

    Raises:
        InvalidParameter: If noise_sigma is negative.
    """
    if noise_sigma < 0:
        raise InvalidParameter("noise_sigma must be non-negative", module="descriptor")
    x, y = float(location[0]), float(location[1])
    if alias_group is not None:
        base = _alias_vector(world_seed, int(alias_group), dim)
    else:
        fx, fy = x / cell_size, y / cell_size
        i0, j0 = math.floor(fx), math.floor(fy)
        tx, ty = fx - i0, fy - j0
        base = np.zeros(dim)
        for di, wx in ((0, 1.0 - tx), (1, tx)):
            for dj, wy in ((0, 1.0 - ty), (1, ty)):
                weight = wx * wy
                if weight > 0.0:
                    base += weight * _lattice_vector(world_seed, i0 + di, j0 + dj, dim)
    base = unit(base)
    if noise_sigma == 0.0:
        return base
    seq = np.random.SeedSequence([world_seed, 2, _float_bits(x), _float_bits(y),
                                  _float_bits(yaw), observation_id])
    noise = np.random.default_rng(seq).standard_normal(dim) * (noise_sigma / math.sqrt(dim))
    return unit(base + noise)
