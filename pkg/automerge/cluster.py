"""
This module groups agents into sub-maps that should be merged together.

It includes:
- connection_weight: the overlap-evidence weight between two agents.
- ConnectionGraph: the symmetric weight matrix over agents, with max-merge updates.
- Partition: a disjoint cover of the agents.
- spectral_cluster: Laplacian eigen-gap model selection followed by k-means.
- incremental_update: weight updates, re-clustering and dirty-cluster tracking.
- ncut_value / mincut_value: partition objectives used to check the clustering.
"""

import bisect
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.linalg import eigh
from sklearn.cluster import KMeans

from automerge.errors import InvalidParameter, ZeroVolume
from automerge.models import ClusterConfig

logger = logging.getLogger(__name__)

WEIGHT_EPS = 1e-4


def connection_weight(feature_gap: float, overlap_length: float, c_w: float) -> float:
    """
    Computes the connection weight between two agents.

    Args:
        feature_gap (float): Aggregated descriptor distance over the overlap.
        overlap_length (float): Overlap length L_ij in meters.
        c_w (float): Constant added to the squared gap.

    Returns:
        float: exp(-(gap^2 + c_w) / (2 L^2 + 1e-4)), in [0, 1].
    """
    if min(feature_gap, overlap_length, c_w) < 0:
        raise InvalidParameter("connection weight inputs must be non-negative", module="cluster")
    return float(np.exp(-(feature_gap ** 2 + c_w) / (2.0 * overlap_length ** 2 + WEIGHT_EPS)))


@dataclass
class ConnectionGraph:
    """
    Weighted undirected graph over agents.

    Attributes:
        agents (list[int]): Agent ids in ascending order.
        w (np.ndarray): Symmetric weights with a zero diagonal.
        overlap_meta (dict): (i, j) with i < j -> (overlap length, feature gap).
    """

    agents: list[int] = field(default_factory=list)
    w: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    overlap_meta: dict[tuple[int, int], tuple[float, float]] = field(default_factory=dict)

    @classmethod
    def from_weights(cls, agents: Sequence[int], w) -> "ConnectionGraph":
        w = np.array(w, dtype=float)
        if w.shape != (len(agents), len(agents)) or not np.allclose(w, w.T):
            raise InvalidParameter("weight matrix must be square and symmetric", module="cluster")
        order = np.argsort(agents, kind="stable")
        w = w[np.ix_(order, order)]
        np.fill_diagonal(w, 0.0)
        return cls([int(agents[i]) for i in order], w)

    def __len__(self) -> int:
        return len(self.agents)

    def index(self, agent: int) -> int:
        pos = bisect.bisect_left(self.agents, agent)
        if pos == len(self.agents) or self.agents[pos] != agent:
            raise KeyError(agent)
        return pos

    def add_agent(self, agent: int) -> None:
        if agent in self.agents:
            return
        pos = bisect.bisect_left(self.agents, agent)
        self.agents.insert(pos, agent)
        self.w = np.insert(np.insert(self.w, pos, 0.0, axis=0), pos, 0.0, axis=1)

    def weight(self, i: int, j: int) -> float:
        return float(self.w[self.index(i), self.index(j)])

    def update(self, i: int, j: int, weight: float,
               meta: Optional[tuple[float, float]] = None) -> bool:
        """
        Raises the (i, j) weight to `weight` if larger; never lowers it.

        Returns:
            bool: Whether W changed.
        """
        if i == j:
            raise InvalidParameter("self connections are not allowed", module="cluster")
        self.add_agent(i)
        self.add_agent(j)
        a, b = self.index(i), self.index(j)
        if weight <= self.w[a, b]:
            return False
        self.w[a, b] = self.w[b, a] = weight
        if meta is not None:
            self.overlap_meta[(min(i, j), max(i, j))] = meta
        return True

    def copy(self) -> "ConnectionGraph":
        return ConnectionGraph(list(self.agents), self.w.copy(), dict(self.overlap_meta))


@dataclass(frozen=True)
class Partition:
    """
    Disjoint cover of the agents.

    Attributes:
        clusters (tuple): Sorted member tuples, ordered by smallest member.
        theta (float): Eigenvalue threshold used for model selection.
        eigenvalues (tuple): Ascending Laplacian eigenvalues over all agents.
    """

    clusters: tuple[tuple[int, ...], ...] = ()
    theta: float = 0.0
    eigenvalues: tuple[float, ...] = ()

    @classmethod
    def from_groups(cls, groups: Iterable[Iterable[int]], theta: float = 0.0,
                    eigenvalues: Iterable[float] = ()) -> "Partition":
        clusters = sorted(tuple(sorted(int(a) for a in g)) for g in groups if g)
        return cls(tuple(clusters), theta, tuple(float(e) for e in eigenvalues))

    @property
    def k(self) -> int:
        return len(self.clusters)

    def cluster_of(self, agent: int) -> tuple[int, ...]:
        for cluster in self.clusters:
            if agent in cluster:
                return cluster
        raise KeyError(agent)

    def labels(self, agents: Sequence[int]) -> list[int]:
        lookup = {a: n for n, cluster in enumerate(self.clusters) for a in cluster}
        return [lookup[a] for a in agents]

    def to_dict(self) -> dict:
        return {"clusters": [list(c) for c in self.clusters],
                "eigenvalues": list(self.eigenvalues), "theta": self.theta, "k": self.k}


def degree_matrix(g: ConnectionGraph) -> np.ndarray:
    """Returns diag(row sums of W)."""
    return np.diag(g.w.sum(axis=1))


def laplacian(g: ConnectionGraph) -> np.ndarray:
    """Returns the unnormalized graph Laplacian D - W."""
    return degree_matrix(g) - g.w


def _cut_and_volume(g: ConnectionGraph, cluster: Sequence[int]) -> tuple[float, float]:
    inside = np.zeros(len(g), dtype=bool)
    inside[[g.index(a) for a in cluster]] = True
    cut = g.w[np.ix_(inside, ~inside)].sum()
    volume = g.w[inside].sum()
    return float(cut), float(volume)


def _check_cover(g: ConnectionGraph, p: Partition) -> None:
    members = [a for c in p.clusters for a in c]
    if sorted(members) != sorted(g.agents):
        raise InvalidParameter("partition does not cover the graph's agents exactly once",
                               module="cluster")


def ncut_value(g: ConnectionGraph, p: Partition) -> float:
    """
    Computes the normalized cut 1/2 sum_i cut(A_i) / vol(A_i).

    Raises:
        ZeroVolume: If a cluster has no incident weight.
    """
    _check_cover(g, p)
    total = 0.0
    for cluster in p.clusters:
        cut, volume = _cut_and_volume(g, cluster)
        if volume <= 0.0:
            raise ZeroVolume(f"cluster {list(cluster)} has zero volume")
        total += cut / volume
    return 0.5 * total


def mincut_value(g: ConnectionGraph, p: Partition) -> float:
    """Computes the plain cut objective 1/2 sum_i cut(A_i)."""
    _check_cover(g, p)
    return 0.5 * sum(_cut_and_volume(g, c)[0] for c in p.clusters)


def spectral_cluster(g: ConnectionGraph, theta: float = 0.1, k_max: Optional[int] = None,
                     seed: int = 0) -> Partition:
    """
    Clusters agents from the spectrum of the graph Laplacian.

    Agents without any connection become singletons. On the rest, k is the
    number of Laplacian eigenvalues at or below theta (capped by k_max, at
    least 1) and the rows of the first k eigenvectors are grouped with k-means.

    Args:
        g (ConnectionGraph): The connection graph.
        theta (float): Eigenvalue threshold, > 0.
        k_max (int, optional): Largest cluster count; defaults to the agent count.
        seed (int): k-means seed.

    Returns:
        Partition: The clusters, theta and the eigenvalues of the full Laplacian.
    """
    if theta <= 0:
        raise InvalidParameter(f"theta must be positive, got {theta}", module="cluster")
    if len(g) == 0:
        return Partition((), theta, ())
    eigenvalues = tuple(float(e) for e in eigh(laplacian(g), eigvals_only=True))

    degree = g.w.sum(axis=1)
    connected = np.flatnonzero(degree > 0.0)
    groups = [[g.agents[i]] for i in np.flatnonzero(degree == 0.0)]
    if len(connected):
        sub = g.w[np.ix_(connected, connected)]
        values, vectors = eigh(np.diag(sub.sum(axis=1)) - sub)
        limit = len(connected) if k_max is None else min(k_max, len(connected))
        k = max(1, min(int(np.sum(values <= theta)), limit))
        if k == 1:
            labels = np.zeros(len(connected), dtype=int)
        else:
            labels = KMeans(n_clusters=k, init="k-means++", n_init=10,
                            random_state=seed).fit(vectors[:, :k]).labels_
        for label in np.unique(labels):
            groups.append([g.agents[connected[i]] for i in np.flatnonzero(labels == label)])
    return Partition.from_groups(groups, theta, eigenvalues)


@dataclass(frozen=True)
class ClusterState:
    """
    Clustering part of the merge state.

    Attributes:
        graph (ConnectionGraph): Current weights.
        partition (Partition): Current clusters.
        dirty (frozenset): Clusters that need re-optimization.
    """

    graph: ConnectionGraph = field(default_factory=ConnectionGraph)
    partition: Partition = field(default_factory=Partition)
    dirty: frozenset = frozenset()


def incremental_update(state: ClusterState, changed_pairs: Iterable[tuple],
                       cfg: Optional[ClusterConfig] = None,
                       agents: Iterable[int] = ()) -> ClusterState:
    """
    Applies new pair weights and re-clusters.

    Args:
        state (ClusterState): Current state; it is not modified.
        changed_pairs (iterable): (i, j, weight) or (i, j, weight, meta) tuples.
        cfg (ClusterConfig, optional): Clustering parameters.
        agents (iterable): Newly registered agents without edges yet.

    Returns:
        ClusterState: Updated graph and partition; clusters whose membership
        changed are added to the dirty set.
    """
    cfg = cfg or ClusterConfig()
    graph = state.graph.copy()
    for agent in agents:
        graph.add_agent(int(agent))
    changed = False
    for pair in changed_pairs:
        i, j, weight = pair[:3]
        meta = pair[3] if len(pair) > 3 else None
        changed |= graph.update(int(i), int(j), float(weight), meta)
    if not changed and graph.agents == state.graph.agents:
        return ClusterState(graph, state.partition, state.dirty)

    partition = spectral_cluster(graph, cfg.theta, cfg.k_max, cfg.kmeans_seed)
    moved = set(partition.clusters) - set(state.partition.clusters)
    alive = {c for c in state.dirty if c in partition.clusters}
    if moved:
        logger.info("partition now has %d clusters (%d changed)", partition.k, len(moved))
    return ClusterState(graph, partition, frozenset(alive | moved))
