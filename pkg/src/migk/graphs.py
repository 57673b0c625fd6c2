"""Per-bag structures: epsilon-graphs with edge features, and affinity cliques.

An epsilon-graph connects two instances of a bag when their distance is
strictly below epsilon = epsilon_factor * (mean pairwise distance over the
bag's distinct instance pairs). Edge weights are reciprocals of the
distances, rescaled by the bag's largest reciprocal so they land in (0, 1];
a zero-distance edge gets the bag's maximum raw weight (1.0 when every edge
has zero distance).

An affinity structure thresholds the same kind of per-bag distance matrix at
delta, the bag's mean pairwise distance, keeps a unit diagonal, and derives
one weight per instance: the reciprocal of its affinity row sum. Instances
in a tight clique of size s therefore weigh 1/s each, so duplicated
instances do not dominate bag-level sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bags import AttributeSchema, Bag, ValidationError
from .distances import VdmTable, pairwise_sq_dists

AFFINITY_RBF = "rbf-induced"
AFFINITY_SQEUCLID = "squared-euclidean"
AFFINITY_MODES = (AFFINITY_RBF, AFFINITY_SQEUCLID)


@dataclass(frozen=True)
class BagGraph:
    """Epsilon-graph of one bag: nodes are instance indexes, edges u < v."""

    bag_id: str
    n_nodes: int
    epsilon: float
    edges: np.ndarray    # (m, 2) int64, each row u < v, no duplicates
    weights: np.ndarray  # (m,) float64 in (0, 1]

    def __post_init__(self) -> None:
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if edges.shape[0] != weights.shape[0]:
            raise ValidationError(f"graph {self.bag_id!r}: edge and weight counts differ")
        edges.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "weights", weights)

    @property
    def m_edges(self) -> int:
        return int(self.edges.shape[0])

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_nodes, dtype=np.int64)
        if self.m_edges:
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg


@dataclass(frozen=True)
class AffinityStructure:
    """Affinity matrix of one bag plus the per-instance clique weights."""

    bag_id: str
    delta: float
    matrix: np.ndarray   # (n, n) float64 of 0/1, unit diagonal, symmetric
    weights: np.ndarray  # (n,) float64, weights[i] = 1 / row_sum(i)

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        matrix.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return int(self.matrix.shape[0])


def mean_pairwise(dists: np.ndarray) -> float:
    """Mean over the distinct (unordered) pairs of a square distance matrix."""
    n = dists.shape[0]
    if n < 2:
        return 0.0
    iu = np.triu_indices(n, k=1)
    return float(dists[iu].mean())


def epsilon_graph_from_dists(bag_id: str, dists: np.ndarray, epsilon_factor: float = 1.0) -> BagGraph:
    """Build the epsilon-graph from a precomputed pairwise distance matrix."""
    if epsilon_factor <= 0.0:
        raise ValidationError("epsilon_factor must be positive")
    dists = np.asarray(dists, dtype=np.float64)
    n = dists.shape[0]
    if n != dists.shape[1]:
        raise ValidationError("distance matrix must be square")
    epsilon = epsilon_factor * mean_pairwise(dists)
    if n < 2 or epsilon == 0.0:
        return BagGraph(bag_id, n, float(epsilon), np.empty((0, 2), dtype=np.int64), np.empty(0))
    iu, ju = np.triu_indices(n, k=1)
    keep = dists[iu, ju] < epsilon
    edges = np.column_stack([iu[keep], ju[keep]])
    d = dists[edges[:, 0], edges[:, 1]] if edges.size else np.empty(0)
    if edges.shape[0] == 0:
        return BagGraph(bag_id, n, float(epsilon), edges, d)
    raw = np.zeros_like(d)
    nonzero = d > 0.0
    raw[nonzero] = 1.0 / d[nonzero]
    max_raw = raw[nonzero].max() if nonzero.any() else 1.0
    raw[~nonzero] = max_raw
    weights = raw / raw.max()
    return BagGraph(bag_id, n, float(epsilon), edges, weights)


def build_epsilon_graph(
    bag: Bag,
    epsilon_factor: float = 1.0,
    schema: AttributeSchema | None = None,
    table: VdmTable | None = None,
) -> BagGraph:
    """Build a bag's epsilon-graph from its instances.

    Distances are mixed distances under the given schema (plain Euclidean
    when the schema is omitted or fully continuous).
    """
    sq = pairwise_sq_dists(bag.values, bag.values, schema, table)
    np.maximum(sq, 0.0, out=sq)
    return epsilon_graph_from_dists(bag.id, np.sqrt(sq), epsilon_factor)


def edge_features(graph: BagGraph) -> np.ndarray:
    """Per-edge feature rows [d_u, p_u, d_v, p_v], aligned with graph.edges.

    d_u is node u's degree divided by the bag's edge count; p_u is the
    edge's share of the total weight incident to u. For every node with at
    least one edge, its incident p values sum to 1.
    """
    m = graph.m_edges
    feats = np.zeros((m, 4), dtype=np.float64)
    if m == 0:
        return feats
    deg = graph.degrees().astype(np.float64)
    wsum = np.zeros(graph.n_nodes, dtype=np.float64)
    np.add.at(wsum, graph.edges[:, 0], graph.weights)
    np.add.at(wsum, graph.edges[:, 1], graph.weights)
    u = graph.edges[:, 0]
    v = graph.edges[:, 1]
    feats[:, 0] = deg[u] / m
    feats[:, 1] = graph.weights / wsum[u]
    feats[:, 2] = deg[v] / m
    feats[:, 3] = graph.weights / wsum[v]
    return feats


def affinity_weights_from_matrix(matrix: np.ndarray) -> np.ndarray:
    """Instance weights from a 0/1 affinity matrix: reciprocal row sums.

    Isolated instances (unit diagonal only) get weight 1; members of an
    all-connected group of size s get 1/s; adding an affinity strictly
    lowers the two incident weights and leaves all others unchanged.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    sums = matrix.sum(axis=1)
    if (sums <= 0.0).any():
        raise ValidationError("affinity rows must sum to at least 1 (unit diagonal required)")
    return 1.0 / sums


def affinity_from_sq_dists(
    bag_id: str,
    sq_dists: np.ndarray,
    gamma: float,
    mode: str = AFFINITY_RBF,
) -> AffinityStructure:
    """Threshold a bag's squared-distance matrix into an affinity structure.

    Distances compared against delta (their mean over distinct pairs):
    "rbf-induced" uses sqrt(2 - 2 exp(-gamma * sq)), the metric induced by
    the Gaussian kernel; "squared-euclidean" uses the squared distances
    directly.
    """
    if mode not in AFFINITY_MODES:
        raise ValidationError(f"unknown affinity mode {mode!r}")
    if mode == AFFINITY_RBF and gamma <= 0.0:
        raise ValidationError("gamma must be positive")
    sq = np.asarray(sq_dists, dtype=np.float64)
    n = sq.shape[0]
    if mode == AFFINITY_RBF:
        dists = np.sqrt(np.maximum(2.0 - 2.0 * np.exp(-gamma * sq), 0.0))
    else:
        dists = sq
    delta = mean_pairwise(dists)
    matrix = (dists < delta).astype(np.float64)
    np.fill_diagonal(matrix, 1.0)
    return AffinityStructure(bag_id, float(delta), matrix, affinity_weights_from_matrix(matrix))


def build_affinity(
    bag: Bag,
    gamma: float,
    mode: str = AFFINITY_RBF,
    schema: AttributeSchema | None = None,
    table: VdmTable | None = None,
) -> AffinityStructure:
    """Build a bag's affinity structure from its instances."""
    sq = pairwise_sq_dists(bag.values, bag.values, schema, table)
    np.maximum(sq, 0.0, out=sq)
    return affinity_from_sq_dists(bag.id, sq, gamma, mode)


def dump_edges(graph: BagGraph, stream) -> None:
    """Write one "u v weight" line per edge (debugging aid)."""
    for (u, v), w in zip(graph.edges, graph.weights):
        stream.write(f"{int(u)} {int(v)} {float(w)!r}\n")
