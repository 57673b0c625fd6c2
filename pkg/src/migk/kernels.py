"""Bag-level kernels and their Gram matrices.

Three kernels over bags of instances, all built on the Gaussian base kernel
k_node(x, y) = exp(-gamma * ||x - y||^2) (squared mixed distance when
categorical attributes are present):

* "MI-Kernel": the plain cross sum  sum_a sum_b k_node(x_ia, x_jb).
* "MIGraph": cross sums over both nodes and epsilon-graph edges,
  sum_ab k_node + sum_uv k_edge, where k_edge is the same Gaussian form over
  4-dim edge descriptors [d_u, p_u, d_v, p_v].
* "miGraph": the affinity-weighted cross sum
  (sum_ab w_ia w_jb k_node) / (sum_a w_ia * sum_b w_jb), with per-instance
  weights w_ia from each bag's affinity structure, so that cliques of
  near-duplicate instances count once instead of once per member.

Each kernel is exposed pairwise (one bag pair at a time, with optional
evaluation counting) and batched (a Gram matrix over a bag list, computing
per-bag structures and the pooled distance matrix exactly once). Unless
normalization is disabled, kernel values are rescaled by the two bags'
self-similarities, k(i,j) / sqrt(k(i,i) * k(j,j)), so diagonals are 1.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .bags import AttributeSchema, Bag, Dataset, ValidationError
from .distances import VdmTable, pairwise_sq_dists
from .graphs import (
    AFFINITY_MODES,
    AFFINITY_RBF,
    AffinityStructure,
    BagGraph,
    affinity_from_sq_dists,
    edge_features,
    epsilon_graph_from_dists,
)

log = logging.getLogger(__name__)

MIGRAPH = "MIGraph"
MIGRAPH_AFFINITY = "miGraph"
MI_KERNEL = "MI-Kernel"
KERNEL_NAMES = (MIGRAPH, MIGRAPH_AFFINITY, MI_KERNEL)

# Lowercase spellings accepted on input. "migraph" resolves to the affinity
# variant (its canonical name is lowercase); the node+edge variant must be
# spelled exactly "MIGraph".
_ALIASES = {
    "migraph": MIGRAPH_AFFINITY,
    "mikernel": MI_KERNEL,
    "mi-kernel": MI_KERNEL,
}

# Cap on the pooled edge-feature distance matrix; above it the edge term of
# the batched MIGraph gram falls back to per-bag-pair blocks.
_EDGE_POOL_LIMIT = 4096


def canonical_kernel_name(name: str) -> str:
    """Resolve a kernel name, accepting the documented lowercase aliases."""
    if name in KERNEL_NAMES:
        return name
    if name in _ALIASES:
        return _ALIASES[name]
    raise ValidationError(f"unknown kernel {name!r}; expected one of {', '.join(KERNEL_NAMES)}")


@dataclass(frozen=True)
class KernelConfig:
    """Hyperparameters shared by the kernels.

    gamma_node: Gaussian width for instance comparisons.
    gamma_edge: Gaussian width for edge-descriptor comparisons (MIGraph).
    epsilon_factor: edge threshold as a multiple of the bag's mean pairwise
        distance (MIGraph).
    affinity_gamma: width used when thresholding affinity distances
        (miGraph); None couples it to gamma_node.
    affinity_mode: "rbf-induced" or "squared-euclidean" affinity distances.
    edge_term_weight: multiplier on the MIGraph edge term (1.0 keeps the
        standard kernel; 0.0 reduces it to MI-Kernel).
    normalize: rescale by self-similarities so k(X, X) = 1.
    """

    gamma_node: float = 1.0
    gamma_edge: float = 1.0
    epsilon_factor: float = 1.0
    affinity_gamma: float | None = None
    affinity_mode: str = AFFINITY_RBF
    edge_term_weight: float = 1.0
    normalize: bool = True

    def __post_init__(self) -> None:
        if self.gamma_node <= 0.0 or self.gamma_edge <= 0.0:
            raise ValidationError("kernel widths must be positive")
        if self.epsilon_factor <= 0.0:
            raise ValidationError("epsilon_factor must be positive")
        if self.affinity_gamma is not None and self.affinity_gamma <= 0.0:
            raise ValidationError("affinity_gamma must be positive")
        if self.affinity_mode not in AFFINITY_MODES:
            raise ValidationError(f"unknown affinity mode {self.affinity_mode!r}")
        if self.edge_term_weight < 0.0:
            raise ValidationError("edge_term_weight must be nonnegative")

    @property
    def affinity_gamma_effective(self) -> float:
        return self.gamma_node if self.affinity_gamma is None else self.affinity_gamma

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "KernelConfig":
        return cls(**data)


def config_digest(kernel: str, config: KernelConfig) -> str:
    """Stable hex digest identifying a kernel + hyperparameter choice."""
    payload = {"kernel": canonical_kernel_name(kernel), "config": config.to_dict()}
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


class EvalCounter:
    """Counts base-kernel evaluations performed on its behalf."""

    def __init__(self) -> None:
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)


def gamma_grid(mean_sq_dist: float, powers: Iterable[int] = range(-4, 5)) -> list[float]:
    """Width grid {2^k / mean squared pairwise distance}.

    The divisor is the mean squared full-vector gap, i.e. the attribute
    count times the mean per-attribute squared difference, so the grid is
    scale- and dimension-free. A degenerate (zero) mean falls back to 2^k.
    """
    base = 1.0 / mean_sq_dist if mean_sq_dist > 0.0 else 1.0
    return [float(2.0**k * base) for k in powers]


def _symmetrize(matrix: np.ndarray) -> np.ndarray:
    """Copy the upper triangle onto the lower one, keeping the diagonal."""
    upper = np.triu(matrix, k=1)
    return upper + upper.T + np.diag(np.diag(matrix))


def k_node(
    x: np.ndarray,
    y: np.ndarray,
    gamma: float,
    schema: AttributeSchema | None = None,
    table: VdmTable | None = None,
) -> float:
    """Gaussian base kernel over two instances (squared mixed distance)."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    y = np.asarray(y, dtype=np.float64).reshape(1, -1)
    sq = pairwise_sq_dists(x, y, schema, table)[0, 0]
    return float(np.exp(-gamma * sq))


def k_edge(f: np.ndarray, g: np.ndarray, gamma_edge: float) -> float:
    """Gaussian base kernel over two 4-dim edge descriptors."""
    f = np.asarray(f, dtype=np.float64).ravel()
    g = np.asarray(g, dtype=np.float64).ravel()
    d = f - g
    return float(np.exp(-gamma_edge * float(d @ d)))


def _node_block(
    a: np.ndarray,
    b: np.ndarray,
    gamma: float,
    schema: AttributeSchema | None,
    table: VdmTable | None,
    counter: EvalCounter | None,
) -> np.ndarray:
    block = np.exp(-gamma * pairwise_sq_dists(a, b, schema, table))
    if counter is not None:
        counter.add(block.size)
    return block


def _require_instances(bag: Bag) -> None:
    if bag.n == 0:
        raise ValidationError(f"bag {bag.id!r} has no instances; kernels need at least one")


def mi_kernel(
    bag_i: Bag,
    bag_j: Bag,
    config: KernelConfig = KernelConfig(),
    *,
    schema: AttributeSchema | None = None,
    table: VdmTable | None = None,
    counter: EvalCounter | None = None,
    self_i: float | None = None,
    self_j: float | None = None,
) -> float:
    """Plain cross-sum kernel: sum over instance pairs of k_node.

    Costs exactly n_i * n_j base-kernel evaluations (plus the two self sums
    when normalizing without precomputed self values).
    """
    _require_instances(bag_i)
    _require_instances(bag_j)
    raw = float(_node_block(bag_i.values, bag_j.values, config.gamma_node, schema, table, counter).sum())
    if not config.normalize:
        return raw
    if self_i is None:
        self_i = float(_node_block(bag_i.values, bag_i.values, config.gamma_node, schema, table, counter).sum())
    if self_j is None:
        self_j = float(_node_block(bag_j.values, bag_j.values, config.gamma_node, schema, table, counter).sum())
    return raw / float(np.sqrt(self_i * self_j))


def clique_kernel(
    bag_i: Bag,
    bag_j: Bag,
    config: KernelConfig = KernelConfig(),
    *,
    affinity_i: AffinityStructure | None = None,
    affinity_j: AffinityStructure | None = None,
    schema: AttributeSchema | None = None,
    table: VdmTable | None = None,
    counter: EvalCounter | None = None,
    self_i: float | None = None,
    self_j: float | None = None,
) -> float:
    """Affinity-weighted cross-sum kernel.

    (sum_ab w_ia w_jb k_node) / (sum_a w_ia sum_b w_jb), with instance
    weights w from each bag's affinity structure (built here when not
    supplied). Costs exactly n_i * n_j base-kernel evaluations.
    """
    _require_instances(bag_i)
    _require_instances(bag_j)
    if affinity_i is None:
        affinity_i = _bag_affinity(bag_i, config, schema, table)
    if affinity_j is None:
        affinity_j = _bag_affinity(bag_j, config, schema, table)
    wi, wj = affinity_i.weights, affinity_j.weights
    if wi.shape[0] != bag_i.n or wj.shape[0] != bag_j.n:
        raise ValidationError("affinity structure does not match its bag")
    block = _node_block(bag_i.values, bag_j.values, config.gamma_node, schema, table, counter)
    raw = float(wi @ block @ wj) / float(wi.sum() * wj.sum())
    if not config.normalize:
        return raw
    if self_i is None:
        self_i = _clique_self(bag_i, affinity_i, config, schema, table, counter)
    if self_j is None:
        self_j = _clique_self(bag_j, affinity_j, config, schema, table, counter)
    return raw / float(np.sqrt(self_i * self_j))


def _bag_affinity(
    bag: Bag,
    config: KernelConfig,
    schema: AttributeSchema | None,
    table: VdmTable | None,
) -> AffinityStructure:
    sq = pairwise_sq_dists(bag.values, bag.values, schema, table)
    np.maximum(sq, 0.0, out=sq)
    return affinity_from_sq_dists(bag.id, sq, config.affinity_gamma_effective, config.affinity_mode)


def _clique_self(
    bag: Bag,
    affinity: AffinityStructure,
    config: KernelConfig,
    schema: AttributeSchema | None,
    table: VdmTable | None,
    counter: EvalCounter | None,
) -> float:
    w = affinity.weights
    block = _node_block(bag.values, bag.values, config.gamma_node, schema, table, counter)
    return float(w @ block @ w) / float(w.sum() ** 2)


def graph_kernel(
    bag_i: Bag,
    bag_j: Bag,
    config: KernelConfig = KernelConfig(),
    *,
    graph_i: BagGraph | None = None,
    graph_j: BagGraph | None = None,
    feats_i: np.ndarray | None = None,
    feats_j: np.ndarray | None = None,
    schema: AttributeSchema | None = None,
    table: VdmTable | None = None,
    counter: EvalCounter | None = None,
    self_i: float | None = None,
    self_j: float | None = None,
) -> float:
    """Node-plus-edge kernel over epsilon-graphs.

    sum_ab k_node + edge_term_weight * sum_uv k_edge over the two bags'
    instances and edge descriptors. Costs exactly n_i * n_j + m_i * m_j
    base-kernel evaluations.
    """
    _require_instances(bag_i)
    _require_instances(bag_j)
    if graph_i is None:
        graph_i = _bag_graph(bag_i, config, schema, table)
    if graph_j is None:
        graph_j = _bag_graph(bag_j, config, schema, table)
    if feats_i is None:
        feats_i = edge_features(graph_i)
    if feats_j is None:
        feats_j = edge_features(graph_j)
    raw = _graph_raw(bag_i, bag_j, feats_i, feats_j, config, schema, table, counter)
    if not config.normalize:
        return raw
    if self_i is None:
        self_i = _graph_raw(bag_i, bag_i, feats_i, feats_i, config, schema, table, counter)
    if self_j is None:
        self_j = _graph_raw(bag_j, bag_j, feats_j, feats_j, config, schema, table, counter)
    return raw / float(np.sqrt(self_i * self_j))


def _bag_graph(
    bag: Bag,
    config: KernelConfig,
    schema: AttributeSchema | None,
    table: VdmTable | None,
) -> BagGraph:
    sq = pairwise_sq_dists(bag.values, bag.values, schema, table)
    np.maximum(sq, 0.0, out=sq)
    return epsilon_graph_from_dists(bag.id, np.sqrt(sq), config.epsilon_factor)


def _graph_raw(
    bag_i: Bag,
    bag_j: Bag,
    feats_i: np.ndarray,
    feats_j: np.ndarray,
    config: KernelConfig,
    schema: AttributeSchema | None,
    table: VdmTable | None,
    counter: EvalCounter | None,
) -> float:
    total = float(_node_block(bag_i.values, bag_j.values, config.gamma_node, schema, table, counter).sum())
    if feats_i.shape[0] and feats_j.shape[0]:
        edge_block = np.exp(-config.gamma_edge * pairwise_sq_dists(feats_i, feats_j))
        if counter is not None:
            counter.add(edge_block.size)
        total += config.edge_term_weight * float(edge_block.sum())
    return total


@dataclass(frozen=True)
class GramMatrix:
    """A bag-level Gram matrix plus the provenance needed to reuse it."""

    values: np.ndarray
    bag_ids: tuple[str, ...]
    kernel: str
    config: KernelConfig
    jitter: float = 0.0

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValidationError("gram values must be square")
        if values.shape[0] != len(self.bag_ids):
            raise ValidationError("gram size does not match the bag id list")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "bag_ids", tuple(self.bag_ids))

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def config_digest(self) -> str:
        return config_digest(self.kernel, self.config)


class GramBatch:
    """Shared state for computing many Grams over one bag list.

    Pools every instance into one matrix, computes the squared-distance
    matrix once (it does not depend on any width parameter), and builds
    per-bag graphs and affinity structures exactly once per setting. Bag
    rows/columns of the resulting Grams depend only on the two bags' own
    instances, so a subset's entries match what the subset alone would give.
    """

    def __init__(
        self,
        bags: Sequence[Bag],
        kernel: str,
        schema: AttributeSchema | None = None,
        table: VdmTable | None = None,
    ) -> None:
        self.kernel = canonical_kernel_name(kernel)
        self.bags = list(bags)
        if not self.bags:
            raise ValidationError("need at least one bag")
        for bag in self.bags:
            _require_instances(bag)
        self.schema = schema
        self.table = table
        self.sizes = np.array([b.n for b in self.bags], dtype=np.int64)
        self.starts = np.concatenate([[0], np.cumsum(self.sizes)])
        self.stacked = np.vstack([b.values for b in self.bags])
        self.sq = pairwise_sq_dists(self.stacked, self.stacked, schema, table)
        np.maximum(self.sq, 0.0, out=self.sq)
        n_inst = int(self.sizes.sum())
        rows = np.repeat(np.arange(len(self.bags)), self.sizes)
        self._indicator = sp.csr_matrix(
            (np.ones(n_inst), (rows, np.arange(n_inst))), shape=(len(self.bags), n_inst)
        )
        self._graph_cache: dict[float, dict] = {}
        self._affinity_cache: dict[tuple[float, str], tuple[np.ndarray, np.ndarray]] = {}

    # -- shared statistics -------------------------------------------------

    def instance_indices(self, bag_indices: Sequence[int]) -> np.ndarray:
        parts = [np.arange(self.starts[i], self.starts[i + 1]) for i in bag_indices]
        return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)

    def mean_sq_dist(self, bag_indices: Sequence[int] | None = None) -> float:
        """Mean squared distance over distinct pooled instance pairs."""
        if bag_indices is None:
            bag_indices = range(len(self.bags))
        idx = self.instance_indices(bag_indices)
        m = idx.shape[0]
        if m < 2:
            return 0.0
        e = np.zeros(self.sq.shape[0])
        e[idx] = 1.0
        total = float(e @ (self.sq @ e))
        return total / (m * (m - 1))

    def mean_sq_edge_dist(self, bag_indices: Sequence[int] | None = None, eps_factor: float = 1.0) -> float:
        """Mean squared distance over pooled edge descriptors.

        Uses an evenly strided subsample above 2000 descriptors (the value
        only scales a width grid).
        """
        bundle = self._graphs(eps_factor)
        if bag_indices is None:
            bag_indices = range(len(self.bags))
        rows = [
            bundle["feats"][bundle["starts"][i]: bundle["starts"][i + 1]]
            for i in bag_indices
        ]
        feats = np.vstack(rows) if rows else np.empty((0, 4))
        m = feats.shape[0]
        if m < 2:
            return 0.0
        if m > 2000:
            feats = feats[np.unique(np.linspace(0, m - 1, 2000).astype(np.int64))]
            m = feats.shape[0]
        sq = pairwise_sq_dists(feats, feats)
        return float(sq.sum()) / (m * (m - 1))

    # -- cached per-bag structures ------------------------------------------

    def _sq_block(self, i: int) -> np.ndarray:
        s, e = self.starts[i], self.starts[i + 1]
        return self.sq[s:e, s:e]

    def _graphs(self, eps_factor: float) -> dict:
        key = float(eps_factor)
        if key not in self._graph_cache:
            graphs, feats, sizes = [], [], []
            for i, bag in enumerate(self.bags):
                block = np.maximum(self._sq_block(i), 0.0)
                graph = epsilon_graph_from_dists(bag.id, np.sqrt(block), key)
                f = edge_features(graph)
                graphs.append(graph)
                feats.append(f)
                sizes.append(f.shape[0])
            sizes_arr = np.array(sizes, dtype=np.int64)
            starts = np.concatenate([[0], np.cumsum(sizes_arr)])
            stacked = np.vstack(feats) if starts[-1] else np.empty((0, 4))
            total = int(starts[-1])
            esq = pairwise_sq_dists(stacked, stacked) if 0 < total <= _EDGE_POOL_LIMIT else None
            rows = np.repeat(np.arange(len(self.bags)), sizes_arr)
            indicator = sp.csr_matrix(
                (np.ones(total), (rows, np.arange(total))), shape=(len(self.bags), total)
            )
            self._graph_cache[key] = {
                "graphs": graphs,
                "feats": stacked,
                "starts": starts,
                "esq": esq,
                "indicator": indicator,
            }
        return self._graph_cache[key]

    def graphs(self, eps_factor: float = 1.0) -> list[BagGraph]:
        return self._graphs(eps_factor)["graphs"]

    def _affinity(self, gamma: float, mode: str) -> tuple[np.ndarray, np.ndarray]:
        key = (float(gamma), mode)
        if key not in self._affinity_cache:
            weights = np.empty(self.sq.shape[0])
            sums = np.empty(len(self.bags))
            for i, bag in enumerate(self.bags):
                block = np.maximum(self._sq_block(i), 0.0)
                aff = affinity_from_sq_dists(bag.id, block, gamma, mode)
                weights[self.starts[i]: self.starts[i + 1]] = aff.weights
                sums[i] = aff.weights.sum()
            self._affinity_cache[key] = (weights, sums)
        return self._affinity_cache[key]

    # -- gram assembly -------------------------------------------------------

    def _aggregate(self, kernel_matrix: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
        if weights is None:
            s = self._indicator
        else:
            s = self._indicator.multiply(weights[None, :]).tocsr()
        return np.asarray((s @ kernel_matrix) @ s.T.toarray())

    def _edge_gram(self, gamma_edge: float, eps_factor: float) -> np.ndarray:
        bundle = self._graphs(eps_factor)
        n = len(self.bags)
        if bundle["starts"][-1] == 0:
            return np.zeros((n, n))
        if bundle["esq"] is not None:
            ke = np.exp(-gamma_edge * bundle["esq"])
            s = bundle["indicator"]
            return np.asarray((s @ ke) @ s.T.toarray())
        feats, starts = bundle["feats"], bundle["starts"]
        out = np.zeros((n, n))
        chunk = 4 * 1024 * 1024
        for i in range(n):
            fi = feats[starts[i]: starts[i + 1]]
            if not fi.shape[0]:
                continue
            for j in range(i, n):
                fj = feats[starts[j]: starts[j + 1]]
                if not fj.shape[0]:
                    continue
                step = max(1, chunk // fj.shape[0])
                total = 0.0
                for lo in range(0, fi.shape[0], step):
                    block = pairwise_sq_dists(fi[lo: lo + step], fj)
                    total += float(np.exp(-gamma_edge * block).sum())
                out[i, j] = total
                out[j, i] = total
        return out

    def gram(self, config: KernelConfig) -> np.ndarray:
        """The full bag-by-bag Gram under one hyperparameter setting."""
        k_inst = np.exp(-config.gamma_node * self.sq)
        if self.kernel == MI_KERNEL:
            raw = self._aggregate(k_inst)
        elif self.kernel == MIGRAPH_AFFINITY:
            weights, sums = self._affinity(config.affinity_gamma_effective, config.affinity_mode)
            raw = self._aggregate(k_inst, weights) / np.outer(sums, sums)
        elif self.kernel == MIGRAPH:
            raw = self._aggregate(k_inst)
            if config.edge_term_weight:
                raw = raw + config.edge_term_weight * self._edge_gram(config.gamma_edge, config.epsilon_factor)
        else:  # pragma: no cover - canonical_kernel_name guards this
            raise ValidationError(f"unknown kernel {self.kernel!r}")
        if config.normalize:
            d = np.sqrt(np.diag(raw))
            raw = raw / np.outer(d, d)
            np.fill_diagonal(raw, 1.0)
        return _symmetrize(raw)


def _psd_repair(values: np.ndarray) -> tuple[np.ndarray, float]:
    """Add diagonal jitter when the smallest eigenvalue is materially negative.

    Repairs only when min_eig < -1e-8 * max_eig; the jitter is |min_eig| +
    1e-10. Raises if one repair does not reach PSD.
    """
    eigs = np.linalg.eigvalsh(values)
    min_eig, max_eig = float(eigs[0]), float(eigs[-1])
    if min_eig >= -1e-8 * max(max_eig, 0.0):
        return values, 0.0
    jitter = -min_eig + 1e-10
    log.warning("gram not positive semidefinite (min eigenvalue %.3e); adding jitter %.3e", min_eig, jitter)
    repaired = values + jitter * np.eye(values.shape[0])
    eigs = np.linalg.eigvalsh(repaired)
    if float(eigs[0]) < -1e-8 * max(float(eigs[-1]), 0.0):
        raise ValidationError("gram stayed indefinite after jitter repair")
    return repaired, jitter


def _resolve_bags(
    bags: Dataset | Sequence[Bag],
    schema: AttributeSchema | None,
) -> tuple[list[Bag], AttributeSchema | None]:
    if isinstance(bags, Dataset):
        return list(bags.bags), schema if schema is not None else bags.schema
    return list(bags), schema


def gram(
    bags: Dataset | Sequence[Bag],
    kernel: str,
    config: KernelConfig = KernelConfig(),
    *,
    schema: AttributeSchema | None = None,
    table: VdmTable | None = None,
    psd_repair: bool = True,
) -> GramMatrix:
    """Gram matrix over a bag list (or dataset) for one kernel.

    The result is exactly symmetric; with normalization on, its diagonal is
    1. The smallest eigenvalue is checked and repaired with recorded
    diagonal jitter when materially negative.
    """
    bag_list, schema = _resolve_bags(bags, schema)
    batch = GramBatch(bag_list, kernel, schema, table)
    values = batch.gram(config)
    jitter = 0.0
    if psd_repair:
        values, jitter = _psd_repair(values)
    return GramMatrix(
        values=values,
        bag_ids=tuple(b.id for b in bag_list),
        kernel=canonical_kernel_name(kernel),
        config=config,
        jitter=jitter,
    )


def gram_cross(
    train_bags: Dataset | Sequence[Bag],
    test_bags: Dataset | Sequence[Bag],
    kernel: str,
    config: KernelConfig = KernelConfig(),
    *,
    schema: AttributeSchema | None = None,
    table: VdmTable | None = None,
) -> np.ndarray:
    """Cross kernel block: rows are test bags, columns are training bags.

    Entries match the corresponding block of gram(train + test) under the
    same configuration (self-similarity normalization included).
    """
    train_list, schema = _resolve_bags(train_bags, schema)
    test_list, _ = _resolve_bags(test_bags, schema)
    batch = GramBatch(train_list + test_list, kernel, schema, table)
    full = batch.gram(config)
    n_train = len(train_list)
    return np.array(full[n_train:, :n_train])
