"""Independent reference implementations used only by the tests.

Everything here is deliberately written as plain loops over Python floats,
without reusing any package internals, so that agreement between the
package and these functions is meaningful. Slow is fine; these run on tiny
inputs.
"""

from __future__ import annotations

import math


def sq_euclid(x, y) -> float:
    return sum((float(a) - float(b)) ** 2 for a, b in zip(x, y))


def rbf(x, y, gamma: float) -> float:
    return math.exp(-gamma * sq_euclid(x, y))


def mi_kernel_raw(bag_a, bag_b, gamma: float) -> float:
    """Plain cross sum of Gaussian values over instance rows."""
    return sum(rbf(x, y, gamma) for x in bag_a for y in bag_b)


def normalized(raw_ij: float, raw_ii: float, raw_jj: float) -> float:
    return raw_ij / math.sqrt(raw_ii * raw_jj)


def mean_pairwise_distance(points) -> float:
    n = len(points)
    pairs = [
        math.sqrt(sq_euclid(points[u], points[v]))
        for u in range(n)
        for v in range(u + 1, n)
    ]
    return sum(pairs) / len(pairs) if pairs else 0.0


def epsilon_graph(points, factor: float = 1.0):
    """Edges (u, v) with u < v and the normalized reciprocal weights."""
    n = len(points)
    eps = factor * mean_pairwise_distance(points)
    edges = []
    dists = []
    for u in range(n):
        for v in range(u + 1, n):
            d = math.sqrt(sq_euclid(points[u], points[v]))
            if d < eps:
                edges.append((u, v))
                dists.append(d)
    if not edges:
        return [], []
    raw = []
    nonzero = [d for d in dists if d > 0.0]
    cap = max(1.0 / d for d in nonzero) if nonzero else 1.0
    for d in dists:
        raw.append(1.0 / d if d > 0.0 else cap)
    top = max(raw)
    return edges, [r / top for r in raw]


def edge_feature_rows(n_nodes: int, edges, weights):
    """[d_u, p_u, d_v, p_v] per edge from the definitions."""
    m = len(edges)
    degree = [0] * n_nodes
    wsum = [0.0] * n_nodes
    for (u, v), w in zip(edges, weights):
        degree[u] += 1
        degree[v] += 1
        wsum[u] += w
        wsum[v] += w
    rows = []
    for (u, v), w in zip(edges, weights):
        rows.append([degree[u] / m, w / wsum[u], degree[v] / m, w / wsum[v]])
    return rows


def graph_kernel_raw(bag_a, bag_b, feats_a, feats_b, gamma_node: float, gamma_edge: float,
                     edge_weight: float = 1.0) -> float:
    total = mi_kernel_raw(bag_a, bag_b, gamma_node)
    edge_sum = sum(rbf(e, f, gamma_edge) for e in feats_a for f in feats_b)
    return total + edge_weight * edge_sum


def affinity_matrix(points, gamma: float, mode: str):
    """0/1 affinity with unit diagonal per the strict-threshold rule."""
    n = len(points)
    dists = [[0.0] * n for _ in range(n)]
    for u in range(n):
        for v in range(n):
            sq = sq_euclid(points[u], points[v])
            if mode == "rbf-induced":
                dists[u][v] = math.sqrt(max(2.0 - 2.0 * math.exp(-gamma * sq), 0.0))
            else:
                dists[u][v] = sq
    pairs = [dists[u][v] for u in range(n) for v in range(u + 1, n)]
    delta = sum(pairs) / len(pairs) if pairs else 0.0
    w = [[1.0 if (u == v or dists[u][v] < delta) else 0.0 for v in range(n)] for u in range(n)]
    return w, delta


def affinity_weights(w) -> list:
    return [1.0 / sum(row) for row in w]


def clique_kernel_raw(bag_a, bag_b, weights_a, weights_b, gamma: float) -> float:
    num = 0.0
    for wa, x in zip(weights_a, bag_a):
        for wb, y in zip(weights_b, bag_b):
            num += wa * wb * rbf(x, y, gamma)
    return num / (sum(weights_a) * sum(weights_b))


def vdm_value(freq_a, freq_b) -> float:
    return sum((fa - fb) ** 2 for fa, fb in zip(freq_a, freq_b))


def svm_dual_objective(alpha, labels, K) -> float:
    n = len(alpha)
    total = sum(alpha)
    quad = 0.0
    for i in range(n):
        for j in range(n):
            quad += alpha[i] * alpha[j] * labels[i] * labels[j] * K[i][j]
    return total - 0.5 * quad


def reference_qp_solve(K, labels, C: float):
    """Solve the SVM dual with cvxopt's interior-point QP solver.

    minimize (1/2) a^T Q a - 1^T a  s.t.  0 <= a <= C, y^T a = 0.
    Returns (alpha, objective) where objective is the maximized dual value.
    """
    import numpy as np
    from cvxopt import matrix, solvers

    y = np.asarray(labels, dtype=float)
    Km = np.asarray(K, dtype=float)
    n = Km.shape[0]
    Q = (y[:, None] * Km * y[None, :])
    # tiny ridge keeps the factorization stable on semidefinite inputs
    P = matrix(Q + 1e-12 * np.eye(n))
    q = matrix(-np.ones(n))
    G = matrix(np.vstack([-np.eye(n), np.eye(n)]))
    h = matrix(np.concatenate([np.zeros(n), C * np.ones(n)]))
    A = matrix(y.reshape(1, n))
    b = matrix(np.zeros(1))
    solvers.options["show_progress"] = False
    solvers.options["abstol"] = 1e-12
    solvers.options["reltol"] = 1e-12
    solvers.options["feastol"] = 1e-12
    sol = solvers.qp(P, q, G, h, A, b)
    alpha = np.array(sol["x"]).ravel()
    objective = svm_dual_objective(alpha.tolist(), y.tolist(), Km.tolist())
    return alpha, objective
