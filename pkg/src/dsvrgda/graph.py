"""Communication topologies, Metropolis mixing matrices and the two
communication primitives used by the decentralized optimizer.

A topology is an undirected connected graph over ``K`` workers.  Self
connections are implicit and never stored in the edge set.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng as rngmod

KINDS = ("line", "ring", "complete", "erdos_renyi")
_ALIASES = {"erdos": "erdos_renyi", "random": "erdos_renyi", "path": "line",
            "full": "complete", "cycle": "ring"}

MAX_ER_ATTEMPTS = 100
_STOCHASTIC_TOL = 1e-12
_EIG_ZERO = 1e-12


class TopologyError(ValueError):
    """Raised when a requested topology cannot be built or is disconnected."""


class InvariantError(ValueError):
    """Raised when a mixing matrix violates symmetry or stochasticity."""


@dataclass(frozen=True)
class Adjacency:
    """Undirected connected graph over ``num_workers`` nodes.

    ``edges`` holds unordered pairs normalized to ``(i, j)`` with ``i < j``.
    """

    num_workers: int
    edges: frozenset

    def __post_init__(self):
        if self.num_workers < 1:
            raise ValueError(f"num_workers must be >= 1, got {self.num_workers}")
        norm = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if not (0 <= i < self.num_workers and 0 <= j < self.num_workers):
                raise TopologyError(f"edge ({i}, {j}) out of range for K={self.num_workers}")
            if i == j:
                raise TopologyError(f"self-loop ({i}, {i}) is not allowed")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))
        if not _is_connected(self.num_workers, self.neighbor_lists()):
            raise TopologyError("graph is not connected")

    def neighbor_lists(self):
        nbrs = [[] for _ in range(self.num_workers)]
        for i, j in sorted(self.edges):
            nbrs[i].append(j)
            nbrs[j].append(i)
        return nbrs

    def neighbors(self, k):
        return self.neighbor_lists()[k]

    def degrees(self):
        deg = np.zeros(self.num_workers, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def to_matrix(self):
        A = np.zeros((self.num_workers, self.num_workers), dtype=int)
        for i, j in self.edges:
            A[i, j] = A[j, i] = 1
        return A


@dataclass(frozen=True)
class MixingMatrix:
    W: np.ndarray
    lambda2: float
    spectral_gap: float
    diameter: int

    @property
    def num_workers(self):
        return self.W.shape[0]


def _is_connected(K, nbrs):
    return len(_bfs_distances(0, nbrs)) == K


def _bfs_distances(src, nbrs):
    dist = {src: 0}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in nbrs[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def canonical_kind(kind):
    kind = _ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ValueError(f"unknown topology kind {kind!r}; expected one of {KINDS}")
    return kind


def build_topology(kind, K, edge_prob=0.5, seed=0):
    """Build a connected topology of the requested shape.

    ``erdos_renyi`` graphs are resampled from fresh substreams until a
    connected one appears, up to ``MAX_ER_ATTEMPTS`` tries.
    """
    kind = canonical_kind(kind)
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if kind == "line":
        edges = [(i, i + 1) for i in range(K - 1)]
    elif kind == "ring":
        edges = [(i, (i + 1) % K) for i in range(K)] if K > 2 else [(i, i + 1) for i in range(K - 1)]
    elif kind == "complete":
        edges = [(i, j) for i in range(K) for j in range(i + 1, K)]
    else:
        if not 0 < edge_prob <= 1:
            raise ValueError(f"edge_prob must lie in (0, 1], got {edge_prob}")
        iu, ju = np.triu_indices(K, k=1)
        for attempt in range(MAX_ER_ATTEMPTS):
            rng = rngmod.stream(seed, rngmod.TOPOLOGY, attempt)
            keep = rng.random(iu.size) < edge_prob
            edges = list(zip(iu[keep].tolist(), ju[keep].tolist()))
            try:
                return Adjacency(K, frozenset(edges))
            except TopologyError:
                continue
        raise TopologyError(
            f"no connected Erdos-Renyi graph with K={K}, p={edge_prob} "
            f"after {MAX_ER_ATTEMPTS} attempts")
    return Adjacency(K, frozenset(edges))


def diameter(adj):
    """Longest shortest-path length, by BFS from every node."""
    nbrs = adj.neighbor_lists()
    best = 0
    for src in range(adj.num_workers):
        dist = _bfs_distances(src, nbrs)
        if len(dist) != adj.num_workers:
            raise TopologyError("graph is not connected")
        best = max(best, max(dist.values()))
    return best


def spectral_gap(W):
    """Return ``(lambda2, 1 - lambda2)`` for a symmetric doubly stochastic W.

    ``lambda2`` is the second largest eigenvalue magnitude.  Magnitudes
    below 1e-12 are reported as exactly zero.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise InvariantError(f"mixing matrix must be square, got shape {W.shape}")
    if not np.array_equal(W, W.T):
        raise InvariantError("mixing matrix is not symmetric")
    if np.any(W < 0):
        raise InvariantError("mixing matrix has negative entries")
    if np.max(np.abs(W.sum(axis=1) - 1.0)) > _STOCHASTIC_TOL:
        raise InvariantError("mixing matrix rows do not sum to 1")
    if W.shape[0] == 1:
        return 0.0, 1.0
    mags = np.sort(np.abs(np.linalg.eigvalsh(W)))[::-1]
    lam2 = float(mags[1])
    if lam2 < _EIG_ZERO:
        lam2 = 0.0
    if lam2 >= 1.0 - _EIG_ZERO:
        raise InvariantError(f"|lambda_2| = {lam2:.3g} >= 1: graph is disconnected or periodic")
    return lam2, 1.0 - lam2


def metropolis_weights(adj):
    """Metropolis-Hastings weights ``1 / (1 + max(deg_i, deg_j))`` on edges."""
    K = adj.num_workers
    deg = adj.degrees()
    W = np.zeros((K, K))
    for i, j in adj.edges:
        W[i, j] = W[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    for i in range(K):
        W[i, i] = 1.0 - (W[i].sum() - W[i, i])
    lam2, gap = spectral_gap(W)
    return MixingMatrix(W=W, lambda2=lam2, spectral_gap=gap, diameter=diameter(adj))


def mix(W, values):
    """One synchronous gossip round: ``out[k] = sum_j W[k, j] * values[j]``."""
    W = W.W if isinstance(W, MixingMatrix) else np.asarray(W)
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] != W.shape[0]:
        raise ValueError(
            f"expected values of shape ({W.shape[0]}, dim), got {values.shape}")
    return W @ values


def exact_average(adj, values: Sequence):
    """Average per-worker vectors exactly by flooding.

    Each round, every worker forwards all ``(origin, vector)`` pairs it has
    seen to its neighbours.  After ``D`` rounds every worker knows all K
    vectors and sums them in origin order, so all outputs are bit
    identical.  Returns ``(averaged, rounds_used)``.
    """
    values = np.asarray(values, dtype=float)
    K = adj.num_workers
    if values.shape[0] != K:
        raise ValueError(f"expected {K} per-worker vectors, got {values.shape[0]}")
    nbrs = adj.neighbor_lists()
    known = [{k: values[k]} for k in range(K)]
    rounds = 0
    while any(len(kn) < K for kn in known):
        received = [dict(kn) for kn in known]
        for k in range(K):
            for j in nbrs[k]:
                received[k].update(known[j])
        known = received
        rounds += 1
    out = np.empty_like(values)
    for k in range(K):
        acc = np.zeros(values.shape[1:])
        for origin in range(K):
            acc = acc + known[k][origin]
        out[k] = acc / K
    return out, rounds
