"""Communication topologies and their spectral quantities.

Adjacency follows the receiver convention: ``adjacency[i, j] == 1`` means node
``i`` receives node ``j``'s estimate.  A directed edge ``(j, i)`` in an edge
list is therefore a link *from* ``j`` *to* ``i``.  Node indices are 0-based.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import GraphError

ZERO_TOL = 1e-10


@dataclass(frozen=True)
class Topology:
    adjacency: np.ndarray
    directed: bool = False

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=float, ndmin=2)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or adj.shape[0] < 1:
            raise GraphError("bad_topology", "adjacency must be a non-empty square matrix")
        if not np.all((adj == 0) | (adj == 1)):
            raise GraphError("bad_topology", "adjacency entries must be 0 or 1")
        if np.any(np.diag(adj) != 0):
            raise GraphError("bad_topology", "self-loops are not allowed")
        if not self.directed and not np.array_equal(adj, adj.T):
            raise GraphError("bad_topology", "undirected adjacency must be symmetric")
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)

    @classmethod
    def from_edges(cls, node_count, edges, directed=False):
        """Build from ``(src, dst)`` pairs; undirected pairs are mirrored."""
        adj = np.zeros((node_count, node_count))
        for src, dst in edges:
            if not (0 <= src < node_count and 0 <= dst < node_count):
                raise GraphError("bad_topology", f"edge ({src}, {dst}) outside 0..{node_count - 1}")
            if src == dst:
                raise GraphError("bad_topology", f"self-loop at node {src}")
            adj[dst, src] = 1
            if not directed:
                adj[src, dst] = 1
        return cls(adj, directed)

    @property
    def node_count(self):
        return self.adjacency.shape[0]

    def edges(self):
        """Edge list in the ``(src, dst)`` convention of :meth:`from_edges`."""
        dst, src = np.nonzero(self.adjacency)
        pairs = zip(src.tolist(), dst.tolist())
        if self.directed:
            return sorted(pairs)
        return sorted({(min(s, d), max(s, d)) for s, d in pairs})


def laplacian(topology):
    adj = topology.adjacency
    return np.diag(adj.sum(axis=1)) - adj


def algebraic_connectivity(L):
    """Second-smallest eigenvalue of a symmetric Laplacian-like matrix."""
    L = np.asarray(L, dtype=float)
    if not np.allclose(L, L.T, rtol=0, atol=1e-12 * max(1.0, np.abs(L).max())):
        raise GraphError("requires_symmetric", "algebraic connectivity needs a symmetric matrix")
    if L.shape[0] < 2:
        return 0.0
    return float(sla.eigvalsh(0.5 * (L + L.T))[1])


def _reachable(adj_out, start):
    seen = {start}
    queue = deque([start])
    while queue:
        k = queue.popleft()
        for j in np.nonzero(adj_out[k])[0]:
            if j not in seen:
                seen.add(int(j))
                queue.append(int(j))
    return seen


def is_connected(topology):
    """Graph-search connectivity (weak connectivity for digraphs)."""
    adj = topology.adjacency
    sym = ((adj + adj.T) > 0).astype(float)
    return len(_reachable(sym, 0)) == topology.node_count


def is_strongly_connected(topology):
    if not topology.directed:
        return is_connected(topology)
    adj = topology.adjacency
    # adj[i, j] = 1 is a link j -> i, so out-neighbours of k are column k
    n = topology.node_count
    return len(_reachable(adj.T, 0)) == n and len(_reachable(adj, 0)) == n


@dataclass(frozen=True)
class PerronWeighting:
    r: np.ndarray
    R: np.ndarray
    L_hat: np.ndarray

    @property
    def lambda2(self):
        return float(sla.eigvalsh(self.L_hat)[1]) if len(self.r) > 1 else 0.0


def perron_weights(topology):
    """Positive left null vector of the Laplacian of a strongly connected digraph.

    The vector ``r`` is normalised to ``r @ 1 == N``; ``L_hat = R L + L^T R``
    is symmetric positive semidefinite with a simple zero eigenvalue.
    """
    if not is_strongly_connected(topology):
        raise GraphError("requires_strong_connectivity", "graph is not strongly connected")
    L = laplacian(topology)
    n = L.shape[0]
    if n == 1:
        return PerronWeighting(np.ones(1), np.eye(1), np.zeros((1, 1)))
    w, vl = sla.eig(L.T)
    order = np.argsort(np.abs(w))
    if abs(w[order[1]]) <= ZERO_TOL * max(1.0, np.abs(L).max()):
        raise GraphError("degenerate_laplacian", "zero eigenvalue of the Laplacian is not simple")
    r = np.real(vl[:, order[0]])
    r = r / r.sum() * n
    if np.any(r <= 0):
        raise GraphError("degenerate_laplacian", "left null vector is not positive")
    R = np.diag(r)
    L_hat = R @ L + L.T @ R
    L_hat = 0.5 * (L_hat + L_hat.T)
    ev = sla.eigvalsh(L_hat)
    if ev[0] < -1e-9 * max(1.0, ev[-1]) or ev[1] <= ZERO_TOL:
        raise GraphError("degenerate_laplacian", "weighted Laplacian is not PSD with a simple zero")
    return PerronWeighting(r, R, L_hat)


def connectivity_floor(node_count):
    """Lower bound ``2 / (N^2 (N - 1))`` on the algebraic connectivity of any
    connected graph with ``N`` nodes."""
    if node_count < 2:
        raise GraphError("bad_node_count", "connectivity floor needs at least 2 nodes")
    return 2.0 / (node_count**2 * (node_count - 1))


@dataclass(frozen=True)
class SwitchingSchedule:
    """Topologies visited cyclically, each held for ``dwell_time`` seconds."""

    topologies: tuple
    dwell_time: float
    start_index: int = 0
    _laplacians: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tops = tuple(self.topologies)
        if not tops:
            raise GraphError("bad_schedule", "schedule needs at least one topology")
        if self.dwell_time <= 0:
            raise GraphError("bad_schedule", "dwell time must be positive")
        n = tops[0].node_count
        for k, top in enumerate(tops):
            if top.directed:
                raise GraphError("bad_schedule", f"topology {k} is directed; switching supports undirected graphs")
            if top.node_count != n:
                raise GraphError("bad_schedule", f"topology {k} has {top.node_count} nodes, expected {n}")
            if not is_connected(top):
                raise GraphError("disconnected_topology", f"topology {k} in the schedule is not connected")
        if not 0 <= self.start_index < len(tops):
            raise GraphError("bad_schedule", "start_index out of range")
        object.__setattr__(self, "topologies", tops)
        object.__setattr__(self, "_laplacians", tuple(laplacian(t) for t in tops))

    @property
    def node_count(self):
        return self.topologies[0].node_count

    def index_at(self, t):
        k = int(np.floor(t / self.dwell_time + 1e-9))
        return (self.start_index + k) % len(self.topologies)

    def laplacians(self):
        return self._laplacians
