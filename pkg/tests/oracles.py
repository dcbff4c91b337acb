"""Independent reference computations and random instance generators.

Nothing here calls into the package's linear-algebra kernel; every check
is done from definitions with plain numpy/scipy so it can serve as a second
route for the implementation.
"""

import itertools

import numpy as np
import scipy.linalg as sla

from duio.graph import Topology
from duio.model import SystemModel


# ------------------------------------------------------------------- oracles


def observability_rank(C, A):
    """Rank of ``[C; CA; ...; CA^{n-1}]`` with ``A`` scaled to unit norm."""
    n = A.shape[0]
    s = max(np.linalg.norm(A, 2), 1.0)
    As = A / s
    blocks, M = [], C.copy()
    for _ in range(n):
        blocks.append(M)
        M = M @ As
    O = np.vstack(blocks) if C.size else np.zeros((0, n))
    if O.size == 0:
        return 0
    sv = np.linalg.svd(O, compute_uv=False)
    return int(np.sum(sv > 1e-9 * max(sv[0], 1.0)))


def unobservable_basis(C, A):
    n = A.shape[0]
    s = max(np.linalg.norm(A, 2), 1.0)
    blocks, M = [], C.copy()
    for _ in range(n):
        blocks.append(M)
        M = M @ (A / s)
    O = np.vstack(blocks) if C.size else np.zeros((1, n))
    return sla.null_space(O, rcond=1e-9)


def undetectable_basis(C, A, tol=1e-9):
    """Unobservable subspace cut down to its closed-right-half-plane eigenvectors."""
    Q = unobservable_basis(C, A)
    n = A.shape[0]
    if Q.shape[1] == 0:
        return np.zeros((n, 0))
    w, V = np.linalg.eig(Q.T @ A @ Q)
    keep = V[:, w.real >= -tol]
    if keep.shape[1] == 0:
        return np.zeros((n, 0))
    R = Q @ np.hstack([keep.real, keep.imag])
    return sla.orth(R, rcond=1e-9)


def intersection_dim(bases, n):
    """Dimension of the intersection via the joint membership system
    ``Q_1 a_1 = Q_k a_k`` for all ``k``."""
    bases = [b for b in bases]
    if not bases:
        return n
    if any(b.shape[1] == 0 for b in bases):
        return 0
    Q1 = bases[0]
    rows = []
    widths = [b.shape[1] for b in bases]
    for k, Qk in enumerate(bases[1:], start=1):
        blk = [np.zeros((n, w)) for w in widths]
        blk[0] = Q1
        blk[k] = -Qk
        rows.append(np.hstack(blk))
    if not rows:
        return Q1.shape[1]
    Z = sla.null_space(np.vstack(rows), rcond=1e-9)
    if Z.shape[1] == 0:
        return 0
    X = Q1 @ Z[: widths[0]]
    return int(np.linalg.matrix_rank(X, tol=1e-8))


def in_subspace(x, Q, tol=1e-8):
    """Least-squares membership: residual of projecting ``x`` on ``span Q``."""
    if Q.shape[1] == 0:
        return np.linalg.norm(x) <= tol
    coef = np.linalg.lstsq(Q, x, rcond=None)[0]
    return np.linalg.norm(Q @ coef - x) <= tol * max(1.0, np.linalg.norm(x))


def joint_detectable(model, tol=1e-9):
    n = model.n
    bases = []
    for node in model.nodes:
        Bb = node.B_bar
        if Bb.shape[1]:
            CB = node.C @ Bb
            U = Bb @ np.linalg.pinv(CB)
        else:
            U = np.zeros((n, node.p))
        A_i = (np.eye(n) - U @ node.C) @ model.A
        bases.append(undetectable_basis(node.C, A_i, tol))
    return intersection_dim(bases, n) == 0


def _rank(M):
    return 0 if M.size == 0 else int(np.linalg.matrix_rank(M))


def rank_conditions(model):
    out = []
    for node in model.nodes:
        Bb = node.B_bar
        if Bb.shape[1] == 0:
            out.append(True)
        else:
            out.append(_rank(node.C @ Bb) == _rank(Bb))
    return out


def reachability(adj):
    """Transitive closure by repeated squaring; ``R[i, j]`` means a path j -> i."""
    N = adj.shape[0]
    R = ((np.eye(N) + adj) > 0).astype(int)
    for _ in range(int(np.ceil(np.log2(max(N, 2)))) + 1):
        R = ((R @ R) > 0).astype(int)
    return R


def lyapunov_2x2(G, Q):
    """Solve ``G^T P + P G = -Q`` for 2x2 symmetric ``P`` as a 3x3 linear system."""
    g = G
    # unknowns p = (p11, p12, p22)
    M = np.array([
        [2 * g[0, 0], 2 * g[1, 0], 0.0],
        [g[0, 1], g[0, 0] + g[1, 1], g[1, 0]],
        [0.0, 2 * g[0, 1], 2 * g[1, 1]],
    ])
    rhs = -np.array([Q[0, 0], Q[0, 1], Q[1, 1]])
    p = np.linalg.solve(M, rhs)
    return np.array([[p[0], p[1]], [p[1], p[2]]])


# ---------------------------------------------------------------- generators


def all_graphs(N):
    """Every undirected simple graph on ``N`` nodes as an adjacency matrix."""
    pairs = list(itertools.combinations(range(N), 2))
    for mask in range(1 << len(pairs)):
        adj = np.zeros((N, N))
        for k, (a, b) in enumerate(pairs):
            if mask >> k & 1:
                adj[a, b] = adj[b, a] = 1
        yield adj


def random_connected_graph(rng, N, p=0.5):
    """Random spanning tree plus extra edges."""
    adj = np.zeros((N, N))
    order = rng.permutation(N)
    for k in range(1, N):
        a, b = order[k], order[rng.integers(0, k)]
        adj[a, b] = adj[b, a] = 1
    extra = np.triu(rng.random((N, N)) < p, 1)
    adj = np.maximum(adj, extra + extra.T)
    np.fill_diagonal(adj, 0)
    return Topology(adj)


def random_strong_digraph(rng, N, p=0.3):
    """Directed Hamiltonian cycle on a random order plus random extra arcs."""
    adj = (rng.random((N, N)) < p).astype(float)
    np.fill_diagonal(adj, 0)
    order = rng.permutation(N)
    for k in range(N):
        src, dst = order[k], order[(k + 1) % N]
        adj[dst, src] = 1
    return Topology(adj, directed=True)


def random_orthogonal(rng, n):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def random_model(rng, n=None, N=None, kind="ok"):
    """Random ``SystemModel``.

    ``kind``: ``"ok"`` (generic, conditions usually hold), ``"rank"`` (node 0
    has more unknown inputs than outputs) or ``"shared"`` (an unstable mode
    invisible to every node).
    """
    n = n or int(rng.integers(4 if kind == "shared" else 3, 7))
    N = N or int(rng.integers(1, 5))
    m = int(rng.integers(0, 3))
    q = int(rng.integers(0, 2))
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, m))
    D = rng.standard_normal((n, q))
    known = [sorted(rng.choice(m, size=int(rng.integers(0, m + 1)), replace=False).tolist()) for _ in range(N)]
    outputs = []
    for i in range(N):
        d = (m - len(known[i])) + q
        p = int(rng.integers(max(d, 1), n + 1))
        outputs.append(rng.standard_normal((p, n)))
    if kind == "rank":
        # node 0 knows nothing and has one output fewer than unknown inputs
        if m + q == 0:
            D = rng.standard_normal((n, 1))
            q = 1
        known[0] = []
        outputs[0] = rng.standard_normal((m + q - 1, n))
    if kind == "shared":
        T = random_orthogonal(rng, n)
        lam = float(rng.uniform(0.1, 2.0))
        Ab = rng.standard_normal((n, n))
        Ab[-1, :] = 0.0
        Ab[:, -1] = 0.0
        Ab[-1, -1] = lam
        A = T @ Ab @ T.T
        v = T[:, -1]
        # every output annihilates v
        outputs = [Ci - np.outer(Ci @ v, v) for Ci in outputs]
        # keep unknown-input directions out of v so U_i C_i does not touch it
        B = B - np.outer(v, v @ B)
        D = D - np.outer(v, v @ D)
    return SystemModel.from_partition(A, B, D, outputs, known, rank_tol=1e-10)
