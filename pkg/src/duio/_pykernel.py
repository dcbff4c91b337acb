"""Pure-numpy RK4 integrator for the plant + networked observer system.

State layout: ``s = [x, z_0, ..., z_{N-1}]`` (length ``n (N + 1)``).

Arguments shared with the compiled kernel
----------------------------------------
A, B, D, F : plant matrices and state-feedback gain (``u = -F x + e_u``)
C, H, Lm : ``(N, pmax, n)``, ``(N, n, pmax)``, ``(N, n, pmax)`` zero-padded
    per-node output, injection and output-feed matrices; ``p`` holds the
    true output counts
Nm, Bk : ``(N, n, n)`` and ``(N, n, m)``; ``Bk[i] = M_i B`` restricted to the
    inputs node ``i`` knows (other columns zero)
Gc : ``(N, n, n)`` consensus weights ``chi r_i P_i^{-1}``
adjs, topo_idx : stack of adjacency matrices and the one active at each step
ext : ``(nsteps, 3, m + q)`` exogenous signal at ``t``, ``t + h/2``, ``t + h``;
    the first ``m`` entries add to ``u``, the rest drive ``D``

Returns ``(states, blowup_step)`` with ``states`` shaped ``(nsteps + 1, n (N + 1))``
and ``blowup_step == -1`` when every state stayed finite.

Instead of looping over nodes this version assembles the whole coupled
system as one block matrix per topology, so it shares no code path with the
compiled kernel.
"""

import numpy as np


def assemble(A, B, D, F, C, p, H, Nm, Bk, Lm, Gc, adj):
    """Block matrices ``(Acl, Bcl)`` with ``s' = Acl s + Bcl e``."""
    n, m, q, N = A.shape[0], B.shape[1], D.shape[1], C.shape[0]
    dim = n * (N + 1)
    Acl = np.zeros((dim, dim))
    Bcl = np.zeros((dim, m + q))
    Acl[:n, :n] = A - B @ F
    Bcl[:n, :m] = B
    Bcl[:n, m:] = D
    HC = [H[i][:, : p[i]] @ C[i][: p[i]] for i in range(N)]
    for i in range(N):
        rows = slice(n * (i + 1), n * (i + 2))
        xcoef = -Bk[i] @ F + Lm[i][:, : p[i]] @ C[i][: p[i]]
        deg = adj[i].sum()
        xcoef = xcoef + Gc[i] @ (sum(adj[i, j] * HC[j] for j in range(N)) - deg * HC[i])
        Acl[rows, :n] = xcoef
        Acl[rows, rows] = Nm[i] - deg * Gc[i]
        for j in range(N):
            if j != i and adj[i, j]:
                Acl[rows, n * (j + 1) : n * (j + 2)] = adj[i, j] * Gc[i]
        Bcl[rows, :m] = Bk[i]
    return Acl, Bcl


def integrate(A, B, D, F, C, p, H, Nm, Bk, Lm, Gc, adjs, topo_idx, ext, x0, z0, h):
    # overflow is detected and reported through the blow-up step
    with np.errstate(over="ignore", invalid="ignore"):
        return _integrate(A, B, D, F, C, p, H, Nm, Bk, Lm, Gc, adjs, topo_idx, ext, x0, z0, h)


def _integrate(A, B, D, F, C, p, H, Nm, Bk, Lm, Gc, adjs, topo_idx, ext, x0, z0, h):
    systems = [assemble(A, B, D, F, C, p, H, Nm, Bk, Lm, Gc, adj) for adj in adjs]
    nsteps = len(topo_idx)
    s = np.concatenate([np.ravel(x0), np.ravel(z0)]).astype(float)
    out = np.empty((nsteps + 1, s.size))
    out[0] = s
    hh = 0.5 * h
    for t in range(nsteps):
        Acl, Bcl = systems[topo_idx[t]]
        f = ext[t] @ Bcl.T
        k1 = Acl @ s + f[0]
        k2 = Acl @ (s + hh * k1) + f[1]
        k3 = Acl @ (s + hh * k2) + f[1]
        k4 = Acl @ (s + h * k3) + f[2]
        s = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[t + 1] = s
        if not np.all(np.isfinite(s)):
            return out, t + 1
    return out, -1
