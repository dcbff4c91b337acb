# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled RK4 integrator for the plant + networked observer system.

Same contract as :func:`duio._pykernel.integrate`; see that module for the
argument layout.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport isfinite

cnp.import_array()


cdef void _deriv(
    const double[:, ::1] A, const double[:, ::1] B, const double[:, ::1] D,
    const double[:, ::1] F, const double[:, :, ::1] C, const long[::1] p,
    const double[:, :, ::1] H, const double[:, :, ::1] Nm, const double[:, :, ::1] Bk,
    const double[:, :, ::1] Lm, const double[:, :, ::1] Gc, const double[:, ::1] adj,
    const double[::1] e, double[::1] s, double[::1] ds,
    double[::1] u, double[:, ::1] y, double[:, ::1] xh, double[::1] cons,
    int n, int m, int q, int N) noexcept nogil:
    cdef int i, j, r, b, a, k, off
    cdef double acc, aij
    # inputs: u = -F x + e_u
    for a in range(m):
        acc = e[a]
        for b in range(n):
            acc -= F[a, b] * s[b]
        u[a] = acc
    for r in range(n):
        acc = 0.0
        for b in range(n):
            acc += A[r, b] * s[b]
        for a in range(m):
            acc += B[r, a] * u[a]
        for a in range(q):
            acc += D[r, a] * e[m + a]
        ds[r] = acc
    for i in range(N):
        off = n + i * n
        for k in range(p[i]):
            acc = 0.0
            for b in range(n):
                acc += C[i, k, b] * s[b]
            y[i, k] = acc
        for r in range(n):
            acc = s[off + r]
            for k in range(p[i]):
                acc += H[i, r, k] * y[i, k]
            xh[i, r] = acc
    for i in range(N):
        off = n + i * n
        for r in range(n):
            acc = 0.0
            for j in range(N):
                aij = adj[i, j]
                if aij != 0.0:
                    acc += aij * (xh[j, r] - xh[i, r])
            cons[r] = acc
        for r in range(n):
            acc = 0.0
            for b in range(n):
                acc += Nm[i, r, b] * s[off + b] + Gc[i, r, b] * cons[b]
            for a in range(m):
                acc += Bk[i, r, a] * u[a]
            for k in range(p[i]):
                acc += Lm[i, r, k] * y[i, k]
            ds[off + r] = acc


def integrate(A, B, D, F, C, p, H, Nm, Bk, Lm, Gc, adjs, topo_idx, ext, x0, z0, double h):
    cdef const double[:, ::1] A_ = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[:, ::1] B_ = np.ascontiguousarray(B, dtype=np.float64)
    cdef const double[:, ::1] D_ = np.ascontiguousarray(D, dtype=np.float64)
    cdef const double[:, ::1] F_ = np.ascontiguousarray(F, dtype=np.float64)
    cdef const double[:, :, ::1] C_ = np.ascontiguousarray(C, dtype=np.float64)
    cdef const long[::1] p_ = np.ascontiguousarray(p, dtype=np.int64)
    cdef const double[:, :, ::1] H_ = np.ascontiguousarray(H, dtype=np.float64)
    cdef const double[:, :, ::1] N_ = np.ascontiguousarray(Nm, dtype=np.float64)
    cdef const double[:, :, ::1] Bk_ = np.ascontiguousarray(Bk, dtype=np.float64)
    cdef const double[:, :, ::1] L_ = np.ascontiguousarray(Lm, dtype=np.float64)
    cdef const double[:, :, ::1] G_ = np.ascontiguousarray(Gc, dtype=np.float64)
    cdef const double[:, :, ::1] adjs_ = np.ascontiguousarray(adjs, dtype=np.float64)
    cdef const long[::1] tix = np.ascontiguousarray(topo_idx, dtype=np.int64)
    cdef const double[:, :, ::1] ext_ = np.ascontiguousarray(ext, dtype=np.float64)

    cdef int n = A_.shape[0]
    cdef int m = B_.shape[1]
    cdef int q = D_.shape[1]
    cdef int N = C_.shape[0]
    cdef int pmax = C_.shape[1]
    cdef Py_ssize_t nsteps = tix.shape[0]
    cdef int dim = n * (N + 1)

    out = np.empty((nsteps + 1, dim), dtype=np.float64)
    cdef double[:, ::1] S = out
    cdef double[::1] s = np.empty(dim)
    cdef double[::1] tmp = np.empty(dim)
    cdef double[::1] k1 = np.empty(dim)
    cdef double[::1] k2 = np.empty(dim)
    cdef double[::1] k3 = np.empty(dim)
    cdef double[::1] k4 = np.empty(dim)
    cdef double[::1] u = np.empty(max(m, 1))
    cdef double[:, ::1] y = np.empty((N, max(pmax, 1)))
    cdef double[:, ::1] xh = np.empty((N, n))
    cdef double[::1] cons = np.empty(n)

    init = np.concatenate([np.asarray(x0, dtype=np.float64).ravel(), np.asarray(z0, dtype=np.float64).ravel()])
    cdef Py_ssize_t r, t
    for r in range(dim):
        s[r] = init[r]
        S[0, r] = init[r]

    cdef double hh = 0.5 * h
    cdef double h6 = h / 6.0
    cdef long blowup = -1
    cdef bint ok
    with nogil:
        for t in range(nsteps):
            _deriv(A_, B_, D_, F_, C_, p_, H_, N_, Bk_, L_, G_, adjs_[tix[t]], ext_[t, 0], s, k1, u, y, xh, cons, n, m, q, N)
            for r in range(dim):
                tmp[r] = s[r] + hh * k1[r]
            _deriv(A_, B_, D_, F_, C_, p_, H_, N_, Bk_, L_, G_, adjs_[tix[t]], ext_[t, 1], tmp, k2, u, y, xh, cons, n, m, q, N)
            for r in range(dim):
                tmp[r] = s[r] + hh * k2[r]
            _deriv(A_, B_, D_, F_, C_, p_, H_, N_, Bk_, L_, G_, adjs_[tix[t]], ext_[t, 1], tmp, k3, u, y, xh, cons, n, m, q, N)
            for r in range(dim):
                tmp[r] = s[r] + h * k3[r]
            _deriv(A_, B_, D_, F_, C_, p_, H_, N_, Bk_, L_, G_, adjs_[tix[t]], ext_[t, 2], tmp, k4, u, y, xh, cons, n, m, q, N)
            ok = True
            for r in range(dim):
                s[r] = s[r] + h6 * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r])
                S[t + 1, r] = s[r]
                if not isfinite(s[r]):
                    ok = False
            if not ok:
                blowup = t + 1
                break
    return out, blowup
