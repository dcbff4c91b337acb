"""Geometric and numerical linear algebra used by the observer designer.

Subspaces are carried around as :class:`SubspaceBasis` objects holding an
orthonormal basis.  Every rank decision in this module compares singular
values against ``sigma_max * n * rank_tol``; the default ``rank_tol`` is
:data:`RANK_TOL` and can be overridden per call.

The closed right half-plane counts as unstable: eigenvalues with real part in
``[-boundary_tol, 0]`` land in the unstable part of a split.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import LinalgError

RANK_TOL = 1e-10
BOUNDARY_TOL = 1e-9
ASYMMETRY_WARN = 1e-8


def as_matrix(M, rows=None, cols=None, name="matrix"):
    """Return ``M`` as a finite 2-D float array, checking optional shape."""
    M = np.array(M, dtype=float, ndmin=2, copy=True)
    if M.ndim != 2:
        raise LinalgError("bad_shape", f"{name} must be 2-D, got ndim={M.ndim}")
    if rows is not None and M.shape[0] != rows:
        raise LinalgError("bad_shape", f"{name} must have {rows} rows, got {M.shape[0]}")
    if cols is not None and M.shape[1] != cols:
        raise LinalgError("bad_shape", f"{name} must have {cols} columns, got {M.shape[1]}")
    if not np.all(np.isfinite(M)):
        raise LinalgError("non_finite", f"{name} has non-finite entries")
    return M


def _threshold(s, shape, rank_tol):
    if s.size == 0:
        return 0.0
    return s[0] * max(shape) * rank_tol


def numerical_rank(M, rank_tol=RANK_TOL):
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    s = sla.svdvals(M)
    return int(np.sum(s > _threshold(s, M.shape, rank_tol)))


def null_space(M, rank_tol=RANK_TOL, scale=None):
    """Orthonormal basis of ``Ker M``.

    ``scale`` replaces ``sigma_max(M)`` in the rank threshold; pass it when
    ``M`` is a residual whose natural size is set by some other matrix.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[1]
    if M.shape[0] == 0 or n == 0:
        return np.eye(n)
    _, s, vh = sla.svd(M, full_matrices=True)
    ref = s[0] if scale is None else scale
    thresh = ref * max(M.shape) * rank_tol
    rank = int(np.sum(s > thresh))
    return vh[rank:].T.copy()


def orthonormal_complement(Q):
    """Orthonormal basis of the orthogonal complement of ``Im Q``."""
    n, k = Q.shape
    if k == 0:
        return np.eye(n)
    full, _ = sla.qr(Q, mode="full")
    return full[:, k:]


@dataclass(frozen=True)
class SubspaceBasis:
    """A subspace of R^n stored as an ``n x k`` orthonormal basis (``k`` may be 0)."""

    ambient_dim: int
    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float).reshape(self.ambient_dim, -1)
        object.__setattr__(self, "basis", b)

    @classmethod
    def trivial(cls, n):
        return cls(n, np.zeros((n, 0)))

    @classmethod
    def full(cls, n):
        return cls(n, np.eye(n))

    @classmethod
    def span(cls, vectors, rank_tol=RANK_TOL):
        """Orthonormalised span of the columns of ``vectors``."""
        V = np.asarray(vectors, dtype=float)
        if V.shape[1] == 0:
            return cls.trivial(V.shape[0])
        u, s, _ = sla.svd(V, full_matrices=False)
        r = int(np.sum(s > _threshold(s, V.shape, rank_tol)))
        return cls(V.shape[0], u[:, :r])

    @property
    def dim(self):
        return self.basis.shape[1]

    def projector(self):
        return self.basis @ self.basis.T

    def contains(self, x, tol=1e-8):
        x = np.asarray(x, dtype=float)
        r = x - self.basis @ (self.basis.T @ x)
        return np.linalg.norm(r) <= tol * max(np.linalg.norm(x), 1.0)

    def max_angle(self, other):
        """Largest principal angle to ``other`` (pi/2 when dimensions differ)."""
        if self.dim != other.dim:
            return np.pi / 2
        if self.dim == 0:
            return 0.0
        return float(np.max(sla.subspace_angles(self.basis, other.basis)))


@dataclass(frozen=True)
class SpectralSplit:
    stable: SubspaceBasis
    unstable: SubspaceBasis
    stable_eigs: np.ndarray
    unstable_eigs: np.ndarray

    def projectors(self):
        """Spectral (oblique) projectors onto each part; they sum to identity."""
        n = self.stable.ambient_dim
        T = np.hstack([self.stable.basis, self.unstable.basis])
        Tinv = np.linalg.inv(T)
        k = self.stable.dim
        Ps = T[:, :k] @ Tinv[:k]
        Pu = T[:, k:] @ Tinv[k:]
        assert Ps.shape == (n, n)
        return Ps, Pu


@dataclass(frozen=True)
class DetectabilityDecomposition:
    """Orthogonal change of basis ``T = [T_d T_u]`` exposing the undetectable part.

    ``T.T @ A_bar @ T == [[A_dd, 0], [A_rd, A_uu]]`` and ``C @ T == [C_d, 0]``.
    """

    T_d: np.ndarray
    T_u: np.ndarray
    A_dd: np.ndarray
    A_rd: np.ndarray
    A_uu: np.ndarray
    C_d: np.ndarray

    @property
    def v(self):
        return self.T_u.shape[1]

    @property
    def T(self):
        return np.hstack([self.T_d, self.T_u])


def pseudo_inverse(M, rank_tol=RANK_TOL):
    """Moore-Penrose pseudo-inverse via a truncated SVD."""
    M = as_matrix(M, name="M")
    m, n = M.shape
    if M.size == 0:
        return np.zeros((n, m))
    u, s, vh = sla.svd(M, full_matrices=False)
    r = int(np.sum(s > _threshold(s, M.shape, rank_tol)))
    if r == 0:
        return np.zeros((n, m))
    return (vh[:r].T / s[:r]) @ u[:, :r].T


def unobservable_subspace(C, A, rank_tol=RANK_TOL):
    """Unobservable subspace of the pair ``(C, A)``.

    Computed as the largest ``A``-invariant subspace inside ``Ker C``: start
    from ``V = Ker C`` and keep only the part of ``V`` that ``A`` maps back
    into ``V`` until the dimension stops shrinking.  This avoids forming
    powers of ``A``.
    """
    A = as_matrix(A, name="A")
    n = A.shape[0]
    if A.shape[1] != n:
        raise LinalgError("bad_shape", "A must be square")
    C = as_matrix(C, cols=n, name="C") if np.size(C) else np.zeros((0, n))

    Q = null_space(C, rank_tol)
    a_scale = max(np.linalg.norm(A, 2), 1.0)
    while Q.shape[1] > 0:
        AQ = A @ Q
        R = AQ - Q @ (Q.T @ AQ)
        W = null_space(R, rank_tol, scale=a_scale)
        if W.shape[1] == Q.shape[1]:
            break
        Q = Q @ W
    return SubspaceBasis(n, Q)


def _stable_pred(boundary_tol):
    def pred(re, im=None):
        return np.real(re) < -boundary_tol

    return pred


def _unstable_pred(boundary_tol):
    def pred(re, im=None):
        return np.real(re) >= -boundary_tol

    return pred


def spectral_split(A, boundary_tol=BOUNDARY_TOL):
    """Split R^n into the stable and unstable invariant subspaces of ``A``.

    Both bases come from ordered real Schur forms, so each is orthonormal; the
    two subspaces are complementary but in general not orthogonal.
    """
    A = as_matrix(A, name="A")
    n = A.shape[0]
    if A.shape[1] != n:
        raise LinalgError("bad_shape", "A must be square")
    if n == 0:
        empty = SubspaceBasis.trivial(0)
        return SpectralSplit(empty, empty, np.zeros(0), np.zeros(0))
    try:
        Ts, Zs, ks = sla.schur(A, output="real", sort=_stable_pred(boundary_tol))
        Tu, Zu, ku = sla.schur(A, output="real", sort=_unstable_pred(boundary_tol))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise LinalgError("eig_failed", str(exc)) from exc
    if ks + ku != n:
        raise LinalgError(
            "eig_failed",
            f"inconsistent split ({ks} stable + {ku} unstable != {n}); "
            "eigenvalues too close to the boundary",
        )
    stable_eigs = sla.eigvals(Ts[:ks, :ks]) if ks else np.zeros(0)
    unstable_eigs = sla.eigvals(Tu[:ku, :ku]) if ku else np.zeros(0)
    return SpectralSplit(
        SubspaceBasis(n, Zs[:, :ks]),
        SubspaceBasis(n, Zu[:, :ku]),
        stable_eigs,
        unstable_eigs,
    )


def undetectable_subspace(C, A, rank_tol=RANK_TOL, boundary_tol=BOUNDARY_TOL):
    """Unstable part of the unobservable subspace of ``(C, A)``.

    The unobservable subspace is ``A``-invariant, so its intersection with the
    unstable invariant subspace of ``A`` equals the unstable invariant subspace
    of ``A`` restricted to it; that restriction is what gets split.
    """
    uo = unobservable_subspace(C, A, rank_tol)
    n = uo.ambient_dim
    if uo.dim == 0:
        return SubspaceBasis.trivial(n)
    A = np.asarray(A, dtype=float)
    Q = uo.basis
    split = spectral_split(Q.T @ A @ Q, boundary_tol)
    return SubspaceBasis(n, Q @ split.unstable.basis)


def subspace_intersection(bases, ambient_dim=None, rank_tol=RANK_TOL):
    """Intersection of subspaces; the empty intersection is the whole space.

    ``x`` lies in every subspace iff every complement projector kills it, so
    the result is the null space of the stacked projectors ``I - Q_k Q_k^T``.
    """
    bases = list(bases)
    if not bases:
        if ambient_dim is None:
            raise LinalgError("bad_shape", "ambient_dim required for an empty intersection")
        return SubspaceBasis.full(ambient_dim)
    n = bases[0].ambient_dim
    if any(b.ambient_dim != n for b in bases):
        raise LinalgError("bad_shape", "subspaces live in different ambient spaces")
    if any(b.dim == 0 for b in bases):
        return SubspaceBasis.trivial(n)
    eye = np.eye(n)
    stacked = np.vstack([eye - b.projector() for b in bases])
    return SubspaceBasis(n, null_space(stacked, rank_tol, scale=1.0))


def detectability_decomposition(C, A_bar, rank_tol=RANK_TOL, boundary_tol=BOUNDARY_TOL, shift=0.0):
    """Orthogonal split ``[T_d T_u]`` with ``T_u`` spanning the undetectable subspace.

    ``T_u`` is ``A_bar``-invariant and unobservable, so in these coordinates
    ``A_bar`` is block lower-triangular and ``C T_u = 0``.  A positive
    ``shift`` measures detectability against ``Re(s) < -shift`` instead of
    the open left half-plane.
    """
    A_bar = as_matrix(A_bar, name="A_bar")
    n = A_bar.shape[0]
    C = as_matrix(C, cols=n, name="C") if np.size(C) else np.zeros((0, n))
    # with shift > 0, unobservable modes slower than -shift also land in T_u
    T_u = undetectable_subspace(C, A_bar + shift * np.eye(n), rank_tol, boundary_tol).basis
    T_d = orthonormal_complement(T_u)
    return DetectabilityDecomposition(
        T_d=T_d,
        T_u=T_u,
        A_dd=T_d.T @ A_bar @ T_d,
        A_rd=T_u.T @ A_bar @ T_d,
        A_uu=T_u.T @ A_bar @ T_u,
        C_d=C @ T_d,
    )


def spectral_abscissa(M):
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return -np.inf
    try:
        return float(np.max(sla.eigvals(M).real))
    except np.linalg.LinAlgError as exc:
        raise LinalgError("eig_failed", str(exc)) from exc


def is_hurwitz(M, margin=0.0):
    """True iff every eigenvalue of ``M`` has real part below ``-margin``."""
    return spectral_abscissa(M) < -margin


def symmetrize(S, name="matrix"):
    S = np.asarray(S, dtype=float)
    if S.size == 0:
        return S
    asym = np.linalg.norm(S - S.T) / max(np.linalg.norm(S), 1e-300)
    if asym > ASYMMETRY_WARN:
        warnings.warn(f"{name} asymmetric (relative {asym:.2e}); symmetrising", stacklevel=3)
    return 0.5 * (S + S.T)


def is_negative_definite(S, tol=0.0):
    S = symmetrize(S)
    if S.size == 0:
        return True
    return bool(sla.eigvalsh(S)[-1] < -tol)


def solve_lyapunov(G, Q, rtol=1e-8):
    """Solve ``G^T P + P G = -Q`` for symmetric ``P``.

    ``G`` must be Hurwitz and ``Q`` symmetric positive definite; the
    Bartels-Stewart solve itself is scipy's.

    Raises
    ------
    LinalgError
        ``lyapunov_unstable`` if ``G`` is not Hurwitz, ``ill_conditioned`` if
        the residual of the returned solution is too large.
    """
    G = as_matrix(G, name="G")
    Q = symmetrize(as_matrix(Q, name="Q"), "Q")
    if G.size == 0:
        return np.zeros((0, 0))
    if not is_hurwitz(G):
        raise LinalgError("lyapunov_unstable", "G has eigenvalues in the closed right half-plane")
    P = sla.solve_continuous_lyapunov(G.T, -Q)
    P = 0.5 * (P + P.T)
    res = np.linalg.norm(G.T @ P + P @ G + Q)
    bound = rtol * (np.linalg.norm(Q) + 2 * np.linalg.norm(G) * np.linalg.norm(P))
    if not np.isfinite(res) or res > bound:
        raise LinalgError("ill_conditioned", f"Lyapunov residual {res:.3e} above {bound:.3e}")
    return P


def pbh_detectable(C, A, boundary_tol=BOUNDARY_TOL, rank_tol=RANK_TOL):
    """PBH test: ``[sI - A; C]`` has full column rank at every unstable eigenvalue."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n == 0:
        return True
    C = np.asarray(C, dtype=float).reshape(-1, n)
    scale = max(np.linalg.norm(A, 2), 1.0)
    for lam in sla.eigvals(A):
        if lam.real < -boundary_tol:
            continue
        pbh = np.vstack([lam * np.eye(n) - A, C.astype(complex)])
        s = sla.svdvals(pbh)
        if s[-1] <= scale * max(pbh.shape) * rank_tol * 1e2:
            return False
    return True


def stabilizing_output_injection(C_d, A_dd, margin=0.5, rank_tol=RANK_TOL, boundary_tol=BOUNDARY_TOL):
    """Output-injection gain ``K`` with ``A_dd - K C_d`` Hurwitz.

    The gain comes from a dual algebraic Riccati equation on ``A_dd + alpha I``
    which pushes every observable mode left of ``-alpha``.  ``alpha`` equals
    ``margin`` unless an unobservable (necessarily stable) mode is slower than
    that; then ``alpha`` drops to half that mode's decay rate and a warning is
    issued, because no injection can move unobservable modes.

    Returns a zero gain when ``A_dd`` already has spectral abscissa at most
    ``-margin``.

    Raises
    ------
    LinalgError
        ``not_detectable`` when the pair fails the PBH test.
    """
    A_dd = as_matrix(A_dd, name="A_dd")
    n = A_dd.shape[0]
    C_d = np.asarray(C_d, dtype=float).reshape(-1, n)
    p = C_d.shape[0]
    if n == 0:
        return np.zeros((0, p))
    if spectral_abscissa(A_dd) < -margin:
        return np.zeros((n, p))
    if not pbh_detectable(C_d, A_dd, boundary_tol, rank_tol):
        raise LinalgError("not_detectable", "(C_d, A_dd) has an unobservable unstable mode")

    alpha = margin
    uo = unobservable_subspace(C_d, A_dd, rank_tol)
    if uo.dim:
        Q = uo.basis
        slowest = -spectral_abscissa(Q.T @ A_dd @ Q)
        if slowest <= margin:
            alpha = 0.5 * slowest
            warnings.warn(
                f"unobservable mode decays at {slowest:.3g}; injection margin reduced to {alpha:.3g}",
                stacklevel=2,
            )
    if p == 0:
        return np.zeros((n, 0))

    shifted = A_dd + alpha * np.eye(n)
    try:
        X = sla.solve_continuous_are(shifted.T, C_d.T, np.eye(n), np.eye(p))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise LinalgError("injection_failed", str(exc)) from exc
    K = X @ C_d.T
    if not is_hurwitz(A_dd - K @ C_d, margin=alpha * (1 - 1e-6)):
        raise LinalgError("injection_failed", "Riccati gain did not reach the requested margin")
    return K
