"""Existence checks, constructive gain synthesis and certification.

Gain synthesis follows the constructive feasibility argument for the LMI
``sum_i Lambda_i < 0``: in the detectability basis of each node the
detectable block is stabilised by output injection and given a Lyapunov
matrix scaled by ``beta``; the undetectable block keeps ``P_u = I``.  Doubling
``beta`` eventually dominates the fixed cross terms because the detectable
parts of all nodes jointly span the state space.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import graph as G
from .errors import DesignError, GraphError
from .linalg import (
    BOUNDARY_TOL,
    RANK_TOL,
    detectability_decomposition,
    is_negative_definite,
    numerical_rank,
    pseudo_inverse,
    solve_lyapunov,
    spectral_abscissa,
    stabilizing_output_injection,
    subspace_intersection,
    symmetrize,
    undetectable_subspace,
)
from .model import DesignCertificate, NodeGains, ObserverDesign

log = logging.getLogger(__name__)


@dataclass
class DesignOptions:
    """Knobs for :func:`design_gains`.

    ``margin`` is the target decay rate for each node's detectable block and
    for the network average; it is halved automatically while the shifted
    joint detectability condition fails.
    """

    rank_tol: float = RANK_TOL
    boundary_tol: float = BOUNDARY_TOL
    beta0: float = 1.0
    beta_doublings: int = 30
    P_u_scale: float = 1.0
    margin: float = 10.0
    safety_factor: float = 1.01
    lmi_tol: float = 0.0
    Y: dict = field(default_factory=dict)


# ---------------------------------------------------------------- existence


def check_rank_condition(node, rank_tol=RANK_TOL):
    """``rank(C_i B_bar_i) == rank(B_bar_i)``; vacuous without unknown inputs."""
    if node.B_bar.shape[1] == 0:
        return True
    return numerical_rank(node.C @ node.B_bar, rank_tol) == numerical_rank(node.B_bar, rank_tol)


def compute_huv(node, Y=None, rank_tol=RANK_TOL):
    """General solution ``H = U + Y V`` of the decoupling equation ``(I - H C) B_bar = 0``.

    Returns
    -------
    H, U, V : ndarray
        ``U = B_bar (C B_bar)^+`` and ``V = I - C B_bar (C B_bar)^+``.
    """
    n, p = node.C.shape[1], node.p
    if not check_rank_condition(node, rank_tol):
        raise DesignError("unsolvable_decoupling", "rank(C_i B_bar_i) != rank(B_bar_i)")
    Y = np.zeros((n, p)) if Y is None else np.asarray(Y, dtype=float).reshape(n, p)
    if node.B_bar.shape[1] == 0:
        U = np.zeros((n, p))
        V = np.eye(p)
    else:
        CB = node.C @ node.B_bar
        CBp = pseudo_inverse(CB, rank_tol)
        U = node.B_bar @ CBp
        V = np.eye(p) - CB @ CBp
    return U + Y @ V, U, V


def decoupled_state_matrix(model, node, U):
    """``A_i = (I - U_i C_i) A``."""
    return (np.eye(model.n) - U @ node.C) @ model.A


def check_extensive_joint_detectability(model, rank_tol=RANK_TOL, boundary_tol=BOUNDARY_TOL, shift=0.0):
    """Is the intersection of the per-node undetectable subspaces trivial?

    ``shift > 0`` tests the stronger condition in which modes decaying slower
    than ``shift`` also count as undetectable.

    Returns
    -------
    ok : bool
    witness : SubspaceBasis
        The intersection itself; zero-dimensional exactly when ``ok``.
    """
    subspaces = []
    for node in model.nodes:
        _, U, _ = compute_huv(node, rank_tol=rank_tol)
        A_i = decoupled_state_matrix(model, node, U)
        A_i = A_i + shift * np.eye(model.n)
        subspaces.append(undetectable_subspace(node.C, A_i, rank_tol, boundary_tol))
    witness = subspace_intersection(subspaces, model.n, rank_tol)
    return witness.dim == 0, witness


def check_existence(model, rank_tol=RANK_TOL, boundary_tol=BOUNDARY_TOL):
    """Both existence conditions; returns ``(rank_ok_per_node, joint_ok, witness)``."""
    ranks = [check_rank_condition(node, rank_tol) for node in model.nodes]
    if not all(ranks):
        return ranks, False, None
    ok, witness = check_extensive_joint_detectability(model, rank_tol, boundary_tol)
    return ranks, ok, witness


# --------------------------------------------------------------- LMI pieces


def recover_K(N, H, A, C):
    """Least-squares ``K`` in ``N = (I - H C) A - K C``."""
    N, H, A, C = (np.asarray(X, dtype=float) for X in (N, H, A, C))
    n = A.shape[0]
    if C.shape[0] == 0:
        return np.zeros((n, 0))
    rhs = (np.eye(n) - H @ C) @ A - N
    if numerical_rank(C) < C.shape[0]:
        warnings.warn("C is row-rank deficient; returning the minimum-norm K", stacklevel=2)
    Kt, *_ = np.linalg.lstsq(C.T, rhs.T, rcond=None)
    return Kt.T


def recover_Y(H, U, V):
    """Minimum-norm ``Y`` with ``H = U + Y V``."""
    if V.size == 0:
        return np.zeros_like(H)
    return (H - U) @ np.linalg.pinv(V)


def _complete_node(model, node, gains, rank_tol=RANK_TOL):
    """Fill in ``K, Y, U, V`` when a design omits them."""
    _, U, V = compute_huv(node, rank_tol=rank_tol)
    K = gains.K if gains.K is not None else recover_K(gains.N, gains.H, model.A, node.C)
    Y = gains.Y if gains.Y is not None else recover_Y(gains.H, U, V)
    return K, Y, U, V


def compute_lambda(design, model, rank_tol=RANK_TOL):
    """Per-node ``Lambda_i`` from the expanded bilinear-free formula.

    With ``Yb = P Y`` and ``Kb = P K``::

        Lambda_i = A^T (I - C^T U^T) P + P (I - U C) A
                   - A^T C^T V^T Yb^T - Yb V C A - C^T Kb^T - Kb C

    which equals ``N_i^T P_i + P_i N_i`` whenever the structural conditions
    hold.
    """
    A = model.A
    n = model.n
    out = []
    for node, g in zip(model.nodes, design.nodes):
        K, Y, U, V = _complete_node(model, node, g, rank_tol)
        P = g.P
        C = node.C
        Yb = P @ Y
        Kb = P @ K
        Ai = (np.eye(n) - U @ C) @ A
        Lam = Ai.T @ P + P @ Ai
        YVCA = Yb @ V @ C @ A
        Lam = Lam - YVCA.T - YVCA - (Kb @ C).T - Kb @ C
        out.append(0.5 * (Lam + Lam.T))
    return out


def verify_lmi(cert_or_lambdas, tol=0.0):
    Lam = cert_or_lambdas.Lambda_i if isinstance(cert_or_lambdas, DesignCertificate) else cert_or_lambdas
    return is_negative_definite(sum(Lam), tol)


def chi_numerator(Lambda_i):
    """``| Lambda - Lambda_P^T (sum Lambda_i)^{-1} Lambda_P |`` (spectral norm).

    This is the matrix whose Schur complement with ``-sum Lambda_i`` decides
    positive definiteness of the coupled Lyapunov derivative.
    """
    S = sum(Lambda_i)
    Lam = sla.block_diag(*Lambda_i)
    LP = np.hstack(Lambda_i)
    X = Lam - LP.T @ np.linalg.solve(S, LP)
    X = 0.5 * (X + X.T)
    return float(np.linalg.norm(X, 2))


def _consensus_factor(mode):
    # V' = e^T Lambda e - chi e^T (Q (x) I) e with Q = 2L (undirected/switching), L_hat (directed)
    return 1.0 if mode == "directed" else 2.0


def chi_bound(Lambda_i, mode, graph_quantity):
    """Smallest admissible coupling gain (the strict bound itself)."""
    if len(Lambda_i) == 1:
        return 0.0
    if not graph_quantity > 0:
        raise DesignError("bad_graph_quantity", f"graph quantity must be positive, got {graph_quantity}")
    return chi_numerator(Lambda_i) / (_consensus_factor(mode) * graph_quantity)


def compute_chi(cert, mode, graph_quantity, safety_factor=1.01):
    """Coupling gain: the bound for ``mode`` times ``safety_factor``.

    ``graph_quantity`` is ``lambda_2(L)`` (undirected), ``C(N)`` (switching)
    or ``lambda_2(L_hat)`` (directed).
    """
    if not cert.lmi_ok:
        raise DesignError("no_certificate", "sum of Lambda_i is not negative definite")
    return safety_factor * chi_bound(cert.Lambda_i, mode, graph_quantity)


def graph_quantity(topology, mode=None):
    """Connectivity number entering the coupling-gain bound for ``topology``."""
    mode = mode or topology_mode(topology)
    if mode == "switching":
        return G.connectivity_floor(topology.node_count)
    if mode == "directed":
        return G.perron_weights(topology).lambda2
    return G.algebraic_connectivity(G.laplacian(topology))


def topology_mode(topology):
    if isinstance(topology, G.SwitchingSchedule):
        return "switching"
    return "directed" if topology.directed else "undirected"


def check_mode(topology, mode):
    actual = topology_mode(topology)
    if mode is not None and mode != actual:
        raise DesignError("mode_mismatch", f"mode {mode!r} requested but the graph block is {actual!r}")
    if actual == "undirected" and not G.is_connected(topology):
        raise GraphError("disconnected_topology", "undirected graph is not connected")
    if actual == "directed" and not G.is_strongly_connected(topology):
        raise GraphError("requires_strong_connectivity", "directed graph is not strongly connected")
    return actual


def consensus_matrices(topology):
    """Symmetric ``Q_k`` with ``V' = e^T Lambda e - chi e^T (Q_k (x) I) e`` for each active graph."""
    mode = topology_mode(topology)
    if mode == "switching":
        return [2.0 * L for L in topology.laplacians()]
    if mode == "directed":
        return [G.perron_weights(topology).L_hat]
    return [2.0 * G.laplacian(topology)]


def compute_decay_rate(design, cert, chi, topology):
    """Exponential rate ``mu`` with ``V(t) <= exp(-mu t) V(0)``.

    ``mu = lambda_min(chi Q (x) I - Lambda) / max_i lambda_max(P_i)`` with ``Q``
    from :func:`consensus_matrices`; for a switching schedule the slowest
    topology wins.  ``topology`` may also be a bare symmetric Laplacian.
    """
    if isinstance(topology, np.ndarray):
        Qs = [2.0 * np.asarray(topology, dtype=float)]
    else:
        Qs = consensus_matrices(topology)
    n = cert.Lambda_i[0].shape[0]
    Lam = cert.Lambda
    pmax = max(float(sla.eigvalsh(symmetrize(g.P))[-1]) for g in design.nodes)
    lam_min = min(float(sla.eigvalsh(chi * np.kron(Q, np.eye(n)) - Lam)[0]) for Q in Qs)
    if lam_min <= 0:
        raise DesignError("chi_too_small", f"chi (Q x I) - Lambda is not positive definite (min eig {lam_min:.3e})")
    return lam_min / pmax


def certify(design, model, topology, safety_factor=None, lmi_tol=0.0):
    """Certificate for an existing design on ``topology``.

    ``chi_bound`` is always recomputed.  ``mu`` is evaluated at the design's
    own ``chi`` (NaN if that ``chi`` is below the bound).
    """
    mode = topology_mode(topology)
    Lambda_i = compute_lambda(design, model)
    S = sum(Lambda_i)
    max_eig = float(sla.eigvalsh(symmetrize(S))[-1])
    lmi_ok = max_eig < -lmi_tol
    gq = graph_quantity(topology, mode) if model.N > 1 else 0.0
    cert = DesignCertificate(tuple(Lambda_i), lmi_ok, max_eig, graph_quantity=gq)
    if not lmi_ok:
        return cert
    bound = chi_bound(Lambda_i, mode, gq)
    chi = design.chi if safety_factor is None else bound * safety_factor
    cert = DesignCertificate(tuple(Lambda_i), lmi_ok, max_eig, chi_bound=bound, graph_quantity=gq)
    try:
        mu = compute_decay_rate(design, cert, chi, topology)
    except DesignError:
        mu = float("nan")
    return DesignCertificate(tuple(Lambda_i), lmi_ok, max_eig, bound, gq, mu)


# --------------------------------------------------------------- synthesis


def design_gains(model, topology, mode=None, options=None):
    """Synthesize a certified distributed observer for ``model`` on ``topology``.

    Raises
    ------
    DesignError
        ``unsolvable_decoupling`` / ``not_jointly_detectable`` when an
        existence condition fails, ``lmi_scaling_failed`` when ``beta`` runs
        past its cap, ``mode_mismatch`` for an inconsistent ``mode``.
    """
    opts = options or DesignOptions()
    mode = check_mode(topology, mode)
    if topology.node_count != model.N:
        raise DesignError("bad_shape", f"graph has {topology.node_count} nodes, model has {model.N}")

    for i, node in enumerate(model.nodes):
        if not check_rank_condition(node, opts.rank_tol):
            raise DesignError("unsolvable_decoupling", f"node {i}: rank(C B_bar) != rank(B_bar)")
    ok, witness = check_extensive_joint_detectability(model, opts.rank_tol, opts.boundary_tol)
    if not ok:
        raise DesignError("not_jointly_detectable", f"common undetectable subspace of dimension {witness.dim}")

    alpha = _feasible_margin(model, opts)
    n = model.n
    eye = np.eye(n)
    parts = []
    for i, node in enumerate(model.nodes):
        Y = opts.Y.get(i)
        H, U, V = compute_huv(node, Y, opts.rank_tol)
        Y = np.zeros((n, node.p)) if Y is None else np.asarray(Y, dtype=float)
        A_bar = (eye - H @ node.C) @ model.A
        dec = detectability_decomposition(node.C, A_bar, opts.rank_tol, opts.boundary_tol, shift=alpha)
        K_d = stabilizing_output_injection(dec.C_d, dec.A_dd, alpha, opts.rank_tol, opts.boundary_tol)
        gamma = dec.A_dd - K_d @ dec.C_d
        # Gamma^T P + P Gamma = -I - 2 alpha P, so the block decays at least at alpha
        if gamma.size:
            P_d1 = solve_lyapunov(gamma + alpha * np.eye(gamma.shape[0]), np.eye(gamma.shape[0]))
        else:
            P_d1 = np.zeros((0, 0))
        K = dec.T_d @ K_d
        P_u = opts.P_u_scale * dec.T_u @ dec.T_u.T
        log.debug("node %d: v=%d, abscissa(Gamma)=%.3g", i, dec.v, spectral_abscissa(gamma))
        parts.append((H, U, V, Y, K, dec.T_d @ P_d1 @ dec.T_d.T, P_u))

    # stop once sum Lambda_i + alpha sum P_i < 0, which implies the LMI and
    # keeps the network-average decay rate near alpha
    beta = opts.beta0
    for _ in range(opts.beta_doublings + 1):
        nodes = []
        for node, (H, U, V, Y, K, P_d, P_u) in zip(model.nodes, parts):
            P = beta * P_d + P_u
            P = 0.5 * (P + P.T)
            M = eye - H @ node.C
            N = M @ model.A - K @ node.C
            L = K + N @ H
            nodes.append(NodeGains(H=H, M=M, N=N, L=L, P=P, K=K, Y=Y, U=U, V=V))
        design = ObserverDesign(nodes, 0.0, mode)
        Lambda_i = compute_lambda(design, model, opts.rank_tol)
        if is_negative_definite(sum(Lambda_i) + alpha * sum(g.P for g in nodes), opts.lmi_tol):
            break
        beta *= 2.0
    else:
        raise DesignError("lmi_scaling_failed", f"beta exceeded {opts.beta0 * 2.0**opts.beta_doublings:.3g}")

    cert = DesignCertificate(tuple(Lambda_i), True, float(sla.eigvalsh(sum(Lambda_i))[-1]), beta=beta)
    gq = graph_quantity(topology, mode) if model.N > 1 else 0.0
    chi = compute_chi(cert, mode, gq, opts.safety_factor) if model.N > 1 else 0.0
    bound = chi_bound(cert.Lambda_i, mode, gq) if model.N > 1 else 0.0
    design = design.with_chi(chi)
    cert = DesignCertificate(cert.Lambda_i, True, cert.max_eig, bound, gq, beta=beta)
    mu = compute_decay_rate(design, cert, chi, topology)
    cert = DesignCertificate(cert.Lambda_i, True, cert.max_eig, bound, gq, mu, beta, {"margin": alpha})
    return design, cert


def _feasible_margin(model, opts):
    """Largest ``margin / 2^k`` at which the shifted joint condition holds."""
    alpha = opts.margin
    while alpha > 0:
        ok, _ = check_extensive_joint_detectability(model, opts.rank_tol, opts.boundary_tol, shift=alpha)
        if ok:
            break
        alpha = 0.5 * alpha if alpha > 1e-6 else 0.0
    if alpha < opts.margin:
        warnings.warn(f"decay margin reduced from {opts.margin:.3g} to {alpha:.3g} to keep joint detectability",
                      stacklevel=3)
    return alpha


# ------------------------------------------------------------ verification


@dataclass
class NodeReport:
    decoupling: float
    M: float
    N: float
    L: float
    K_fit: float
    P_spd: bool
    N_abscissa: float


@dataclass
class DesignReport:
    nodes: list
    lmi_ok: bool
    max_eig: float
    tol: float
    failures: list

    @property
    def passed(self):
        return not self.failures

    def as_dict(self):
        return {
            "passed": self.passed,
            "tol": self.tol,
            "lmi_ok": self.lmi_ok,
            "max_eig_sum_lambda": self.max_eig,
            "failures": list(self.failures),
            "nodes": [vars(r) for r in self.nodes],
        }


def _rel(res, *scales):
    return float(np.linalg.norm(res, 2) / max([1.0] + [np.linalg.norm(s, 2) for s in scales if np.size(s)]))


def verify_existing_design(model, design, tol=1e-8):
    """Residual table for a supplied design.

    Each structural condition is reported as a relative 2-norm residual:
    decoupling ``(I - H C) B_bar = 0``, ``M = I - H C``, ``N = M A - K C`` and
    ``L = K + N H``.  A missing ``K`` is recovered by least squares first.
    """
    if len(design.nodes) != model.N:
        raise DesignError("bad_shape", f"design has {len(design.nodes)} nodes, model has {model.N}")
    n = model.n
    eye = np.eye(n)
    rows, failures = [], []
    for i, (node, g) in enumerate(zip(model.nodes, design.nodes)):
        p = node.p
        for name, X, shape in (("H", g.H, (n, p)), ("M", g.M, (n, n)), ("N", g.N, (n, n)),
                               ("L", g.L, (n, p)), ("P", g.P, (n, n))):
            if np.shape(X) != shape:
                raise DesignError("bad_shape", f"node {i}: {name} has shape {np.shape(X)}, expected {shape}")
        K = g.K if g.K is not None else recover_K(g.N, g.H, model.A, node.C)
        IHC = eye - g.H @ node.C
        dec = 0.0
        if node.B_bar.shape[1]:
            dec = float(np.linalg.norm(IHC @ node.B_bar, 2) / np.linalg.norm(node.B_bar, 2))
        r_M = _rel(g.M - IHC, IHC)
        r_N = _rel(g.N - (g.M @ model.A - K @ node.C), g.N)
        r_L = _rel(g.L - (K + g.N @ g.H), g.L)
        r_K = _rel(IHC @ model.A - K @ node.C - g.N, g.N)
        Ps = 0.5 * (g.P + g.P.T)
        spd = bool(np.allclose(g.P, g.P.T, atol=1e-10 * max(1.0, np.abs(g.P).max()))) and sla.eigvalsh(Ps)[0] > 0
        rows.append(NodeReport(dec, r_M, r_N, r_L, r_K, spd, spectral_abscissa(g.N)))
        for label, val in (("decoupling", dec), ("M", r_M), ("N", r_N), ("L", r_L)):
            if not val <= tol:
                failures.append(f"node {i}: {label} condition residual {val:.3e} > {tol:.1e}")
        if not spd:
            failures.append(f"node {i}: P is not symmetric positive definite")
    Lambda_i = compute_lambda(design, model)
    max_eig = float(sla.eigvalsh(symmetrize(sum(Lambda_i)))[-1])
    lmi_ok = max_eig < 0
    if not lmi_ok:
        failures.append(f"LMI: max eigenvalue of sum Lambda_i is {max_eig:.3e} >= 0")
    return DesignReport(rows, lmi_ok, max_eig, tol, failures)


def reconcile_design(model, design):
    """Rebuild ``M, N, L`` so the structural conditions hold to machine precision.

    ``H`` and ``P`` are kept; ``K`` is recovered from the supplied ``N`` when
    absent.  Use this on gains rounded to a few significant digits before
    simulating them, otherwise the rounding residue acts as a persistent
    input to the error dynamics.
    """
    n = model.n
    nodes = []
    for node, g in zip(model.nodes, design.nodes):
        K, Y, U, V = _complete_node(model, node, g)
        M = np.eye(n) - g.H @ node.C
        N = M @ model.A - K @ node.C
        L = K + N @ g.H
        nodes.append(NodeGains(H=g.H, M=M, N=N, L=L, P=0.5 * (g.P + g.P.T), K=K, Y=Y, U=U, V=V))
    return ObserverDesign(nodes, design.chi, design.mode)
