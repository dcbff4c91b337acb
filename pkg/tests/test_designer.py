import warnings

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
import properties as P
from duio import designer as D
from duio import graph as G
from duio import linalg as la
from duio.errors import DesignError
from duio.model import DesignCertificate, NodeGains, ObserverDesign, SystemModel

seeds = st.integers(0, 2**32 - 1)


@pytest.fixture(scope="module")
def synthesized(sc1):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return D.design_gains(sc1.model, sc1.topology)


def _rel(a, b):
    return np.linalg.norm(a - b, 2) / np.linalg.norm(b, 2)


# ------------------------------------------------------------------ existence


def test_rank_condition_examples(model):
    empty = SystemModel.from_partition(-np.eye(2), np.zeros((2, 0)), np.zeros((2, 0)), [np.eye(2)], [[]])
    assert D.check_rank_condition(empty.nodes[0])
    full = SystemModel.from_partition(-np.eye(3), np.eye(3)[:, :2], np.zeros((3, 0)), [np.eye(3)], [[]])
    assert D.check_rank_condition(full.nodes[0])
    assert all(D.check_rank_condition(node) for node in model.nodes)
    assert all(O.rank_conditions(model))


def test_huv_without_unknown_inputs():
    m = SystemModel.from_partition(-np.eye(2), np.zeros((2, 0)), np.zeros((2, 0)), [np.array([[1.0, 2.0]])], [[]])
    Y = np.array([[3.0], [4.0]])
    H, U, V = D.compute_huv(m.nodes[0], Y)
    assert np.array_equal(U, np.zeros((2, 1)))
    assert np.array_equal(V, np.eye(1))
    assert np.array_equal(H, Y)


def test_huv_reproduces_shipped_h(model, shipped):
    for node, g in zip(model.nodes, shipped.nodes):
        H, _, _ = D.compute_huv(node)
        assert _rel(H, g.H) <= 5e-3


def test_huv_rejects_rank_failure(rng):
    m = O.random_model(rng, kind="rank")
    with pytest.raises(DesignError) as exc:
        D.compute_huv(m.nodes[0])
    assert exc.value.code == "unsolvable_decoupling"


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_huv_general_solution_decouples(seed):
    rng = np.random.default_rng(seed)
    model = O.random_model(rng)
    for node in model.nodes:
        if not D.check_rank_condition(node) or node.B_bar.shape[1] == 0:
            continue
        Y = rng.standard_normal((model.n, node.p))
        H, _, _ = D.compute_huv(node, Y)
        res = np.linalg.norm((np.eye(model.n) - H @ node.C) @ node.B_bar)
        assert res <= 1e-10 * max(1.0, np.linalg.norm(H)) * np.linalg.norm(node.B_bar)


def test_joint_detectability_single_observable_node():
    m = SystemModel.from_partition(np.diag([1.0, 2.0]), np.zeros((2, 0)), np.zeros((2, 0)), [np.array([[1.0, 1.0]])], [[]])
    ok, witness = D.check_extensive_joint_detectability(m)
    assert ok and witness.dim == 0


def test_joint_detectability_shared_mode():
    A = np.diag([-1.0, -2.0, 3.0])
    outputs = [np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]), np.array([[1.0, 1.0, 0]])]
    m = SystemModel.from_partition(A, np.zeros((3, 0)), np.zeros((3, 0)), outputs, [[], [], []])
    ok, witness = D.check_extensive_joint_detectability(m)
    assert not ok and witness.dim == 1
    assert np.isclose(abs(witness.basis[2, 0]), 1.0)


def test_joint_detectability_reference_plant(model):
    ok, witness = D.check_extensive_joint_detectability(model)
    assert ok and witness.dim == 0
    assert O.joint_detectable(model)


# ----------------------------------------------------------------- synthesis


def test_design_scalar_plant():
    m = SystemModel.from_partition([[-1.0]], np.zeros((1, 0)), np.zeros((1, 0)), [[[1.0]]], [[]])
    design, cert = D.design_gains(m, G.Topology(np.zeros((1, 1))))
    g = design.nodes[0]
    assert np.array_equal(g.H, np.zeros((1, 1)))
    assert g.N[0, 0] < 0
    assert cert.lmi_ok and cert.beta == 1.0


def test_design_reference_plant_certified(sc1, synthesized):
    design, cert = synthesized
    report = D.verify_existing_design(sc1.model, design, 1e-8)
    assert report.passed, report.failures
    assert cert.lmi_ok and D.verify_lmi(cert)
    assert design.chi > cert.chi_bound > 0
    assert design.chi == pytest.approx(1.01 * cert.chi_bound)
    assert cert.mu > 0 and cert.beta <= 2.0**30


def test_design_invariants(sc1, synthesized):
    design, _ = synthesized
    n = sc1.model.n
    for node, g in zip(sc1.model.nodes, design.nodes):
        assert np.linalg.norm((np.eye(n) - g.H @ node.C) @ node.B_bar) <= 1e-10 * np.linalg.norm(node.B_bar)
        assert np.array_equal(g.M, np.eye(n) - g.H @ node.C)
        assert np.linalg.norm(g.L - (g.K + g.N @ g.H)) <= 1e-12 * max(1.0, np.linalg.norm(g.L))
        assert np.all(np.linalg.eigvalsh(g.P) > 0)


def test_design_lyapunov_residual(sc1, synthesized):
    _, cert = synthesized
    alpha = cert.extras["margin"]
    node = sc1.model.nodes[0]
    H, _, _ = D.compute_huv(node)
    A_bar = (np.eye(6) - H @ node.C) @ sc1.model.A
    dec = la.detectability_decomposition(node.C, A_bar, shift=alpha)
    K_d = la.stabilizing_output_injection(dec.C_d, dec.A_dd, alpha)
    gamma = dec.A_dd - K_d @ dec.C_d
    assert la.is_hurwitz(gamma)
    G_s = gamma + alpha * np.eye(gamma.shape[0])
    Pd = la.solve_lyapunov(G_s, np.eye(gamma.shape[0]))
    assert np.linalg.norm(G_s.T @ Pd + Pd @ G_s + np.eye(gamma.shape[0])) <= 1e-8


def test_design_rejects_unsolvable(rng):
    m = O.random_model(rng, kind="shared")
    top = O.random_connected_graph(rng, m.N)
    with pytest.raises(DesignError) as exc:
        D.design_gains(m, top)
    assert exc.value.code == "not_jointly_detectable"


def test_design_mode_mismatch(sc1):
    with pytest.raises(DesignError) as exc:
        D.design_gains(sc1.model, sc1.topology, mode="directed")
    assert exc.value.code == "mode_mismatch"


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_synthesis_iff_existence(seed):
    ok, detail = P.check_theorem3(seed)
    assert ok, detail


# -------------------------------------------------------------------- Lambda


def test_lambda_collapses_without_gains(model):
    n = model.n
    nodes = []
    for node in model.nodes:
        _, U, V = D.compute_huv(node)
        nodes.append(NodeGains(H=U, M=None, N=None, L=None, P=np.eye(n), K=np.zeros((n, node.p)),
                               Y=np.zeros((n, node.p))))
    lams = D.compute_lambda(ObserverDesign(nodes, 0.0), model)
    for node, Lam in zip(model.nodes, lams):
        _, U, _ = D.compute_huv(node)
        A_i = (np.eye(n) - U @ node.C) @ model.A
        assert np.allclose(Lam, A_i.T + A_i, atol=1e-12)


def test_lambda_matches_shipped_n(model, shipped):
    lams = D.compute_lambda(shipped, model)
    for g, Lam in zip(shipped.nodes, lams):
        assert _rel(Lam, g.N.T @ g.P + g.P @ g.N) <= 1e-3


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_lambda_identity_random(seed):
    rng = np.random.default_rng(seed)
    model = P.modal_model(rng) if seed % 2 else O.random_model(rng)
    if not all(O.rank_conditions(model)):
        return
    n = model.n
    nodes = []
    for node in model.nodes:
        Y = rng.standard_normal((n, node.p))
        K = rng.standard_normal((n, node.p))
        H, U, V = D.compute_huv(node, Y)
        M = np.eye(n) - H @ node.C
        N = M @ model.A - K @ node.C
        S = rng.standard_normal((n, n))
        Pm = S @ S.T + np.eye(n)
        nodes.append(NodeGains(H=H, M=M, N=N, L=K + N @ H, P=Pm, K=K, Y=Y, U=U, V=V))
    design = ObserverDesign(nodes, 0.0)
    for g, Lam in zip(nodes, D.compute_lambda(design, model)):
        ref = g.N.T @ g.P + g.P @ g.N
        assert np.linalg.norm(Lam - ref) <= 1e-10 * max(1.0, np.linalg.norm(ref))


def test_verify_lmi_examples(model, shipped):
    assert D.verify_lmi([-np.eye(2), -np.eye(2)])
    assert not D.verify_lmi([np.diag([-1.0, 1.0]), -0.5 * np.eye(2)])
    assert D.verify_lmi(D.compute_lambda(shipped, model))


# -------------------------------------------------------------- chi and mu


def test_chi_bound_three_modes(sc1, sc2, sc3):
    c1 = D.certify(sc1.design, sc1.model, sc1.topology)
    c2 = D.certify(sc2.design, sc2.model, sc2.topology)
    c3 = D.certify(sc3.design, sc3.model, sc3.topology)
    assert c1.graph_quantity == pytest.approx(2.0)
    assert c3.graph_quantity == pytest.approx(4.167e-2, rel=1e-3)
    assert c1.chi_bound == pytest.approx(84.81, rel=0.05)
    assert c2.chi_bound == pytest.approx(234.0, rel=0.05)
    assert c3.chi_bound == pytest.approx(4.024e3, rel=0.05)


def test_compute_chi_applies_safety_factor(sc1):
    cert = D.certify(sc1.design, sc1.model, sc1.topology)
    assert D.compute_chi(cert, "undirected", 2.0) == pytest.approx(1.01 * cert.chi_bound)
    assert D.compute_chi(cert, "undirected", 2.0, 1.0) == pytest.approx(cert.chi_bound)


def test_compute_chi_guards():
    bad = DesignCertificate((np.eye(2), np.eye(2)), False, 1.0)
    with pytest.raises(DesignError) as exc:
        D.compute_chi(bad, "undirected", 2.0)
    assert exc.value.code == "no_certificate"
    good = DesignCertificate((-np.eye(2), -np.eye(2)), True, -2.0)
    with pytest.raises(DesignError):
        D.compute_chi(good, "undirected", 0.0)


@pytest.mark.parametrize("which", ["1", "2"])
def test_schur_complement_equivalence(which, request):
    sc = request.getfixturevalue(f"sc{which}")
    cert = D.certify(sc.design, sc.model, sc.topology)
    chi = 1.01 * cert.chi_bound
    S = cert.Lambda_sum
    n, N = sc.model.n, sc.model.N
    Q = D.consensus_matrices(sc.topology)[0]
    lam2 = np.linalg.eigvalsh(Q)[1]
    # error split: e_c is the common component, e_r the part orthogonal to consensus
    block = np.block([[-S, -cert.Lambda_P], [-cert.Lambda_P.T, chi * lam2 * np.eye(n * N) - cert.Lambda]])
    assert np.linalg.eigvalsh(0.5 * (block + block.T))[0] > 0
    below = 0.99 * cert.chi_bound
    block = np.block([[-S, -cert.Lambda_P], [-cert.Lambda_P.T, below * lam2 * np.eye(n * N) - cert.Lambda]])
    assert np.linalg.eigvalsh(0.5 * (block + block.T))[0] < 0


def test_decay_rate_scenario1(sc1):
    cert = D.certify(sc1.design, sc1.model, sc1.topology)
    mu = D.compute_decay_rate(sc1.design, cert, sc1.design.chi, sc1.topology)
    assert 1 / mu == pytest.approx(4.844e-2, rel=0.05)


def test_decay_rate_identity_case():
    L = G.laplacian(G.Topology.from_edges(3, [(0, 1), (1, 2)]))
    n = 2
    nodes = [NodeGains(H=None, M=None, N=None, L=None, P=np.eye(n)) for _ in range(3)]
    design = ObserverDesign(nodes, 5.0)
    cert = DesignCertificate(tuple(-np.eye(n) for _ in range(3)), True, -3.0)
    mu = D.compute_decay_rate(design, cert, 5.0, L)
    assert mu == pytest.approx(np.linalg.eigvalsh(2 * 5.0 * np.kron(L, np.eye(n)) + np.eye(3 * n))[0])


def test_decay_rate_rejects_small_chi(sc1):
    cert = D.certify(sc1.design, sc1.model, sc1.topology)
    with pytest.raises(DesignError) as exc:
        D.compute_decay_rate(sc1.design, cert, 0.0, sc1.topology)
    assert exc.value.code == "chi_too_small"


# ------------------------------------------------------------- verification


def test_verify_synthesized_self_consistent(sc1, synthesized):
    report = D.verify_existing_design(sc1.model, synthesized[0], 1e-8)
    for r in report.nodes:
        assert max(r.decoupling, r.M, r.N, r.L) <= 1e-8


def test_verify_shipped_gains(model, shipped):
    report = D.verify_existing_design(model, shipped, 5e-3)
    assert report.passed, report.failures
    assert report.lmi_ok
    assert not D.verify_existing_design(model, shipped, 1e-8).passed


def test_verify_flags_zeroed_h2(model, shipped):
    nodes = list(shipped.nodes)
    g = nodes[1]
    nodes[1] = NodeGains(H=np.zeros_like(g.H), M=g.M, N=g.N, L=g.L, P=g.P)
    report = D.verify_existing_design(model, ObserverDesign(nodes, shipped.chi), 5e-3)
    assert report.nodes[1].decoupling > 5e-3
    assert any("node 1: decoupling" in f for f in report.failures)


def test_reconcile_restores_exact_conditions(model, shipped):
    report = D.verify_existing_design(model, D.reconcile_design(model, shipped), 1e-12)
    assert report.passed, report.failures


def test_recover_k_zero(model):
    node = model.nodes[0]
    H, _, _ = D.compute_huv(node)
    N = (np.eye(6) - H @ node.C) @ model.A
    assert np.allclose(D.recover_K(N, H, model.A, node.C), 0.0, atol=1e-12)


def test_recover_k_planted(model, rng):
    for node in model.nodes:
        H, _, _ = D.compute_huv(node)
        K = rng.standard_normal((6, node.p))
        N = (np.eye(6) - H @ node.C) @ model.A - K @ node.C
        assert np.linalg.norm(D.recover_K(N, H, model.A, node.C) - K) <= 1e-10 * np.linalg.norm(K)


def test_recover_k_shipped_fit(model, shipped):
    report = D.verify_existing_design(model, shipped, 5e-3)
    assert report.nodes[0].K_fit <= 5e-3


def test_recover_k_warns_on_rank_deficient_c():
    C = np.array([[1.0, 0.0], [2.0, 0.0]])
    with pytest.warns(UserWarning):
        D.recover_K(np.zeros((2, 2)), np.zeros((2, 2)), -np.eye(2), C)
