import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
import properties as P
from duio import graph as G
from duio.errors import GraphError

SCENARIO1_EDGES = [(0, 1), (1, 3), (0, 2), (2, 3)]
SCENARIO2_ARCS = [(0, 1), (1, 0), (1, 3), (3, 0), (3, 2), (2, 0)]

seeds = st.integers(0, 2**32 - 1)


def test_edgeless_laplacian_is_zero():
    assert np.array_equal(G.laplacian(G.Topology(np.zeros((3, 3)))), np.zeros((3, 3)))


def test_complete_graph_laplacian():
    top = G.Topology.from_edges(3, [(0, 1), (0, 2), (1, 2)])
    assert np.array_equal(G.laplacian(top), [[2, -1, -1], [-1, 2, -1], [-1, -1, 2]])


def test_scenario1_cycle_spectrum():
    L = G.laplacian(G.Topology.from_edges(4, SCENARIO1_EDGES))
    assert np.allclose(np.linalg.eigvalsh(L), [0, 2, 2, 4])
    assert G.algebraic_connectivity(L) == pytest.approx(2.0)


def test_path_and_edgeless_connectivity():
    assert G.algebraic_connectivity(G.laplacian(G.Topology.from_edges(2, [(0, 1)]))) == pytest.approx(2.0)
    assert abs(G.algebraic_connectivity(np.zeros((3, 3)))) <= 1e-10


def test_connectivity_requires_symmetric():
    with pytest.raises(GraphError) as exc:
        G.algebraic_connectivity(np.array([[1.0, -1.0], [0.0, 0.0]]))
    assert exc.value.code == "requires_symmetric"


def test_directed_edge_convention():
    top = G.Topology.from_edges(2, [(0, 1)], directed=True)
    # node 1 receives from node 0
    assert top.adjacency[1, 0] == 1 and top.adjacency[0, 1] == 0
    assert top.edges() == [(0, 1)]


def test_topology_validation():
    with pytest.raises(GraphError):
        G.Topology(np.array([[0, 1], [0, 0]]))
    with pytest.raises(GraphError):
        G.Topology(np.eye(2))
    with pytest.raises(GraphError):
        G.Topology.from_edges(2, [(0, 2)])


def test_connectivity_verdicts():
    assert G.is_connected(G.Topology(np.ones((4, 4)) - np.eye(4)))
    assert not G.is_connected(G.Topology(np.zeros((2, 2))))
    assert G.is_strongly_connected(G.Topology.from_edges(4, SCENARIO2_ARCS, directed=True))
    assert not G.is_strongly_connected(G.Topology.from_edges(3, [(0, 1), (1, 2)], directed=True))


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_connectivity_matches_closure_oracle(seed):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(1, 8))
    adj = (rng.random((N, N)) < 0.3).astype(float)
    np.fill_diagonal(adj, 0)
    top = G.Topology(adj, directed=True)
    R = O.reachability(adj)
    assert G.is_strongly_connected(top) == bool(R.all())
    sym = G.Topology(np.maximum(adj, adj.T))
    assert G.is_connected(sym) == bool(O.reachability(sym.adjacency).all())
    lam2 = G.algebraic_connectivity(G.laplacian(sym)) if N > 1 else 1.0
    assert (lam2 > 1e-10) == G.is_connected(sym)


def test_perron_balanced_cycle():
    pw = G.perron_weights(G.Topology.from_edges(3, [(0, 1), (1, 2), (2, 0)], directed=True))
    assert np.allclose(pw.r, 1.0)


def test_perron_scenario2():
    pw = G.perron_weights(G.Topology.from_edges(4, SCENARIO2_ARCS, directed=True))
    assert np.allclose(pw.r, [0.5714, 1.714, 0.5714, 1.143], atol=5e-4)
    assert np.allclose(pw.R, np.diag(pw.r))


def test_perron_requires_strong_connectivity():
    with pytest.raises(GraphError) as exc:
        G.perron_weights(G.Topology.from_edges(3, [(0, 1), (1, 2)], directed=True))
    assert exc.value.code == "requires_strong_connectivity"


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_perron_weighted_laplacian(seed):
    ok, detail = P.check_lemma4(seed)
    assert ok, detail


def test_connectivity_floor_values():
    assert G.connectivity_floor(4) == pytest.approx(4.167e-2, rel=1e-3)
    assert G.connectivity_floor(2) == 0.5
    assert G.connectivity_floor(10) == pytest.approx(2 / 900)
    with pytest.raises(GraphError):
        G.connectivity_floor(1)


@pytest.mark.parametrize("N", [2, 3, 4, 5])
def test_connectivity_floor_exhaustive(N):
    ok, detail = P.check_floor_exhaustive(N)
    assert ok, detail


@pytest.mark.parametrize("N", [6, 7, 8, 10])
def test_connectivity_floor_sampled(N):
    rng = np.random.default_rng(N)
    c = G.connectivity_floor(N)
    for p in (0.0, 0.1, 0.3):
        for _ in range(40):
            top = O.random_connected_graph(rng, N, p)
            assert c <= G.algebraic_connectivity(G.laplacian(top))


def test_schedule_cycles_in_order():
    tops = [G.Topology.from_edges(3, e) for e in ([(0, 1), (1, 2)], [(0, 2), (1, 2)])]
    sch = G.SwitchingSchedule(tops, 0.1, start_index=1)
    assert [sch.index_at(t) for t in (0.0, 0.05, 0.1, 0.2, 0.3)] == [1, 1, 0, 1, 0]


def test_schedule_rejects_disconnected():
    tops = [G.Topology.from_edges(3, [(0, 1), (1, 2)]), G.Topology.from_edges(3, [(0, 1)])]
    with pytest.raises(GraphError) as exc:
        G.SwitchingSchedule(tops, 0.1)
    assert exc.value.code == "disconnected_topology"
    with pytest.raises(GraphError):
        G.SwitchingSchedule(tops[:1], 0.0)
