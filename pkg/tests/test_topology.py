from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edac.fileio import load_scenario
from edac.topology import (
    TimedTopology,
    TopologyChange,
    TopologyError,
    adjacency_from_edges,
    averaging_projector,
    components,
    graph_at,
    jacobi_eigh,
    lambda2,
    laplacian,
    laplacian_pseudoinverse,
    spectral_summary,
)


@pytest.fixture(scope="module")
def paper_topology():
    return load_scenario("paper_sec4").topology


def test_bridges_present_before_failure(paper_topology):
    adj = graph_at(paper_topology, 3.0)
    assert adj[1, 6] == adj[6, 1] == 1
    assert adj[3, 4] == adj[4, 3] == 1


def test_bridges_gone_after_failure(paper_topology):
    adj = graph_at(paper_topology, 6.0)
    assert adj[1, 6] == 0 and adj[3, 4] == 0
    assert (adj == adj.T).all()


def test_no_changes_keeps_base_edges():
    topo = TimedTopology(3, [(1, 2), (2, 3)])
    for t in (0.0, 1.0, 1e6):
        assert topo.edges_at(t) == {(1, 2), (2, 3)}


def test_schedule_validation():
    with pytest.raises(TopologyError):
        TimedTopology(3, [(1, 2)], [TopologyChange(1.0, (2, 3), "remove")])
    with pytest.raises(TopologyError):
        TimedTopology(3, [(1, 2)], [TopologyChange(1.0, (2, 1), "add")])
    with pytest.raises(TopologyError):
        TimedTopology(3, [(1, 1)])
    with pytest.raises(TopologyError):
        TimedTopology(3, [(1, 4)])
    with pytest.raises(TopologyError):
        TopologyChange(-1.0, (1, 2), "remove")


def test_readd_after_remove():
    topo = TimedTopology(
        2, [(1, 2)], [TopologyChange(1.0, (1, 2), "remove"), TopologyChange(2.0, (1, 2), "add")]
    )
    assert topo.edges_at(1.5) == set()
    assert topo.edges_at(2.0) == {(1, 2)}


def test_laplacian_examples():
    path = laplacian(adjacency_from_edges(3, [(1, 2), (2, 3)]))
    np.testing.assert_array_equal(path, [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])
    np.testing.assert_array_equal(laplacian(np.zeros((1, 1), dtype=int)), [[0.0]])
    k4 = laplacian(np.ones((4, 4), dtype=int) - np.eye(4, dtype=int))
    np.testing.assert_array_equal(np.diag(k4), [3, 3, 3, 3])
    assert (k4[~np.eye(4, dtype=bool)] == -1).all()


def test_lambda2_examples():
    k4 = laplacian(np.ones((4, 4), dtype=int) - np.eye(4, dtype=int))
    assert lambda2(k4) == pytest.approx(4.0, abs=1e-12)
    path = laplacian(adjacency_from_edges(3, [(1, 2), (2, 3)]))
    assert lambda2(path) == pytest.approx(1.0, abs=1e-12)
    assert lambda2(np.zeros((2, 2))) == 0.0
    assert lambda2(np.zeros((1, 1))) == 0.0


def test_lambda2_rejects_asymmetric():
    with pytest.raises(ValueError):
        lambda2(np.array([[1.0, -1.0], [0.0, 0.0]]))


def test_pseudoinverse_examples():
    np.testing.assert_array_equal(laplacian_pseudoinverse(np.zeros((3, 3))), np.zeros((3, 3)))
    k2 = np.array([[1.0, -1.0], [-1.0, 1.0]])
    np.testing.assert_allclose(laplacian_pseudoinverse(k2), 0.25 * k2, atol=1e-14)


def test_paper_graph_split_components(paper_topology):
    assert components(graph_at(paper_topology, 6.0)) == [[1, 2, 3, 4], [5, 6, 7, 8]]
    assert components(graph_at(paper_topology, 0.0)) == [list(range(1, 9))]
    assert components(np.zeros((3, 3), dtype=int)) == [[1], [2], [3]]


def test_spectral_summary(paper_topology):
    before = spectral_summary(graph_at(paper_topology, 0.0))
    after = spectral_summary(graph_at(paper_topology, 6.0))
    assert before.connected and before.lambda2 > 0
    assert not after.connected and after.lambda2 == 0.0


@st.composite
def graphs(draw, max_n=7):
    n = draw(st.integers(2, max_n))
    pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs)))
    return n, chosen


@settings(max_examples=60, deadline=None)
@given(graphs())
def test_jacobi_matches_numpy(g):
    n, edges = g
    lap = laplacian(adjacency_from_edges(n, edges))
    w, v = jacobi_eigh(lap)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(lap), atol=1e-10)
    np.testing.assert_allclose(v.T @ v, np.eye(n), atol=1e-10)
    np.testing.assert_allclose(lap @ v, v * w, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(graphs())
def test_connectivity_and_pseudoinverse(g):
    n, edges = g
    adj = adjacency_from_edges(n, edges)
    lap = laplacian(adj)
    connected = len(components(adj)) == 1
    assert (lambda2(lap) > 0) == connected
    pinv = laplacian_pseudoinverse(lap)
    # Penrose identities, checked against the library routine as a second route
    np.testing.assert_allclose(lap @ pinv @ lap, lap, atol=1e-8)
    np.testing.assert_allclose(pinv @ lap @ pinv, pinv, atol=1e-8)
    np.testing.assert_allclose(pinv, np.linalg.pinv(lap, hermitian=True), atol=1e-8)
    if connected:
        np.testing.assert_allclose(lap @ pinv, averaging_projector(n), atol=1e-8)
