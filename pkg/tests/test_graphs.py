import networkx as nx
import numpy as np
import pytest

from errors import ContractError, DataError, UsageError
from evaluation import auc_ambiguous
from graphs import (EffectiveGraphConfig, Graph, effective_graph, enumerate_poly_roots, gen_ba, gen_er,
                    gen_ws, in_deg_normalize, make_graph, norm_laplacian, parse_graph_spec, poly_filter,
                    read_edge_list, sym_normalize, write_edge_list)
from numcore import Tensor, analytic_grad, finite_difference_grad, sum_reduce, mul
from experiments import random_symmetric


def test_er_is_reproducible_and_symmetric():
    a = gen_er(30, 0.3, seed=11)
    b = gen_er(30, 0.3, seed=11)
    np.testing.assert_array_equal(a.adjacency, b.adjacency)
    np.testing.assert_array_equal(a.adjacency, a.adjacency.T)
    assert np.all(np.diag(a.adjacency) == 0)


def test_er_extreme_probabilities():
    assert gen_er(10, 0.0, seed=0).edge_count == 0
    assert gen_er(10, 1.0, seed=0).edge_count == 45


def test_directed_er_row_is_in_neighbourhood():
    G = make_graph("erd:15:0.3", seed=2)
    assert G.directed
    g = G.to_networkx()
    for source, target in g.edges():
        assert G.adjacency[target, source] == 1.0


def test_ba_edge_count():
    G = gen_ba(20, 2, seed=4)
    assert G.edge_count == 3 + 2 * (20 - 3)
    assert gen_ba(3, 2, seed=0).edge_count == 3


def test_ws_ring_is_regular():
    G = gen_ws(30, 2, 0.0, seed=0)
    info = G.describe()
    assert info["regular"]
    assert np.all(G.degrees() == 2)
    with pytest.raises(ContractError):
        gen_ws(30, 3, 0.1, seed=0)


def test_er_mean_edge_count():
    counts = [gen_er(30, 0.3, seed=s).edge_count for s in range(50)]
    assert abs(np.mean(counts) - 0.3 * 435) < 5.0


def test_ba_is_connected_with_heavier_degree_tail():
    ba = gen_ba(200, 2, seed=1)
    er = gen_er(200, 2 * ba.edge_count / (200 * 199), seed=1)
    assert nx.is_connected(ba.to_networkx())
    assert ba.degrees().max() > er.degrees().max()


def test_ws_full_rewiring_destroys_clustering():
    lattice = nx.average_clustering(gen_ws(100, 4, 0.0, seed=0).to_networkx())
    rewired = nx.average_clustering(gen_ws(100, 4, 1.0, seed=0).to_networkx())
    assert lattice == pytest.approx(0.5)
    assert rewired < 0.2


def test_parse_graph_spec():
    assert parse_graph_spec("ws:30:2:0.5") == {"family": "ws", "n": 30, "k": 2, "p": 0.5}
    with pytest.raises(UsageError):
        parse_graph_spec("grid:5")
    with pytest.raises(UsageError):
        parse_graph_spec("er:20")


def test_sym_normalize_isolated_node_stays_zero():
    A = np.zeros((3, 3))
    A[0, 1] = A[1, 0] = 1.0
    M = sym_normalize(A)
    assert np.all(M[2] == 0) and np.all(M[:, 2] == 0)
    np.testing.assert_allclose(M[0, 1], 1.0)


def test_normalized_spectrum_in_unit_interval(er20):
    lam = np.linalg.eigvalsh(sym_normalize(er20))
    assert lam.min() >= -1 - 1e-10 and lam.max() <= 1 + 1e-10
    lam_l = np.linalg.eigvalsh(norm_laplacian(er20))
    assert lam_l.min() >= -1e-10


def test_normalized_laplacian_has_zero_eigenvalue():
    lam = np.linalg.eigvalsh(norm_laplacian(gen_er(20, 0.5, seed=0)))
    assert abs(lam.min()) < 1e-10


def test_in_degree_rows_sum_to_one():
    G = make_graph("erd:12:0.4", seed=1)
    M = in_deg_normalize(G)
    rows = M.sum(axis=1)
    has_in = G.degrees() > 0
    np.testing.assert_allclose(rows[has_in], 1.0)
    with pytest.raises(ContractError):
        in_deg_normalize(gen_er(5, 0.5, seed=0))


def test_poly_filter_matches_powers(path_graph):
    M = sym_normalize(path_graph)
    theta = [0.5, -1.0, 2.0]
    expected = 0.5 * np.eye(4) - M + 2.0 * M @ M
    np.testing.assert_allclose(poly_filter(M, theta), expected)
    np.testing.assert_allclose(poly_filter(M, [1.0]), np.eye(4))


def test_poly_filter_commutes_with_operator(er20):
    M = sym_normalize(er20)
    g = poly_filter(M, np.random.default_rng(4).normal(size=5))
    np.testing.assert_allclose(g @ M, M @ g, atol=1e-10)


def test_poly_filter_gradients(path_graph):
    M = Tensor(sym_normalize(path_graph), requires_grad=True)
    theta = Tensor([0.2, 1.0, -0.5, 0.3], requires_grad=True)
    w = Tensor(np.random.default_rng(0).normal(size=(4, 4)))
    fn = lambda: sum_reduce(mul(poly_filter(M, theta), w))  # noqa: E731
    g_m, g_t = analytic_grad(fn, [M, theta])
    np.testing.assert_allclose(g_m, finite_difference_grad(fn, M), rtol=1e-4, atol=1e-8)
    np.testing.assert_allclose(g_t, finite_difference_grad(fn, theta), rtol=1e-4, atol=1e-8)


def test_effective_graph_small_interval_recovers_graph():
    for seed in range(20):
        G = gen_er(30, 0.3, seed=seed)
        scores = effective_graph(G, EffectiveGraphConfig(1.0, 0.01, "continuous"))
        assert auc_ambiguous(scores, G) >= 99.0


def test_effective_graph_odd_hops_beat_even_hops():
    even, odd = [], []
    for seed in range(20):
        G = gen_er(30, 0.3, seed=seed)
        even.append(auc_ambiguous(effective_graph(G, EffectiveGraphConfig(1.0, 2, "discrete")), G))
        odd.append(auc_ambiguous(effective_graph(G, EffectiveGraphConfig(1.0, 3, "discrete")), G))
    assert np.mean(odd) > np.mean(even)


def test_effective_graph_rejects_fractional_discrete_interval():
    with pytest.raises(ContractError):
        EffectiveGraphConfig(1.0, 1.5, "discrete")


def test_root_counts_for_square_and_cube():
    M = random_symmetric(4, seed=0)
    square = enumerate_poly_roots(M, [0.0, 0.0, 1.0])
    assert square.solution_count == 16
    cube = enumerate_poly_roots(M, [0.0, 0.0, 0.0, 1.0])
    assert cube.solution_count == 1
    identity = enumerate_poly_roots(M, [0.0, 1.0])
    assert identity.solution_count == 1


def test_root_enumeration_size_limit():
    with pytest.raises(ContractError):
        enumerate_poly_roots(np.eye(9), [0.0, 1.0])


def test_edge_list_preserves_direction(tmp_path):
    G = make_graph("erd:10:0.3", seed=5)
    write_edge_list(G, tmp_path / "g.txt")
    back = read_edge_list(tmp_path / "g.txt")
    assert back.directed
    np.testing.assert_array_equal(back.adjacency, G.adjacency)


def test_edge_list_errors(tmp_path):
    with pytest.raises(DataError):
        read_edge_list(tmp_path / "missing.txt")
    bad = tmp_path / "bad.txt"
    bad.write_text("nodes 3\n0 1\n")
    with pytest.raises(DataError):
        read_edge_list(bad)


def test_graph_rejects_self_loops():
    with pytest.raises(ContractError):
        Graph(np.eye(3))
