from fractions import Fraction

import networkx as nx
import pytest

from mpcreduce import graphs, oracles
from mpcreduce.graphs import GraphInstance, SuccessorList


def path3():
    return GraphInstance(3, ((0, 1), (1, 2)))


def test_two_cycles_connectivity():
    g = graphs.generate("two_cycles", seed=0, n=7)
    assert oracles.solve("connectivity", g).value is False
    assert oracles.solve("num_cc", g).value == 2


def test_odd_cycle_not_bipartite():
    assert oracles.solve("bipartiteness", graphs.generate("one_cycle", seed=0, n=5)).value is False
    assert oracles.solve("bipartiteness", graphs.generate("one_cycle", seed=0, n=6)).value is True


def test_cycle_count():
    assert oracles.solve("cycle_count", graphs.generate("one_cycle", seed=3, n=9)).value == 1


def test_path_metrics():
    g = path3()
    assert oracles.solve("diameter", g).value == 2
    assert oracles.solve("radius", g).value == 1
    assert oracles.solve("median", g).value == 2
    assert oracles.eccentricities(oracles.floyd_warshall(g)) == [2, 1, 2]


def test_star_betweenness():
    star = GraphInstance(4, ((0, 1), (0, 2), (0, 3)))
    assert oracles.betweenness(star) == [3, 0, 0, 0]


def test_triangle_msf():
    g = GraphInstance(3, ((0, 1, 1), (1, 2, 2), (0, 2, 3)), weighted=True)
    assert oracles.solve("msf", g).value == ((0, 1, 1), (1, 2, 2))


def test_k4_mincut():
    k4 = GraphInstance(4, tuple((u, v) for u in range(4) for v in range(u + 1, 4)))
    value, side = oracles.stoer_wagner(k4)
    assert value == 3 and oracles.cut_value(k4, side) == 3


def test_ord():
    sl = SuccessorList(4, (2, 0, -1, 1))   # path 3 -> 1 -> 0 -> 2
    assert oracles.precedes(sl, 1, 2) and not oracles.precedes(sl, 2, 1)
    assert oracles.ranks(sl) == [2, 1, 3, 0]


def test_unreachable_sentinel():
    g = GraphInstance(3, ((0, 1, 4),), weighted=True, s=0, t=2)
    assert oracles.solve("shortest_path", g).value == oracles.sentinel(g) == 3 * 4 + 1


def test_wrong_tag():
    with pytest.raises(oracles.WrongTag):
        oracles.solve_many("nope", [[0, 2, -1, -1, -1]], [])


def _nx(g):
    h = nx.DiGraph() if g.directed else nx.Graph()
    h.add_nodes_from(range(g.n))
    h.add_weighted_edges_from(g.edges)
    return h


@pytest.mark.parametrize("seed", range(15))
def test_apsp_matches_networkx(seed):
    g = graphs.generate("gnm_weighted", seed=seed, n=9, m=14, M=7, directed=seed % 2 == 1)
    ours = oracles.floyd_warshall(g)
    theirs = dict(nx.all_pairs_dijkstra_path_length(_nx(g)))
    big = oracles.sentinel(g)
    for u in range(g.n):
        for v in range(g.n):
            assert ours[u][v] == theirs[u].get(v, big)


@pytest.mark.parametrize("seed", range(10))
def test_betweenness_matches_networkx(seed):
    g = graphs.generate("gnm_weighted", seed=seed, n=8, m=12, M=3, directed=seed % 2 == 1)
    ours = oracles.betweenness(g)
    theirs = nx.betweenness_centrality(_nx(g), normalized=False, weight="weight")
    for v in range(g.n):
        assert float(ours[v]) == pytest.approx(theirs[v])


@pytest.mark.parametrize("seed", range(10))
def test_mincut_matches_networkx(seed):
    g = graphs.generate("gnm_weighted", seed=seed, n=8, m=16, M=5)
    h = _nx(g)
    if not nx.is_connected(h):
        pytest.skip("networkx needs a connected graph")
    value, _ = nx.stoer_wagner(h)
    assert oracles.stoer_wagner(g)[0] == value


def test_consistency_mode(monkeypatch):
    monkeypatch.setattr(oracles, "CHECK_CONSISTENCY", True)
    g = graphs.generate("gnm_weighted", seed=4, n=10, m=20, M=9)
    for tag in ("diameter", "radius", "median"):
        oracles.solve(tag, g)


def test_brute_force_agrees_on_fractions():
    # two equal shortest paths 0-1-3 and 0-2-3 split the pair (0, 3)
    sq = GraphInstance(4, ((0, 1), (0, 2), (1, 3), (2, 3)))
    assert oracles.betweenness(sq) == oracles.brute_force_betweenness(sq)
    assert oracles.betweenness(sq)[1] == Fraction(1, 2)
