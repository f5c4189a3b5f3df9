import pytest
from hypothesis import given, settings, strategies as st

from mpcreduce import graphs, oracles
from mpcreduce.engine import MpcConfig
from mpcreduce.graphs import (BadParams, GraphInstance, ParseError, RangeError, SuccessorList, distribute,
                              load_graph, load_successor, save_graph, save_successor)
from mpcreduce.reductions import get, run_reduction


def test_one_cycle():
    g = graphs.generate("one_cycle", seed=1, n=5)
    assert g.n == 5 and g.m == 5
    assert set(graphs.degrees(g)) == {2}
    assert oracles.solve("num_cc", g).value == 1


def test_two_cycles_split():
    g = graphs.generate("two_cycles", seed=2, n=7, split=3)
    labels = oracles.components(g)
    assert sorted(labels.count(x) for x in set(labels)) == [3, 4]


def test_successor_path_single_source():
    sl = graphs.generate("successor_path", seed=4, n=6)
    indeg = [0] * 6
    for x in sl.succ:
        if x >= 0:
            indeg[x] += 1
    assert indeg.count(0) == 1
    assert graphs.validate_family("successor_path", sl)
    assert sorted(sl.order()) == list(range(6))


def test_unknown_family():
    with pytest.raises(BadParams):
        graphs.generate("petersen", n=10)


def test_parse_triangle():
    g = load_graph("3 3 0 0\n0 1\n1 2\n2 0")
    assert g.n == 3 and g.edges == ((0, 1, 1), (0, 2, 1), (1, 2, 1))


def test_parse_weighted_edge():
    g = load_graph("2 1 0 1\n0 1 5")
    assert g.M == 5 and g.weighted


def test_parse_errors():
    with pytest.raises(ParseError):
        load_graph("3 2 0 0\n0 1")
    with pytest.raises(RangeError):
        load_graph("2 1 0 0\n0 2")
    with pytest.raises(ParseError):
        load_successor("3\n0 1\nx y")


def test_query_lines_round_trip():
    g = GraphInstance(4, ((0, 1, 2), (1, 3, 1)), weighted=True, s=0, t=3, k=2)
    assert load_graph(save_graph(g)) == g


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 9), st.data())
def test_graph_round_trip(n, data):
    pairs = data.draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1), st.integers(0, 9)),
                               max_size=12))
    directed = data.draw(st.booleans())
    g = GraphInstance(n, tuple(pairs), directed=directed, weighted=True)
    assert load_graph(save_graph(g)) == g
    assert save_graph(load_graph(save_graph(g))) == save_graph(g)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 12), st.integers(0, 10 ** 6))
def test_successor_round_trip(n, seed):
    sl = graphs.generate("successor_path", seed=seed, n=n)
    assert load_successor(save_successor(sl)) == sl


def test_distribution_triangle():
    g = load_graph("3 3 0 0\n0 1\n1 2\n2 0")
    d = distribute(g, MpcConfig(11, 0.9))
    assert d.words == 11 and d.machines == 2


def test_distribution_empty_graph():
    d = distribute(GraphInstance(4), MpcConfig(4, 0.9))
    assert d.words == 2 and d.machines == 1


def test_modes_agree_downstream():
    g = graphs.generate("gnp", seed=5, n=12, p=0.25).with_query(s=0, t=7)
    red = get("stconn-to-bipartiteness")
    a = run_reduction(red, g, mode="round_robin").answer
    b = run_reduction(red, g, mode="shuffle", seed=9).answer
    assert a == b == red.expected(g)


def test_successor_promise():
    with pytest.raises(graphs.PromiseViolation):
        SuccessorList(4, (1, -1, 3, -1)).order()
    with pytest.raises(BadParams):
        SuccessorList(3, (1, 5, -1))
