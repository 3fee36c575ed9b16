import math

import numpy as np
import pytest

from graph_corpus import corpus, enumerate_edge_estimator, triangles_by_enumeration
from qcheb.graph import (
    EDGE_QUERY_COST,
    Graph,
    GraphOracle,
    bucket_count,
    bucket_index,
    bucket_sizes,
    discard_sum,
    dv_plus,
    edge_estimator_distribution,
    estimate_edges,
    estimate_triangles,
    estimate_tv,
    kept_buckets,
    run_edge_estimator,
    run_tv_estimator,
    tv_bruteforce_distribution,
    tv_estimator_distribution,
    tv_estimator_law,
)
from qcheb.rng import split

GRAPHS = corpus()
SMALL = {k: g for k, g in GRAPHS.items() if g.n <= 12}


def law_dict(d):
    return {float(v): float(p) for v, p in zip(d.values, d.probs)}


def assert_same_law(a, b, tol=1e-12):
    keys = set(a) | set(b)
    for k in keys:
        assert a.get(k, 0.0) == pytest.approx(b.get(k, 0.0), abs=tol), k


def test_graph_validation_and_counts():
    with pytest.raises(ValueError):
        Graph(3, [(0, 0)])
    with pytest.raises(ValueError):
        Graph(3, [(0, 3)])
    G = Graph(4, [(0, 1), (1, 0), (1, 2)])
    assert G.m == 2 and list(G.degrees) == [1, 2, 1, 0]
    for g in GRAPHS.values():
        assert g.degrees.sum() == 2 * g.m
        np.testing.assert_array_equal(g.triangle_counts(), triangles_by_enumeration(g))


def test_edge_list_roundtrip(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("# a triangle\n0 1\n1 2\n\n2 0\n")
    G = Graph.from_edge_list(str(path))
    assert G.n == 3 and G.m == 3 and G.triangle_count() == 1


def test_oracle_queries():
    K3 = GraphOracle(Graph.complete(3))
    assert all(K3.degree_query(v) == 2 for v in range(3))
    assert K3.pair_query(0, 1) is True
    P3 = GraphOracle(Graph.path(3))
    assert P3.neighbor_query(1, 3) is None
    assert P3.neighbor_query(1, 2) == 2
    assert P3.ledger.to_dict() == {"degree_queries": 0, "neighbor_queries": 2, "pair_queries": 0, "total": 2}
    with pytest.raises(ValueError):
        P3.degree_query(3)


def test_dv_plus_examples_and_bound():
    assert dv_plus(Graph.complete(3), 0) == 2
    star = Graph.star(5)
    assert dv_plus(star, 0) == 0
    assert all(dv_plus(star, v) == 1 for v in range(1, 6))
    for g in GRAPHS.values():
        for v in range(g.n):
            assert dv_plus(g, v) <= math.sqrt(2 * g.m)


@pytest.mark.parametrize(
    "G, expected",
    [
        (Graph.complete(3), {0.0: 0.5, 6.0: 0.5}),
        (Graph(2, [(0, 1)]), {0.0: 0.5, 2.0: 0.5}),
        (Graph.star(4), {0.0: 0.2, 5.0: 0.8}),
    ],
)
def test_edge_law_examples(G, expected):
    d = edge_estimator_distribution(G)
    assert_same_law(law_dict(d), expected)
    assert d.mean() == pytest.approx(G.m, abs=1e-12)


def test_edge_law_matches_enumeration_and_moments():
    for g in GRAPHS.values():
        d = edge_estimator_distribution(g)
        assert_same_law(law_dict(d), enumerate_edge_estimator(g))
        assert d.mean() == pytest.approx(g.m, rel=1e-12)
        assert d.second_moment() <= 2 * math.sqrt(2) * g.n * g.m ** 1.5 * (1 + 1e-12)


def test_edge_law_isolated_vertices():
    G = Graph(5, [(0, 1), (1, 2)])
    assert edge_estimator_distribution(G).mean() == pytest.approx(2.0)
    with pytest.raises(ValueError):
        edge_estimator_distribution(Graph(3))


def test_run_edge_estimator_agrees_with_law():
    G = GRAPHS["gnp16"]
    oracle = GraphOracle(G)
    rng = np.random.default_rng(3)
    N = 20000
    outs = np.array([run_edge_estimator(oracle, rng) for _ in range(N)])
    sd = math.sqrt(edge_estimator_distribution(G).variance())
    assert abs(outs.mean() - G.m) <= 5 * sd / math.sqrt(N)
    assert oracle.ledger.degree_queries <= 2 * N
    assert oracle.ledger.neighbor_queries <= N


def test_tv_law_matches_bruteforce():
    for name, g in SMALL.items():
        for v in range(g.n):
            if g.degrees[v] == 0:
                continue
            assert_same_law(law_dict(tv_estimator_distribution(g, v)), law_dict(tv_bruteforce_distribution(g, v)))


def test_tv_law_examples():
    assert tv_estimator_distribution(Graph.complete(3), 0).mean() == pytest.approx(0.5, abs=1e-12)
    for v in range(4):
        assert tv_estimator_distribution(Graph.complete(4), v).mean() == pytest.approx(1.0, abs=1e-12)
    d = tv_estimator_distribution(Graph.path(5), 2)
    assert law_dict(d) == {0.0: 1.0}


def test_tv_moments_on_corpus():
    for g in GRAPHS.values():
        tv = g.triangle_counts()
        for v in range(g.n):
            dv = g.degrees[v]
            if dv == 0:
                continue
            law = tv_estimator_law(g, v)
            assert law.exact
            assert law.mean() == pytest.approx(tv[v] / dv, abs=1e-12)
            assert law.variance() <= 2 * math.sqrt(2 * g.m) * tv[v] / dv * (1 + 1e-12) + 1e-12
            assert law.t_ell2() <= 2 ** 3


def test_tv_monte_carlo_fallback():
    g = GRAPHS["wheel7"]
    exact = tv_estimator_law(g, 0)
    mc = tv_estimator_law(g, 0, cap=0, rng=np.random.default_rng(0), draws=200000)
    assert not mc.exact and mc.standard_error > 0
    assert abs(mc.mean() - exact.mean()) <= 5 * mc.standard_error


def test_run_tv_estimator_agrees_with_law():
    g = GRAPHS["wheel7"]
    rng = np.random.default_rng(4)
    oracle = GraphOracle(g)
    for v in (0, 3):
        law = tv_estimator_law(g, v)
        N = 20000
        outs = np.array([run_tv_estimator(oracle, v, rng)[0] for _ in range(N)])
        assert abs(outs.mean() - law.mean()) <= 5 * math.sqrt(law.variance() / N) + 1e-12


def test_estimate_tv_examples():
    K4 = Graph.complete(4)
    ok = sum(2.1 <= estimate_tv(K4, 0, 1.0, 0.3, 0.1, split(10, i)).estimate <= 3.9 for i in range(40))
    assert ok >= 36
    P = Graph.path(5)
    assert estimate_tv(P, 2, 1.0, 0.3, 0.1, split(11, 0)).estimate == 0
    g = GRAPHS["planted40"]
    v = int(np.argmax(g.triangle_counts()))
    tv = g.triangle_counts()[v]
    above = sum(estimate_tv(g, v, 4.0 * tv, 0.3, 0.1, split(12, i)).estimate <= 2 * tv for i in range(20))
    assert above >= 18
    with pytest.raises(ValueError):
        estimate_tv(K4, 0, 1.0, 0.6, 0.1, split(13, 0))


def test_estimate_edges_small():
    K3 = Graph.complete(3)
    ok = 0
    for i in range(30):
        rep = estimate_edges(K3, 0.2, 1 / 3, split(14, i))
        ok += 2.4 <= rep.estimate <= 3.6
        q = rep.details["queries"]
        assert q["degree_queries"] == EDGE_QUERY_COST[0] * rep.ledger.quantum_samples
        assert q["neighbor_queries"] == EDGE_QUERY_COST[1] * rep.ledger.quantum_samples
    assert ok >= 20
    empty = estimate_edges(Graph(5), 0.2, 1 / 3, split(14, 99))
    assert empty.estimate == 0 and empty.details["empty_graph"]


def test_bucket_index_half_open():
    c = 0.25
    assert bucket_index(1.0, c) == 1
    assert bucket_index(1.25, c) == 2
    assert bucket_index(1.2499, c) == 1
    with pytest.raises(ValueError):
        bucket_index(0, c)
    sizes = bucket_sizes(np.array([0, 1, 1, 2, 3]), c, 10)
    assert sizes.sum() == 4 and sizes[1] == 2


@pytest.mark.parametrize("c", [0.05, 0.1, 0.2, 0.25])
def test_discard_double_inequality(c):
    for g in GRAPHS.values():
        t = g.triangle_count()
        if t == 0:
            continue
        k = bucket_count(g.n, c)
        sizes = bucket_sizes(g.triangle_counts(), c, k)
        s = discard_sum(sizes, kept_buckets(sizes, t, c), c)
        assert (1 - 2 * c) / 3 * t <= s <= (1 + c) * t


def test_triangle_free_gives_zero():
    K33 = Graph(6, [(i, 3 + j) for i in range(3) for j in range(3)])
    rep = estimate_triangles(K33, 0.5, split(15, 0))
    assert rep.estimate == 0 and rep.details["no_triangles"]
