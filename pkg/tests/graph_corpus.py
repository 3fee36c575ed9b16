"""Fixed collection of small graphs shared by the graph tests."""

import itertools

import numpy as np

from qcheb.graph import Graph


def cycle(n):
    return Graph(n, [(i, (i + 1) % n) for i in range(n)])


def wheel(rim):
    return Graph(rim + 1, [(0, i) for i in range(1, rim + 1)] + [(i, i % rim + 1) for i in range(1, rim + 1)])


def complete_bipartite(a, b):
    return Graph(a + b, [(i, a + j) for i in range(a) for j in range(b)])


def corpus():
    graphs = {
        "K3": Graph.complete(3),
        "K4": Graph.complete(4),
        "K6": Graph.complete(6),
        "edge": Graph(2, [(0, 1)]),
        "star4": Graph.star(4),
        "star9": Graph.star(9),
        "path3": Graph.path(3),
        "path8": Graph.path(8),
        "cycle5": cycle(5),
        "wheel7": wheel(7),
        "K23": complete_bipartite(2, 3),
        "bowtie": Graph(5, [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (2, 4)]),
    }
    for seed, (n, p) in enumerate([(8, 0.5), (12, 0.4), (16, 0.3), (24, 0.3), (32, 0.2),
                                   (48, 0.15), (64, 0.1), (128, 0.05)]):
        graphs[f"gnp{n}"] = Graph.gnp(n, p, np.random.default_rng(100 + seed))
    graphs["planted40"] = Graph.planted_clique(40, 0.1, 6, np.random.default_rng(7))
    return graphs


def enumerate_edge_estimator(G):
    """Literal enumeration of the (v, w) choices of the edge estimator."""
    acc = {}
    for v in range(G.n):
        nb = sorted(G._adj_sets[v])
        if not nb:
            acc[0.0] = acc.get(0.0, 0.0) + 1.0 / G.n
            continue
        for w in nb:
            out = float(G.n * len(nb)) if (len(nb), v) < (len(G._adj_sets[w]), w) else 0.0
            acc[out] = acc.get(out, 0.0) + 1.0 / (G.n * len(nb))
    return acc


def triangles_by_enumeration(G):
    tv = np.zeros(G.n, dtype=np.int64)
    for a, b, c in itertools.combinations(range(G.n), 3):
        if G.has_edge(a, b) and G.has_edge(b, c) and G.has_edge(a, c):
            tv[[a, b, c]] += 1
    return tv
