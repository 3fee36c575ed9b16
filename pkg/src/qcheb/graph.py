"""Graph query model, edge and triangle estimators, and counting pipelines."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy.stats import binom

from qcheb.ae import SamplerHandle
from qcheb.chebyshev import (
    ChebParams,
    EstimateReport,
    PowerLawBound,
    _fast,
    implicit_search,
)
from qcheb.dist import FiniteDistribution
from qcheb.ledger import QueryLedger, SampleLedger
from qcheb.vartime import VariableTimeSampler, var_eps_approx_implicit

ENUMERATION_CAP = 10 ** 6
MONTE_CARLO_DRAWS = 10 ** 7
TV_BOUND_CONSTANT = 8.0


class Graph:
    """Simple undirected graph on vertices ``0..n-1`` with sorted adjacency lists."""

    def __init__(self, n: int, edges: Iterable[tuple[int, int]] = ()):
        if n < 0:
            raise ValueError("vertex count must be non-negative")
        self.n = int(n)
        nbrs = [set() for _ in range(self.n)]
        for u, v in edges:
            u, v = int(u), int(v)
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) has an endpoint outside 0..{n - 1}")
            if u == v:
                raise ValueError(f"self-loop at {u}")
            nbrs[u].add(v)
            nbrs[v].add(u)
        self.adj = [np.array(sorted(s), dtype=np.int64) for s in nbrs]
        self._adj_sets = [frozenset(s) for s in nbrs]
        self.degrees = np.array([a.size for a in self.adj], dtype=np.int64)
        total = int(self.degrees.sum())
        self.m = total // 2

    # constructors -------------------------------------------------------

    @classmethod
    def from_edge_list(cls, path: str, n: Optional[int] = None) -> "Graph":
        edges = []
        with open(path) as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                u, v = line.split()[:2]
                edges.append((int(u), int(v)))
        if n is None:
            n = 1 + max((max(e) for e in edges), default=-1)
        return cls(n, edges)

    @classmethod
    def complete(cls, k: int) -> "Graph":
        return cls(k, itertools.combinations(range(k), 2))

    @classmethod
    def star(cls, leaves: int) -> "Graph":
        return cls(leaves + 1, [(0, i) for i in range(1, leaves + 1)])

    @classmethod
    def path(cls, n: int) -> "Graph":
        return cls(n, [(i, i + 1) for i in range(n - 1)])

    @classmethod
    def gnp(cls, n: int, p: float, rng: np.random.Generator) -> "Graph":
        iu, ju = np.triu_indices(n, k=1)
        keep = rng.random(iu.size) < p
        return cls(n, zip(iu[keep].tolist(), ju[keep].tolist()))

    @classmethod
    def planted_clique(cls, n: int, p: float, k: int, rng: np.random.Generator) -> "Graph":
        base = cls.gnp(n, p, rng)
        members = rng.choice(n, size=k, replace=False)
        edges = set(base.edges())
        for u, v in itertools.combinations(sorted(members.tolist()), 2):
            edges.add((u, v))
        return cls(n, edges)

    def edges(self):
        for u in range(self.n):
            for v in self.adj[u]:
                if u < v:
                    yield (u, int(v))

    # structure ------------------------------------------------------------

    def precedes(self, u: int, v: int) -> bool:
        """Degree-then-index order: ``u < v`` iff ``(d_u, u) < (d_v, v)``."""
        return (self.degrees[u], u) < (self.degrees[v], v)

    def has_edge(self, u: int, v: int) -> bool:
        return v in self._adj_sets[u]

    def triangles_at(self, v: int) -> int:
        nb = self.adj[v]
        return sum(len(self._adj_sets[w] & self._adj_sets[v]) for w in nb) // 2

    def triangle_counts(self) -> np.ndarray:
        return np.array([self.triangles_at(v) for v in range(self.n)], dtype=np.int64)

    def triangle_count(self) -> int:
        return int(self.triangle_counts().sum()) // 3


def dv_plus(G: Graph, v: int) -> int:
    """Number of neighbours of ``v`` that come after it in the degree order."""
    return sum(1 for w in G.adj[v] if G.precedes(v, int(w)))


@dataclass
class GraphOracle:
    """Query access to a graph with per-type query counting."""

    graph: Graph
    ledger: QueryLedger = field(default_factory=QueryLedger)

    def _check(self, v: int) -> None:
        if not (0 <= v < self.graph.n):
            raise ValueError(f"vertex {v} outside 0..{self.graph.n - 1}")

    def degree_query(self, v: int) -> int:
        self._check(v)
        self.ledger.charge(degree=1)
        return int(self.graph.degrees[v])

    def neighbor_query(self, v: int, i: int) -> Optional[int]:
        """``i``-th neighbour of ``v`` (1-based), or ``None`` when ``i > d_v``."""
        self._check(v)
        self.ledger.charge(neighbor=1)
        if not (1 <= i <= self.graph.degrees[v]):
            return None
        return int(self.graph.adj[v][i - 1])

    def pair_query(self, u: int, v: int) -> bool:
        self._check(u)
        self._check(v)
        self.ledger.charge(pair=1)
        return self.graph.has_edge(u, v)


# Edge estimator -------------------------------------------------------------------

EDGE_QUERY_COST = (2, 1, 0)


def edge_estimator_distribution(G: Graph) -> FiniteDistribution:
    """Exact law of: pick ``v`` uniformly, ``w`` a uniform neighbour, output ``n d_v`` if ``v`` precedes ``w``."""
    if G.m < 1:
        raise ValueError("the edge estimator needs at least one edge")
    n = G.n
    weights: dict[float, float] = {}
    zero = 0.0
    for v in range(n):
        d = int(G.degrees[v])
        if d == 0:
            zero += 1.0 / n
            continue
        up = dv_plus(G, v)
        hit = up / (n * d)
        if up:
            weights[float(n * d)] = weights.get(float(n * d), 0.0) + hit
        zero += 1.0 / n - hit
    values = [0.0] + list(weights)
    probs = [max(zero, 0.0)] + list(weights.values())
    return FiniteDistribution(values, probs)


def run_edge_estimator(oracle: GraphOracle, rng: np.random.Generator) -> float:
    """One classical run of the edge estimator through the query oracle."""
    G = oracle.graph
    v = int(rng.integers(G.n))
    dv = oracle.degree_query(v)
    if dv == 0:
        return 0.0
    w = oracle.neighbor_query(v, int(rng.integers(dv)) + 1)
    dw = oracle.degree_query(w)
    return float(G.n * dv) if (dv, v) < (dw, w) else 0.0


def edge_bound(n: int) -> PowerLawBound:
    """``f(x) = 8^(1/4) n^(1/2) / x^(1/4)`` bounds ``phi / mu`` of the edge estimator at ``mu = x``."""
    return PowerLawBound(8.0 ** 0.25 * math.sqrt(n), 0.25)


def estimate_edges(G: Graph, eps: float, delta: float, rng: np.random.Generator) -> EstimateReport:
    """Edge count from the implicit-bound estimator with ``L = 1`` and ``H = n^2``."""
    if not (0 < eps < 1):
        raise ValueError("eps must lie in (0, 1)")
    if not (0 < delta < 2 ** -0.5):
        raise ValueError("delta must lie in (0, 2^(-1/2))")
    if G.m == 0:
        return EstimateReport(0.0, details={"empty_graph": True, "queries": QueryLedger().to_dict()})
    S = SamplerHandle(edge_estimator_distribution(G), query_cost=EDGE_QUERY_COST)
    rep = implicit_search(S, edge_bound(G.n), 1.0, float(G.n) ** 2, eps, delta, rng, inner=_fast)
    d, nb, pr = EDGE_QUERY_COST
    q = rep.ledger.quantum_samples
    rep.details["queries"] = QueryLedger(d * q, nb * q, pr * q).to_dict()
    return rep


# Triangle estimator ---------------------------------------------------------------


@dataclass
class TvLaw:
    """Exact law of the per-vertex triangle estimator with running-time stages."""

    values: np.ndarray
    probs: np.ndarray
    stages: np.ndarray
    exact: bool = True
    standard_error: float = 0.0

    def distribution(self) -> FiniteDistribution:
        return FiniteDistribution(self.values, self.probs)

    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    def variance(self) -> float:
        mu = self.mean()
        return float(np.dot((self.values - mu) ** 2, self.probs))

    def t_ell2(self) -> float:
        return float(math.sqrt(np.dot(self.probs, (2.0 ** self.stages) ** 2)))


def _edge_tv_data(G: Graph, v: int, w: int) -> tuple[int, int]:
    """``(d_u, t_{e,v})`` for the edge ``e = (v, w)``."""
    u = v if G.precedes(v, w) else w
    common = G._adj_sets[v] & G._adj_sets[w]
    t_ev = sum(1 for x in common if G.precedes(w, x))
    return int(G.degrees[u]), t_ev


def _stage_of(r: int) -> int:
    return max(1, math.ceil(math.log2(1 + r)))


def tv_estimator_law(G: Graph, v: int, cap: int = ENUMERATION_CAP, rng: Optional[np.random.Generator] = None,
                     draws: int = MONTE_CARLO_DRAWS) -> TvLaw:
    """Exact output law of the estimator of ``t_v / d_v``.

    For each neighbour ``w`` (probability ``1/d_v``) with ``u`` the earlier
    endpoint, ``s = sqrt(2m)`` and success chance ``q = t_{e,v} / d_u``:
    if ``d_u <= s`` the output is ``s`` with probability ``(d_u / s) q`` and 0
    otherwise; if ``d_u > s`` it is ``(d_u / r) Binomial(r, q)`` with
    ``r = ceil(d_u / s)``. Each outcome carries the stage ``ceil(log2(1 + r))``
    of its running time.
    """
    dv = int(G.degrees[v])
    if dv < 1:
        raise ValueError("vertex must have at least one neighbour")
    s = math.sqrt(2.0 * G.m)
    plan = []
    atoms = 0
    for w in G.adj[v]:
        du, t_ev = _edge_tv_data(G, v, int(w))
        r = 1 if du <= s else math.ceil(du / s)
        plan.append((du, t_ev, r))
        atoms += r + 2
    if atoms > cap:
        return _tv_monte_carlo(G, v, plan, s, rng if rng is not None else np.random.default_rng(0), draws)
    vals, probs, stages = [], [], []
    pw = 1.0 / dv
    for du, t_ev, r in plan:
        q = t_ev / du
        if du <= s:
            go = du / s
            vals += [s, 0.0, 0.0]
            probs += [pw * go * q, pw * go * (1 - q), pw * (1 - go)]
            stages += [_stage_of(1), _stage_of(1), _stage_of(0)]
        else:
            ks = np.arange(r + 1)
            vals += list(ks * du / r)
            probs += list(pw * binom.pmf(ks, r, q))
            stages += [_stage_of(r)] * (r + 1)
    return _merge_law(np.array(vals), np.array(probs), np.array(stages, dtype=np.int64))


def _merge_law(vals, probs, stages) -> TvLaw:
    keep = probs > 0
    vals, probs, stages = vals[keep], probs[keep], stages[keep]
    key = np.rec.fromarrays([vals, stages])
    uniq, inv = np.unique(key, return_inverse=True)
    p = np.bincount(inv.ravel(), weights=probs, minlength=uniq.size)
    return TvLaw(np.asarray(uniq["f0"], dtype=np.float64), p / p.sum(), np.asarray(uniq["f1"], dtype=np.int64))


def _tv_monte_carlo(G, v, plan, s, rng, draws) -> TvLaw:
    dv = len(plan)
    idx = rng.integers(dv, size=draws)
    du = np.array([p[0] for p in plan], dtype=np.float64)[idx]
    q = np.array([p[1] / p[0] for p in plan])[idx]
    r = np.array([p[2] for p in plan], dtype=np.int64)[idx]
    small = du <= s
    go = rng.random(draws) < np.where(small, du / s, 1.0)
    hits = rng.binomial(r, q)
    out = np.where(small, np.where(go, hits * s, 0.0), hits * du / np.maximum(r, 1))
    used_r = np.where(small & ~go, 0, r)
    st = np.maximum(1, np.ceil(np.log2(1 + used_r))).astype(np.int64)
    vals, probs, stages = out, np.full(draws, 1.0 / draws), st
    law = _merge_law(vals, probs, stages)
    law.exact = False
    law.standard_error = float(out.std() / math.sqrt(draws))
    return law


def tv_estimator_distribution(G: Graph, v: int) -> FiniteDistribution:
    return tv_estimator_law(G, v).distribution()


def tv_bruteforce_distribution(G: Graph, v: int) -> FiniteDistribution:
    """Enumerate every neighbour choice of the estimator literally (small graphs only)."""
    dv = int(G.degrees[v])
    s = math.sqrt(2.0 * G.m)
    acc: dict[float, float] = {}
    for w in G.adj[v]:
        w = int(w)
        u = v if G.precedes(v, w) else w
        du = int(G.degrees[u])
        pw = 1.0 / dv
        if du <= s:
            r, p_go, value = 1, du / s, s
            acc[0.0] = acc.get(0.0, 0.0) + pw * (1 - p_go)
        else:
            r, p_go, value = math.ceil(du / s), 1.0, du
        weight = pw * p_go / du ** r
        for xs in itertools.product(G.adj[u].tolist(), repeat=r):
            hits = sum(1 for x in xs if G.has_edge(x, v) and G.has_edge(x, w) and G.precedes(w, x))
            out = value * hits / r
            acc[out] = acc.get(out, 0.0) + weight
    return FiniteDistribution(list(acc), list(acc.values()))


def run_tv_estimator(oracle: GraphOracle, v: int, rng: np.random.Generator) -> tuple[float, int]:
    """One classical run through the query oracle; returns ``(output, steps)``."""
    G = oracle.graph
    m = G.m
    s = math.sqrt(2.0 * m)
    dv = oracle.degree_query(v)
    w = oracle.neighbor_query(v, int(rng.integers(dv)) + 1)
    dw = oracle.degree_query(w)
    u, other = (v, w) if (dv, v) < (dw, w) else (w, v)
    du = dv if u == v else dw
    if du <= s:
        if rng.random() >= du / s:
            return 0.0, 0
        r, value = 1, s
    else:
        r, value = math.ceil(du / s), float(du)
    total = 0.0
    for _ in range(r):
        x = oracle.neighbor_query(u, int(rng.integers(du)) + 1)
        if oracle.pair_query(other, x):
            dx = oracle.degree_query(x)
            if (dw, w) < (dx, x):
                total += value
    return total / r, r


def tv_bound(G: Graph, c: float = TV_BOUND_CONSTANT):
    """Bound on ``phi / mu`` as a function of the mean ``x = t_v / d_v``: ``1 + (c m)^(1/4) / sqrt(x)``."""
    A = (c * G.m) ** 0.25

    def f(x: float) -> float:
        return 1.0 + A / math.sqrt(x)

    return f


def estimate_tv(
    G: Graph,
    v: int,
    L: float,
    eps: float,
    delta: float,
    rng: np.random.Generator,
    c: float = TV_BOUND_CONSTANT,
    law: Optional[TvLaw] = None,
) -> EstimateReport:
    """Estimate ``t_v`` with the variable-time implicit-bound estimator.

    Runs on the mean scale ``t_v / d_v`` with ``L' = L / d_v`` and ``H = n^2``
    and rescales by ``d_v``. ``details['time_used']`` is the simulated running
    time, which doubles as the query count.
    """
    if not (0 < eps < 0.5):
        raise ValueError("eps must lie in (0, 1/2)")
    if not (0 < delta < 0.5):
        raise ValueError("delta must lie in (0, 1/2)")
    dv = int(G.degrees[v])
    if dv == 0:
        return EstimateReport(0.0, stopped_at_L=True, details={"isolated": True, "time_used": 0.0})
    law = law if law is not None else tv_estimator_law(G, v)
    VS = VariableTimeSampler(law.values, law.probs, law.stages, T_l2=max(1.0, law.t_ell2()))
    H = float(G.n) ** 2
    Lp = L / dv
    if not (Lp < H):
        raise ValueError("L is too large for this graph")
    rep = var_eps_approx_implicit(VS, tv_bound(G, c), Lp, H, eps, delta, rng)
    return EstimateReport(
        dv * rep.estimate, rep.search_trace, rep.ledger, rep.stopped_at_L,
        details={**rep.details, "time_used": VS.time_used},
    )


# Triangle counting ----------------------------------------------------------------


def bucket_index(tv: float, c: float) -> int:
    """Index ``i`` with ``(1+c)^(i-1) <= tv < (1+c)^i``."""
    if tv <= 0:
        raise ValueError("only positive counts fall in a bucket")
    i = math.floor(math.log(tv) / math.log1p(c)) + 1
    while (1 + c) ** (i - 1) > tv:
        i -= 1
    while (1 + c) ** i <= tv:
        i += 1
    return i


def bucket_sizes(tv: np.ndarray, c: float, k: int) -> np.ndarray:
    sizes = np.zeros(k + 1, dtype=np.int64)
    for x in tv:
        if x > 0:
            sizes[min(bucket_index(float(x), c), k)] += 1
    return sizes


def discard_thresholds(t_bar: float, c: float, k: int) -> tuple[float, np.ndarray]:
    thr1 = (c * t_bar) ** (1.0 / 3.0) / (k + 1)
    i = np.arange(k + 1)
    thr2 = c * t_bar / ((k + 1) * (1 + c) ** i)
    return thr1, thr2


def kept_buckets(sizes: np.ndarray, t_bar: float, c: float) -> np.ndarray:
    """Indices whose size reaches both discard thresholds."""
    k = sizes.size - 1
    thr1, thr2 = discard_thresholds(t_bar, c, k)
    return np.flatnonzero((sizes >= thr1) & (sizes >= thr2))


def discard_sum(sizes: np.ndarray, keep: np.ndarray, c: float) -> float:
    """``(1/3) sum_{i in keep} |B_i| (1+c)^i``."""
    return float(np.sum(sizes[keep] * (1 + c) ** keep.astype(np.float64))) / 3.0


def bucket_count(n: int, c: float) -> int:
    return math.ceil(math.log(max(n, 2) ** 2) / math.log1p(c))


def _feasible_buckets(tv: int, c: float, k: int) -> list[int]:
    """Buckets a membership test can plausibly place a vertex with ``tv`` triangles in.

    The estimate is at most ``2 tv`` unconditionally and within ``c/2`` of
    ``tv`` when the bucket's lower end is below ``tv``; other buckets are
    reached only on failure events of probability ``delta``.
    """
    out = []
    for i in range(k + 1):
        lo, hi = (1 + c) ** (i - 1), (1 + c) ** i
        if lo > 2 * tv * (1 + c) or hi < (1 - c) * tv:
            continue
        out.append(i)
    return out


def estimate_triangles(
    G: Graph,
    eps: float,
    rng: np.random.Generator,
    c_tv: float = TV_BOUND_CONSTANT,
    bucket_delta: Optional[float] = None,
) -> EstimateReport:
    """Constant-factor triangle count from estimated bucket sizes.

    Buckets have width ``c = eps/4``. Vertex ``v`` is placed in bucket ``i``
    when ``estimate_tv(v, L=(1+c)^(i-1), c/2, eps/n^3)`` lands in
    ``[(1+c)^(i-1), (1+c)^i)``; memberships are drawn once per run. For each
    threshold ``t_bar`` (halving from ``n^3``) bucket sizes are estimated with
    the fast mean estimator on the membership indicator, buckets below the
    discard thresholds are dropped, and ``(1/5) sum b_i (1+c)^i`` is accepted
    once it lies in ``[t_bar/20, 20 t_bar]``.
    """
    if not (0 < eps < 1):
        raise ValueError("eps must lie in (0, 1)")
    n = G.n
    c = eps / 4.0
    k = bucket_count(n, c)
    if n < 3 or G.m < 3:
        return EstimateReport(0.0, stopped_at_L=True, details={"no_triangles": True, "queries": 0.0})
    tv_true = G.triangle_counts()
    d_member = min(0.49, eps / n ** 3)
    d_bucket = bucket_delta if bucket_delta is not None else min(0.49, 1.0 / (3 * (k + 1)))

    # Membership realisation and its simulated running times.
    assigned = np.zeros((k + 1, n), dtype=bool)
    member_time = np.zeros((k + 1, n))
    samples = SampleLedger()
    for v in range(n):
        if tv_true[v] == 0:
            continue
        law = tv_estimator_law(G, v)
        for i in _feasible_buckets(int(tv_true[v]), c, k):
            lo, hi = (1 + c) ** (i - 1), (1 + c) ** i
            rep = estimate_tv(G, v, lo, c / 2, d_member, rng, c=c_tv, law=law)
            samples.merge(rep.ledger)
            member_time[i, v] = rep.details["time_used"]
            assigned[i, v] = lo <= rep.estimate < hi

    queries = 0.0
    trace = []
    t_bar = float(n) ** 3
    while t_bar >= 1:
        thr1, thr2 = discard_thresholds(t_bar, c, k)
        b_est = np.zeros(k + 1)
        for i in range(k + 1):
            frac = assigned[i].mean()
            S = SamplerHandle(FiniteDistribution([0.0, 1.0], [1 - frac, frac]) if 0 < frac < 1
                              else FiniteDistribution.point_mass(float(frac)))
            Delta = max(1.0, math.sqrt(n / max(thr1, thr2[i])))
            rep = _fast(S, Delta, 1.0 / n, 2.0, eps / 8, d_bucket, rng)
            b_est[i] = n * rep.estimate
            t_l2 = math.sqrt(float(np.mean(member_time[i] ** 2))) if member_time[i].any() else 1.0
            queries += rep.ledger.quantum_samples * max(1.0, t_l2)
        keep = np.flatnonzero((b_est >= thr1) & (b_est >= thr2))
        t_est = float(np.sum(b_est[keep] * (1 + c) ** keep.astype(np.float64))) / 5.0
        trace.append((t_bar, t_est))
        if t_bar / 20 <= t_est <= 20 * t_bar:
            return EstimateReport(
                t_est, trace, samples, details={"t_bar": t_bar, "queries": queries, "c": c, "k": k,
                                                "kept": keep.tolist()}
            )
        t_bar /= 2
    return EstimateReport(0.0, trace, samples, stopped_at_L=True,
                          details={"no_triangles": True, "queries": queries, "c": c, "k": k})
