import math

import numpy as np
import pytest

from qcheb.ae import MARKOV_FACTOR, SamplerHandle
from qcheb.chebyshev import (
    ChebParams,
    PowerLawBound,
    classical_baseline,
    classical_groups,
    estimate_mean_auto_L,
    estimate_mean_basic,
    estimate_mean_fast,
    estimate_mean_implicit,
    halving_search,
    s_approx,
    sapprox_schedule,
)
from qcheb.dist import FiniteDistribution
from qcheb.families import power_law, two_point
from qcheb.rng import split

SKEW = FiniteDistribution([0.0, 100.0], [0.99, 0.01])  # mu = 1, phi / mu = 10


def freq(fn, n, seed=0):
    return sum(bool(fn(split(seed, i))) for i in range(n)) / n


def test_params_validation():
    with pytest.raises(ValueError):
        ChebParams(0.5, 1, 2, 0.1, 0.1)
    with pytest.raises(ValueError):
        ChebParams(2, 2, 1, 0.1, 0.1)
    with pytest.raises(ValueError):
        ChebParams(2, 1, 2, 0.5, 0.1)
    with pytest.raises(ValueError):
        ChebParams(2, 1, 2, 0.1, 0.5)


def test_halving_search_stops_at_first_hit():
    M, trace, ok = halving_search(lambda M: 1.0 if M <= 10 else 0.0, H=16, L=1)
    assert ok and M == 8 and [m for m, _ in trace] == [64, 32, 16, 8]
    M, trace, ok = halving_search(lambda M: 0.0, H=16, L=1)
    assert not ok and M < 2


def test_basic_point_mass():
    P = ChebParams(1, 0.5, 2, 0.1, 0.1)
    S = FiniteDistribution.point_mass(1.0)
    f = freq(lambda r: abs(estimate_mean_basic(SamplerHandle(S), P, r).estimate - 1) <= 0.1, 1000)
    assert f >= 0.9


def test_basic_skewed_family():
    P = ChebParams(10, 1 / 16, 16, 0.2, 0.1)
    f = freq(lambda r: abs(estimate_mean_basic(SamplerHandle(SKEW), P, r).estimate - 1) <= 0.2, 300)
    assert f >= 0.9


@pytest.mark.parametrize("estimator", [estimate_mean_basic, estimate_mean_fast])
def test_lower_bound_far_above_mean_gives_zero(estimator):
    P = ChebParams(10, 2000.0, 4000.0, 0.2, 0.1)
    f = freq(lambda r: estimator(SamplerHandle(SKEW), P, r).estimate == 0, 300)
    assert f >= 0.9


def test_dyadic_window_schedule():
    k, t0 = sapprox_schedule(400)
    assert k == math.ceil(math.log2(400)) - 1
    assert t0 == math.ceil(3 * math.pi ** 2 * 400 * math.sqrt(math.log2(400)))


def test_dyadic_window_point_mass_and_empty_windows():
    S = SamplerHandle(FiniteDistribution.point_mass(3.0))
    assert s_approx(S, 3.0, 4096, 0.1, np.random.default_rng(0)) == pytest.approx(3.0, rel=1e-3)
    k, _ = sapprox_schedule(64)
    far = FiniteDistribution.point_mass(2.0 ** (k + 1))
    est = s_approx(SamplerHandle(far), 1.0, 64, 0.1, np.random.default_rng(0))
    assert est == 0
    assert abs(est - far.mean()) <= far.second_moment() / 2 ** k


def test_dyadic_window_error_bound():
    bound = (math.sqrt(10) + 10 / math.sqrt(10)) ** 2 / 400
    assert bound == pytest.approx(0.1)
    f = freq(lambda r: abs(s_approx(SamplerHandle(SKEW), 10.0, 400, 0.1, r) - 1) <= bound, 300)
    assert f >= 0.9


def _cost(estimator, eps, seed=0, Delta=8):
    d = two_point(Delta)
    S = SamplerHandle(d)
    estimator(S, ChebParams(Delta, 1 / 16, 16, eps, 0.1), split(seed, 0))
    return S.ledger.quantum_samples


def test_fast_cost_grows_slower_in_eps_than_basic():
    fast = [_cost(estimate_mean_fast, e) for e in (0.2, 0.1, 0.05)]
    basic = [_cost(estimate_mean_basic, e) for e in (0.2, 0.1, 0.05)]
    fs = np.polyfit(np.log([5, 10, 20]), np.log(fast), 1)[0]
    bs = np.polyfit(np.log([5, 10, 20]), np.log(basic), 1)[0]
    assert 0.9 <= fs <= 1.3
    assert 1.35 <= bs <= 1.65
    assert fs < bs


@pytest.mark.parametrize("family", [two_point, power_law])
def test_fast_accuracy(family):
    d = family(8.0)
    P = ChebParams(8, 1 / 16, 16, 0.1, 0.1)
    f = freq(lambda r: abs(estimate_mean_fast(SamplerHandle(d), P, r).estimate - 1) <= 0.1, 300)
    assert f >= 0.9


def test_fast_degenerate_delta():
    P = ChebParams(1, 0.1, 10, 0.05, 0.1)
    S = FiniteDistribution.point_mass(1.0)
    assert freq(lambda r: abs(estimate_mean_fast(SamplerHandle(S), P, r).estimate - 1) <= 0.05, 200) >= 0.9


def test_auto_L_trace_length():
    # The first hit needs L below the top of the stopping window, so the trace
    # covers log2(H / mu) halvings minus at most log2(2500).
    d = two_point(4.0)
    H = 2.0 ** 20
    lengths = []
    for i in range(100):
        rep = estimate_mean_auto_L(SamplerHandle(d), 4.0, H, 0.1, 0.1, split(1, i))
        lengths.append(len(rep.search_trace))
        assert abs(rep.estimate - 1) <= 0.1
    assert math.log2(H / 2500) <= np.mean(lengths) <= math.log2(H) + 1


def test_auto_L_matches_fast_on_point_mass():
    S = FiniteDistribution.point_mass(1.0)
    a = estimate_mean_auto_L(SamplerHandle(S), 1.0, 64.0, 0.1, 0.1, split(2, 0)).estimate
    b = estimate_mean_fast(SamplerHandle(S), ChebParams(1, 1 / 64, 64, 0.1, 0.1), split(2, 1)).estimate
    assert a == pytest.approx(1.0, abs=0.1) and b == pytest.approx(1.0, abs=0.1)


def test_auto_L_mean_near_H():
    d = two_point(2.0, mu=900.0)
    for i in range(50):
        rep = estimate_mean_auto_L(SamplerHandle(d), 2.0, 1000.0, 0.1, 0.1, split(3, i))
        assert len(rep.search_trace) <= 3
        assert abs(rep.estimate - 900) <= 90


def test_implicit_constant_bound_behaves_like_fast():
    d = two_point(8.0)
    f = freq(lambda r: abs(estimate_mean_implicit(SamplerHandle(d), PowerLawBound(8.0, 0.0), 1 / 16, 16, 0.1, 0.1,
                                                  r).estimate - 1) <= 0.1, 200)
    assert f >= 0.9


def test_implicit_never_far_above_mean():
    d = power_law(4.0)
    for i, (L, H) in enumerate([(1e-3, 1e3), (0.9, 1.1), (1e-6, 2.0), (0.5, 1e6)]):
        for j in range(50):
            rep = estimate_mean_implicit(SamplerHandle(d), PowerLawBound(4.0, 0.5), L, H, 0.2, 0.1, split(i, j))
            assert rep.estimate <= MARKOV_FACTOR * d.mean()


def test_implicit_precondition():
    rep = estimate_mean_implicit(SamplerHandle(SKEW), PowerLawBound(10, 0.5), 0.1, 10, 0.1, 0.49, split(0, 0))
    assert rep.estimate >= 0
    with pytest.raises(ValueError):
        estimate_mean_implicit(SamplerHandle(SKEW), PowerLawBound(10, 1.0), 0.1, 10, 0.1, 0.3, split(0, 0))


def test_classical_baseline_examples():
    res = classical_baseline(FiniteDistribution.point_mass(2.0), 1.0, 0.1, 0.1, np.random.default_rng(0))
    assert res.estimate == 2.0
    assert res.groups == classical_groups(0.1) and res.groups % 2 == 1
    assert res.group_size == math.ceil(4 / 0.01)
    d = FiniteDistribution([0.0, 100.0], [0.99, 0.01])
    f = freq(lambda r: abs(classical_baseline(d, 10, 0.2, 0.1, r).estimate - 1) <= 0.2, 300)
    assert f >= 0.9


def test_classical_cost_ratio_grows_like_delta_over_eps():
    ratios = []
    for Delta in (4, 8, 16):
        q = _cost(estimate_mean_fast, 0.1, Delta=Delta)
        c = classical_baseline(two_point(Delta), Delta, 0.1, 0.1, np.random.default_rng(0)).samples
        ratios.append(c / q)
    slope = np.polyfit(np.log([4, 8, 16]), np.log(ratios), 1)[0]
    assert 0.7 <= slope <= 1.15
