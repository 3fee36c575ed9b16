import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import grover_stage_amplitudes, random_masses
from qcheb.families import power_law, two_point
from qcheb.rng import split
from qcheb.vartime import (
    StageFailure,
    VariableTimeProfile,
    VariableTimeSampler,
    amplification_count,
    approx_pacc,
    collision_product,
    stage_amplitudes,
    t_ell2,
    var_eps_approx,
    var_eps_approx_implicit,
    vartime_estimate,
)

TIME_BOUND_CONSTANT = 1.0  # fitted over random profiles; observed maximum ratio is about 0.72


def accurate_estimates(profile, rng):
    m = profile.m
    ests = []
    for _ in range(m):
        b = stage_amplitudes(profile, ests + [0.5]).b[-1]
        ests.append(b * (1 + rng.uniform(-1, 1) / (3 * m)))
    return ests


def test_profile_validation():
    with pytest.raises(ValueError):
        VariableTimeProfile([0, 0.5], [0, 0.4])
    with pytest.raises(ValueError):
        VariableTimeProfile([0.1, 0.5], [0, 0.5])
    with pytest.raises(ValueError):
        VariableTimeProfile([0, 0.6, 0.5], [0, 0.2, 0.5])


def test_t_ell2_examples():
    assert t_ell2(VariableTimeProfile.from_stage_masses([0.3], [0.7])) == 2
    half = VariableTimeProfile.from_stage_masses([0.5, 0, 0], [0, 0, 0.5])
    assert t_ell2(half) == pytest.approx(math.sqrt(34))
    uni = VariableTimeProfile.from_stage_masses([0.25] * 4, [0] * 4)
    assert t_ell2(uni) == pytest.approx(math.sqrt((4 + 16 + 64 + 256) / 4))


def test_amplification_count_rule():
    m = 3
    floor = 1 / (9 * m)
    assert amplification_count(floor * 1.01, m) == 0
    assert amplification_count(floor * 0.99, m) == 1
    assert 9 * floor * 0.99 <= 1 / m
    assert amplification_count(floor / 25 * 1.001, m) == 2
    with pytest.raises(StageFailure):
        amplification_count(0.0, m)


@given(st.floats(1e-9, 1.0), st.integers(1, 12))
def test_amplification_count_lands_in_band(b, m):
    k = amplification_count(b, m)
    if k > 0:
        assert 1 / (9 * m) <= (2 * k + 1) ** 2 * b <= 1 / m * (1 + 1e-9)
        assert (2 * k - 1) ** 2 * b < 1 / (9 * m)


def test_single_stage_profile():
    prof = VariableTimeProfile.from_stage_masses([0.4], [0.6])
    amps = stage_amplitudes(prof, [0.4])
    assert amps.b[0] == pytest.approx(1 - prof.p_rej_le[1])
    assert amps.a[0] == amps.b[0]


def test_no_rejection_collapses_recurrence():
    prof = VariableTimeProfile.from_stage_masses([0.01, 0.02, 0.97], [0, 0, 0])
    amps = stage_amplitudes(prof, [0.5, 0.5, 0.5])
    prev = 1.0
    for b, a in zip(amps.b, amps.a):
        assert b == pytest.approx(prev, abs=1e-15)
        prev = a


def test_recurrence_and_collision_against_grover_vectors():
    rng = np.random.default_rng(0)
    for _ in range(100):
        m = int(rng.integers(1, 7))
        acc, rej = random_masses(rng, m)
        prof = VariableTimeProfile.from_stage_masses(acc, rej)
        ests = accurate_estimates(prof, rng)
        amps = stage_amplitudes(prof, ests)
        b, a, b1 = grover_stage_amplitudes(acc, rej, ests)
        np.testing.assert_allclose(amps.b, b, atol=1e-12)
        np.testing.assert_allclose(amps.a, a, atol=1e-12)
        np.testing.assert_allclose(amps.b1, b1, atol=1e-12)
        for i in range(1, m + 1):
            got = collision_product(amps.b, amps.a, amps.b1[i - 1], i)
            assert got == pytest.approx(prof.p_acc_le[i], abs=1e-12)


def test_stage_time_bound_and_floor():
    rng = np.random.default_rng(1)
    for _ in range(200):
        m = int(rng.integers(1, 8))
        prof = VariableTimeProfile.from_stage_masses(*random_masses(rng, m))
        T = t_ell2(prof)
        amps = stage_amplitudes(prof, accurate_estimates(prof, rng))
        for i in range(1, m + 1):
            assert amps.a[i - 1] >= (1 - 1 / (3 * m)) / (9 * m) - 1e-12
            keep = 1 - prof.p_rej_le[i]
            if keep > 0:
                bound = math.sqrt(m) * (prof.stopping_time(i) + i * T / math.sqrt(keep))
                assert amps.t_max_a[i - 1] <= TIME_BOUND_CONSTANT * bound


def test_approx_pacc_examples():
    zero = VariableTimeProfile.from_stage_masses([0, 0.5], [0.5, 0])
    assert approx_pacc(zero, 1, 0.2, 0.1, np.random.default_rng(0)).estimate == 0
    prof = VariableTimeProfile.from_stage_masses([0.04, 0.06], [0.5, 0.4])
    assert prof.p_acc_le[2] == pytest.approx(0.1)
    ok = sum(0.08 <= approx_pacc(prof, 2, 0.2, 0.1, split(1, i)).estimate <= 0.12 for i in range(300))
    assert ok / 300 >= 0.9


def test_variable_time_estimate_examples():
    zero = VariableTimeProfile.from_stage_masses([0, 0], [0.3, 0.7])
    assert all(vartime_estimate(zero, 50, 4, 0.2, 0.1, split(2, i)).estimate == 0 for i in range(20))
    prof = VariableTimeProfile.from_stage_masses([0.01, 0.01], [0.5, 0.48])
    p = prof.p_acc
    T = t_ell2(prof)
    small_t = 0.9 / math.sqrt(2 * p)
    assert sum(vartime_estimate(prof, small_t, T, 0.2, 0.1, split(3, i)).estimate == 0 for i in range(200)) >= 180
    big_t = math.ceil(4 / math.sqrt(p))
    ok = sum(abs(vartime_estimate(prof, big_t, T, 0.2, 0.1, split(4, i)).estimate - p) <= 0.2 * p
             for i in range(200))
    assert ok >= 180


def _stage_labels(d, m, seed):
    return np.random.default_rng(seed).integers(1, m + 1, size=len(d))


@pytest.mark.parametrize("family", [two_point, power_law])
def test_variable_time_mean_families(family):
    d = family(4.0)
    stages = _stage_labels(d, 3, 0)
    ok = 0
    for i in range(100):
        VS = VariableTimeSampler(d.values, d.probs, stages)
        ok += abs(var_eps_approx(VS, 4.0, 1 / 16, 16, 0.1, 0.1, split(5, i)).estimate - 1) <= 0.1
    assert ok >= 90


def test_variable_time_mean_point_mass_and_implicit():
    VS = VariableTimeSampler(np.array([2.0]), np.array([1.0]), np.array([2]))
    assert abs(var_eps_approx(VS, 1.0, 0.1, 10, 0.1, 0.1, split(6, 0)).estimate - 2) <= 0.2
    d = two_point(4.0)
    stages = _stage_labels(d, 2, 1)
    ok = 0
    for i in range(60):
        VS = VariableTimeSampler(d.values, d.probs, stages)
        rep = var_eps_approx_implicit(VS, lambda x: 4.0 / math.sqrt(x), 1 / 16, 16, 0.1, 0.1, split(7, i))
        ok += abs(rep.estimate - 1) <= 0.1
    assert ok >= 54


def test_sampler_profile_matches_truncated_mean():
    d = power_law(3.0)
    stages = _stage_labels(d, 4, 2)
    VS = VariableTimeSampler(d.values, d.probs, stages)
    prof = VS.profile(0.0, 50.0)
    assert prof.p_acc == pytest.approx(d.truncated_mean(0, 50) / 50, abs=1e-12)
    assert VS.T_l2 >= 2
