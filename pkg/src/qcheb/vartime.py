"""Amplitude estimation for variable-time algorithms, simulated on amplitudes.

A variable-time algorithm is described by its :class:`VariableTimeProfile`:
for each stage ``i`` (stopping time ``t_i = 2^i``) the probability mass that
has stopped and rejected, ``p_rej_le[i]``, or stopped and accepted,
``p_acc_le[i]``, by that stage. The state-generation algorithms ``B_i`` and
``A_i`` (the latter amplifying ``B_i`` when its good part is too small) have
amplitudes given by exact recurrences; amplitude estimation on each of them is
drawn from the exact AE kernel, and running time is charged through the
``T_max`` recurrence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from qcheb.ae import (
    BudgetExhausted,
    TimeBudget,
    ampl_est_s_amplitude,
    amplify_angle,
)
from qcheb.chebyshev import (
    EstimateReport,
    _check_eps_delta,
    _since,
    _snapshot,
    halving_search,
    implicit_search,
    search_failure_budget,
)
from qcheb.ledger import SampleLedger

# Default for the constant hidden in the running-time bound of approx_pacc;
# calibrated so that the budget of vartime_estimate never cuts a run short
# when t >= 2 / sqrt(p_acc) on the test profiles.
DEFAULT_BUDGET_CONSTANT = 4096.0
VARTIME_MARKOV_FACTOR = 2.0
SEARCH_T_FACTOR = 6.0
FINAL_T_FACTOR = 19.0
_TOL = 1e-12


class StageFailure(RuntimeError):
    """No amplification count exists for a stage (its estimate is zero)."""


@dataclass(frozen=True)
class VariableTimeProfile:
    """Cumulative stop/accept/reject masses of a variable-time algorithm.

    Arrays are indexed ``0..m`` with ``p_rej_le[0] = p_acc_le[0] = 0``; every
    branch has stopped by stage ``m``.
    """

    p_rej_le: np.ndarray
    p_acc_le: np.ndarray

    def __init__(self, p_rej_le: Sequence[float], p_acc_le: Sequence[float]):
        rej = np.asarray(p_rej_le, dtype=np.float64)
        acc = np.asarray(p_acc_le, dtype=np.float64)
        if rej.shape != acc.shape or rej.ndim != 1 or rej.size < 2:
            raise ValueError("profiles need matching arrays of length m + 1 >= 2")
        if abs(rej[0]) > _TOL or abs(acc[0]) > _TOL:
            raise ValueError("stage-0 cumulative masses must be zero")
        if np.any(np.diff(rej) < -_TOL) or np.any(np.diff(acc) < -_TOL):
            raise ValueError("cumulative masses must be non-decreasing")
        if np.any(rej < -_TOL) or np.any(acc < -_TOL) or np.any(rej + acc > 1 + 1e-9):
            raise ValueError("cumulative masses must be probabilities with sum <= 1")
        if abs(rej[-1] + acc[-1] - 1.0) > 1e-9:
            raise ValueError("all branches must have stopped at the last stage")
        rej = np.clip(rej, 0.0, 1.0)
        acc = np.clip(acc, 0.0, 1.0)
        rej[0] = acc[0] = 0.0
        rej.setflags(write=False)
        acc.setflags(write=False)
        object.__setattr__(self, "p_rej_le", rej)
        object.__setattr__(self, "p_acc_le", acc)

    @classmethod
    def _trusted(cls, p_rej_le: np.ndarray, p_acc_le: np.ndarray) -> "VariableTimeProfile":
        """Skip validation for arrays built internally from a valid sampler."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "p_rej_le", p_rej_le)
        object.__setattr__(obj, "p_acc_le", p_acc_le)
        return obj

    @classmethod
    def from_stage_masses(cls, accept: Sequence[float], reject: Sequence[float]) -> "VariableTimeProfile":
        """Build from per-stage (non-cumulative) accepted and rejected masses."""
        acc = np.concatenate(([0.0], np.cumsum(accept)))
        rej = np.concatenate(([0.0], np.cumsum(reject)))
        return cls(rej, acc)

    @property
    def m(self) -> int:
        return self.p_rej_le.size - 1

    @property
    def p_acc(self) -> float:
        return float(self.p_acc_le[-1])

    def p_stop_gt(self, i: int) -> float:
        return max(0.0, 1.0 - float(self.p_rej_le[i]) - float(self.p_acc_le[i]))

    def stop_increments(self) -> np.ndarray:
        """``p_stop,i`` for ``i = 1..m``."""
        stopped = self.p_rej_le + self.p_acc_le
        return np.clip(np.diff(stopped), 0.0, None)

    def stopping_time(self, i: int) -> int:
        return 1 << i


def t_ell2(profile: VariableTimeProfile) -> float:
    """l2-average running time ``sqrt(sum_i p_stop,i t_i^2)``."""
    inc = profile.stop_increments()
    times = np.array([profile.stopping_time(i) for i in range(1, profile.m + 1)], dtype=np.float64)
    return float(math.sqrt(np.dot(inc, times * times)))


# Stage amplitudes -----------------------------------------------------------------


def amplification_count(b_est: float, m: int) -> int:
    """Smallest ``k`` with ``(2k+1)^2 b_est >= 1/(9m)``; 0 when ``b_est > 1/(9m)``."""
    floor = 1.0 / (9.0 * m)
    if b_est > floor:
        return 0
    if b_est <= 0:
        raise StageFailure("stage amplitude estimate is zero; no amplification count exists")
    k = max(0, math.ceil((math.sqrt(floor / b_est) - 1.0) / 2.0))
    while k > 0 and (2 * (k - 1) + 1) ** 2 * b_est >= floor:
        k -= 1
    while (2 * k + 1) ** 2 * b_est < floor:
        k += 1
    if (2 * k + 1) ** 2 * b_est > 1.0 / m * (1 + 1e-12):
        raise StageFailure("no amplification count lands in [1/(9m), 1/m]")
    return k


def next_b(profile: VariableTimeProfile, i: int, a_prev: float) -> float:
    """``b_i = a_{i-1} (1 - p_rej,<=i) / (1 - p_rej,<=i-1)`` with ``a_0 = 1``."""
    keep_prev = 1.0 - profile.p_rej_le[i - 1]
    if keep_prev <= 0:
        return 0.0
    return min(1.0, a_prev * (1.0 - profile.p_rej_le[i]) / keep_prev)


def accept_part(profile: VariableTimeProfile, i: int, a_prev: float) -> float:
    """``b_{i,1} = a_{i-1} p_acc,<=i / (1 - p_rej,<=i-1)``."""
    keep_prev = 1.0 - profile.p_rej_le[i - 1]
    if keep_prev <= 0:
        return 0.0
    return min(1.0, a_prev * profile.p_acc_le[i] / keep_prev)


@dataclass
class StageAmplitudes:
    b: list = field(default_factory=list)
    a: list = field(default_factory=list)
    b1: list = field(default_factory=list)
    k: list = field(default_factory=list)
    t_max_b: list = field(default_factory=list)
    t_max_a: list = field(default_factory=list)


def stage_amplitudes(profile: VariableTimeProfile, estimates: Sequence[float]) -> StageAmplitudes:
    """True amplitudes of ``B_i``, ``A_i`` given the estimates ``b_tilde_i`` steering amplification.

    Lists are indexed from stage 1 (position 0 holds stage 1).
    """
    m = profile.m
    out = StageAmplitudes()
    a_prev, t_prev = 1.0, 0.0
    for i, b_est in enumerate(estimates, start=1):
        if i > m:
            raise ValueError("more estimates than stages")
        b = next_b(profile, i, a_prev)
        tb = t_prev + profile.stopping_time(i) - (profile.stopping_time(i - 1) if i > 1 else 0)
        k = amplification_count(b_est, m)
        a = amplify_angle(b, k)
        out.b.append(b)
        out.b1.append(accept_part(profile, i, a_prev))
        out.k.append(k)
        out.a.append(a)
        out.t_max_b.append(tb)
        out.t_max_a.append((2 * k + 1) * tb)
        a_prev, t_prev = a, (2 * k + 1) * tb
    return out


def collision_product(b: Sequence[float], a: Sequence[float], b_i1: float, i: int) -> float:
    """``prod_{j<i} (b_j / a_{j-1}) * b_{i,1} / a_{i-1}`` with ``a_0 = 1``."""
    value = 1.0
    a_prev = 1.0
    for j in range(i - 1):
        if a_prev == 0:
            return 0.0
        value *= b[j] / a_prev
        a_prev = a[j]
    if a_prev == 0:
        return 0.0
    return value * b_i1 / a_prev


# Estimation -----------------------------------------------------------------------


@dataclass
class PaccResult:
    estimate: float
    time_used: float
    failed_stage: Optional[int] = None


def approx_pacc(
    profile: VariableTimeProfile,
    i: int,
    eps: float,
    delta: float,
    rng: np.random.Generator,
    ledger: Optional[SampleLedger] = None,
    budget: Optional[TimeBudget] = None,
) -> PaccResult:
    """Estimate ``p_acc,<=i`` as a product of stage-wise ratio estimates.

    Raises :class:`BudgetExhausted` if ``budget`` runs out.
    """
    m = profile.m
    if not (1 <= i <= m):
        raise ValueError(f"stage must lie in 1..{m}, got {i}")
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ValueError("eps and delta must lie in (0, 1)")
    budget = budget if budget is not None else TimeBudget(math.inf)
    start = budget.used
    d = delta / (2 * m)
    a_prev_true, t_prev_a = 1.0, 0.0
    estimate = 1.0
    a_prev_est = 1.0
    for j in range(1, i):
        b_true = next_b(profile, j, a_prev_true)
        t_b = t_prev_a + profile.stopping_time(j) - (profile.stopping_time(j - 1) if j > 1 else 0)
        b_est = ampl_est_s_amplitude(b_true, eps / (4 * m), d, rng, ledger, budget, t_b).estimate
        try:
            k = amplification_count(b_est, m)
        except StageFailure:
            return PaccResult(0.0, budget.used - start, failed_stage=j)
        a_true = amplify_angle(b_true, k)
        t_a = (2 * k + 1) * t_b
        a_est = ampl_est_s_amplitude(a_true, eps / (8 * m), d, rng, ledger, budget, t_a).estimate
        if a_est == 0:
            return PaccResult(0.0, budget.used - start, failed_stage=j)
        estimate *= b_est / a_prev_est
        a_prev_true, a_prev_est, t_prev_a = a_true, a_est, t_a
    t_b = t_prev_a + profile.stopping_time(i) - (profile.stopping_time(i - 1) if i > 1 else 0)
    b1_true = accept_part(profile, i, a_prev_true)
    b1_est = ampl_est_s_amplitude(b1_true, eps / (4 * m), d, rng, ledger, budget, t_b).estimate
    estimate *= b1_est / a_prev_est
    return PaccResult(estimate, budget.used - start)


def stage_for(profile: VariableTimeProfile, t: float, T_l2: float, eps: float) -> int:
    return max(1, min(profile.m, math.ceil(math.log2(t * T_l2 / math.sqrt(eps)))))


def time_budget(profile: VariableTimeProfile, i: int, t: float, T_l2: float, eps: float, delta: float, D: float) -> float:
    m = profile.m
    return 2.0 * D * (m ** 3 / eps) * (profile.stopping_time(i) + i * t * T_l2) * max(1.0, math.log2(m / delta))


@dataclass
class VarTimeResult:
    estimate: float
    stage: int
    budget: float
    time_used: float
    budget_exhausted: bool = False
    raw: float = 0.0


def vartime_estimate(
    profile: VariableTimeProfile,
    t: float,
    T_l2: float,
    eps: float,
    delta: float,
    rng: np.random.Generator,
    D: float = DEFAULT_BUDGET_CONSTANT,
    ledger: Optional[SampleLedger] = None,
) -> VarTimeResult:
    """Estimate ``p_acc`` with the zero/scale behaviour of a time-``t`` AE run.

    Outputs 0 when the simulated-time budget runs out, when the estimate is 0,
    or when ``t < 1/sqrt(estimate)``.
    """
    if not (t >= 1):
        raise ValueError("t must be >= 1")
    if not (T_l2 >= 1):
        raise ValueError("T_l2 must be >= 1")
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ValueError("eps and delta must lie in (0, 1)")
    i = stage_for(profile, t, T_l2, eps)
    limit = time_budget(profile, i, t, T_l2, eps, delta, D)
    budget = TimeBudget(limit)
    try:
        res = approx_pacc(profile, i, eps / 2, delta, rng, ledger, budget)
    except BudgetExhausted:
        return VarTimeResult(0.0, i, limit, budget.used, budget_exhausted=True)
    p = res.estimate
    if p == 0 or t < 1.0 / math.sqrt(p):
        return VarTimeResult(0.0, i, limit, budget.used, raw=p)
    return VarTimeResult(p, i, limit, budget.used, raw=p)


# Variable-time samplers -----------------------------------------------------------


@dataclass
class VariableTimeSampler:
    """A sampler whose outcomes also carry the stage at which they stop.

    ``values[j]`` is produced with probability ``probs[j]`` after running for
    ``t_{stages[j]}`` steps. ``time_used`` accumulates simulated time over all
    estimates run on this sampler.
    """

    values: np.ndarray
    probs: np.ndarray
    stages: np.ndarray
    T_l2: Optional[float] = None
    D: float = DEFAULT_BUDGET_CONSTANT
    ledger: SampleLedger = field(default_factory=SampleLedger)
    time_used: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.stages = np.asarray(self.stages, dtype=np.int64)
        if not (self.values.shape == self.probs.shape == self.stages.shape):
            raise ValueError("values, probs and stages must align")
        if np.any(self.values < 0) or np.any(self.probs < 0):
            raise ValueError("values and probabilities must be non-negative")
        if abs(self.probs.sum() - 1.0) > 1e-9:
            raise ValueError("probabilities must sum to 1")
        if np.any(self.stages < 1):
            raise ValueError("stages start at 1")
        self.m = int(self.stages.max())
        tot = np.bincount(self.stages, weights=self.probs, minlength=self.m + 1)[1:]
        self._tot_le = np.concatenate(([0.0], np.cumsum(tot)))
        self._tot_le /= self._tot_le[-1]
        if self.T_l2 is None:
            self.T_l2 = max(1.0, t_ell2(self.profile(0.0, max(1.0, float(self.values.max()) * 2))))

    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    def second_moment(self) -> float:
        return float(np.dot(self.values ** 2, self.probs))

    def profile(self, a: float, b: float) -> VariableTimeProfile:
        """Profile of the ``(a, b)``-Bernoulli transform of this sampler."""
        inside = (self.values >= a) & (self.values < b)
        acc_mass = np.where(inside, self.probs * self.values / b, 0.0)
        acc = np.bincount(self.stages, weights=acc_mass, minlength=self.m + 1)[1:]
        acc_le = np.concatenate(([0.0], np.cumsum(acc)))
        acc_le = np.minimum(acc_le, self._tot_le)
        return VariableTimeProfile._trusted(self._tot_le - acc_le, acc_le)

    def probe(self, a: float, b: float, t: float, eps: float, delta: float, rng) -> float:
        res = vartime_estimate(self.profile(a, b), t, self.T_l2, eps, delta, rng, self.D, self.ledger)
        self.time_used += res.time_used
        return res.estimate


def _vartime_fast(VS: VariableTimeSampler, Delta, L, H, eps, delta, rng) -> EstimateReport:
    before = _snapshot(VS.ledger)
    time_before = VS.time_used
    D2 = Delta * Delta
    t_search = max(1.0, math.ceil(SEARCH_T_FACTOR * Delta))
    d_search = search_failure_budget(delta, H, L)
    M, trace, ok = halving_search(
        lambda M: VS.probe(0.0, M * D2, t_search, 0.5, d_search, rng), H, L
    )
    details = {"M": M}
    if ok:
        width = M * D2 / eps
        t_final = math.ceil(FINAL_T_FACTOR * Delta / math.sqrt(eps))
        est = width * VS.probe(0.0, width, t_final, eps / 2, delta / 2, rng)
        details["t_final"] = t_final
    else:
        est = 0.0
    details["time_used"] = VS.time_used - time_before
    return EstimateReport(est, trace, _since(VS.ledger, before), stopped_at_L=not ok, details=details)


def var_eps_approx(
    VS: VariableTimeSampler,
    Delta: float,
    L: float,
    H: float,
    eps: float,
    delta: float,
    rng: np.random.Generator,
) -> EstimateReport:
    """Halving search and final estimate driven by ``vartime_estimate``.

    Probes use ``t = ceil(6 Delta)``: the probe at scale ``M`` is zero once
    ``M > 72 mu`` and non-zero for ``M`` in ``[1.15 mu, 7.85 mu]``, so the first
    hit lands in ``[3.9 mu, 72 mu]``. The final window ``(0, M Delta^2 / eps)``
    then loses at most ``eps mu / 3.9`` of mass and ``t = ceil(19 Delta / sqrt(eps))``
    meets the accuracy condition ``t >= 2 / sqrt(p)``; the amplitude is
    estimated to ``eps / 2``.
    """
    if not (Delta >= 1):
        raise ValueError("Delta must be >= 1")
    if not (0 < L < H):
        raise ValueError("need 0 < L < H")
    _check_eps_delta(eps, delta)
    return _vartime_fast(VS, Delta, L, H, eps, delta, rng)


def var_eps_approx_implicit(
    VS: VariableTimeSampler, f, L: float, H: float, eps: float, delta: float, rng
) -> EstimateReport:
    """Implicit-bound search on top of :func:`var_eps_approx` (estimates never exceed ``2 mu``)."""
    if not (0 < L < H):
        raise ValueError("need 0 < L < H")
    _check_eps_delta(eps, delta)
    return implicit_search(
        VS, f, L, H, eps, delta, rng, inner=_vartime_fast, markov_factor=VARTIME_MARKOV_FACTOR
    )
