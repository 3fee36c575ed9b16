"""Exact simulation of amplitude estimation and its wrappers.

Amplitude estimation with ``t`` grid points on amplitude ``p = sin^2(theta)``
returns grid index ``y`` with probability ``F_t(theta - pi*y/t)``, where
``F_t(x) = sin^2(t x) / (t^2 sin^2 x)``, and reports ``p_tilde = sin^2(pi*y/t)``.
This module samples that law exactly, cross-checks it against an explicit
two-dimensional statevector simulation, and builds the median wrapper
(``basic_est``), the parameter-free relative-error estimator (``ampl_est_s``)
and the amplitude-amplification angle map on top of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from qcheb.dist import FiniteDistribution, TruncationWindow
from qcheb.ledger import SampleLedger

# Half-width of the exactly tabulated window of grid offsets around the
# kernel peak; outcomes beyond it are drawn by rejection sampling.
HEAD_HALF_WIDTH = 2000
STATEVECTOR_MAX_T = 64
# Largest grid size tried by ampl_est_s before declaring the amplitude zero.
EXHAUSTION_T = 1 << 32
_SERIES_CUTOFF = 1e-6
ROUNDOFF_MASS = 1e-24
MARKOV_FACTOR = (1.0 + 2.0 * math.pi) ** 2


class BudgetExhausted(RuntimeError):
    """Raised when a simulated time budget runs out."""


@dataclass
class TimeBudget:
    """Simulated running-time budget shared by a sequence of AE runs."""

    limit: float
    used: float = 0.0

    def charge(self, amount: float) -> None:
        self.used += amount
        if self.used > self.limit:
            raise BudgetExhausted(f"simulated time {self.used:.4g} exceeds budget {self.limit:.4g}")


@dataclass(frozen=True)
class AEOutcome:
    y: int
    t: int

    @property
    def p_tilde(self) -> float:
        return 0.0 if self.y == 0 else math.sin(math.pi * self.y / self.t) ** 2


@dataclass
class SamplerHandle:
    """A quantum sampler: its output law plus cost accounting.

    ``query_cost`` is the number of (degree, neighbor, pair) graph queries made
    by one quantum sample and ``passes_per_sample`` the stream passes it needs;
    both ledgers are derived from ``ledger.quantum_samples`` so they compose
    exactly.
    """

    distribution: FiniteDistribution
    ledger: SampleLedger = field(default_factory=SampleLedger)
    query_cost: tuple = (0, 0, 0)
    passes_per_sample: int = 0

    def bernoulli_parameter(self, a: float, b: float) -> float:
        return self.distribution.bernoulli_parameter(a, b)

    def query_totals(self) -> dict:
        q = self.ledger.quantum_samples
        d, nb, pr = self.query_cost
        return {"degree_queries": d * q, "neighbor_queries": nb * q, "pair_queries": pr * q}

    def passes(self) -> int:
        return self.passes_per_sample * self.ledger.quantum_samples


def _check_t(t: int) -> int:
    if int(t) != t or t <= 2:
        raise ValueError(f"amplitude estimation needs an integer t > 2, got {t}")
    return int(t)


def _check_p(p: float) -> float:
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"amplitude must lie in [0, 1], got {p}")
    return float(p)


def kernel(t: int, x) -> np.ndarray:
    """``F_t(x) = sin^2(t x) / (t^2 sin^2 x)`` with ``F_t(0) = 1``."""
    x = np.asarray(x, dtype=np.float64)
    # F_t has period pi; reduce to (-pi/2, pi/2] so the small-angle branch
    # catches every grid hit. The series needs t|x| small, not just |x|.
    xr = x - np.pi * np.round(x / np.pi)
    out = np.empty_like(xr)
    small = t * np.abs(xr) < _SERIES_CUTOFF
    xs = xr[small]
    out[small] = 1.0 - (t * t - 1.0) * xs * xs / 3.0
    xl = xr[~small]
    out[~small] = np.sin(t * xl) ** 2 / (t * t * np.sin(xl) ** 2)
    return out


def theta_of(p: float) -> float:
    return math.asin(math.sqrt(p))


def outcome_probabilities(p: float, t: int) -> np.ndarray:
    """Probabilities of grid indices ``y = 0..t-1``."""
    p, t = _check_p(p), _check_t(t)
    theta = theta_of(p)
    y = np.arange(t, dtype=np.float64)
    return kernel(t, theta - np.pi * y / t)


def _fold(probs: np.ndarray, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Merge indices y and t-y, which report the same p_tilde."""
    half = t // 2
    yp = np.arange(half + 1)
    folded = probs[yp].copy()
    mirror = (yp > 0) & (2 * yp != t)
    folded[mirror] += probs[t - yp[mirror]]
    values = np.sin(np.pi * yp / t) ** 2
    values[0] = 0.0
    if t % 2 == 0:
        values[half] = 1.0
    return values, folded


def ae_outcome_distribution(p: float, t: int) -> FiniteDistribution:
    """Exact law of ``p_tilde`` from the closed-form kernel."""
    probs = outcome_probabilities(p, t)
    values, folded = _fold(probs, int(t))
    return _law(values, folded)


def _law(values: np.ndarray, folded: np.ndarray) -> FiniteDistribution:
    # Exact zeros of the kernel come out as ~1e-33 in floating point.
    folded = np.where(folded < ROUNDOFF_MASS, 0.0, folded)
    return FiniteDistribution(values, folded / folded.sum())


def ae_statevector_oracle(p: float, t: int) -> FiniteDistribution:
    """Law of ``p_tilde`` from an explicit phase-estimation simulation.

    The Grover iterate acts on span{bad, good} as a rotation by ``2 theta``.
    The phase register holds the uniform superposition over ``j < t``; the
    controlled iterate applies ``G^j``; an inverse Fourier transform on the
    register is followed by a Born-rule measurement.
    """
    p = _check_p(p)
    t = _check_t(t)
    if t > STATEVECTOR_MAX_T:
        raise ValueError(f"statevector oracle is limited to t <= {STATEVECTOR_MAX_T}")
    theta = theta_of(p)
    c, s = math.cos(2 * theta), math.sin(2 * theta)
    grover = np.array([[c, -s], [s, c]])
    state = np.empty((t, 2), dtype=np.complex128)
    vec = np.array([math.cos(theta), math.sin(theta)], dtype=np.complex128)
    for j in range(t):
        state[j] = vec
        vec = grover @ vec
    state /= math.sqrt(t)
    # Inverse QFT on the register: amplitude of |y> is t^{-1/2} sum_j e^{-2 pi i jy/t} a_j.
    amps = np.fft.fft(state, axis=0) / math.sqrt(t)
    probs = np.sum(np.abs(amps) ** 2, axis=1)
    values, folded = _fold(probs, t)
    return _law(values, folded)


# Sampling ---------------------------------------------------------------------


@lru_cache(maxsize=4096)
def _full_cdf(p: float, t: int) -> np.ndarray:
    cdf = np.cumsum(outcome_probabilities(p, t))
    cdf /= cdf[-1]
    return cdf


@lru_cache(maxsize=4096)
def _head_table(t: int, frac: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Offsets ``k`` in the head window, their cumulative masses, and the head total."""
    ks = np.arange(-HEAD_HALF_WIDTH, HEAD_HALF_WIDTH + 1, dtype=np.float64)
    probs = kernel(t, np.pi * (frac - ks) / t)
    cdf = np.cumsum(probs)
    return ks.astype(np.int64), cdf, float(cdf[-1])


def _tail_offset(t: int, frac: float, rng: np.random.Generator) -> int:
    """Exact draw of an offset ``|k| > HEAD_HALF_WIDTH`` from the kernel tail.

    Offsets range over ``(frac - t/2, frac + t/2]`` so that the kernel
    argument ``z = pi (frac - k) / t`` stays in ``[-pi/2, pi/2]`` where
    ``|sin z| >= 2|z|/pi``. Hence the target mass is at most
    ``sin^2(pi frac) / (4 (n - 1)^2)`` at distance index ``n = |k|``, which is
    dominated by ``sin^2(pi frac) / (2 n (n - 1))``. Proposals are drawn from
    ``1 / (n (n - 1))`` on ``n > K`` with a random sign, then accepted with the
    ratio of target to envelope.
    """
    K = HEAD_HALF_WIDTH
    s2 = math.sin(math.pi * frac) ** 2
    lo, hi = frac - t / 2.0, frac + t / 2.0
    while True:
        u = 1.0 - rng.random()
        n = int(math.floor(K / u)) + 1
        k = n if rng.random() < 0.5 else -n
        if not (lo < k <= hi):
            continue
        z = math.pi * (frac - k) / t
        target = s2 / (t * t * math.sin(z) ** 2)
        envelope = s2 / (2.0 * n * (n - 1))
        if rng.random() * envelope < target:
            return k


def sample_indices(p: float, t: int, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` independent grid indices ``y`` from the exact AE law."""
    p, t = _check_p(p), _check_t(t)
    if p == 0.0:
        return np.zeros(size, dtype=np.int64)
    if t <= 2 * HEAD_HALF_WIDTH + 1:
        cdf = _full_cdf(p, t)
        y = np.searchsorted(cdf, rng.random(size), side="right")
        return np.minimum(y, t - 1).astype(np.int64)
    pos = theta_of(p) * t / math.pi
    j = math.floor(pos)
    frac = pos - j
    if frac == 0.0:
        return np.full(size, j % t, dtype=np.int64)
    ks, cdf, head_total = _head_table(t, frac)
    u = rng.random(size)
    out = np.empty(size, dtype=np.int64)
    in_head = u < head_total
    idx = np.searchsorted(cdf, u[in_head], side="right")
    out[in_head] = ks[np.minimum(idx, ks.size - 1)]
    for i in np.flatnonzero(~in_head):
        out[i] = _tail_offset(t, frac, rng)
    return (j + out) % t


def _p_tilde_scalar(y: int, t: int) -> float:
    if y == 0:
        return 0.0
    if 2 * y == t:
        return 1.0
    return math.sin(math.pi * y / t) ** 2


def p_tilde_of(y, t: int) -> np.ndarray:
    y = np.asarray(y)
    out = np.sin(np.pi * y / t) ** 2
    out = np.where(y == 0, 0.0, out)
    return np.where(2 * y == t, 1.0, out)


def ae_sample(p: float, t: int, rng: np.random.Generator, ledger: Optional[SampleLedger] = None) -> AEOutcome:
    """One amplitude-estimation run."""
    y = int(sample_indices(p, t, rng, 1)[0])
    if ledger is not None:
        ledger.charge_ae(t)
    return AEOutcome(y=y, t=int(t))


# Median wrapper ---------------------------------------------------------------


def repetitions(delta: float) -> int:
    """Odd repetition count ``2 ceil(6 ln(1/delta)) + 1`` for the median."""
    if not (0.0 < delta < 1.0):
        raise ValueError(f"failure probability must lie in (0, 1), got {delta}")
    return 2 * math.ceil(6.0 * math.log(1.0 / delta)) + 1


def basic_est_amplitude(
    p: float,
    t: int,
    delta: float,
    rng: np.random.Generator,
    ledger: Optional[SampleLedger] = None,
    budget: Optional[TimeBudget] = None,
    time_per_sample: float = 1.0,
) -> float:
    """Median of ``r`` amplitude-estimation runs on amplitude ``p``."""
    t = _check_t(t)
    r = repetitions(delta)
    if budget is not None:
        budget.charge(r * (2 * t + 1) * time_per_sample)
    y = sample_indices(_check_p(p), t, rng, r)
    folded = np.minimum(y, t - y)
    med = int(np.sort(folded)[r // 2])
    if ledger is not None:
        ledger.charge_ae(t, runs=r)
    return _p_tilde_scalar(med, t)


def basic_est(
    S: SamplerHandle,
    window: TruncationWindow,
    t: int,
    delta: float,
    rng: np.random.Generator,
) -> float:
    """Median amplitude estimate of the ``(a, b)``-Bernoulli sampler of ``S``."""
    if not isinstance(window, TruncationWindow):
        window = TruncationWindow(*window)
    p = S.bernoulli_parameter(window.a, window.b)
    return basic_est_amplitude(p, t, delta, rng, S.ledger)


# Relative-error estimator ---------------------------------------------------------


@dataclass(frozen=True)
class AmplEstResult:
    estimate: float
    indistinguishable_from_zero: bool = False
    final_t: int = 0


def final_grid_size(p_first: float, eps: float) -> int:
    """Even grid size guaranteeing relative error ``eps`` given a first non-zero estimate."""
    t = max(4, math.ceil(8.0 * (1.0 + 2.0 * math.pi) / (eps * math.sqrt(p_first))))
    # An even grid contains p = 1 exactly; rounding up keeps the guarantee.
    return t + (t % 2)


def ampl_est_s_amplitude(
    p: float,
    eps: float,
    delta: float,
    rng: np.random.Generator,
    ledger: Optional[SampleLedger] = None,
    budget: Optional[TimeBudget] = None,
    time_per_sample: float = 1.0,
    max_t: int = EXHAUSTION_T,
) -> AmplEstResult:
    """Relative-error amplitude estimate without a time parameter.

    Stage ``k = 1, 2, ...`` runs the median wrapper at ``t = 2^(k+1)`` with
    failure budget ``delta / (2k(k+1))`` until it sees a non-zero estimate
    ``p0``; a final run at ``t = ceil(8(1+2pi)/(eps sqrt(p0)))`` with failure
    ``delta/2`` gives the answer. If ``t`` would pass ``max_t`` the amplitude
    is reported as zero.
    """
    if not (0.0 < eps < 1.0):
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    p = _check_p(p)
    k = 1
    while True:
        t = 1 << (k + 1)
        if t > max_t:
            return AmplEstResult(0.0, indistinguishable_from_zero=True)
        p0 = basic_est_amplitude(p, t, delta / (2 * k * (k + 1)), rng, ledger, budget, time_per_sample)
        if p0 > 0:
            break
        k += 1
    t_final = final_grid_size(p0, eps)
    est = basic_est_amplitude(p, t_final, delta / 2, rng, ledger, budget, time_per_sample)
    return AmplEstResult(est, final_t=t_final)


def ampl_est_s(
    S: SamplerHandle,
    window: TruncationWindow,
    eps: float,
    delta: float,
    rng: np.random.Generator,
    max_t: int = EXHAUSTION_T,
) -> AmplEstResult:
    if not isinstance(window, TruncationWindow):
        window = TruncationWindow(*window)
    p = S.bernoulli_parameter(window.a, window.b)
    return ampl_est_s_amplitude(p, eps, delta, rng, S.ledger, max_t=max_t)


def amplify_angle(b: float, k: int) -> float:
    """Success probability after ``k`` rounds of amplitude amplification."""
    if k < 0 or int(k) != k:
        raise ValueError("k must be a non-negative integer")
    b = _check_p(b)
    if k == 0:
        return b
    return math.sin((2 * k + 1) * math.asin(math.sqrt(b))) ** 2
