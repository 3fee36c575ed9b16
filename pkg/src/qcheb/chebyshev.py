"""Relative-error mean estimation from a bound on the relative second moment.

Every estimator here first locates the scale of the mean by a halving search:
for decreasing ``M`` it estimates the amplitude of the ``(0, M Delta^2)``
Bernoulli sampler at a grid size ``~ Delta`` that can only resolve a non-zero
value once ``M`` is within a constant factor of the mean. Once found, the scale
fixes the truncation window of a final, more precise estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from qcheb.ae import MARKOV_FACTOR, SamplerHandle, basic_est
from qcheb.dist import FiniteDistribution, TruncationWindow
from qcheb.ledger import SampleLedger

SEARCH_GRID_FACTOR = 25           # grid size of the halving-search probes, times Delta
BASIC_FINAL_FACTOR = 35 ** 2      # final grid of the basic estimator, times eps^{-3/2} Delta
FAST_FINAL_FACTOR = 51 ** 2       # dyadic-window grid of the fast estimator, times eps^{-1} Delta
RERUN_L_DIVISOR = 1250            # lower-bound shrink after the first non-zero answer
STOPPING_WINDOW = (2.0, 2500.0)   # first non-zero probe happens for M / mu in this range
IMPLICIT_COARSE_EPS = 5.0 / 6.0
IMPLICIT_STOP_RATIO = 6.0
AUTO_L_MAX_ITERATIONS = 64
MAX_GRID = float(1 << 53)


@dataclass(frozen=True)
class ChebParams:
    """Parameters shared by the explicit-bound estimators."""

    delta_bound: float
    L: float
    H: float
    eps: float
    delta: float

    def __post_init__(self):
        if not (self.delta_bound >= 1):
            raise ValueError(f"Delta must be >= 1, got {self.delta_bound}")
        if not (0 < self.L < self.H):
            raise ValueError(f"need 0 < L < H, got L={self.L}, H={self.H}")
        _check_eps_delta(self.eps, self.delta)


def _check_eps_delta(eps: float, delta: float) -> None:
    if not (0 < eps < 0.5):
        raise ValueError(f"eps must lie in (0, 1/2), got {eps}")
    if not (0 < delta < 0.5):
        raise ValueError(f"delta must lie in (0, 1/2), got {delta}")


@dataclass(frozen=True)
class PowerLawBound:
    """Non-increasing bound ``f(x) = A / x^alpha`` on ``phi / mu``."""

    A: float
    alpha: float

    def __post_init__(self):
        if not (self.A > 0):
            raise ValueError("A must be positive")
        if not (self.alpha >= 0):
            raise ValueError("alpha must be non-negative")

    def __call__(self, x: float) -> float:
        return self.A / x ** self.alpha


@dataclass
class EstimateReport:
    estimate: float
    search_trace: list = field(default_factory=list)
    ledger: SampleLedger = field(default_factory=SampleLedger)
    stopped_at_L: bool = False
    details: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return not self.stopped_at_L and self.estimate > 0


def _grid(x: float) -> int:
    if not math.isfinite(x) or x > MAX_GRID:
        raise OverflowError(f"grid size {x:.3g} is beyond what can be simulated")
    return max(3, math.ceil(x))


def _snapshot(ledger: SampleLedger) -> SampleLedger:
    return SampleLedger(ledger.quantum_samples, ledger.reflections, ledger.ae_invocations)


def _since(ledger: SampleLedger, before: SampleLedger) -> SampleLedger:
    return SampleLedger(
        ledger.quantum_samples - before.quantum_samples,
        ledger.reflections - before.reflections,
        ledger.ae_invocations - before.ae_invocations,
    )


def search_failure_budget(delta: float, H: float, L: float) -> float:
    return delta / (2.0 * (3.0 + math.log2(H / L)))


def halving_search(
    probe: Callable[[float], float], H: float, L: float
) -> tuple[float, list, bool]:
    """Halve ``M`` from ``8H`` until ``probe(M)`` is non-zero or ``M < 2L``.

    Returns the final ``M``, the ``(M, p_tilde)`` trace, and whether the
    search ended above the lower bound.
    """
    M = 8.0 * H
    p = 0.0
    trace = []
    while p == 0 and M >= 2 * L:
        M /= 2
        p = probe(M)
        trace.append((M, p))
    return M, trace, M >= 2 * L


def _search(S: SamplerHandle, Delta: float, L: float, H: float, delta: float, rng):
    d_search = search_failure_budget(delta, H, L)
    t_search = _grid(SEARCH_GRID_FACTOR * Delta)
    D2 = Delta * Delta
    return halving_search(
        lambda M: basic_est(S, TruncationWindow(0.0, M * D2), t_search, d_search, rng), H, L
    )


def estimate_mean_basic(S: SamplerHandle, params: ChebParams, rng: np.random.Generator) -> EstimateReport:
    """Halving search, then one fine amplitude estimate on ``(0, M Delta^2 / eps)``.

    Uses ``O(Delta eps^{-3/2})`` quantum samples up to logarithmic factors.
    """
    Delta, L, H, eps, delta = params.delta_bound, params.L, params.H, params.eps, params.delta
    before = _snapshot(S.ledger)
    t_final = _grid(BASIC_FINAL_FACTOR * eps ** -1.5 * Delta)
    M, trace, ok = _search(S, Delta, L, H, delta, rng)
    if not ok:
        return EstimateReport(0.0, trace, _since(S.ledger, before), stopped_at_L=True, details={"M": M})
    width = M * Delta * Delta / eps
    q = basic_est(S, TruncationWindow(0.0, width), t_final, delta / 2, rng)
    return EstimateReport(width * q, trace, _since(S.ledger, before), details={"M": M, "t_final": t_final})


def sapprox_schedule(t: int) -> tuple[int, int]:
    """Number of dyadic windows ``k`` and per-window grid size ``t0``."""
    lg = math.log2(t)
    return math.ceil(lg) - 1, _grid(3 * math.pi ** 2 * t * math.sqrt(lg))


def s_approx(
    S: SamplerHandle, sigma: float, t: int, delta: float, rng: np.random.Generator
) -> float:
    """Sum of dyadic-window amplitude estimates.

    Window ``[0, sigma)`` has weight ``sigma``; window
    ``[2^(l-1) sigma, 2^l sigma)`` has weight ``2^l sigma`` for ``l = 1..k``.
    The error is at most ``(sqrt(sigma) + phi / sqrt(sigma))^2 / t``.
    """
    if int(t) != t or t <= 2:
        raise ValueError(f"t must be an integer > 2, got {t}")
    if not (sigma > 0):
        raise ValueError("sigma must be positive")
    k, t0 = sapprox_schedule(int(t))
    d = delta / (k + 1)
    total = sigma * basic_est(S, TruncationWindow(0.0, sigma), t0, d, rng)
    for ell in range(1, k + 1):
        w = TruncationWindow(2.0 ** (ell - 1) * sigma, 2.0 ** ell * sigma)
        total += w.b * basic_est(S, w, t0, d, rng)
    return total


def _fast(S, Delta, L, H, eps, delta, rng) -> EstimateReport:
    before = _snapshot(S.ledger)
    t_final = _grid(FAST_FINAL_FACTOR * Delta / eps)
    M, trace, ok = _search(S, Delta, L, H, delta, rng)
    if not ok:
        return EstimateReport(0.0, trace, _since(S.ledger, before), stopped_at_L=True, details={"M": M})
    est = s_approx(S, M * Delta, t_final, delta / 2, rng)
    return EstimateReport(est, trace, _since(S.ledger, before), details={"M": M, "t_final": t_final})


def estimate_mean_fast(S: SamplerHandle, params: ChebParams, rng: np.random.Generator) -> EstimateReport:
    """Halving search, then ``s_approx`` with ``sigma = M Delta`` and ``t ~ Delta / eps``."""
    return _fast(S, params.delta_bound, params.L, params.H, params.eps, params.delta, rng)


def estimate_mean_auto_L(
    S: SamplerHandle,
    Delta: float,
    H: float,
    eps: float,
    delta: float,
    rng: np.random.Generator,
    max_iterations: int = AUTO_L_MAX_ITERATIONS,
) -> EstimateReport:
    """Fast estimator without a lower bound on the mean.

    Tries ``L = H / 2^i`` for ``i = 1, 2, ...`` with failure ``delta / 2^i``;
    the first non-zero answer triggers a rerun at ``L / 1250``.
    """
    if not (Delta >= 1):
        raise ValueError(f"Delta must be >= 1, got {Delta}")
    if not (H > 0):
        raise ValueError("H must be positive")
    _check_eps_delta(eps, delta)
    before = _snapshot(S.ledger)
    trace = []
    for i in range(1, max_iterations + 1):
        L = H / 2.0 ** i
        probe = _fast(S, Delta, L, H, eps, delta / 2.0 ** i, rng)
        trace.append((L, probe.estimate))
        if probe.estimate != 0:
            final = _fast(S, Delta, L / RERUN_L_DIVISOR, H, eps, delta / 2.0 ** (i + 1), rng)
            return EstimateReport(
                final.estimate,
                trace,
                _since(S.ledger, before),
                stopped_at_L=final.stopped_at_L,
                details={"iterations": i, "L": L / RERUN_L_DIVISOR, "M": final.details.get("M")},
            )
    return EstimateReport(
        0.0, trace, _since(S.ledger, before), stopped_at_L=True,
        details={"iterations": max_iterations, "iteration_limit": True},
    )


InnerEstimator = Callable[..., EstimateReport]


def implicit_search(
    S,
    f: Callable[[float], float],
    L: float,
    H: float,
    eps: float,
    delta: float,
    rng: np.random.Generator,
    inner: InnerEstimator,
    markov_factor: float = MARKOV_FACTOR,
) -> EstimateReport:
    """Mean estimation when only a non-increasing bound ``f(mu) >= phi / mu`` is known.

    ``inner(S, Delta, L, H, eps, delta, rng)`` is an explicit-bound estimator
    whose output never exceeds ``markov_factor * mu`` with high probability.
    Coarse runs at accuracy 5/6 with ``Delta = f(M)`` for halving ``M`` stop as
    soon as the estimate reaches ``M / 6``; the final run uses
    ``Delta = f(M / (6 markov_factor))``. Bounds below 1 are raised to 1.
    """
    ledger = S.ledger
    before = _snapshot(ledger)
    d_coarse = delta / (2.0 * (2.0 + math.log2(H / L)))
    M = 2.0 * H
    mu = 0.0
    trace = []
    while mu < M / IMPLICIT_STOP_RATIO and M >= L / 2:
        M /= 2
        Delta = max(1.0, f(M))
        mu = inner(S, Delta, L, H, IMPLICIT_COARSE_EPS, d_coarse, rng).estimate
        trace.append((M, mu))
    if M < L / 2:
        return EstimateReport(0.0, trace, _since(ledger, before), stopped_at_L=True, details={"M": M})
    Delta = max(1.0, f(M / (IMPLICIT_STOP_RATIO * markov_factor)))
    final = inner(S, Delta, L, H, eps, delta / 2, rng)
    return EstimateReport(
        final.estimate,
        trace,
        _since(ledger, before),
        stopped_at_L=final.stopped_at_L,
        details={"M": M, "Delta_final": Delta},
    )


def estimate_mean_implicit(
    S: SamplerHandle,
    f: PowerLawBound,
    L: float,
    H: float,
    eps: float,
    delta: float,
    rng: np.random.Generator,
) -> EstimateReport:
    """Fast estimator driven by a power-law bound ``f(x) = A / x^alpha``."""
    if not (0 < L < H):
        raise ValueError(f"need 0 < L < H, got L={L}, H={H}")
    _check_eps_delta(eps, delta)
    if isinstance(f, PowerLawBound) and not (delta < 2.0 ** (-2.0 * f.alpha)):
        raise ValueError(
            f"delta={delta} must be below 2^(-2 alpha) = {2.0 ** (-2.0 * f.alpha):.4g} for alpha={f.alpha}"
        )
    return implicit_search(S, f, L, H, eps, delta, rng, inner=_fast)


# Classical comparator --------------------------------------------------------------


@dataclass(frozen=True)
class ClassicalResult:
    estimate: float
    samples: int
    groups: int
    group_size: int


def classical_groups(delta: float) -> int:
    g = max(1, math.ceil(8.0 * math.log(1.0 / delta)))
    return g if g % 2 == 1 else g + 1


def classical_baseline(
    d: FiniteDistribution, Delta: float, eps: float, delta: float, rng: np.random.Generator
) -> ClassicalResult:
    """Median of means of plain samples.

    Each group averages ``ceil(4 Delta^2 / eps^2)`` draws, so by Chebyshev it
    misses by more than ``eps mu`` with probability at most 1/4; the median of
    ``~8 ln(1/delta)`` groups then fails with probability at most ``delta``.
    """
    if not (Delta >= 1):
        raise ValueError("Delta must be >= 1")
    if not (0 < eps < 1) or not (0 < delta < 1):
        raise ValueError("eps and delta must lie in (0, 1)")
    n = math.ceil(4.0 * Delta * Delta / (eps * eps))
    g = classical_groups(delta)
    cdf = np.cumsum(d.probs)
    cdf /= cdf[-1]
    means = np.empty(g)
    for j in range(g):
        idx = np.searchsorted(cdf, rng.random(n), side="right")
        means[j] = d.values[np.minimum(idx, len(d) - 1)].mean()
    return ClassicalResult(float(np.median(means)), n * g, g, n)
