"""Turnstile streams and frequency-moment estimation via an l2 sampler."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from qcheb.ae import SamplerHandle
from qcheb.chebyshev import EstimateReport, estimate_mean_auto_L
from qcheb.dist import FiniteDistribution, convolve_average
from qcheb.ledger import PassLedger

PASSES_PER_SAMPLE = 2
SETUP_PASSES = 1
DELTA_SLOPE = 1.25


@dataclass(frozen=True)
class TurnstileStream:
    """Signed coordinate updates ``(i, lam)`` with ``i`` in ``1..n``."""

    n: int
    updates: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be positive")
        ups = tuple((int(i), float(lam)) for i, lam in self.updates)
        for i, _ in ups:
            if not (1 <= i <= self.n):
                raise ValueError(f"index {i} outside 1..{self.n}")
        object.__setattr__(self, "updates", ups)

    def replay(self) -> Iterator[tuple[int, float]]:
        return iter(self.updates)

    def final_vector(self) -> np.ndarray:
        x = np.zeros(self.n)
        for i, lam in self.updates:
            x[i - 1] += lam
        return x

    @classmethod
    def from_vector(cls, x: Sequence[float], rng: Optional[np.random.Generator] = None, pieces: int = 2):
        """Stream whose updates sum to ``x``; with ``rng`` each coordinate is split into signed pieces."""
        x = np.asarray(x, dtype=np.float64)
        ups = []
        for i, xi in enumerate(x, start=1):
            if rng is None:
                if xi != 0:
                    ups.append((i, float(xi)))
                continue
            parts = rng.integers(-3, 4, size=pieces - 1).astype(float)
            ups.extend((i, float(p)) for p in parts)
            ups.append((i, float(xi - parts.sum())))
        if rng is not None:
            order = rng.permutation(len(ups))
            ups = [ups[j] for j in order]
        return cls(x.size, tuple(ups))

    @classmethod
    def from_file(cls, path: str, n: Optional[int] = None) -> "TurnstileStream":
        ups = []
        with open(path) as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if line:
                    i, lam = line.split()[:2]
                    ups.append((int(i), float(lam)))
        if n is None:
            n = max((i for i, _ in ups), default=1)
        return cls(n, tuple(ups))


def frequency_moment(x: Sequence[float], k: float) -> float:
    """``F_k(x) = sum |x_i|^k``."""
    if k < 0:
        raise ValueError("k must be non-negative")
    a = np.abs(np.asarray(x, dtype=np.float64))
    if k == 0:
        return float(np.count_nonzero(a))
    return float(np.sum(a ** k))


def l2_sampler(x: Sequence[float], eps_pert: float = 0.0, rng: Optional[np.random.Generator] = None) -> FiniteDistribution:
    """Law over indices ``1..n`` proportional to ``x_i^2``.

    With ``eps_pert > 0`` and an ``rng`` the masses become
    ``q_i (1 + (eps_pert/2) u_i)`` with ``u_i = v_i - sum_j q_j v_j`` and
    ``v_i`` uniform on ``[-1, 1]``; the total stays 1 and every mass stays
    within a factor ``1 +- eps_pert`` of ``q_i``.
    """
    x = np.asarray(x, dtype=np.float64)
    F2 = float(np.dot(x, x))
    if F2 == 0:
        raise ValueError("the l2 distribution of the zero vector is undefined")
    q = x * x / F2
    if eps_pert > 0:
        if rng is None:
            raise ValueError("a perturbation needs an rng")
        if eps_pert >= 1:
            raise ValueError("eps_pert must be below 1")
        v = rng.uniform(-1.0, 1.0, size=x.size)
        u = v - float(np.dot(q, v))
        q = q * (1.0 + 0.5 * eps_pert * u)
    idx = np.arange(1, x.size + 1, dtype=np.float64)
    return FiniteDistribution(idx, q / q.sum())


def check_f2_estimate(F2_true: float, F2_est: float, eps: float) -> None:
    if abs(F2_est - F2_true) > (eps / 4.0) * F2_true * (1 + 1e-12):
        raise ValueError(
            f"F2 estimate {F2_est} is off by more than (eps/4) F2 = {(eps / 4.0) * F2_true} from {F2_true}"
        )


def fk_estimator_distribution(
    x: Sequence[float],
    k: float,
    F2_est: float,
    eps: float,
    rng: Optional[np.random.Generator] = None,
) -> FiniteDistribution:
    """Law of ``F2_est * |x_i|^(k-2)`` with ``i`` drawn from the l2 sampler at accuracy ``eps/4``.

    Without ``rng`` the sampler is exact. The mean lies in
    ``[(1 - eps/4)^2, (1 + eps/4)^2] F_k``.
    """
    if not (0 < eps < 1):
        raise ValueError("eps must lie in (0, 1)")
    x = np.asarray(x, dtype=np.float64)
    check_f2_estimate(float(np.dot(x, x)), F2_est, eps)
    law = l2_sampler(x, eps / 4.0 if rng is not None else 0.0, rng)
    idx = law.values.astype(np.int64) - 1
    return FiniteDistribution(F2_est * np.abs(x[idx]) ** (k - 2), law.probs)


def copies_for(n: int, k: float, P: int) -> int:
    """``Q = ceil(n^(1 - 2/k) / P^2)``."""
    return max(1, math.ceil(n ** (1.0 - 2.0 / k) / P ** 2))


def delta_for(P: int) -> int:
    return math.ceil(1.0 + DELTA_SLOPE * P)


def sketch_memory(n: int, eps: float) -> int:
    """Memory gauge of one l2-sampling sketch: ``eps^-2 log^3 n`` cells."""
    return math.ceil(eps ** -2 * max(1.0, math.log2(n)) ** 3)


def estimate_fk(
    stream: TurnstileStream,
    k: float,
    P: int,
    eps: float,
    delta: float,
    rng: np.random.Generator,
    F2_relative_error: float = 0.0,
    perturb: bool = False,
) -> EstimateReport:
    """Estimate ``F_k`` from a turnstile stream with about ``P`` rounds of passes.

    The base estimator runs at accuracy ``eps/2`` (F2 within ``eps/8``, l2
    sampler at ``eps/8``), ``Q`` copies are averaged, and the mean of the
    averaged sampler is estimated to ``eps/2`` without a lower bound, with
    ``Delta = ceil(1 + 1.25 P)`` and ``H = 2 F2^(k/2)``. Each quantum sample
    costs two passes; one more pass computes F2.
    """
    if k < 3:
        raise ValueError("k must be at least 3")
    if int(P) != P or P < 1:
        raise ValueError("P must be a positive integer")
    if not (0 < eps < 1):
        raise ValueError("eps must lie in (0, 1)")
    x = stream.final_vector()
    if not np.any(x):
        return EstimateReport(0.0, details={"zero_vector": True, "passes": PassLedger(SETUP_PASSES, 0).to_dict()})
    n = stream.n
    eps_base = eps / 2.0
    if abs(F2_relative_error) > eps_base / 4.0:
        raise ValueError(f"F2_relative_error must be at most eps/8 = {eps_base / 4.0}")
    F2 = frequency_moment(x, 2)
    F2_est = F2 * (1.0 + F2_relative_error)
    base = fk_estimator_distribution(x, k, F2_est, eps_base, rng if perturb else None)
    Q = copies_for(n, k, int(P))
    avg = convolve_average(base, Q)
    Delta = delta_for(int(P))
    S = SamplerHandle(avg, passes_per_sample=PASSES_PER_SAMPLE)
    H = 2.0 * F2_est ** (k / 2.0)
    rep = estimate_mean_auto_L(S, float(Delta), H, eps / 2.0, delta, rng)
    passes = PassLedger(SETUP_PASSES + S.passes(), Q * sketch_memory(n, eps_base / 4.0))
    rep.details.update(
        {
            "Q": Q,
            "Delta": Delta,
            "true_ratio": avg.relative_second_moment(),
            "F2_est": F2_est,
            "passes": passes.to_dict(),
        }
    )
    return rep
