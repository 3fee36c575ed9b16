"""Exact finite distributions on non-negative reals.

A :class:`FiniteDistribution` is the classical shadow of a quantum sampler: the
law of the value register after measurement. Everything the estimation
algorithms consult about a sampler (truncated means, Bernoulli parameters,
moments) is computed here exactly, in double precision.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

PROB_TOL = 1e-12
# Inputs whose probabilities are off by more than this are rejected rather
# than silently renormalised.
_SUM_REJECT_TOL = 1e-9

DEFAULT_GRID_RESOLUTION = 1e-3
DEFAULT_EXACT_CAP = 1 << 16
DEFAULT_HARD_CAP = 1 << 20


class SupportExplosionError(RuntimeError):
    """Raised when a convolution would exceed the hard support cap."""


@dataclass(frozen=True)
class TruncationWindow:
    """Half-open value window ``[a, b)`` used by the Bernoulli sampler."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a >= 0):
            raise ValueError(f"window start must be >= 0, got {self.a}")
        if not (self.b > self.a):
            raise ValueError(f"window must satisfy a < b, got [{self.a}, {self.b})")


def _check_window(a: float, b: float) -> None:
    TruncationWindow(a, b)


class FiniteDistribution:
    """Finite distribution over non-negative values.

    Values are stored strictly increasing, zero-probability atoms are
    dropped, and probabilities are renormalised once at construction.
    Instances are immutable.
    """

    __slots__ = ("_values", "_probs", "_mass_prefix")

    def __init__(self, values: Iterable[float], probs: Iterable[float]):
        v = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=np.float64).ravel()
        p = np.asarray(list(probs) if not isinstance(probs, np.ndarray) else probs, dtype=np.float64).ravel()
        if v.shape != p.shape:
            raise ValueError("values and probs must have the same length")
        if v.size == 0:
            raise ValueError("a distribution needs at least one atom")
        if not np.all(np.isfinite(v)) or not np.all(np.isfinite(p)):
            raise ValueError("values and probabilities must be finite")
        if np.any(v < 0):
            raise ValueError("values must be non-negative")
        if np.any(p < -PROB_TOL):
            raise ValueError("probabilities must be non-negative")
        p = np.clip(p, 0.0, None)
        total = float(p.sum())
        if abs(total - 1.0) > _SUM_REJECT_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")

        if v.size > 1 and not np.all(np.diff(v) > 0):
            v, inverse = np.unique(v, return_inverse=True)
            p = np.bincount(inverse.ravel(), weights=p, minlength=v.size)
        keep = p > 0
        v, p = v[keep], p[keep]
        p = p / p.sum()

        v.setflags(write=False)
        p.setflags(write=False)
        self._values = v
        self._probs = p
        self._mass_prefix = None

    # constructors -------------------------------------------------------

    @classmethod
    def from_weights(cls, values: Iterable[float], weights: Iterable[float]) -> "FiniteDistribution":
        w = np.asarray(list(weights) if not isinstance(weights, np.ndarray) else weights, dtype=np.float64)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be non-negative with a positive sum")
        return cls(values, w / w.sum())

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "FiniteDistribution":
        pairs = list(pairs)
        return cls([v for v, _ in pairs], [p for _, p in pairs])

    @classmethod
    def point_mass(cls, value: float) -> "FiniteDistribution":
        return cls([value], [1.0])

    @classmethod
    def from_json(cls, text: str) -> "FiniteDistribution":
        return cls.from_pairs(json.loads(text))

    def to_json(self) -> str:
        return json.dumps([[float(v), float(p)] for v, p in zip(self._values, self._probs)])

    # accessors ------------------------------------------------------------

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def probs(self) -> np.ndarray:
        return self._probs

    def __len__(self) -> int:
        return int(self._values.size)

    def __iter__(self):
        return iter(zip(self._values.tolist(), self._probs.tolist()))

    def __repr__(self) -> str:
        if len(self) <= 6:
            body = ", ".join(f"{v:g}: {p:.6g}" for v, p in self)
        else:
            body = f"{len(self)} atoms in [{self._values[0]:g}, {self._values[-1]:g}]"
        return f"FiniteDistribution({{{body}}})"

    def prob_of(self, value: float, tol: float = 0.0) -> float:
        lo = np.searchsorted(self._values, value - tol, side="left")
        hi = np.searchsorted(self._values, value + tol, side="right")
        return float(self._probs[lo:hi].sum())

    # moments --------------------------------------------------------------

    def mean(self) -> float:
        return float(np.dot(self._values, self._probs))

    def second_moment(self) -> float:
        return float(np.dot(self._values * self._values, self._probs))

    def variance(self) -> float:
        mu = self.mean()
        return float(np.dot((self._values - mu) ** 2, self._probs))

    def relative_second_moment(self) -> float:
        """phi / mu, the quantity every Delta must upper-bound."""
        mu = self.mean()
        if mu <= 0:
            return math.inf
        return math.sqrt(self.second_moment()) / mu

    def _slice(self, a: float, b: float) -> slice:
        lo = int(np.searchsorted(self._values, a, side="left"))
        hi = int(np.searchsorted(self._values, b, side="left"))
        return slice(lo, hi)

    def truncated_mean(self, a: float, b: float) -> float:
        """E[X_{a,b}]: outcomes outside ``[a, b)`` replaced by 0."""
        if not (a >= 0 and b > a):
            raise ValueError(f"window must satisfy 0 <= a < b, got [{a}, {b})")
        s = self._slice(a, b)
        return float(np.dot(self._values[s], self._probs[s]))

    def truncated_second_moment(self, a: float, b: float) -> float:
        if not (a >= 0 and b > a):
            raise ValueError(f"window must satisfy 0 <= a < b, got [{a}, {b})")
        s = self._slice(a, b)
        v = self._values[s]
        return float(np.dot(v * v, self._probs[s]))

    def lower_mean(self, b: float) -> float:
        """E[X_{<b}]."""
        s = slice(0, int(np.searchsorted(self._values, b, side="left")))
        return float(np.dot(self._values[s], self._probs[s]))

    def tail_mean(self, b: float) -> float:
        """E[X_{>=b}]."""
        s = slice(int(np.searchsorted(self._values, b, side="left")), None)
        return float(np.dot(self._values[s], self._probs[s]))

    def tail_second_moment(self, b: float) -> float:
        s = slice(int(np.searchsorted(self._values, b, side="left")), None)
        v = self._values[s]
        return float(np.dot(v * v, self._probs[s]))

    def bernoulli_parameter(self, a: float, b: float) -> float:
        """Amplitude ``E[X_{a,b}] / b`` produced by the (a, b)-Bernoulli sampler."""
        if not math.isfinite(b):
            raise ValueError("Bernoulli sampler needs a finite window end")
        p = self.truncated_mean(a, b) / b
        return min(max(p, 0.0), 1.0)

    def mass_below(self, b: float) -> float:
        if self._mass_prefix is None:
            prefix = np.concatenate(([0.0], np.cumsum(self._probs)))
            prefix.setflags(write=False)
            self._mass_prefix = prefix
        return float(self._mass_prefix[int(np.searchsorted(self._values, b, side="left"))])

    def sample(self, rng: np.random.Generator, size: int | None = None):
        idx = rng.choice(self._values.size, size=size, p=self._probs)
        return self._values[idx]

    def scaled(self, factor: float) -> "FiniteDistribution":
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return FiniteDistribution(self._values * factor, self._probs)

    def total_variation(self, other: "FiniteDistribution", atol: float = 1e-12) -> float:
        """Total variation distance; atoms closer than ``atol`` are identified."""
        vals = np.concatenate((self._values, other._values))
        order = np.argsort(vals, kind="mergesort")
        vals = vals[order]
        group = np.concatenate(([0], np.cumsum(np.diff(vals) > atol)))
        pa = np.concatenate((self._probs, np.zeros(other._values.size)))[order]
        pb = np.concatenate((np.zeros(self._values.size), other._probs))[order]
        da = np.bincount(group, weights=pa)
        db = np.bincount(group, weights=pb)
        return 0.5 * float(np.abs(da - db).sum())


# Module-level operations mirroring the method API.

def mean(d: FiniteDistribution) -> float:
    return d.mean()


def second_moment(d: FiniteDistribution) -> float:
    return d.second_moment()


def variance(d: FiniteDistribution) -> float:
    return d.variance()


def truncated_mean(d: FiniteDistribution, a: float, b: float) -> float:
    return d.truncated_mean(a, b)


def bernoulli_parameter(d: FiniteDistribution, a: float, b: float) -> float:
    return d.bernoulli_parameter(a, b)


def _round_to_grid(values: np.ndarray, log_ratio: float) -> np.ndarray:
    out = values.copy()
    pos = values > 0
    out[pos] = np.exp(np.round(np.log(values[pos]) / log_ratio) * log_ratio)
    return out


def _merge(values: np.ndarray, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    uniq, inverse = np.unique(values, return_inverse=True)
    return uniq, np.bincount(inverse.ravel(), weights=probs, minlength=uniq.size)


def convolve_average(
    d: FiniteDistribution,
    Q: int,
    grid_resolution: float | None = DEFAULT_GRID_RESOLUTION,
    *,
    exact_cap: int = DEFAULT_EXACT_CAP,
    hard_cap: int = DEFAULT_HARD_CAP,
    return_bound: bool = False,
):
    """Law of the mean of ``Q`` independent draws from ``d``.

    Sums are built one draw at a time. While the running support stays within
    ``exact_cap`` atoms everything is exact. Beyond that, positive values are
    snapped to a geometric grid whose per-step ratio is chosen so the
    accumulated relative rounding error stays below ``grid_resolution``.
    With ``grid_resolution=None`` no rounding happens and only ``hard_cap``
    limits the support.

    Returns the distribution, or ``(distribution, rounding_bound)`` when
    ``return_bound`` is set.
    """
    if int(Q) != Q or Q < 1:
        raise ValueError("Q must be a positive integer")
    Q = int(Q)
    if Q == 1:
        return (d, 0.0) if return_bound else d

    use_grid = bool(grid_resolution)
    if use_grid:
        step_ratio = (1.0 + grid_resolution) ** (2.0 / (Q - 1))
        log_ratio = math.log(step_ratio)
    bound_factor = 1.0

    base_v, base_p = d.values, d.probs
    acc_v, acc_p = base_v.copy(), base_p.copy()
    for _ in range(Q - 1):
        if acc_v.size * base_v.size > hard_cap * max(base_v.size, 1) * 4:
            raise SupportExplosionError(
                "convolution support exceeds the hard cap; use a Monte-Carlo oracle instead"
            )
        v = (acc_v[:, None] + base_v[None, :]).ravel()
        p = (acc_p[:, None] * base_p[None, :]).ravel()
        acc_v, acc_p = _merge(v, p)
        if acc_v.size > exact_cap:
            if not use_grid:
                if acc_v.size > hard_cap:
                    raise SupportExplosionError(
                        f"exact support of {acc_v.size} atoms exceeds the hard cap {hard_cap}; "
                        "enable the geometric grid or use a Monte-Carlo oracle"
                    )
                continue
            acc_v, acc_p = _merge(_round_to_grid(acc_v, log_ratio), acc_p)
            bound_factor *= math.sqrt(step_ratio)
            if acc_v.size > hard_cap:
                raise SupportExplosionError(
                    f"gridded support of {acc_v.size} atoms exceeds the hard cap {hard_cap}; "
                    "use a Monte-Carlo oracle instead"
                )
    out = FiniteDistribution(acc_v / Q, acc_p / acc_p.sum())
    if return_bound:
        return out, bound_factor - 1.0
    return out
