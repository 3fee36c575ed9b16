"""Test distributions with a prescribed relative second moment ``phi / mu``."""

from __future__ import annotations

import numpy as np

from qcheb.dist import FiniteDistribution

POWER_LAW_EXPONENT = 3.0
POWER_LAW_SUPPORT = 200


def two_point(ratio: float, mu: float = 1.0) -> FiniteDistribution:
    """``{0, B}`` with ``B = ratio^2 mu`` taken with probability ``1 / ratio^2``."""
    if ratio < 1:
        raise ValueError("ratio must be >= 1")
    if ratio == 1:
        return FiniteDistribution.point_mass(mu)
    q = 1.0 / ratio ** 2
    return FiniteDistribution([0.0, mu / q], [1.0 - q, q])


def _power_law_core(exponent: float, support: int) -> FiniteDistribution:
    k = np.arange(1, support + 1, dtype=np.float64)
    return FiniteDistribution.from_weights(k, k ** -exponent)


def power_law(ratio: float, mu: float = 1.0, exponent: float = POWER_LAW_EXPONENT,
              support: int = POWER_LAW_SUPPORT) -> FiniteDistribution:
    """Truncated power law on ``1..support`` mixed with an atom at 0.

    The mixing weight ``w`` is ``(r0 / ratio)^2`` where ``r0`` is the ratio of
    the bare power law, so ``ratio`` must be at least ``r0`` (about 1.61 with
    the defaults). Values are rescaled to mean ``mu``.
    """
    core = _power_law_core(exponent, support)
    r0 = core.relative_second_moment()
    if ratio < r0 - 1e-12:
        raise ValueError(f"ratio must be at least {r0:.4f} for this power law")
    w = min(1.0, (r0 / ratio) ** 2)
    scale = mu / (w * core.mean())
    vals = np.concatenate(([0.0], core.values * scale))
    probs = np.concatenate(([1.0 - w], core.probs * w))
    return FiniteDistribution(vals, probs)


def point_mass(ratio: float = 1.0, mu: float = 1.0) -> FiniteDistribution:
    """Point mass at ``mu``; any ``ratio >= 1`` is a valid bound for it."""
    return FiniteDistribution.point_mass(mu)


FAMILIES = {"two-point": two_point, "power-law": power_law, "point-mass": point_mass}


def make_family(name: str, ratio: float, mu: float = 1.0) -> FiniteDistribution:
    try:
        return FAMILIES[name](ratio, mu)
    except KeyError:
        raise ValueError(f"unknown family {name!r}; choose from {sorted(FAMILIES)}") from None


def random_stage_sampler(rng: np.random.Generator, atoms: int = 6, stages: int = 4):
    """Random finite law with stopping stages, for variable-time experiments."""
    values = np.sort(rng.uniform(0.0, 10.0, size=atoms))
    probs = rng.dirichlet(np.ones(atoms))
    st = rng.integers(1, stages + 1, size=atoms)
    return values, probs, st

