"""Cost accounting: quantum samples, graph queries, stream passes."""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass
class SampleLedger:
    """Counts calls to a sampler S (or S^-1, controlled or not).

    One amplitude-estimation run with parameter ``t`` costs ``2t + 1`` quantum
    samples and ``t`` reflections.
    """

    quantum_samples: int = 0
    reflections: int = 0
    ae_invocations: int = 0

    def charge_ae(self, t: int, runs: int = 1) -> int:
        cost = runs * (2 * t + 1)
        self.quantum_samples += cost
        self.reflections += runs * t
        self.ae_invocations += runs
        return cost

    def merge(self, other: "SampleLedger") -> "SampleLedger":
        self.quantum_samples += other.quantum_samples
        self.reflections += other.reflections
        self.ae_invocations += other.ae_invocations
        return self

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class QueryLedger:
    degree_queries: int = 0
    neighbor_queries: int = 0
    pair_queries: int = 0

    @property
    def total(self) -> int:
        return self.degree_queries + self.neighbor_queries + self.pair_queries

    def charge(self, degree: int = 0, neighbor: int = 0, pair: int = 0) -> None:
        self.degree_queries += degree
        self.neighbor_queries += neighbor
        self.pair_queries += pair

    def merge(self, other: "QueryLedger") -> "QueryLedger":
        self.charge(other.degree_queries, other.neighbor_queries, other.pair_queries)
        return self

    def to_dict(self) -> dict:
        return {**asdict(self), "total": self.total}


@dataclass
class PassLedger:
    """Passes over a stream plus a gauge of the memory the sampler holds."""

    passes: int = 0
    memory_cells: int = 0

    def to_dict(self) -> dict:
        return asdict(self)
