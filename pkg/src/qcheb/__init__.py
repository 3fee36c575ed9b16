"""Relative-error quantum mean estimation, simulated on exact finite distributions."""

from qcheb.dist import FiniteDistribution, TruncationWindow
from qcheb.ledger import PassLedger, QueryLedger, SampleLedger

__version__ = "0.1.0"

__all__ = [
    "FiniteDistribution",
    "TruncationWindow",
    "SampleLedger",
    "QueryLedger",
    "PassLedger",
    "__version__",
]
