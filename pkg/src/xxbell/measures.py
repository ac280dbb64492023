"""Pairwise entanglement and Bell (CHSH) measures from the spin correlators.

For the XX chain the singlet fidelity, concurrence and maximal CHSH value
are closed-form functions of ``C^xx`` and ``C^zz``.  All thresholds are
strict: ``F > 1/2`` (entangled), ``B > 2`` (nonlocal).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .correlators import PairTable

__all__ = [
    "CXX_THRESHOLD",
    "PropertyCounters",
    "RealizationSummary",
    "fidelity",
    "concurrence",
    "bell",
    "is_nonlocal",
    "evaluate_pairs",
    "summarize_realization",
]

CXX_THRESHOLD = 1.0 / (4.0 * math.sqrt(2.0))
PROPERTY_TOL = 1e-9


def fidelity(cxx, czz):
    """Singlet fidelity ``1/4 - 2 C^xx - C^zz`` (raw, not clamped)."""
    return 0.25 - 2.0 * np.asarray(cxx) - np.asarray(czz)


def concurrence(F):
    F = np.asarray(F, dtype=float)
    return np.where(F > 0.5, 2.0 * F - 1.0, 0.0)[()]


def bell(cxx, czz):
    cxx = np.asarray(cxx, dtype=float)
    czz = np.asarray(czz, dtype=float)
    return (8.0 * np.maximum(np.sqrt(2.0 * cxx**2), np.sqrt(cxx**2 + czz**2)))[()]


def is_nonlocal(cxx, czz):
    """``B > 2``.  The threshold form ``|C^xx| > 1/(4 sqrt 2)`` is checked separately."""
    return (bell(cxx, czz) > 2.0)[()]


@dataclass
class PropertyCounters:
    """Counts of monitored properties that should never fire.

    ``xx_below_zz`` counts pairs with ``|C^xx| < |C^zz|``; ``predicate_mismatch``
    counts pairs where ``B > 2`` and ``|C^xx| > 1/(4 sqrt 2)`` disagree, ignoring
    exact ties (``|C^xx|`` within ``PROPERTY_TOL`` of the threshold, which the
    correlated model produces on symmetric motifs) where rounding decides.
    """

    xx_below_zz: int = 0
    predicate_mismatch: int = 0
    nonlocal_not_entangled: int = 0
    nonlocal_degree: int = 0
    monogamy: int = 0
    correlator_bound: int = 0
    determinant_underflow: int = 0

    def add(self, other: "PropertyCounters") -> "PropertyCounters":
        return PropertyCounters(
            **{k: getattr(self, k) + getattr(other, k) for k in self.__dataclass_fields__}
        )

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @property
    def fatal(self) -> int:
        """Violations of exact consequences (|C^xx| < |C^zz| is only logged)."""
        return (
            self.nonlocal_not_entangled
            + self.nonlocal_degree
            + self.monogamy
            + self.correlator_bound
        )


def evaluate_pairs(table: PairTable) -> PropertyCounters:
    """Fill the measure columns of ``table`` in place; return property counts."""
    F = fidelity(table.cxx, table.czz)
    table.fidelity = F
    table.concurrence = concurrence(F)
    table.bell = bell(table.cxx, table.czz)
    nonlocal_ = table.bell > 2.0
    table.nonlocal_ = nonlocal_

    abs_x = np.abs(table.cxx)
    abs_z = np.abs(table.czz)
    counters = PropertyCounters(
        xx_below_zz=int(np.count_nonzero(abs_x < abs_z - PROPERTY_TOL)),
        predicate_mismatch=int(
            np.count_nonzero(
                (nonlocal_ != (abs_x > CXX_THRESHOLD))
                & (np.abs(abs_x - CXX_THRESHOLD) > PROPERTY_TOL)
            )
        ),
        nonlocal_not_entangled=int(np.count_nonzero(nonlocal_ & ~(F > 0.5))),
        correlator_bound=int(
            np.count_nonzero((abs_x > 0.25 + PROPERTY_TOL) | (abs_z > 0.25 + PROPERTY_TOL))
        ),
        determinant_underflow=table.clamped,
    )
    if nonlocal_.any():
        degree = np.bincount(
            np.concatenate([table.i[nonlocal_], table.j[nonlocal_]]), minlength=table.L
        )
        counters.nonlocal_degree = int(np.count_nonzero(degree > 1))
    return counters


@dataclass(frozen=True)
class RealizationSummary:
    L: int
    monogamy: float
    q_nl: int
    max_entangled_separation: int
    max_nonlocal_separation: int
    seed: int | None = None

    @property
    def q_nl_normalized(self) -> float:
        return 2.0 * self.q_nl / self.L

    def csv_row(self) -> str:
        return (
            f"{self.seed},{self.monogamy:.12g},{self.q_nl},{self.q_nl_normalized:.12g},"
            f"{self.max_entangled_separation},{self.max_nonlocal_separation}"
        )


SUMMARY_CSV_HEADER = "seed,M,q_nl,q_nl_normalized,max_ent_sep,max_nl_sep\n"


def summarize_realization(
    table: PairTable, L: int | None = None, seed: int | None = None
) -> RealizationSummary:
    """Monogamy sum ``(2/L) sum_{i<j} C_ij**2``, nonlocal-pair count and separation maxima.

    Needs every pair of the ring; separations are ring distances (0 when
    no pair qualifies).
    """
    L = table.L if L is None else L
    if table.concurrence is None:
        evaluate_pairs(table)
    if len(table) != L * (L - 1) // 2:
        raise ValueError(
            f"summary needs all {L * (L - 1) // 2} pairs, got {len(table)}; "
            "use max_separation=None"
        )
    c2 = table.concurrence**2
    monogamy = 2.0 / L * math.fsum(c2)
    entangled = table.concurrence > 0
    return RealizationSummary(
        L=L,
        monogamy=monogamy,
        q_nl=int(np.count_nonzero(table.nonlocal_)),
        max_entangled_separation=int(table.separation[entangled].max(initial=0)),
        max_nonlocal_separation=int(table.separation[table.nonlocal_].max(initial=0)),
        seed=seed,
    )
