"""Cross-checks of the free-fermion pipeline against exact diagonalization."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import oracle
from .correlators import all_pairs
from .freefermion import ground_state_correlations
from .measures import bell, concurrence, fidelity
from .model import DisorderSpec, Model, build_chain, derive_seed

__all__ = ["TOLERANCES", "Check", "VerificationReport", "verify_chain", "run_verification"]

TOLERANCES = {
    "energy": 1e-9,
    "G": 1e-9,
    "cxx": 1e-9,
    "czz": 1e-9,
    "cyy_equals_cxx": 1e-10,
    "sz_zero": 1e-10,
    "fidelity_identity": 1e-10,
    "concurrence_identity": 1e-8,
    "concurrence": 1e-8,
    "bell": 1e-9,
}


@dataclass
class Check:
    formula: str
    tolerance: float
    max_deviation: float = 0.0
    samples: int = 0
    worst: dict | None = None

    @property
    def passed(self) -> bool:
        return bool(self.max_deviation <= self.tolerance)

    def update(self, deviation: float, where: dict) -> None:
        deviation = float(deviation)
        self.samples += 1
        if math.isnan(self.max_deviation):
            return
        if math.isnan(deviation) or deviation > self.max_deviation:
            self.max_deviation = deviation
            self.worst = dict(where, deviation=deviation)

    def to_dict(self) -> dict:
        return {
            "formula": self.formula,
            "tolerance": self.tolerance,
            "max_deviation": self.max_deviation,
            "samples": self.samples,
            "passed": self.passed,
            "worst": self.worst,
        }


@dataclass
class VerificationReport:
    checks: dict[str, Check] = field(
        default_factory=lambda: {k: Check(k, t) for k, t in TOLERANCES.items()}
    )
    chains: int = 0
    degenerate: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failures(self) -> list[Check]:
        return [c for c in self.checks.values() if not c.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "chains": self.chains,
            "degenerate_skipped": self.degenerate,
            "checks": [c.to_dict() for c in self.checks.values()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def verify_chain(chain, report: VerificationReport, where: dict,
                 corrupt: Callable[[np.ndarray], np.ndarray] | None = None) -> None:
    """Compare every pair of ``chain`` between the two routes, updating ``report``.

    ``corrupt`` is a test hook applied to G before the correlators are
    evaluated.
    """
    state = oracle.ground_state_exact(chain)
    if state.degenerate:
        report.degenerate.append(dict(where))
        return
    report.chains += 1
    sol = ground_state_correlations(chain)
    G = sol.G if corrupt is None else corrupt(np.array(sol.G))
    table = all_pairs(G)
    c = report.checks
    c["energy"].update(abs(state.energy - sol.ground_energy), where)
    L = chain.length
    for i in range(L):
        c["sz_zero"].update(abs(oracle.magnetization(state, i)), dict(where, site=i))
    if L <= 10:
        for i in range(L):
            for j in range(L):
                dev = abs(oracle.hopping_correlation(state, i, j) - G[i, j])
                c["G"].update(dev, dict(where, pair=[i, j]))
    F = fidelity(table.cxx, table.czz)
    C = concurrence(F)
    B = bell(table.cxx, table.czz)
    for p in range(len(table)):
        i, j = int(table.i[p]), int(table.j[p])
        at = dict(where, pair=[i, j])
        m = oracle.oracle_measures(state, i, j)
        c["cxx"].update(abs(m.cxx - table.cxx[p]), at)
        c["czz"].update(abs(m.czz - table.czz[p]), at)
        c["cyy_equals_cxx"].update(abs(m.cyy - m.cxx), at)
        c["fidelity_identity"].update(abs(m.fidelity - (0.25 - 2 * m.cxx - m.czz)), at)
        c["concurrence_identity"].update(abs(m.concurrence - max(0.0, 2 * m.fidelity - 1)), at)
        c["concurrence"].update(abs(m.concurrence - float(C[p])), at)
        c["bell"].update(abs(m.bell - float(B[p])), at)


def run_verification(
    sizes: Iterable[int] = (8, 10, 12),
    seeds: int = 20,
    strengths: Iterable = ("0.1", "1", "5"),
    models: Iterable = (Model.UNCORRELATED, Model.CORRELATED),
    master_seed: int = 2017,
    corrupt: Callable[[np.ndarray], np.ndarray] | None = None,
) -> VerificationReport:
    """Oracle suite over sizes x models x power-law strengths x seeds."""
    report = VerificationReport()
    for L in sizes:
        for model in models:
            model = Model(model)
            for d in strengths:
                dist = None if model is Model.UNIFORM else DisorderSpec.powerlaw(d)
                for k in range(seeds):
                    seed = derive_seed(master_seed, k)
                    chain = build_chain(model, L, dist, seed)
                    where = {"L": L, "model": model.value, "D": str(d), "seed": seed}
                    verify_chain(chain, report, where, corrupt)
    return report
