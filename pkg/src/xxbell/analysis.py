"""Analyses built on ensemble runs, such as threshold scans and separation caps.

Onsets use an extreme-value definition: the weakest disorder at which at
least one qualifying pair shows up among ``N`` realizations.  The answer
depends on ``N`` (and on ``L``), so every estimate carries its bracket and
its ensemble size.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Sequence

from .ensemble import EnsembleAccumulator, EnsembleConfig, run_ensemble
from .histogram import Histogram, build_histogram
from .model import DisorderKind, DisorderSpec, derive_seed

__all__ = [
    "Histogram",
    "build_histogram",
    "histograms_from_accumulator",
    "Probe",
    "ThresholdEstimate",
    "probe_seed",
    "threshold_scan",
    "far_pair_thresholds",
    "sweep",
    "max_separation_rows",
    "saturation_rows",
    "max_separation_curve",
    "saturation_curve",
]

log = logging.getLogger(__name__)

PREDICATES = ("nonlocal", "entangled")


def histograms_from_accumulator(acc: EnsembleAccumulator) -> dict[str, Histogram]:
    return {key: h.normalized() for key, h in sorted(acc.histograms.items())}


def probe_seed(master_seed: int, dist: DisorderSpec) -> int:
    """Master seed for one grid/bisection point, derived from the point itself.

    Distinct disorder values get unrelated realizations, and the same value
    always gets the same ones no matter in which order points are probed.
    """
    key = f"{dist.kind.value}:{dist.strength.normalize()}".encode()
    tag = int.from_bytes(hashlib.sha256(key).digest()[:7], "big")
    return derive_seed(master_seed, tag)


@dataclass(frozen=True)
class Probe:
    strength: Decimal
    detected: bool
    n_evaluated: int
    master_seed: int
    witness: dict | None = None
    counters: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "strength": str(self.strength),
            "detected": self.detected,
            "n_evaluated": self.n_evaluated,
            "master_seed": self.master_seed,
            "witness": self.witness,
            "counters": self.counters,
        }


@dataclass
class ThresholdEstimate:
    """Onset of a pair predicate along a disorder family.

    ``clean_side`` is the strongest probed disorder without a detection and
    ``detected_side`` the weakest with one; ``onset`` equals
    ``detected_side``.  ``bracket`` is the same interval in increasing
    numeric order (for the box family the onset is its lower end).  A side
    is ``None`` when the grid did not close it.
    """

    definition: str
    kind: DisorderKind
    onset: Decimal | None
    clean_side: Decimal | None
    detected_side: Decimal | None
    n_per_point: int
    probes: list[Probe] = field(default_factory=list)

    @property
    def bracket(self) -> tuple[Decimal | None, Decimal | None]:
        a, b = self.clean_side, self.detected_side
        if a is None or b is None:
            return (b, a) if self.kind is DisorderKind.BOX else (a, b)
        return (min(a, b), max(a, b))

    @property
    def width(self) -> Decimal | None:
        lo, hi = self.bracket
        return None if lo is None or hi is None else hi - lo

    @property
    def closed(self) -> bool:
        return self.clean_side is not None and self.detected_side is not None

    def to_dict(self) -> dict:
        s = lambda v: None if v is None else str(v)  # noqa: E731
        return {
            "definition": self.definition,
            "kind": self.kind.value,
            "onset": s(self.onset),
            "bracket": [s(v) for v in self.bracket],
            "N": self.n_per_point,
            "seeds": [p.master_seed for p in self.probes],
            "probes": [p.to_dict() for p in self.probes],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


def _detected(acc: EnsembleAccumulator, predicate: str) -> bool:
    return acc.filtered[predicate] > 0


def _witness(acc: EnsembleAccumulator, predicate: str) -> dict | None:
    name = "max_abs_cxx_filtered" if predicate == "nonlocal" else "max_fidelity_filtered"
    ext = acc.extremes[name]
    return None if ext is None else ext.to_dict()


def _probe(base: EnsembleConfig, kind: DisorderKind, strength: Decimal, predicate: str) -> Probe:
    dist = DisorderSpec(kind, strength)
    seed = probe_seed(base.master_seed, dist)
    cfg = base.with_dist(dist, master_seed=seed)
    acc = run_ensemble(cfg, stop_when=lambda a: _detected(a, predicate))
    hit = _detected(acc, predicate)
    log.info("probe %s: %s after %d realizations", dist, "hit" if hit else "none", acc.count)
    return Probe(
        strength, hit, acc.count, seed,
        _witness(acc, predicate) if hit else None, acc.counters.to_dict(),
    )


def _level(kind: DisorderKind, strength: Decimal) -> Decimal:
    return strength if kind is DisorderKind.POWERLAW else 1 - strength


def threshold_scan(
    base: EnsembleConfig,
    kind: DisorderKind | str,
    grid: Sequence,
    predicate: str = "nonlocal",
    resolution=None,
) -> ThresholdEstimate:
    """Onset of ``predicate`` over ``grid``, refined by bisection.

    Grid points are probed from weak to strong disorder (increasing D, or
    decreasing J_min) with ``base.n_realizations`` each; the first point
    with a qualifying pair closes the bracket, which is then halved until
    it is no wider than ``resolution``.  Each probe draws its own seeds
    (:func:`probe_seed`).  Only pairs passing ``base.separation_filter``
    count.
    """
    kind = DisorderKind(kind)
    if predicate not in PREDICATES:
        raise ValueError(f"predicate must be one of {PREDICATES}")
    points = sorted({Decimal(str(g)) for g in grid}, key=lambda v: _level(kind, v))
    if not points:
        raise ValueError("empty grid")
    resolution = None if resolution is None else Decimal(str(resolution))

    probes: list[Probe] = []
    clean = detected = None
    for value in points:
        probe = _probe(base, kind, value, predicate)
        probes.append(probe)
        if probe.detected:
            detected = value
            break
        clean = value

    if clean is not None and detected is not None and resolution is not None:
        while abs(detected - clean) > resolution:
            mid = (clean + detected) / 2
            probe = _probe(base, kind, mid, predicate)
            probes.append(probe)
            if probe.detected:
                detected = mid
            else:
                clean = mid

    definition = (
        f"weakest disorder with >=1 {predicate} pair ({base.separation_filter.describe()}) "
        f"among N={base.n_realizations} realizations, L={base.L}, {base.model.value} model"
    )
    return ThresholdEstimate(
        definition, kind, detected, clean, detected, base.n_realizations, probes
    )


def far_pair_thresholds(base: EnsembleConfig, kind, grid, resolution=None):
    """(entanglement onset, nonlocality onset) restricted to ``base.separation_filter``."""
    ent = threshold_scan(base, kind, grid, "entangled", resolution)
    nl = threshold_scan(base, kind, grid, "nonlocal", resolution)
    return ent, nl


def sweep(base: EnsembleConfig, strengths: Sequence, kind="powerlaw"):
    """One full ensemble per disorder value, each with its own derived master seed.

    Returns ``[(DisorderSpec, EnsembleAccumulator), ...]`` in the given order.
    """
    kind = DisorderKind(kind)
    runs = []
    for s in strengths:
        dist = DisorderSpec(kind, s)
        runs.append((dist, run_ensemble(base.with_dist(dist, probe_seed(base.master_seed, dist)))))
    return runs


def max_separation_rows(runs) -> list[dict]:
    """Largest ring distance of an entangled / nonlocal pair for each run of :func:`sweep`."""
    out = []
    for dist, acc in runs:
        ent = acc.extremes["max_entangled_separation"]
        nl = acc.extremes["max_nonlocal_separation"]
        out.append(
            {
                "strength": str(dist.strength),
                "N": acc.count,
                "entangled": 0 if ent is None else int(ent.value),
                "nonlocal": 0 if nl is None else int(nl.value),
                "entangled_witness": None if ent is None else ent.to_dict(),
                "nonlocal_witness": None if nl is None else nl.to_dict(),
            }
        )
    return out


def saturation_rows(runs) -> list[dict]:
    """Ensemble means of ``2 Q_NL / L`` and of the monogamy sum ``M`` per run."""
    out = []
    for dist, acc in runs:
        summary = acc.summary()
        out.append(
            {
                "strength": str(dist.strength),
                "N": acc.count,
                "q_nl_normalized": summary["q_nl_normalized"],
                "monogamy": summary["monogamy"],
                "monogamy_max": summary["monogamy_max"],
                "counters": acc.counters.to_dict(),
            }
        )
    return out


def max_separation_curve(base: EnsembleConfig, strengths: Sequence, kind="powerlaw") -> list[dict]:
    return max_separation_rows(sweep(base, strengths, kind))


def saturation_curve(base: EnsembleConfig, strengths: Sequence, kind="powerlaw") -> list[dict]:
    return saturation_rows(sweep(base, strengths, kind))
