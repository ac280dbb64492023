"""Disorder-ensemble runs with order-independent, mergeable accumulators.

Realization ``k`` of a run always uses ``derive_seed(master_seed, k)``; work
is cut into fixed index chunks whose partial accumulators are merged in
index order, so the result does not depend on how many worker processes
computed the chunks.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import math
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterable

import numpy as np

from .correlators import PAIRS_CSV_HEADER, PairTable, all_pairs, write_pairs_csv
from .freefermion import SectorError, ground_state_correlations
from .histogram import HistogramCounts, HistogramSpec
from .measures import PROPERTY_TOL, PropertyCounters, evaluate_pairs
from .model import DisorderSpec, Model, build_chain, derive_seed

__all__ = [
    "ACCUMULATOR_FORMAT",
    "ACCUMULATOR_VERSION",
    "WORKERS_ENV",
    "DEFAULT_HISTOGRAMS",
    "SeparationFilter",
    "EnsembleConfig",
    "Extreme",
    "EnsembleAccumulator",
    "EnsembleError",
    "run_ensemble",
    "merge",
    "scalar_stats",
]

log = logging.getLogger(__name__)

ACCUMULATOR_FORMAT = "xxbell-accumulator"
ACCUMULATOR_VERSION = 1
WORKERS_ENV = "XXBELL_WORKERS"

# per-separation sums of |cxx| are kept as integers in units of 2**-60, so
# adding partial accumulators is exact in any order
FIXED_SCALE = 2**60

DEFAULT_HISTOGRAMS = (
    HistogramSpec("cxx", 100, -0.25, 0.25),
    HistogramSpec("fidelity", 100, 0.0, 1.0),
)


class EnsembleError(RuntimeError):
    pass


@dataclass(frozen=True)
class SeparationFilter:
    """Pair selection by distance.

    Either ``distance > greater_than`` (a :class:`~fractions.Fraction` of
    ``L`` when ``relative``) or membership in ``distances``; no condition
    selects every pair.  ``metric`` is ``"ring"`` (``min(j-i, L-j+i)``) or
    ``"linear"`` (``j - i``).
    """

    metric: str = "ring"
    greater_than: Fraction | None = None
    relative: bool = False
    distances: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.metric not in ("ring", "linear"):
            raise ValueError(f"unknown distance metric {self.metric!r}")
        if self.greater_than is not None and self.distances is not None:
            raise ValueError("use either greater_than or distances, not both")

    @classmethod
    def far(cls, divisor: int = 6, metric: str = "ring") -> "SeparationFilter":
        return cls(metric, Fraction(1, divisor), True)

    @classmethod
    def exact(cls, *distances: int, metric: str = "ring") -> "SeparationFilter":
        return cls(metric, distances=tuple(sorted(int(d) for d in distances)))

    @classmethod
    def parse_greater_than(cls, text, metric: str = "ring") -> "SeparationFilter":
        """``"L/6"`` (relative) or a plain number (absolute)."""
        s = str(text).replace(" ", "")
        if s.startswith("L/"):
            return cls(metric, Fraction(1, int(s[2:])), True)
        if s.startswith("L*"):
            return cls(metric, Fraction(s[2:]), True)
        return cls(metric, Fraction(s), False)

    def threshold(self, L: int) -> Fraction | None:
        if self.greater_than is None:
            return None
        return self.greater_than * L if self.relative else self.greater_than

    def distance(self, table: PairTable) -> np.ndarray:
        return table.separation if self.metric == "ring" else table.j - table.i

    def mask(self, table: PairTable) -> np.ndarray:
        d = self.distance(table)
        if self.distances is not None:
            return np.isin(d, self.distances)
        t = self.threshold(table.L)
        if t is None:
            return np.ones(d.shape, bool)
        # exact rational comparison: d > L/6  <=>  d * den > num
        return d * t.denominator > t.numerator

    def describe(self) -> str:
        if self.distances is not None:
            return f"{self.metric} in {{{','.join(map(str, self.distances))}}}"
        if self.greater_than is None:
            return "all"
        if self.relative:
            return f"{self.metric} > L*{self.greater_than}"
        return f"{self.metric} > {self.greater_than}"

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "greater_than": None if self.greater_than is None else str(self.greater_than),
            "relative": self.relative,
            "distances": None if self.distances is None else list(self.distances),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SeparationFilter":
        gt = data.get("greater_than")
        ds = data.get("distances")
        return cls(
            data.get("metric", "ring"),
            None if gt is None else Fraction(gt),
            bool(data.get("relative", False)),
            None if ds is None else tuple(ds),
        )


def resolve_workers(workers: int | None) -> int:
    """Worker count from a config value, overridden by ``$XXBELL_WORKERS``."""
    env = os.environ.get(WORKERS_ENV)
    if env:
        workers = int(env)
    workers = 1 if workers is None else int(workers)
    if workers < 1:
        raise ValueError("worker count must be >= 1")
    return workers


@dataclass(frozen=True)
class EnsembleConfig:
    model: Model
    L: int
    dist: DisorderSpec | None
    n_realizations: int
    master_seed: int
    max_separation: int | None = None
    separation_filter: SeparationFilter = SeparationFilter()
    histograms: tuple[HistogramSpec, ...] = DEFAULT_HISTOGRAMS
    workers: int = 1
    start_index: int = 0
    chunk_size: int = 64

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if self.L < 2 or self.L % 2:
            raise ValueError(f"L must be an even integer >= 2, got {self.L}")
        if self.n_realizations < 1:
            raise ValueError("N must be >= 1")
        if self.start_index < 0:
            raise ValueError("start_index must be >= 0")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.model is not Model.UNIFORM and self.dist is None:
            raise ValueError(f"{self.model.value} model needs a disorder distribution")
        if self.max_separation is not None and self.max_separation < 1:
            raise ValueError("max_separation must be >= 1")
        names = [h.observable for h in self.histograms]
        unknown = set(names) - {"cxx", "czz", "fidelity", "concurrence", "bell"}
        if unknown:
            raise ValueError(f"unknown histogram observables {sorted(unknown)}")
        if len(set(names)) != len(names):
            raise ValueError("duplicate histogram observable")

    @property
    def complete_pairs(self) -> bool:
        return self.max_separation is None or self.max_separation >= self.L // 2

    def semantic_dict(self) -> dict:
        """Fields that change results; the fingerprint hashes exactly these."""
        return {
            "model": self.model.value,
            "L": self.L,
            "dist": None if self.dist is None else self.dist.to_dict(),
            "master_seed": self.master_seed,
            "max_separation": None if self.complete_pairs else self.max_separation,
            "separation_filter": self.separation_filter.to_dict(),
            "histograms": [h.to_dict() for h in self.histograms],
        }

    def fingerprint(self) -> str:
        canon = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def to_dict(self) -> dict:
        d = self.semantic_dict()
        d.update(
            n_realizations=self.n_realizations,
            start_index=self.start_index,
            chunk_size=self.chunk_size,
        )
        return d

    @classmethod
    def from_dict(cls, data: dict, **overrides) -> "EnsembleConfig":
        dist = data.get("dist")
        kwargs = dict(
            model=Model(data["model"]),
            L=int(data["L"]),
            dist=None if dist is None else DisorderSpec.from_dict(dist),
            n_realizations=int(data["n_realizations"]),
            master_seed=int(data["master_seed"]),
            max_separation=data.get("max_separation"),
            separation_filter=SeparationFilter.from_dict(data["separation_filter"]),
            histograms=tuple(HistogramSpec(**h) for h in data["histograms"]),
            start_index=int(data.get("start_index", 0)),
            chunk_size=int(data.get("chunk_size", 64)),
        )
        kwargs.update(overrides)
        return cls(**kwargs)

    def with_dist(self, dist: DisorderSpec, master_seed: int | None = None) -> "EnsembleConfig":
        return replace(
            self, dist=dist, master_seed=self.master_seed if master_seed is None else master_seed
        )

    @property
    def indices(self) -> range:
        return range(self.start_index, self.start_index + self.n_realizations)


@dataclass(frozen=True)
class Extreme:
    """A maximum together with where it was found (realization index/seed, pair)."""

    value: float
    index: int
    seed: int
    i: int
    j: int

    def beats(self, other: "Extreme | None") -> bool:
        if other is None:
            return True
        if self.value != other.value:
            return self.value > other.value
        return (self.index, self.i, self.j) < (other.index, other.i, other.j)

    def to_dict(self) -> dict:
        return {"value": self.value, "index": self.index, "seed": self.seed, "i": self.i, "j": self.j}


def _best(a: Extreme | None, b: Extreme | None) -> Extreme | None:
    if b is None:
        return a
    return b if b.beats(a) else a


EXTREME_NAMES = (
    "max_abs_cxx",
    "max_fidelity",
    "max_abs_cxx_filtered",
    "max_fidelity_filtered",
    "max_entangled_separation",
    "max_nonlocal_separation",
)

_REALIZATION_COLUMNS = ("index", "seed", "monogamy", "q_nl", "max_ent_sep", "max_nl_sep")


def scalar_stats(values: Iterable[float], n_boot: int = 1000, boot_seed: int = 0) -> dict:
    """Mean, standard error of the mean, and a bootstrap 95% percentile interval.

    Sums use :func:`math.fsum` (correctly rounded), so the result depends
    only on the multiset of values.
    """
    x = np.asarray(list(values), dtype=float)
    n = x.size
    if n == 0:
        return {"n": 0, "mean": math.nan, "sem": math.nan, "bootstrap_95": [math.nan, math.nan]}
    mean = math.fsum(x) / n
    sem = math.sqrt(math.fsum((x - mean) ** 2) / (n - 1) / n) if n > 1 else math.nan
    rng = np.random.default_rng(boot_seed)
    boot = x[rng.integers(0, n, size=(n_boot, n))].mean(axis=1)
    lo, hi = np.percentile(boot, [2.5, 97.5])
    return {"n": n, "mean": mean, "sem": sem, "bootstrap_95": [float(lo), float(hi)]}


@dataclass
class EnsembleAccumulator:
    fingerprint: str
    config: dict
    L: int
    realizations: dict = field(default_factory=dict)
    histograms: dict = field(default_factory=dict)
    by_separation: dict = field(default_factory=dict)
    filtered: dict = field(default_factory=dict)
    extremes: dict = field(default_factory=dict)
    counters: PropertyCounters = field(default_factory=PropertyCounters)
    sectors: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, config: EnsembleConfig) -> "EnsembleAccumulator":
        L = config.L
        hists = {}
        for spec in config.histograms:
            for tag in ("all", "filtered"):
                hists[f"{spec.observable}/{tag}"] = spec.empty(tag)
        nsep = L // 2 + 1
        return cls(
            fingerprint=config.fingerprint(),
            config=config.semantic_dict(),
            L=L,
            realizations={
                "index": np.zeros(0, np.int64),
                "seed": np.zeros(0, np.uint64),
                "monogamy": np.zeros(0),
                "q_nl": np.zeros(0, np.int64),
                "max_ent_sep": np.zeros(0, np.int64),
                "max_nl_sep": np.zeros(0, np.int64),
            },
            histograms=hists,
            by_separation={
                "pairs": np.zeros(nsep, np.int64),
                "entangled": np.zeros(nsep, np.int64),
                "nonlocal": np.zeros(nsep, np.int64),
                "abs_cxx_fixed": np.array([0] * nsep, dtype=object),
            },
            filtered={"pairs": 0, "entangled": 0, "nonlocal": 0},
            extremes={name: None for name in EXTREME_NAMES},
            sectors={"even": 0, "odd": 0, "degenerate": 0, "zero_mode_filled": 0},
        )

    @property
    def count(self) -> int:
        return int(self.realizations["index"].size)

    def add_realization(self, index: int, seed: int, solution, table: PairTable,
                        counters: PropertyCounters, complete: bool,
                        separation_filter: SeparationFilter) -> None:
        L = self.L
        conc = table.concurrence
        entangled = conc > 0
        nonlocal_ = table.nonlocal_
        sep = table.separation
        filt = separation_filter.mask(table)

        monogamy = 2.0 / L * math.fsum(conc**2) if complete else math.nan
        if complete and monogamy > 1.0 + PROPERTY_TOL:
            counters.monogamy += 1
        row = {
            "index": index,
            "seed": seed,
            "monogamy": monogamy,
            "q_nl": int(np.count_nonzero(nonlocal_)),
            "max_ent_sep": int(sep[entangled].max(initial=0)),
            "max_nl_sep": int(sep[nonlocal_].max(initial=0)),
        }
        for k in _REALIZATION_COLUMNS:
            col = self.realizations[k]
            self.realizations[k] = np.append(col, np.array([row[k]], dtype=col.dtype))

        columns = {
            "cxx": table.cxx,
            "czz": table.czz,
            "fidelity": table.fidelity,
            "concurrence": table.concurrence,
            "bell": table.bell,
        }
        for key, hist in self.histograms.items():
            obs = key.split("/")[0]
            values = columns[obs]
            hist.add(values if hist.tag == "all" else values[filt])

        nsep = L // 2 + 1
        bs = self.by_separation
        bs["pairs"] += np.bincount(sep, minlength=nsep)
        bs["entangled"] += np.bincount(sep[entangled], minlength=nsep)
        bs["nonlocal"] += np.bincount(sep[nonlocal_], minlength=nsep)
        sums = np.bincount(sep, weights=np.abs(table.cxx), minlength=nsep)
        bs["abs_cxx_fixed"] += np.array([round(v * FIXED_SCALE) for v in sums], dtype=object)

        self.filtered["pairs"] += int(np.count_nonzero(filt))
        self.filtered["entangled"] += int(np.count_nonzero(filt & entangled))
        self.filtered["nonlocal"] += int(np.count_nonzero(filt & nonlocal_))

        def extreme(values, mask=None):
            if mask is not None:
                if not mask.any():
                    return None
                pos = np.flatnonzero(mask)
                p = pos[np.argmax(values[mask])]
            else:
                if values.size == 0:
                    return None
                p = int(np.argmax(values))
            return Extreme(float(values[p]), index, seed, int(table.i[p]), int(table.j[p]))

        abs_x = np.abs(table.cxx)
        fresh = {
            "max_abs_cxx": extreme(abs_x),
            "max_fidelity": extreme(table.fidelity),
            "max_abs_cxx_filtered": extreme(abs_x, filt),
            "max_fidelity_filtered": extreme(table.fidelity, filt),
            "max_entangled_separation": extreme(sep.astype(float), entangled),
            "max_nonlocal_separation": extreme(sep.astype(float), nonlocal_),
        }
        for name, ext in fresh.items():
            self.extremes[name] = _best(self.extremes[name], ext)

        self.counters = self.counters.add(counters)
        self.sectors[solution.sector.value] += 1
        self.sectors["degenerate"] += int(solution.degenerate_sectors)
        self.sectors["zero_mode_filled"] += int(solution.zero_mode_filled)

    # -- statistics -------------------------------------------------------

    def _sorted_column(self, name: str) -> np.ndarray:
        order = np.argsort(self.realizations["index"], kind="stable")
        return self.realizations[name][order]

    def monogamy_values(self) -> np.ndarray:
        return self._sorted_column("monogamy")

    def q_nl_normalized_values(self) -> np.ndarray:
        return 2.0 * self._sorted_column("q_nl") / self.L

    def summary(self) -> dict:
        M = self.monogamy_values()
        return {
            "realizations": self.count,
            "monogamy": scalar_stats(M[np.isfinite(M)]),
            "q_nl_normalized": scalar_stats(self.q_nl_normalized_values()),
            "monogamy_max": float(np.nanmax(M)) if np.isfinite(M).any() else None,
        }

    def entangled_fraction_by_separation(self) -> np.ndarray:
        p = self.by_separation["pairs"]
        return np.divide(self.by_separation["entangled"], p, out=np.zeros(p.size), where=p > 0)

    def mean_abs_cxx_by_separation(self) -> np.ndarray:
        p = self.by_separation["pairs"]
        return np.divide(
            self.by_separation["abs_cxx_fixed"].astype(float) / FIXED_SCALE,
            p,
            out=np.full(p.size, np.nan),
            where=p > 0,
        )

    def has_nonlocal(self, filtered: bool = False) -> bool:
        if filtered:
            return self.filtered["nonlocal"] > 0
        return bool(self.by_separation["nonlocal"].sum() > 0)

    def has_entangled(self, filtered: bool = False) -> bool:
        if filtered:
            return self.filtered["entangled"] > 0
        return bool(self.by_separation["entangled"].sum() > 0)

    # -- merging and serialization ---------------------------------------

    def merge(self, other: "EnsembleAccumulator") -> "EnsembleAccumulator":
        return merge(self, other)

    def to_dict(self) -> dict:
        cols = {}
        for k in _REALIZATION_COLUMNS:
            values = self._sorted_column(k)
            if k == "monogamy":
                cols[k] = [None if math.isnan(v) else float(v) for v in values]
            else:
                cols[k] = [int(v) for v in values]
        return {
            "format": ACCUMULATOR_FORMAT,
            "version": ACCUMULATOR_VERSION,
            "fingerprint": self.fingerprint,
            "config": self.config,
            "L": self.L,
            "realizations": cols,
            "histograms": {k: h.to_dict() for k, h in sorted(self.histograms.items())},
            "by_separation": {
                k: [float(x) if v.dtype.kind == "f" else int(x) for x in v]
                for k, v in self.by_separation.items()
            },
            "filtered": dict(self.filtered),
            "extremes": {
                k: None if v is None else v.to_dict() for k, v in self.extremes.items()
            },
            "counters": self.counters.to_dict(),
            "sectors": dict(self.sectors),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "EnsembleAccumulator":
        if data.get("format") != ACCUMULATOR_FORMAT:
            raise ValueError("not an accumulator document")
        if data.get("version") != ACCUMULATOR_VERSION:
            raise ValueError(f"unsupported accumulator version {data.get('version')}")
        r = data["realizations"]
        return cls(
            fingerprint=data["fingerprint"],
            config=data["config"],
            L=int(data["L"]),
            realizations={
                "index": np.asarray(r["index"], np.int64),
                "seed": np.asarray(r["seed"], np.uint64),
                "monogamy": np.array(
                    [math.nan if v is None else v for v in r["monogamy"]], dtype=float
                ),
                "q_nl": np.asarray(r["q_nl"], np.int64),
                "max_ent_sep": np.asarray(r["max_ent_sep"], np.int64),
                "max_nl_sep": np.asarray(r["max_nl_sep"], np.int64),
            },
            histograms={k: HistogramCounts.from_dict(v) for k, v in data["histograms"].items()},
            by_separation={
                k: np.array([int(x) for x in v], dtype=object)
                if k == "abs_cxx_fixed"
                else np.asarray(v, dtype=np.int64)
                for k, v in data["by_separation"].items()
            },
            filtered=dict(data["filtered"]),
            extremes={
                k: None if v is None else Extreme(**v) for k, v in data["extremes"].items()
            },
            counters=PropertyCounters(**data["counters"]),
            sectors=dict(data["sectors"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "EnsembleAccumulator":
        return cls.from_dict(json.loads(text))


def merge(a: EnsembleAccumulator, b: EnsembleAccumulator) -> EnsembleAccumulator:
    """Combine two accumulators of the same configuration.

    Counts and histograms add, per-realization rows are pooled (statistics
    are recomputed from them), extremes keep the larger value with its
    provenance.  Overlapping realization indices are rejected.
    """
    if a.fingerprint != b.fingerprint:
        raise ValueError("cannot merge accumulators of different configurations")
    if np.intersect1d(a.realizations["index"], b.realizations["index"]).size:
        raise ValueError("accumulators share realization indices")
    rows = {
        k: np.concatenate([a.realizations[k], b.realizations[k]]) for k in _REALIZATION_COLUMNS
    }
    order = np.argsort(rows["index"], kind="stable")
    rows = {k: v[order] for k, v in rows.items()}
    return EnsembleAccumulator(
        fingerprint=a.fingerprint,
        config=a.config,
        L=a.L,
        realizations=rows,
        histograms={k: h.merge(b.histograms[k]) for k, h in a.histograms.items()},
        by_separation={k: v + b.by_separation[k] for k, v in a.by_separation.items()},
        filtered={k: v + b.filtered[k] for k, v in a.filtered.items()},
        extremes={k: _best(v, b.extremes[k]) for k, v in a.extremes.items()},
        counters=a.counters.add(b.counters),
        sectors={k: v + b.sectors[k] for k, v in a.sectors.items()},
    )


# -- running ----------------------------------------------------------------


def realize(config: EnsembleConfig, index: int):
    """Build and solve realization ``index``; returns (seed, solution, pair table, counters)."""
    seed = derive_seed(config.master_seed, index)
    chain = build_chain(config.model, config.L, config.dist, seed)
    try:
        solution = ground_state_correlations(chain)
    except SectorError as exc:
        raise EnsembleError(f"realization {index} (seed={seed}): {exc}") from exc
    table = all_pairs(solution.G, config.max_separation)
    counters = evaluate_pairs(table)
    return seed, solution, table, counters


def _run_chunk(config: EnsembleConfig, start: int, stop: int, collect_pairs: bool):
    acc = EnsembleAccumulator.empty(config)
    lines = [] if collect_pairs else None
    for k in range(start, stop):
        seed, solution, table, counters = realize(config, k)
        acc.add_realization(
            k, seed, solution, table, counters, config.complete_pairs, config.separation_filter
        )
        if collect_pairs:
            buf = io.StringIO()
            write_pairs_csv(buf, table, seed)
            lines.append(buf.getvalue())
    return acc, lines


def _chunks(config: EnsembleConfig):
    idx = config.indices
    for start in range(idx.start, idx.stop, config.chunk_size):
        yield start, min(start + config.chunk_size, idx.stop)


_warm = False


def _warmup() -> None:
    global _warm
    if not _warm:
        all_pairs(np.eye(4) * 0.5)
        _warm = True


def run_ensemble(
    config: EnsembleConfig,
    stop_when: Callable[[EnsembleAccumulator], bool] | None = None,
    pairs_out=None,
) -> EnsembleAccumulator:
    """Evaluate ``config.n_realizations`` realizations and merge the results.

    ``stop_when`` is checked after each chunk (in index order); once it
    holds, later chunks are dropped, so an early-stopped run is still
    independent of the worker count.  ``pairs_out`` receives the per-pair
    CSV rows when given.
    """
    _warmup()
    workers = config.workers
    collect = pairs_out is not None
    if collect:
        pairs_out.write(PAIRS_CSV_HEADER)
    chunks = list(_chunks(config))
    acc = EnsembleAccumulator.empty(config)

    def consume(result) -> bool:
        nonlocal acc
        part, lines = result
        acc = merge(acc, part)
        if collect:
            pairs_out.writelines(lines)
        return stop_when is not None and stop_when(acc)

    if workers == 1 or len(chunks) == 1:
        for start, stop in chunks:
            if consume(_run_chunk(config, start, stop, collect)):
                break
        return acc

    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        futures = [pool.submit(_run_chunk, config, a, b, collect) for a, b in chunks]
        try:
            for fut in futures:
                if consume(fut.result()):
                    break
        finally:
            for fut in futures:
                fut.cancel()
    return acc
