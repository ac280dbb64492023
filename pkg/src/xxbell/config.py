"""TOML run configuration.

Schema (every section optional unless noted)::

    [run]
    master_seed = 12345          # required; all randomness derives from it
    workers = 1                  # XXBELL_WORKERS overrides

    [model]                      # required
    kind = "uncorrelated"        # uncorrelated | correlated | uniform
    L = 64

    [disorder]                   # required unless kind = "uniform"
    distribution = "powerlaw"    # powerlaw | box
    strength = "0.015"           # D or J_min; decimal strings are kept exact

    [ensemble]
    N = 10000
    max_separation = 8           # integer, or "inf" (default) for all pairs
    start_index = 0              # first realization index (for shards)
    chunk_size = 64

    [filter]                     # pair class for the "filtered" histograms/onsets
    metric = "ring"              # ring | linear
    greater_than = "L/6"         # or an absolute distance
    # distances = [1, 3]         # alternative: exact distances

    [histogram]
    bins = 100
    cxx_range = [-0.25, 0.25]
    fidelity_range = [0.0, 1.0]

    [threshold]
    predicate = "nonlocal"       # nonlocal | entangled | both
    grid = ["0", "0.005", "0.01", "0.02"]
    resolution = "0.001"

    [maxsep]
    strengths = ["0.5", "1", "5"]

    [verify]
    sizes = [8, 10, 12]
    seeds = 20
    strengths = ["0.1", "1", "5"]
    models = ["uncorrelated", "correlated"]
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .ensemble import EnsembleConfig, SeparationFilter, resolve_workers
from .histogram import HistogramSpec
from .model import DisorderKind, DisorderSpec, Model

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]

_SECTIONS = {
    "run": {"master_seed", "workers"},
    "model": {"kind", "L"},
    "disorder": {"distribution", "strength"},
    "ensemble": {"N", "max_separation", "start_index", "chunk_size"},
    "filter": {"metric", "greater_than", "distances"},
    "histogram": {"bins", "cxx_range", "fidelity_range"},
    "threshold": {"predicate", "grid", "resolution"},
    "maxsep": {"strengths"},
    "verify": {"sizes", "seeds", "strengths", "models"},
}


class ConfigError(ValueError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = path or "<config>"
        if line is not None:
            where = f"{where}:{line}"
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class RunConfig:
    ensemble: EnsembleConfig
    threshold_predicate: str = "nonlocal"
    threshold_grid: tuple[Decimal, ...] = ()
    threshold_resolution: Decimal | None = None
    maxsep_strengths: tuple[Decimal, ...] = ()
    verify_sizes: tuple[int, ...] = (8, 10, 12)
    verify_seeds: int = 20
    verify_strengths: tuple[Decimal, ...] = (Decimal("0.1"), Decimal("1"), Decimal("5"))
    verify_models: tuple[Model, ...] = (Model.UNCORRELATED, Model.CORRELATED)
    source: dict = field(default_factory=dict, compare=False)

    @property
    def dist_kind(self) -> DisorderKind:
        dist = self.ensemble.dist
        return DisorderKind.POWERLAW if dist is None else dist.kind


class _Locator:
    """Maps ``section.key`` to its line number in the TOML text."""

    _header = re.compile(r"^\s*\[\s*([A-Za-z0-9_\-]+)\s*\]")
    _key = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")

    def __init__(self, text: str):
        self.lines: dict[tuple[str | None, str | None], int] = {}
        section = None
        for n, line in enumerate(text.splitlines(), 1):
            m = self._header.match(line)
            if m:
                section = m.group(1)
                self.lines.setdefault((section, None), n)
                continue
            m = self._key.match(line)
            if m:
                self.lines.setdefault((section, m.group(1)), n)

    def __call__(self, section: str | None, key: str | None = None) -> int | None:
        return self.lines.get((section, key)) or self.lines.get((section, None))


def _decimal(value, err) -> Decimal:
    if isinstance(value, bool) or not isinstance(value, (str, int, float)):
        raise err("expected a number or decimal string")
    try:
        d = Decimal(str(value).strip())
    except Exception:
        raise err(f"not a decimal number: {value!r}") from None
    if not d.is_finite():
        raise err("must be finite")
    return d


def parse_config(text: str, path: str | None = None, workers: int | None = None) -> RunConfig:
    where = _Locator(text)

    def err(section, key=None):
        return lambda msg: ConfigError(
            f"[{section}]{'.' + key if key else ''}: {msg}", path, where(section, key)
        )

    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", path, int(m.group(1)) if m else None)

    for section, body in data.items():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]", path, where(section))
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table", path, where(None, section))
        for key in body:
            if key not in _SECTIONS[section]:
                raise err(section, key)("unknown key")

    def get(section, key, default=..., kind=None):
        body = data.get(section, {})
        if key not in body:
            if default is ...:
                raise ConfigError(f"missing required key [{section}].{key}", path, where(section))
            return default
        value = body[key]
        if kind is not None and (isinstance(value, bool) or not isinstance(value, kind)):
            raise err(section, key)(f"expected {getattr(kind, '__name__', kind)}")
        return value

    try:
        model = Model(get("model", "kind", kind=str))
    except ValueError:
        raise err("model", "kind")("must be one of uncorrelated, correlated, uniform") from None
    L = get("model", "L", kind=int)
    if L < 2 or L % 2:
        raise err("model", "L")("must be an even integer >= 2")

    dist = None
    if "disorder" in data or model is not Model.UNIFORM:
        try:
            kind = DisorderKind(get("disorder", "distribution", "powerlaw", kind=str))
        except ValueError:
            raise err("disorder", "distribution")("must be powerlaw or box") from None
        strength = _decimal(get("disorder", "strength"), err("disorder", "strength"))
        try:
            dist = DisorderSpec(kind, strength)
        except ValueError as exc:
            raise err("disorder", "strength")(str(exc)) from None

    master_seed = get("run", "master_seed", kind=int)
    if not 0 <= master_seed < 2**64:
        raise err("run", "master_seed")("must be a 64-bit unsigned integer")
    if workers is not None:
        n_workers = int(workers)
    else:
        try:
            n_workers = resolve_workers(get("run", "workers", 1, int))
        except ValueError as exc:
            raise err("run", "workers")(str(exc)) from None

    N = get("ensemble", "N", 1, int)
    if N < 1:
        raise err("ensemble", "N")("must be >= 1")
    max_sep = get("ensemble", "max_separation", None)
    if isinstance(max_sep, str) and max_sep.strip().lower() in ("inf", "infinity", "all"):
        max_sep = None
    elif isinstance(max_sep, float) and math.isinf(max_sep):
        max_sep = None
    elif max_sep is not None and (isinstance(max_sep, bool) or not isinstance(max_sep, int) or max_sep < 1):
        raise err("ensemble", "max_separation")('must be a positive integer or "inf"')
    start = get("ensemble", "start_index", 0, int)
    if start < 0:
        raise err("ensemble", "start_index")("must be >= 0")
    chunk = get("ensemble", "chunk_size", 64, int)
    if chunk < 1:
        raise err("ensemble", "chunk_size")("must be >= 1")

    metric = get("filter", "metric", "ring", str)
    if metric not in ("ring", "linear"):
        raise err("filter", "metric")("must be ring or linear")
    gt = get("filter", "greater_than", None)
    distances = get("filter", "distances", None, list)
    if gt is not None and distances is not None:
        raise err("filter", "distances")("give either greater_than or distances")
    try:
        if gt is not None:
            sep_filter = SeparationFilter.parse_greater_than(gt, metric)
        elif distances is not None:
            if not all(isinstance(d, int) and not isinstance(d, bool) and d >= 1 for d in distances):
                raise ValueError("distances must be positive integers")
            sep_filter = SeparationFilter.exact(*distances, metric=metric)
        else:
            sep_filter = SeparationFilter(metric)
    except (ValueError, ZeroDivisionError) as exc:
        key = "greater_than" if gt is not None else "distances"
        raise err("filter", key)(str(exc)) from None

    bins = get("histogram", "bins", 100, int)
    hists = []
    for obs, default in (("cxx", [-0.25, 0.25]), ("fidelity", [0.0, 1.0])):
        key = f"{obs}_range"
        rng = get("histogram", key, default, list)
        try:
            lo, hi = (float(v) for v in rng)
            hists.append(HistogramSpec(obs, bins, lo, hi))
        except (TypeError, ValueError) as exc:
            raise err("histogram", key if key in data.get("histogram", {}) else "bins")(
                str(exc) or "expected [lo, hi]"
            ) from None

    try:
        ensemble = EnsembleConfig(
            model=model,
            L=L,
            dist=dist,
            n_realizations=N,
            master_seed=master_seed,
            max_separation=max_sep,
            separation_filter=sep_filter,
            histograms=tuple(hists),
            workers=n_workers,
            start_index=start,
            chunk_size=chunk,
        )
    except ValueError as exc:
        raise ConfigError(str(exc), path) from None

    predicate = get("threshold", "predicate", "nonlocal", str)
    if predicate not in ("nonlocal", "entangled", "both"):
        raise err("threshold", "predicate")("must be nonlocal, entangled or both")
    grid = tuple(
        _decimal(v, err("threshold", "grid")) for v in get("threshold", "grid", [], list)
    )
    if grid and dist is not None:
        for g in grid:
            try:
                DisorderSpec(dist.kind, g)
            except ValueError as exc:
                raise err("threshold", "grid")(str(exc)) from None
    res = get("threshold", "resolution", None)
    resolution = None if res is None else _decimal(res, err("threshold", "resolution"))
    if resolution is not None and resolution <= 0:
        raise err("threshold", "resolution")("must be > 0")

    strengths = tuple(
        _decimal(v, err("maxsep", "strengths")) for v in get("maxsep", "strengths", [], list)
    )

    sizes = tuple(get("verify", "sizes", [8, 10, 12], list))
    if not all(isinstance(s, int) and s >= 2 and s % 2 == 0 and s <= 14 for s in sizes):
        raise err("verify", "sizes")("sizes must be even integers in [2, 14]")
    seeds = get("verify", "seeds", 20, int)
    vstrengths = tuple(
        _decimal(v, err("verify", "strengths"))
        for v in get("verify", "strengths", ["0.1", "1", "5"], list)
    )
    try:
        vmodels = tuple(
            Model(m) for m in get("verify", "models", ["uncorrelated", "correlated"], list)
        )
    except ValueError as exc:
        raise err("verify", "models")(str(exc)) from None

    return RunConfig(
        ensemble=ensemble,
        threshold_predicate=predicate,
        threshold_grid=grid,
        threshold_resolution=resolution,
        maxsep_strengths=strengths,
        verify_sizes=sizes,
        verify_seeds=seeds,
        verify_strengths=vstrengths,
        verify_models=vmodels,
        source=data,
    )


def load_config(path, workers: int | None = None) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(p)) from None
    return parse_config(text, str(p), workers)
