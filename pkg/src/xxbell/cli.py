"""Command-line entry point: ``xxbell {sample,hist,threshold,maxsep,verify}``.

Exit codes: 0 success, 2 configuration error, 3 numerical-property failure
(|C^xx| < |C^zz| pairs are logged but never fatal).
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    histograms_from_accumulator,
    max_separation_rows,
    saturation_rows,
    sweep,
    threshold_scan,
)
from .config import ConfigError, RunConfig, load_config
from .ensemble import EnsembleAccumulator, EnsembleError, run_ensemble
from .freefermion import SectorError, ground_state_correlations
from .measures import SUMMARY_CSV_HEADER, PropertyCounters
from .model import Model, build_chain, derive_seed, write_chains_jsonl
from .verify import run_verification

log = logging.getLogger("xxbell")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROPERTY = 3


def _fmt(x) -> str:
    """12 significant digits, the interchange precision of every numeric output."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


class _Outputs:
    """Writes files under ``--out`` and remembers them for the manifest."""

    def __init__(self, root: Path, fingerprint: str):
        self.root = root
        self.fingerprint = fingerprint
        self.files: list[Path] = []
        root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.root / name
        self.files.append(p)
        return p

    def text(self, name: str, content: str) -> Path:
        p = self.path(name)
        p.write_text(content)
        return p

    def csv(self, name: str, header: str, rows) -> Path:
        lines = [f"# fingerprint: {self.fingerprint}\n", header]
        lines.extend(",".join(_fmt(v) for v in row) + "\n" for row in rows)
        return self.text(name, "".join(lines))

    def manifest(self, command: str, master_seed, started: str, extra: dict | None = None) -> Path:
        doc = {
            "tool": "xxbell",
            "version": __version__,
            "command": command,
            "fingerprint": self.fingerprint,
            "master_seed": master_seed,
            "started": started,
            "finished": _now(),
            "outputs": [
                {
                    "path": p.name,
                    "sha256": hashlib.sha256(p.read_bytes()).hexdigest(),
                }
                for p in self.files
            ],
        }
        if extra:
            doc.update(extra)
        p = self.root / "manifest.json"
        p.write_text(json.dumps(doc, indent=1) + "\n")
        return p


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _load(args) -> RunConfig:
    if args.config is None:
        raise ConfigError("--config is required for this subcommand")
    cfg = load_config(args.config, workers=args.workers)
    if args.max_separation is not None:
        k = args.max_separation
        if k.lower() in ("inf", "all"):
            max_sep = None
        else:
            try:
                max_sep = int(k)
            except ValueError:
                raise ConfigError(f'--max-separation: expected an integer or "inf", got {k!r}')
            if max_sep < 1:
                raise ConfigError("--max-separation must be >= 1")
        cfg = replace(cfg, ensemble=replace(cfg.ensemble, max_separation=max_sep))
    return cfg


def _report_counters(counters: PropertyCounters) -> int:
    """Log property counters; returns the exit code they imply."""
    d = counters.to_dict()
    if counters.xx_below_zz:
        log.warning("|cxx| >= |czz| violated on %d pairs (logged, not fatal)", counters.xx_below_zz)
    if counters.determinant_underflow:
        log.info("%d string determinants clamped to 0", counters.determinant_underflow)
    if counters.fatal:
        log.error("numerical property failures: %s", {k: v for k, v in d.items() if v})
        return EXIT_PROPERTY
    return EXIT_OK


# -- subcommands --------------------------------------------------------------


def _write_histograms(out: _Outputs, acc: EnsembleAccumulator) -> None:
    for key, hist in histograms_from_accumulator(acc).items():
        if hist.out_of_range:
            log.warning("histogram %s: %d samples out of range", key, hist.out_of_range)
        out.text(f"hist_{key.replace('/', '_')}.csv",
                 f"# fingerprint: {out.fingerprint}\n" + hist.to_csv())
    frac = acc.entangled_fraction_by_separation()
    bs = acc.by_separation
    pairs = bs["pairs"]
    nl = np.divide(bs["nonlocal"], pairs, out=np.zeros(pairs.size), where=pairs > 0)
    mean_abs = acc.mean_abs_cxx_by_separation()
    rows = [
        (d, pairs[d], frac[d], nl[d], None if np.isnan(mean_abs[d]) else mean_abs[d])
        for d in range(1, pairs.size)
        if pairs[d] > 0
    ]
    out.csv(
        "by_separation.csv",
        "separation,pairs,entangled_fraction,nonlocal_fraction,mean_abs_cxx\n",
        rows,
    )


def _write_summary(out: _Outputs, acc: EnsembleAccumulator) -> None:
    r = {k: acc._sorted_column(k) for k in ("seed", "monogamy", "q_nl", "max_ent_sep", "max_nl_sep")}
    rows = [
        (
            int(r["seed"][n]),
            None if np.isnan(r["monogamy"][n]) else r["monogamy"][n],
            int(r["q_nl"][n]),
            2.0 * r["q_nl"][n] / acc.L,
            int(r["max_ent_sep"][n]),
            int(r["max_nl_sep"][n]),
        )
        for n in range(acc.count)
    ]
    out.csv("summary.csv", SUMMARY_CSV_HEADER, rows)
    out.text("summary.json", json.dumps(acc.summary(), indent=1, sort_keys=True) + "\n")


def _write_sector_debug(out: _Outputs, cfg: RunConfig) -> None:
    ens = cfg.ensemble
    with out.path("sectors.jsonl").open("w") as fh:
        for k in ens.indices:
            seed = derive_seed(ens.master_seed, k)
            sol = ground_state_correlations(build_chain(ens.model, ens.L, ens.dist, seed))
            fh.write(json.dumps(dict(sol.debug_record(), index=k, seed=seed)) + "\n")


def cmd_sample(args) -> int:
    started = _now()
    cfg = _load(args)
    ens = cfg.ensemble
    out = _Outputs(Path(args.out), ens.fingerprint())
    if args.pairs_csv:
        with out.path("pairs.csv").open("w") as fh:
            fh.write(f"# fingerprint: {out.fingerprint}\n")
            acc = run_ensemble(ens, pairs_out=fh)
    else:
        acc = run_ensemble(ens)
    out.text("accumulator.json", acc.to_json())
    _write_summary(out, acc)
    if args.debug_sectors:
        _write_sector_debug(out, cfg)
    if args.chains:
        with out.path("chains.jsonl").open("w") as fh:
            write_chains_jsonl(
                (build_chain(ens.model, ens.L, ens.dist, derive_seed(ens.master_seed, k))
                 for k in ens.indices),
                fh,
            )
    out.manifest("sample", ens.master_seed, started, {"realizations": acc.count})
    s = acc.summary()
    print(
        f"N={acc.count}  M={_fmt(s['monogamy']['mean'])}  "
        f"2Q_NL/L={_fmt(s['q_nl_normalized']['mean'])}  -> {out.root}"
    )
    return _report_counters(acc.counters)


def cmd_hist(args) -> int:
    started = _now()
    if args.accumulator:
        try:
            acc = EnsembleAccumulator.from_json(Path(args.accumulator).read_text())
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read accumulator: {exc}", args.accumulator) from None
        master_seed = acc.config.get("master_seed")
    else:
        cfg = _load(args)
        acc = run_ensemble(cfg.ensemble)
        master_seed = cfg.ensemble.master_seed
    out = _Outputs(Path(args.out), acc.fingerprint)
    _write_histograms(out, acc)
    out.manifest("hist", master_seed, started, {"realizations": acc.count})
    print(f"histograms for N={acc.count} -> {out.root}")
    return _report_counters(acc.counters)


def cmd_threshold(args) -> int:
    started = _now()
    cfg = _load(args)
    if not cfg.threshold_grid:
        raise ConfigError("[threshold].grid is required for the threshold command", args.config)
    ens = cfg.ensemble
    if ens.model is Model.UNIFORM:
        raise ConfigError("threshold scans need a disordered model", args.config)
    out = _Outputs(Path(args.out), ens.fingerprint())
    predicates = ("entangled", "nonlocal") if cfg.threshold_predicate == "both" else (
        cfg.threshold_predicate,
    )
    code = EXIT_OK
    reports = {}
    for pred in predicates:
        est = threshold_scan(ens, cfg.dist_kind, cfg.threshold_grid, pred, cfg.threshold_resolution)
        out.text(f"threshold_{pred}.json", est.to_json())
        reports[pred] = est
        lo, hi = est.bracket
        print(f"{pred}: onset={est.onset} bracket=[{lo}, {hi}] N={est.n_per_point}")
        total = PropertyCounters()
        for p in est.probes:
            total = total.add(PropertyCounters(**p.counters))
        code = max(code, _report_counters(total))
    out.manifest("threshold", ens.master_seed, started)
    return code


def cmd_maxsep(args) -> int:
    started = _now()
    cfg = _load(args)
    ens = cfg.ensemble
    strengths = cfg.maxsep_strengths or ((ens.dist.strength,) if ens.dist else ())
    if not strengths:
        raise ConfigError("[maxsep].strengths or [disorder].strength is required", args.config)
    out = _Outputs(Path(args.out), ens.fingerprint())
    runs = sweep(ens, strengths, cfg.dist_kind)
    maxsep = max_separation_rows(runs)
    saturation = saturation_rows(runs)
    out.text("maxsep.json", json.dumps(maxsep, indent=1, sort_keys=True) + "\n")
    out.csv(
        "maxsep.csv",
        "strength,N,max_entangled_separation,max_nonlocal_separation\n",
        [(r["strength"], r["N"], r["entangled"], r["nonlocal"]) for r in maxsep],
    )
    out.csv(
        "saturation.csv",
        "strength,N,q_nl_normalized_mean,q_nl_normalized_sem,M_mean,M_sem,M_max\n",
        [
            (
                r["strength"],
                r["N"],
                r["q_nl_normalized"]["mean"],
                r["q_nl_normalized"]["sem"],
                r["monogamy"]["mean"],
                r["monogamy"]["sem"],
                r["monogamy_max"],
            )
            for r in saturation
        ],
    )
    for r in maxsep:
        print(f"{cfg.dist_kind.value}={r['strength']}: entangled<={r['entangled']} nonlocal<={r['nonlocal']}")
    out.manifest("maxsep", ens.master_seed, started)
    total = PropertyCounters()
    for _, acc in runs:
        total = total.add(acc.counters)
    return _report_counters(total)


def _corrupt_g(G: np.ndarray) -> np.ndarray:
    G[0, 1] += 1e-3
    G[1, 0] += 1e-3
    return G


def cmd_verify(args) -> int:
    started = _now()
    if args.config is not None:
        cfg = load_config(args.config)
        sizes, seeds = cfg.verify_sizes, cfg.verify_seeds
        strengths, models = cfg.verify_strengths, cfg.verify_models
        master = cfg.ensemble.master_seed
    else:
        sizes, seeds = (8, 10, 12), 20
        strengths, models = ("0.1", "1", "5"), (Model.UNCORRELATED, Model.CORRELATED)
        master = 2017
    if args.sizes:
        sizes = tuple(args.sizes)
    if args.seeds is not None:
        seeds = args.seeds
    if any(L < 2 or L % 2 or L > 14 for L in sizes):
        raise ConfigError("verify sizes must be even integers in [2, 14]")
    report = run_verification(
        sizes, seeds, strengths, models, master, _corrupt_g if args.corrupt_g else None
    )
    doc = report.to_json()
    out = _Outputs(Path(args.out), hashlib.sha256(doc.encode()).hexdigest())
    out.text("verify.json", doc)
    out.manifest("verify", master, started)
    print(f"{'formula':<22}{'max deviation':>16}{'tolerance':>12}  result")
    for c in report.checks.values():
        print(f"{c.formula:<22}{c.max_deviation:>16.3e}{c.tolerance:>12.0e}  "
              f"{'pass' if c.passed else 'FAIL'}")
    for c in report.failures():
        print(f"FAILED {c.formula}: deviation {c.max_deviation:.3e} at {json.dumps(c.worst)}")
    if report.degenerate:
        print(f"{len(report.degenerate)} degenerate chains skipped")
    return EXIT_OK if report.passed else EXIT_PROPERTY


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xxbell",
        description="Bell nonlocality and entanglement in disordered XX rings.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, metavar="PATH")
        p.add_argument("--workers", type=int, metavar="N",
                       help="worker processes (overrides XXBELL_WORKERS and the config)")
        p.add_argument("--out", default="out", metavar="DIR")
        p.add_argument("--max-separation", metavar="K",
                       help='largest ring distance evaluated ("inf" for all pairs)')

    p = sub.add_parser("sample", help="run an ensemble, write accumulator and summaries")
    common(p)
    p.add_argument("--pairs-csv", action="store_true", help="also write every pair to pairs.csv")
    p.add_argument("--chains", action="store_true",
                   help="write every coupling realization to chains.jsonl")
    p.add_argument("--debug-sectors", action="store_true",
                   help="dump parity sector and spectrum per realization to sectors.jsonl")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("hist", help="normalized histograms (from a config or a saved accumulator)")
    common(p, config_required=False)
    p.add_argument("--accumulator", metavar="PATH")
    p.set_defaults(func=cmd_hist)

    p = sub.add_parser("threshold", help="onset of nonlocality / entanglement along a grid")
    common(p)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("maxsep", help="maximum entangled / nonlocal separation and saturation data")
    common(p)
    p.set_defaults(func=cmd_maxsep)

    p = sub.add_parser("verify", help="cross-check the free-fermion route against exact diagonalization")
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--out", default="out", metavar="DIR")
    p.add_argument("--sizes", type=int, nargs="+", metavar="L")
    p.add_argument("--seeds", type=int)
    p.add_argument("--corrupt-g", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "hist" and not (args.config or args.accumulator):
        parser.error("hist needs --config or --accumulator")
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EnsembleError, SectorError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_PROPERTY


if __name__ == "__main__":
    sys.exit(main())
