import json
import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from xxbell.correlators import all_pairs
from xxbell.ensemble import (
    EnsembleAccumulator,
    EnsembleConfig,
    EnsembleError,
    SeparationFilter,
    merge,
    realize,
    resolve_workers,
    run_ensemble,
    scalar_stats,
)
from xxbell.model import DisorderSpec, Model


def cfg(**kw):
    base = dict(
        model=Model.UNCORRELATED, L=16, dist=DisorderSpec.powerlaw(1), n_realizations=40,
        master_seed=99, chunk_size=8,
    )
    base.update(kw)
    return EnsembleConfig(**base)


@pytest.fixture(scope="module")
def acc40():
    return run_ensemble(cfg())


def _counts(a):
    d = a.to_dict()
    d.pop("realizations")
    return d, a.to_dict()["realizations"]


def test_merge_identity(acc40):
    empty = EnsembleAccumulator.empty(cfg())
    assert merge(acc40, empty).to_json() == acc40.to_json()
    assert merge(empty, acc40).to_json() == acc40.to_json()


def test_merge_commutative_and_sharded_equals_whole(acc40):
    shards = [run_ensemble(cfg(n_realizations=10, start_index=10 * k)) for k in range(4)]
    left = merge(merge(shards[0], shards[1]), merge(shards[2], shards[3]))
    right = merge(shards[3], merge(shards[1], merge(shards[2], shards[0])))
    assert left.to_json() == right.to_json() == acc40.to_json()


def test_sharding_four_by_250_equals_1000():
    base = cfg(L=8, n_realizations=1000, chunk_size=64)
    whole = run_ensemble(base)
    parts = [run_ensemble(replace(base, n_realizations=250, start_index=250 * k)) for k in range(4)]
    merged = parts[0]
    for p in parts[1:]:
        merged = merge(merged, p)
    assert merged.count == 1000
    assert merged.to_json() == whole.to_json()


def test_merge_rejects_mismatch(acc40):
    other = run_ensemble(cfg(master_seed=100, n_realizations=2))
    with pytest.raises(ValueError):
        merge(acc40, other)
    with pytest.raises(ValueError):
        merge(acc40, run_ensemble(cfg(n_realizations=2)))  # overlapping indices


def test_worker_count_invariance():
    c = cfg(n_realizations=100, L=12)
    one = run_ensemble(c)
    many = run_ensemble(replace(c, workers=8))
    assert one.to_json() == many.to_json()


def test_json_round_trip(acc40):
    text = acc40.to_json()
    back = EnsembleAccumulator.from_json(text)
    assert back.to_json() == text
    doc = json.loads(text)
    assert doc["format"] == "xxbell-accumulator" and doc["version"] == 1
    with pytest.raises(ValueError):
        EnsembleAccumulator.from_dict(dict(doc, version=99))


def test_accumulator_contents(acc40):
    assert acc40.count == 40
    L = 16
    assert acc40.by_separation["pairs"].sum() == 40 * L * (L - 1) // 2
    for key, h in acc40.histograms.items():
        assert h.out_of_range == 0, key
    assert acc40.histograms["cxx/all"].total == 40 * 120
    s = acc40.summary()
    assert s["realizations"] == 40
    assert 0 < s["monogamy"]["mean"] <= 1
    lo, hi = s["monogamy"]["bootstrap_95"]
    assert lo <= s["monogamy"]["mean"] <= hi
    ext = acc40.extremes["max_abs_cxx"]
    assert ext.value <= 0.25 and 0 <= ext.i < ext.j < L
    assert acc40.counters.fatal == 0 and acc40.counters.xx_below_zz == 0
    assert sum(acc40.sectors[k] for k in ("even", "odd")) == 40


def test_extreme_provenance_replays(acc40):
    from xxbell.freefermion import ground_state_correlations
    from xxbell.model import build_chain

    ext = acc40.extremes["max_abs_cxx"]
    chain = build_chain(Model.UNCORRELATED, 16, DisorderSpec.powerlaw(1), ext.seed)
    t = all_pairs(ground_state_correlations(chain).G)
    k = np.flatnonzero((t.i == ext.i) & (t.j == ext.j))[0]
    assert abs(t.cxx[k]) == ext.value


def test_uniform_chain_run():
    acc = run_ensemble(EnsembleConfig(Model.UNIFORM, 100, None, 1, 0))
    assert acc.summary()["q_nl_normalized"]["mean"] == 0
    h = acc.histograms["cxx/all"].normalized()
    nn_bin = int(np.floor((-1 / (2 * math.pi) + 0.25) / 0.005))
    assert h.density[nn_bin] > 0


def test_far_pair_entanglement_at_strong_disorder():
    acc = run_ensemble(cfg(L=64, dist=DisorderSpec.powerlaw(5), n_realizations=100,
                           separation_filter=SeparationFilter.far(6), chunk_size=25))
    assert acc.filtered["entangled"] > 0
    assert acc.filtered["pairs"] == 100 * sum(
        min(d, 64 - d) > Fraction(64, 6) for i in range(64) for d in range(1, 64 - i)
    )


def test_mean_abs_cxx_decays_with_separation():
    c = cfg(L=32, dist=DisorderSpec.powerlaw(1), n_realizations=1000, chunk_size=100)
    acc = run_ensemble(c)
    m = acc.mean_abs_cxx_by_separation()[1:]
    # per-realization means per separation give the sampling error of each point
    per = np.empty((1000, 16))
    for k in range(1000):
        _, _, t, _ = realize(c, k)
        per[k] = np.bincount(t.separation, np.abs(t.cxx), 17)[1:] / np.bincount(t.separation, minlength=17)[1:]
    assert np.allclose(per.mean(axis=0), m, rtol=1e-12)
    sem = per.std(axis=0, ddof=1) / np.sqrt(1000)
    rise = np.diff(m)
    allowed = 3 * np.hypot(sem[1:], sem[:-1])
    assert np.all(rise <= allowed), (rise, allowed)
    assert m[0] > 2 * m[4] > 4 * m[-1] * 0.5


def test_sem_scales_as_inverse_sqrt_n():
    acc = run_ensemble(cfg(L=12, n_realizations=1600, chunk_size=200))
    q = acc.q_nl_normalized_values()
    sems = [scalar_stats(q[:n])["sem"] for n in (100, 400, 1600)]
    # quadrupling N halves the standard error, up to sampling noise in the SEM itself
    assert sems[0] / sems[1] == pytest.approx(2, rel=0.2)
    assert sems[1] / sems[2] == pytest.approx(2, rel=0.2)


def test_stop_when_is_prefix_of_full_run():
    c = cfg(n_realizations=40)
    stopped = run_ensemble(c, stop_when=lambda a: a.count >= 16)
    assert stopped.count == 16
    full = run_ensemble(replace(c, n_realizations=16))
    assert stopped.to_json() == full.to_json()
    assert run_ensemble(replace(c, workers=4), stop_when=lambda a: a.count >= 16).to_json() == full.to_json()


def test_max_separation_leaves_monogamy_undefined():
    acc = run_ensemble(cfg(max_separation=2, n_realizations=8))
    assert np.all(np.isnan(acc.monogamy_values()))
    assert acc.summary()["monogamy"]["n"] == 0
    assert acc.by_separation["pairs"][3:].sum() == 0


def test_separation_filters():
    f = SeparationFilter.parse_greater_than("L/6")
    assert f.threshold(64) == Fraction(64, 6)
    assert SeparationFilter.from_dict(f.to_dict()) == f
    assert SeparationFilter.parse_greater_than("3").threshold(64) == 3
    e = SeparationFilter.exact(3, 1)
    assert e.distances == (1, 3)
    with pytest.raises(ValueError):
        SeparationFilter("manhattan")
    t = all_pairs(np.eye(8) * 0.5)
    assert np.array_equal(SeparationFilter.exact(1).mask(t), t.separation == 1)
    lin = SeparationFilter("linear", Fraction(5))
    assert np.array_equal(lin.mask(t), (t.j - t.i) > 5)


def test_fingerprint_canonicalization():
    a = cfg()
    assert a.fingerprint() == cfg(workers=3, n_realizations=7, chunk_size=2).fingerprint()
    assert a.fingerprint() != cfg(master_seed=100).fingerprint()
    assert a.fingerprint() != cfg(dist=DisorderSpec.powerlaw("1.5")).fingerprint()
    assert a.fingerprint() == cfg(dist=DisorderSpec.powerlaw("1")).fingerprint()
    assert a.fingerprint() != cfg(max_separation=3).fingerprint()
    # any max_separation covering the whole ring is the same computation
    assert a.fingerprint() == cfg(max_separation=8).fingerprint() == cfg(max_separation=50).fingerprint()
    assert a.fingerprint() != cfg(separation_filter=SeparationFilter.far()).fingerprint()
    assert EnsembleConfig.from_dict(a.to_dict()).fingerprint() == a.fingerprint()


def test_config_validation():
    with pytest.raises(ValueError):
        cfg(L=7)
    with pytest.raises(ValueError):
        cfg(n_realizations=0)
    with pytest.raises(ValueError):
        cfg(dist=None)
    with pytest.raises(ValueError):
        cfg(workers=0)


def test_resolve_workers_env(monkeypatch):
    monkeypatch.delenv("XXBELL_WORKERS", raising=False)
    assert resolve_workers(None) == 1
    assert resolve_workers(3) == 3
    monkeypatch.setenv("XXBELL_WORKERS", "5")
    assert resolve_workers(3) == 5
    monkeypatch.setenv("XXBELL_WORKERS", "0")
    with pytest.raises(ValueError):
        resolve_workers(1)


def test_solver_failure_reports_seed(monkeypatch):
    from xxbell import ensemble
    from xxbell.freefermion import SectorError

    def boom(chain):
        raise SectorError("forced")

    monkeypatch.setattr(ensemble, "ground_state_correlations", boom)
    with pytest.raises(EnsembleError, match="seed="):
        run_ensemble(cfg(n_realizations=1))
