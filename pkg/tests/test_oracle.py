import math

import numpy as np
import pytest

from xxbell import oracle
from xxbell.correlators import all_pairs
from xxbell.freefermion import ground_state_correlations
from xxbell.measures import bell, concurrence, fidelity
from xxbell.model import ChainSpec, DisorderSpec, Model, build_chain
from xxbell.verify import TOLERANCES, run_verification


def test_two_site_singlet():
    state = oracle.ground_state_exact(ChainSpec([1.0, 1.0]))
    m = oracle.oracle_measures(state, 0, 1)
    assert state.energy == pytest.approx(-0.5, abs=1e-14)
    assert m.cxx == pytest.approx(-0.25, abs=1e-14)
    assert m.czz == pytest.approx(-0.25, abs=1e-14)
    assert m.fidelity == pytest.approx(1, abs=1e-14)
    assert m.concurrence == pytest.approx(1, abs=1e-12)
    assert m.bell == pytest.approx(2 * math.sqrt(2), abs=1e-12)


def test_wootters_on_werner_states():
    singlet = oracle.SINGLET[:, None]
    for p in (0.0, 0.2, 1 / 3, 0.5, 0.9, 1.0):
        rho = p * (singlet @ singlet.conj().T) + (1 - p) * np.eye(4) / 4
        expected = max(0.0, (3 * p - 1) / 2)
        assert oracle.wootters_concurrence(rho) == pytest.approx(expected, abs=1e-12)


def test_horodecki_on_werner_states():
    singlet = oracle.SINGLET[:, None]
    for p in (0.0, 0.5, 1 / math.sqrt(2), 1.0):
        rho = p * (singlet @ singlet.conj().T) + (1 - p) * np.eye(4) / 4
        assert oracle.horodecki_bell(rho) == pytest.approx(2 * math.sqrt(2) * p, abs=1e-12)


def test_sector_basis_counts():
    assert oracle.sector_basis(8).size == math.comb(8, 4)
    assert oracle.sector_basis(12).size == math.comb(12, 6)


def test_rejects_large_rings():
    with pytest.raises(ValueError):
        oracle.ground_state_exact(ChainSpec(np.ones(16)))


@pytest.mark.parametrize("L", [4, 6, 8, 10])
@pytest.mark.parametrize("model", [Model.UNCORRELATED, Model.CORRELATED])
def test_full_space_agrees_with_sector(L, model):
    # meta-test: the S^z = 0 restriction does not miss the true ground state
    chain = build_chain(model, L, DisorderSpec.powerlaw(1), 31 + L)
    full = np.linalg.eigvalsh(oracle.full_hamiltonian(chain))[0]
    assert oracle.ground_state_exact(chain).energy == pytest.approx(full, abs=1e-10)


def test_state_normalized_and_real_symmetric():
    chain = build_chain(Model.UNCORRELATED, 10, DisorderSpec.powerlaw(2), 4)
    state = oracle.ground_state_exact(chain)
    assert np.linalg.norm(state.psi) == pytest.approx(1.0, abs=1e-12)
    assert state.gap >= 0
    rho = oracle.reduced_density_matrix(state, 1, 6)
    assert np.allclose(rho, rho.conj().T)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.linalg.eigvalsh(rho) > -1e-12)


def test_l12_d5_all_pairs_match_free_fermions():
    chain = build_chain(Model.UNCORRELATED, 12, DisorderSpec.powerlaw(5), 2024)
    state = oracle.ground_state_exact(chain)
    t = all_pairs(ground_state_correlations(chain).G)
    F, B = fidelity(t.cxx, t.czz), bell(t.cxx, t.czz)
    C = concurrence(F)
    for p in range(len(t)):
        m = oracle.oracle_measures(state, int(t.i[p]), int(t.j[p]))
        assert abs(m.cxx - t.cxx[p]) < 1e-9
        assert abs(m.czz - t.czz[p]) < 1e-10
        assert abs(m.cyy - m.cxx) < 1e-10
        assert abs(m.concurrence - C[p]) < 1e-8
        assert abs(m.bell - B[p]) < 1e-9


def test_hopping_correlation_matches_g():
    chain = build_chain(Model.CORRELATED, 8, DisorderSpec.powerlaw(1), 9)
    state = oracle.ground_state_exact(chain)
    G = ground_state_correlations(chain).G
    H = np.array([[oracle.hopping_correlation(state, i, j) for j in range(8)] for i in range(8)])
    assert np.allclose(H, G, atol=1e-10)


def test_verification_two_site_and_small_suite():
    report = run_verification(sizes=(2, 4, 6), seeds=3)
    assert report.passed, [f.to_dict() for f in report.failures()]
    assert report.chains + len(report.degenerate) == 3 * 2 * 3 * 3
    assert set(report.checks) == set(TOLERANCES)


def test_verification_detects_corruption():
    def corrupt(G):
        G[2, 3] += 1e-6
        G[3, 2] += 1e-6
        return G

    report = run_verification(sizes=(8,), seeds=1, strengths=("1",), corrupt=corrupt)
    assert not report.passed
    failed = {c.formula for c in report.failures()}
    assert {"G", "czz"} <= failed
    worst = report.checks["czz"].worst
    assert worst["L"] == 8 and worst["pair"] is not None
