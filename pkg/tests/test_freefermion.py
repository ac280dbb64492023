import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import xxbell.freefermion as ff
from xxbell.correlators import all_pairs
from xxbell.freefermion import (
    Sector,
    bipartite_modes,
    cyclic_bidiagonal_det,
    diagonalize_symmetric,
    ground_state_correlations,
    hopping_matrix,
    polar_factor,
)
from xxbell.measures import evaluate_pairs
from xxbell.model import ChainSpec, DisorderSpec, Model, build_chain, derive_seed


def test_uniform_l4_spectrum_and_sector():
    chain = build_chain(Model.UNIFORM, 4, None, 0)
    even = np.linalg.eigvalsh(hopping_matrix(chain, Sector.EVEN.boundary_sign))
    # antiperiodic ring: cos(k) with k = +-pi/4, +-3pi/4
    assert np.allclose(np.sort(even), np.sort(np.cos(np.pi / 4 * np.array([1, 3, 5, 7]))))
    sol = ground_state_correlations(chain)
    assert sol.sector is Sector.EVEN
    assert sol.occupied_count == 2
    assert sol.ground_energy == pytest.approx(-math.sqrt(2), abs=1e-14)


def test_two_site_is_single_bond():
    sol = ground_state_correlations(ChainSpec([1.0, 1.0]))
    assert sol.ground_energy == pytest.approx(-0.5, abs=1e-15)
    assert sol.occupied_count == 1
    assert np.allclose(sol.G, [[0.5, -0.5], [-0.5, 0.5]], atol=1e-15)


def test_hopping_matrix_boundary():
    chain = ChainSpec([1.0, 0.5, 0.25, 0.125])
    T = hopping_matrix(chain, -1)
    assert T[0, 1] == 0.5 and T[1, 2] == 0.25 and T[2, 3] == 0.125
    assert T[3, 0] == -0.0625
    with pytest.raises(ValueError):
        hopping_matrix(chain, 0)


def test_diagonalize_symmetric_rejects_asymmetric():
    with pytest.raises(ValueError):
        diagonalize_symmetric(np.array([[0.0, 1.0], [0.5, 0.0]]))
    w, v = diagonalize_symmetric(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(w, [-1, 1])


def test_bipartite_modes_match_eigh():
    chain = build_chain(Model.UNCORRELATED, 12, DisorderSpec.powerlaw(1), 5)
    T = hopping_matrix(chain, -1)
    s, U, V = bipartite_modes(T)
    assert np.allclose(np.sort(np.concatenate([-s, s])), np.linalg.eigvalsh(T), atol=1e-13)


chains = st.builds(
    lambda half, seed, d, model: build_chain(model, 2 * half, DisorderSpec.powerlaw(d), seed),
    st.integers(1, 20),
    st.integers(0, 2**64 - 1),
    st.sampled_from(["0", "0.1", "1", "3"]),
    st.sampled_from([Model.UNCORRELATED, Model.CORRELATED]),
)


@given(chains)
@settings(max_examples=80, deadline=None)
def test_correlation_matrix_invariants(chain):
    sol = ground_state_correlations(chain)
    G = sol.G
    L = chain.L
    assert np.allclose(G, G.T, atol=1e-14)
    assert np.allclose(G @ G, G, atol=1e-10)  # projector onto the filled modes
    assert np.allclose(np.diag(G), 0.5, atol=1e-12)  # half filling on a bipartite ring
    assert np.trace(G) == pytest.approx(L / 2, abs=1e-10)
    assert sol.occupied_count == L // 2
    # same-sublattice correlations vanish
    assert np.allclose(G[0::2, 0::2] - 0.5 * np.eye(L // 2), 0, atol=1e-12)
    assert sol.occupied_count % 2 == (1 if sol.sector is Sector.ODD else 0)
    assert sol.ground_energy == pytest.approx(float(np.sum(sol.eigenvalues[sol.occupied])), abs=1e-12)


def test_energy_scales_with_couplings_g_invariant():
    chain = build_chain(Model.UNCORRELATED, 16, DisorderSpec.powerlaw(2), 99)
    a = ground_state_correlations(chain)
    b = ground_state_correlations(chain.scaled(3.0))
    assert b.ground_energy == pytest.approx(3.0 * a.ground_energy, rel=1e-12)
    assert np.allclose(a.G, b.G, atol=1e-10)


def test_sector_choice_is_lower_energy():
    for seed in range(20):
        chain = build_chain(Model.UNCORRELATED, 10, DisorderSpec.powerlaw(1), seed)
        sol = ground_state_correlations(chain)
        if sol.other_energy is not None:
            assert sol.ground_energy <= sol.other_energy + 1e-12


def test_debug_record_is_json_ready():
    import json

    sol = ground_state_correlations(build_chain(Model.UNIFORM, 6, None, 0))
    rec = json.loads(json.dumps(sol.debug_record()))
    assert rec["sector"] in ("even", "odd")
    assert len(rec["eigenvalues"]) == 6


def _ring_block(chain, sector=Sector.EVEN):
    return hopping_matrix(chain, sector.boundary_sign)[0::2, 1::2]


@pytest.mark.parametrize("sector", [Sector.EVEN, Sector.ODD])
def test_cyclic_bidiagonal_det_is_exact(sector):
    chain = build_chain(Model.UNCORRELATED, 12, DisorderSpec.powerlaw(1), 3)
    B = _ring_block(chain, sector)
    assert float(cyclic_bidiagonal_det(B)) == pytest.approx(np.linalg.det(B), rel=1e-12)
    # two-site ring: a single entry
    assert float(cyclic_bidiagonal_det(np.array([[0.5]]))) == 0.5


def test_polar_factor_matches_svd_when_well_conditioned():
    chain = build_chain(Model.UNCORRELATED, 16, DisorderSpec.powerlaw("0.5"), 1)
    B = _ring_block(chain)
    U, _, Vt = np.linalg.svd(B)
    assert np.abs(polar_factor(B, 40) - U @ Vt).max() < 1e-13


def test_forced_extended_precision_agrees_with_double(monkeypatch):
    chain = build_chain(Model.CORRELATED, 32, DisorderSpec.powerlaw(1), 11)
    plain = ground_state_correlations(chain)
    monkeypatch.setattr(ff, "POLAR_TRIGGER", math.inf)
    forced = ground_state_correlations(chain)
    assert forced.extended_precision and not plain.extended_precision
    assert np.abs(forced.G - plain.G).max() < 1e-12


def _strong_disorder_chain():
    # D = 10 at L = 64: singular values of the ring block reach ~1e-39
    return build_chain(Model.UNCORRELATED, 64, DisorderSpec.powerlaw(10), derive_seed(20170601, 8))


def test_strong_disorder_uses_extended_precision_and_stays_physical():
    chain = _strong_disorder_chain()
    sol = ground_state_correlations(chain)
    assert sol.extended_precision
    G = sol.G
    assert np.abs(G @ G - G).max() < 1e-12
    assert np.allclose(np.diag(G), 0.5, atol=1e-15)
    counters = evaluate_pairs(all_pairs(G))
    assert counters.fatal == 0 and counters.xx_below_zz == 0


def test_strong_disorder_matches_high_precision_svd():
    mpmath = pytest.importorskip("mpmath")
    chain = _strong_disorder_chain()
    B = _ring_block(chain)
    with mpmath.workdps(120):
        U, _, V = mpmath.svd_r(mpmath.matrix(B.tolist()))
        W = np.array((U * V).tolist(), dtype=float)
    G = ground_state_correlations(chain).G
    assert np.abs(G[0::2, 1::2] + 0.5 * W).max() < 1e-13
    U2, _, Vt2 = np.linalg.svd(B)
    # the plain double-precision polar factor is visibly wrong here
    assert np.abs(U2 @ Vt2 - W).max() > 1e-3


def test_unresolved_smallest_mode_alone_triggers_extended_precision():
    # s_min ~ 2e-21 lies below double-precision noise while s_next ~ 9e-6 does not
    chain = build_chain(Model.UNCORRELATED, 20, DisorderSpec.powerlaw(8), 118431401)
    sol = ground_state_correlations(chain)
    assert sol.extended_precision
    counters = evaluate_pairs(all_pairs(sol.G))
    assert counters.fatal == 0 and counters.xx_below_zz == 0
