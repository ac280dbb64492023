"""Brute-force exact diagonalization of small XX rings.

Works directly in the spin basis of the total-S^z = 0 sector and shares
nothing with the fermion solver except :class:`~xxbell.model.ChainSpec`.
Local basis: index 0 is spin up (|+>), index 1 is spin down (|->), so the
two-site basis order is ``++, +-, -+, --``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .model import ChainSpec

__all__ = [
    "MAX_L",
    "ExactState",
    "OracleMeasures",
    "sector_basis",
    "sector_hamiltonian",
    "full_hamiltonian",
    "ground_state_exact",
    "reduced_density_matrix",
    "wootters_concurrence",
    "horodecki_bell",
    "magnetization",
    "oracle_measures",
    "hopping_correlation",
]

MAX_L = 14

SX = np.array([[0, 1], [1, 0]], dtype=complex) / 2
SY = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
SZ = np.array([[1, 0], [0, -1]], dtype=complex) / 2
SINGLET = np.array([0, 1, -1, 0], dtype=complex) / math.sqrt(2)
SIGMA_YY = np.kron(2 * SY, 2 * SY)


def _bonds(chain: ChainSpec):
    L = chain.length
    if L == 2:
        return [(0, 1, float(chain.couplings[0]))]
    return [(b, (b + 1) % L, float(chain.couplings[b])) for b in range(L)]


def _site_bit(site: int, L: int) -> int:
    # site 0 is the most significant bit of the full-space index; bit 1 = down
    return 1 << (L - 1 - site)


def sector_basis(L: int) -> np.ndarray:
    """Full-space indices of the configurations with ``L/2`` down spins."""
    states = []
    for downs in itertools.combinations(range(L), L // 2):
        states.append(sum(_site_bit(s, L) for s in downs))
    return np.array(sorted(states), dtype=np.int64)


def sector_hamiltonian(chain: ChainSpec, basis: np.ndarray | None = None) -> np.ndarray:
    L = chain.length
    if basis is None:
        basis = sector_basis(L)
    lookup = {int(s): n for n, s in enumerate(basis)}
    H = np.zeros((basis.size, basis.size))
    for n, s in enumerate(basis):
        s = int(s)
        for a, b, J in _bonds(chain):
            ma, mb = _site_bit(a, L), _site_bit(b, L)
            if bool(s & ma) != bool(s & mb):
                # S^x S^x + S^y S^y = (S^+ S^- + S^- S^+)/2 flips an antiparallel pair
                H[lookup[s ^ ma ^ mb], n] += 0.5 * J
    return H


def full_hamiltonian(chain: ChainSpec) -> np.ndarray:
    """Dense 2**L Hamiltonian from Kronecker products; meta-checks only."""
    L = chain.length
    if L > 12:
        raise ValueError("full-space Hamiltonian limited to L <= 12")

    def op(o, site):
        mats = [np.eye(2)] * L
        mats[site] = o
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        return out

    H = np.zeros((2**L, 2**L), dtype=complex)
    for a, b, J in _bonds(chain):
        H += J * (op(SX, a) @ op(SX, b) + op(SY, a) @ op(SY, b))
    return H


@dataclass(frozen=True)
class ExactState:
    L: int
    energy: float
    psi: np.ndarray
    flip_parity: int
    other_parity_energy: float
    degenerate: bool

    @property
    def gap(self) -> float:
        return self.other_parity_energy - self.energy

    def tensor(self) -> np.ndarray:
        return self.psi.reshape((2,) * self.L)


def _flip_projector(basis: np.ndarray, L: int, parity: int) -> np.ndarray:
    """Columns ``(|s> + parity |~s>)/sqrt(2)`` for the flip-paired configurations."""
    full = (1 << L) - 1
    index = {int(s): n for n, s in enumerate(basis)}
    reps = [n for n, s in enumerate(basis) if int(s) < (int(s) ^ full)]
    P = np.zeros((basis.size, len(reps)))
    for col, n in enumerate(reps):
        P[n, col] = 1 / math.sqrt(2)
        P[index[int(basis[n]) ^ full], col] = parity / math.sqrt(2)
    return P


def ground_state_exact(chain: ChainSpec, degeneracy_tol: float = 1e-12) -> ExactState:
    """Lowest eigenstate of the ring in the S^z_total = 0 sector.

    The global spin flip commutes with H and maps the sector onto itself,
    so both flip-parity blocks are diagonalized separately; this keeps a
    weakly bound singlet from mixing with its near-degenerate triplet.  If
    the two block ground energies agree within ``degeneracy_tol`` the state
    is flagged ``degenerate`` (both energies are reported).  The returned
    state is embedded in the full 2**L space.
    """
    L = chain.length
    if L > MAX_L:
        raise ValueError(f"oracle supports L <= {MAX_L}, got {L}")
    basis = sector_basis(L)
    H = sector_hamiltonian(chain, basis)
    blocks = {}
    for parity in (1, -1):
        P = _flip_projector(basis, L, parity)
        vals, vecs = np.linalg.eigh(P.T @ H @ P)
        blocks[parity] = (float(vals[0]), P @ vecs[:, 0])
    parity = 1 if blocks[1][0] <= blocks[-1][0] else -1
    energy, vec = blocks[parity]
    other = blocks[-parity][0]
    psi = np.zeros(2**L)
    psi[basis] = vec
    degenerate = abs(other - energy) <= degeneracy_tol * max(1.0, abs(energy))
    return ExactState(L, energy, psi, parity, other, degenerate)


def _pair_factor(state: ExactState, i: int, j: int) -> np.ndarray:
    if i == j:
        raise ValueError("need two distinct sites")
    return np.moveaxis(state.tensor(), (i, j), (0, 1)).reshape(4, -1).astype(complex)


def reduced_density_matrix(state: ExactState, i: int, j: int) -> np.ndarray:
    """Two-site density matrix of sites ``i`` and ``j`` (basis ``++, +-, -+, --``)."""
    t = _pair_factor(state, i, j)
    return t @ t.conj().T


def wootters_concurrence(rho: np.ndarray, factor: np.ndarray | None = None) -> float:
    """Wootters concurrence ``max(0, l1 - l2 - l3 - l4)``.

    The ``l_k`` are the square roots of the eigenvalues of
    ``rho (sy x sy) rho* (sy x sy)``, computed here as the singular values of
    ``sqrt(rho) (sy x sy) sqrt(rho)*``.  Passing ``factor`` with
    ``rho = factor @ factor^H`` lets ``sqrt(rho)`` come from an SVD, which
    keeps vanishing eigenvalues at machine precision instead of its square
    root.
    """
    if factor is not None:
        u, s, _ = np.linalg.svd(factor, full_matrices=False)
    else:
        w, u = np.linalg.eigh(rho)
        s = np.sqrt(np.clip(w, 0.0, None))
    root = (u * s) @ u.conj().T
    lam = np.linalg.svd(root @ SIGMA_YY @ root.conj(), compute_uv=False)
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


@dataclass(frozen=True)
class OracleMeasures:
    cxx: float
    cyy: float
    czz: float
    fidelity: float
    concurrence: float
    bell: float


def oracle_measures(state: ExactState, i: int, j: int) -> OracleMeasures:
    t = _pair_factor(state, i, j)
    rho = t @ t.conj().T
    cxx = float(np.trace(rho @ np.kron(SX, SX)).real)
    cyy = float(np.trace(rho @ np.kron(SY, SY)).real)
    czz = float(np.trace(rho @ np.kron(SZ, SZ)).real)
    fidelity = float((SINGLET.conj() @ rho @ SINGLET).real)
    return OracleMeasures(cxx, cyy, czz, fidelity, wootters_concurrence(rho, t), horodecki_bell(rho))


_PAULI = (2 * SX, 2 * SY, 2 * SZ)


def horodecki_bell(rho: np.ndarray) -> float:
    """Maximal CHSH value ``2 sqrt(m1 + m2)`` of a two-qubit state.

    ``m1, m2`` are the two largest eigenvalues of ``T^T T`` with the
    correlation tensor ``T_ab = Tr(rho sigma_a x sigma_b)``; nothing about
    the XX structure is assumed.
    """
    T = np.array([[np.trace(rho @ np.kron(a, b)).real for b in _PAULI] for a in _PAULI])
    m = np.linalg.eigvalsh(T.T @ T)
    return float(2.0 * math.sqrt(max(0.0, m[-1] + m[-2])))


def magnetization(state: ExactState, i: int) -> float:
    p = np.abs(np.moveaxis(state.tensor(), i, 0).reshape(2, -1)) ** 2
    return 0.5 * float(p[0].sum() - p[1].sum())


def hopping_correlation(state: ExactState, i: int, j: int) -> float:
    """``<c_i^+ c_j>`` rebuilt from spin operators.

    For ``i < j``: ``c_i^+ c_j = S^+_i prod_{i<k<j} (-1)^{n_k} S^-_j`` with
    ``n_k = 1`` for spin up; ``i > j`` follows by hermiticity (real state).
    """
    if i == j:
        return magnetization(state, i) + 0.5
    if i > j:
        i, j = j, i
    L = state.L
    psi = state.psi
    mi, mj = _site_bit(i, L), _site_bit(j, L)
    between = sum(_site_bit(k, L) for k in range(i + 1, j))
    s = np.flatnonzero(psi)
    # S^-_j needs site j up (bit clear), S^+_i needs site i down (bit set)
    s = s[((s & mj) == 0) & ((s & mi) != 0)]
    ups = np.bitwise_count(~s & between)
    sign = 1.0 - 2.0 * (ups & 1)
    return float(np.sum(psi[s ^ mj ^ mi] * psi[s] * sign))
