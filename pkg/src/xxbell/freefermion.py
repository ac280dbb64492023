"""Jordan-Wigner solution of the periodic XX ring.

With ``c_i`` the Jordan-Wigner fermions (spin up = occupied) the ring becomes
``H = sum_i J_i/2 (c_i^+ c_{i+1} + h.c.)``, except that the wrap-around bond
picks up a factor ``-(-1)^N``: antiperiodic in the even-N sector, periodic in
the odd-N sector.  The ground state has zero magnetization, i.e. ``L/2``
fermions, so the parity of ``L/2`` selects the sector.

Filling all ``L/2`` modes makes ``G`` depend on the even-to-odd hopping
block ``B`` only through its orthogonal polar factor ``W = U V^T``.  Double
precision resolves ``W`` to about ``eps * s_max / (s_min + s_next)``, but
only while ``s_min`` is large enough to fix the sign of ``det B``; below
``eps * s_max`` the pairing of the weakest mode is a coin flip.  At strong
disorder ``s_min`` can be many orders of magnitude smaller, so whenever
``s_min < POLAR_TRIGGER * s_max`` the polar factor is recomputed by a scaled
Newton iteration in decimal arithmetic, with enough digits for an exact
bound on the condition number of ``B``.
"""

from __future__ import annotations

import decimal
import enum
import math
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction

import numpy as np

from .model import ChainSpec

__all__ = [
    "Sector",
    "FermionSolution",
    "SectorError",
    "hopping_matrix",
    "diagonalize_symmetric",
    "bipartite_modes",
    "cyclic_bidiagonal_det",
    "polar_factor",
    "ground_state_correlations",
    "ZERO_MODE_TOL",
]

ZERO_MODE_TOL = 1e-12
SYMMETRY_TOL = 1e-12
DEGENERACY_TOL = 1e-12
# extended precision takes over when s_min < POLAR_TRIGGER * s_max
POLAR_TRIGGER = 1e-6
POLAR_GUARD_DIGITS = 30


class Sector(str, enum.Enum):
    EVEN = "even"
    ODD = "odd"

    @property
    def boundary_sign(self) -> int:
        return -1 if self is Sector.EVEN else 1


class SectorError(RuntimeError):
    """The single-particle problem could not be solved for a realization."""


@dataclass(frozen=True)
class FermionSolution:
    sector: Sector
    eigenvalues: np.ndarray
    occupied: np.ndarray
    G: np.ndarray
    ground_energy: float
    zero_mode_filled: bool = False
    degenerate_sectors: bool = False
    other_energy: float | None = field(default=None, repr=False)
    extended_precision: bool = False

    @property
    def occupied_count(self) -> int:
        return int(self.occupied.sum())

    @property
    def L(self) -> int:
        return self.G.shape[0]

    def debug_record(self) -> dict:
        return {
            "sector": self.sector.value,
            "eigenvalues": [float(e) for e in self.eigenvalues],
            "ground_energy": float(self.ground_energy),
            "extended_precision": self.extended_precision,
        }


def hopping_matrix(chain: ChainSpec, boundary_sign: int) -> np.ndarray:
    """Single-particle hopping matrix with ``T[i, i+1] = J_i / 2``.

    The wrap-around entry is ``boundary_sign * J_L / 2``.  For ``L = 2`` the
    ring is a single bond and ``boundary_sign`` has no effect.
    """
    if boundary_sign not in (1, -1):
        raise ValueError("boundary_sign must be +1 or -1")
    J = chain.couplings
    L = chain.length
    T = np.zeros((L, L))
    idx = np.arange(L - 1)
    T[idx, idx + 1] = T[idx + 1, idx] = 0.5 * J[: L - 1]
    if L > 2:
        T[L - 1, 0] = T[0, L - 1] = boundary_sign * 0.5 * J[L - 1]
    return T


def diagonalize_symmetric(T: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors (columns) of ``T``."""
    T = np.asarray(T, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(1.0, float(np.abs(T).max(initial=0.0)))
    if np.abs(T - T.T).max(initial=0.0) > SYMMETRY_TOL * scale:
        raise ValueError("matrix is not symmetric")
    try:
        return np.linalg.eigh(T)
    except np.linalg.LinAlgError as exc:
        raise SectorError(f"eigensolver failed: {exc}") from exc


def bipartite_modes(T: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Singular value decomposition of the even-to-odd block of ``T``.

    An even ring is bipartite, so ``T`` only couples even sites ``A`` to odd
    sites ``B``.  With ``T[A, B] = U diag(s) V^T`` the modes come in exact
    pairs ``(u_k, +-v_k) / sqrt(2)`` with energies ``+-s_k``; building them
    this way keeps ``G_ii = 1/2`` and the sublattice zeros of ``G`` exact
    even when ``s_k`` is tiny.  Returns ``(s, U, V)`` with ``s`` descending.
    """
    L = T.shape[0]
    if L % 2:
        raise ValueError("bipartite decomposition needs an even ring")
    try:
        U, s, Vt = np.linalg.svd(T[0::2, 1::2])
    except np.linalg.LinAlgError as exc:
        raise SectorError(f"SVD failed: {exc}") from exc
    return s, U, Vt.T


def cyclic_bidiagonal_det(B: np.ndarray) -> Fraction:
    """Exact determinant of an even-to-odd ring block.

    Row ``k`` (site ``2k``) couples to columns ``k`` and ``k - 1``, the
    latter wrapping to the corner ``B[0, n-1]``.  Only the identity and the
    full cyclic shift survive in the Leibniz sum, and every float is an exact
    rational, so the result is exact.
    """
    n = B.shape[0]
    diag = math.prod((Fraction(float(B[k, k])) for k in range(n)), start=Fraction(1))
    if n == 1:
        return diag
    sub = math.prod((Fraction(float(B[k, k - 1])) for k in range(1, n)), start=Fraction(1))
    return diag + (-1) ** (n - 1) * Fraction(float(B[0, n - 1])) * sub


def _inverse_transpose(X: np.ndarray) -> np.ndarray:
    """``X^{-T}`` by Gauss-Jordan elimination with partial pivoting (object arrays)."""
    n = X.shape[0]
    eye = np.full((n, n), Decimal(0), dtype=object)
    np.fill_diagonal(eye, Decimal(1))
    A = np.concatenate([X, eye], axis=1)
    for c in range(n):
        p = c + max(range(n - c), key=lambda r: abs(A[c + r, c]))
        if A[p, c] == 0:
            raise SectorError("hopping block is exactly singular")
        if p != c:
            A[[c, p]] = A[[p, c]]
        A[c] = A[c] / A[c, c]
        col = A[:, c].copy()
        col[c] = Decimal(0)
        A -= np.outer(col, A[c])
    return A[:, n:].T


def polar_factor(B: np.ndarray, digits: int, max_iter: int = 100) -> np.ndarray:
    """Orthogonal polar factor of a nonsingular ``B``, computed with ``digits`` decimal digits.

    Scaled Newton iteration ``X <- (z X + X^{-T} / z) / 2`` with Frobenius
    scaling; floats convert to ``Decimal`` exactly, so the only error is the
    working precision, which must exceed ``log10 cond(B)``.
    """
    with decimal.localcontext() as ctx:
        ctx.prec = digits
        X = np.array([[Decimal(float(x)) for x in row] for row in B], dtype=object)
        tol = Decimal(10) ** -(POLAR_GUARD_DIGITS - 5)
        for _ in range(max_iter):
            Y = _inverse_transpose(X)
            z = (_frobenius(Y) / _frobenius(X)).sqrt()
            X_next = (X * z + Y / z) / 2
            step = max(abs(d) for d in (X_next - X).ravel())
            X = X_next
            if step < tol:
                return np.array([[float(x) for x in row] for row in X])
    raise SectorError(f"polar iteration did not converge in {max_iter} steps")


def _frobenius(X: np.ndarray) -> Decimal:
    return sum((x * x for x in X.ravel()), Decimal(0)).sqrt()


def _needs_extended_precision(s: np.ndarray) -> bool:
    return s.size >= 2 and bool(s[-1] < POLAR_TRIGGER * s[0])


def _extended_polar(B: np.ndarray, s_max: float) -> np.ndarray | None:
    """Polar factor of ``B`` in extended precision; ``None`` if ``B`` is exactly singular.

    ``prod(s) = |det B|`` bounds ``cond(B) <= s_max**n / |det B|``.
    """
    det = cyclic_bidiagonal_det(B)
    if det == 0:
        return None
    n = B.shape[0]
    log_cond = n * math.log10(s_max) - _log10_fraction(abs(det))
    return polar_factor(B, int(math.ceil(log_cond)) + POLAR_GUARD_DIGITS)


def _log10_fraction(q: Fraction) -> float:
    return math.log10(q.numerator) - math.log10(q.denominator)


def _best_filling(chain: ChainSpec, sector: Sector, particles: int | None):
    """Lowest filling of ``sector`` consistent with its parity.

    With ``particles`` given, exactly that many modes are filled (the
    ``-s_k`` branch, lowest first).  Without it, every strictly negative
    mode is filled and one zero mode is added if the parity needs it;
    ``None`` is returned when that is impossible.
    """
    s, U, V = bipartite_modes(hopping_matrix(chain, sector.boundary_sign))
    if particles is not None:
        negative = np.ones(s.size, bool)
    else:
        negative = s > ZERO_MODE_TOL
        if bool(negative.sum() % 2) != (sector is Sector.ODD):
            zero = np.flatnonzero(~negative)
            if zero.size == 0:
                return None
            negative[zero[0]] = True
    energy = -float(np.sum(s[negative]))
    zero_filled = bool(np.any(s[negative] <= ZERO_MODE_TOL))
    # ascending spectrum: -s (s is descending), then +s ascending
    eps = np.concatenate([-s, s[::-1]])
    occupied = np.concatenate([negative, np.zeros(s.size, bool)])
    return eps, (U[:, negative], V[:, negative]), occupied, energy, zero_filled


def ground_state_correlations(chain: ChainSpec) -> FermionSolution:
    """Ground-state ``G_ij = <c_i^+ c_j>`` of the ring in the ``S^z = 0`` sector.

    Zero magnetization means ``L/2`` fermions, which fixes the parity
    sector to that of ``L/2``; all ``L/2`` modes of the ``-s_k`` branch
    are filled, including modes whose energy is numerically zero (a
    weakly coupled singlet).  The best filling of the other sector, with
    any particle number, is kept as ``other_energy``; ``degenerate_sectors``
    is set when it lies within ``1e-12`` of the ground energy.  When the
    smallest singular values are not resolved in double precision, the
    off-diagonal block comes from :func:`polar_factor` instead
    (``extended_precision`` is then set).
    """
    L = chain.length
    sector = Sector.ODD if (L // 2) % 2 else Sector.EVEN
    eps, (Uo, Vo), occupied, energy, zero_filled = _best_filling(chain, sector, L // 2)
    s = -eps[: L // 2]
    W = None
    if _needs_extended_precision(s):
        B = hopping_matrix(chain, sector.boundary_sign)[0::2, 1::2]
        W = _extended_polar(B, float(s[0]))
    rival = _best_filling(chain, Sector.EVEN if sector is Sector.ODD else Sector.ODD, None)
    other = None if rival is None else rival[3]
    degenerate = other is not None and abs(other - energy) <= DEGENERACY_TOL * max(1.0, abs(energy))

    # occupied modes (u, -v)/sqrt(2) written back in site order
    G = np.zeros((L, L))
    if W is None:
        G[0::2, 0::2] = 0.5 * (Uo @ Uo.T)
        G[1::2, 1::2] = 0.5 * (Vo @ Vo.T)
        off = -0.5 * (Uo @ Vo.T)
    else:
        # all L/2 modes filled: U U^T = V V^T = 1 and only W = U V^T remains
        G[0::2, 0::2] = 0.5 * np.eye(L // 2)
        G[1::2, 1::2] = 0.5 * np.eye(L // 2)
        off = -0.5 * W
    G[0::2, 1::2] = off
    G[1::2, 0::2] = off.T
    G.setflags(write=False)
    return FermionSolution(
        sector=sector,
        eigenvalues=eps,
        occupied=occupied,
        G=G,
        ground_energy=energy,
        zero_mode_filled=zero_filled,
        degenerate_sectors=degenerate,
        other_energy=other,
        extended_precision=W is not None,
    )
