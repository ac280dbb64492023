"""Spin-spin correlators of the XX ground state from ``G = <c^+ c>``.

``C^zz`` follows from Wick's theorem.  ``C^xx`` is a Toeplitz-like string
determinant: with ``Gamma = 2G - 1``,

    C^xx_ij = det[Gamma[i+k, i+1+l]]_{k,l=0..j-i-1} / 4,   i < j,

the string running over the sites between ``i`` and ``j`` in increasing order.
For a fixed anchor ``i`` the matrices for growing ``j`` are the leading
principal blocks of one matrix, so :func:`all_pairs` borders a QR
factorization one row and column at a time with Givens rotations instead
of refactoring each block.

Sites are zero-based throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Iterator

import numba
import numpy as np

__all__ = [
    "UNDERFLOW",
    "PairObservables",
    "PairTable",
    "ring_distance",
    "czz",
    "cxx",
    "all_pairs",
    "naive_pairs",
]

UNDERFLOW = 1e-300
_LOG_UNDERFLOW = math.log(UNDERFLOW)


def ring_distance(i, j, L):
    d = np.abs(np.asarray(j) - np.asarray(i)) % L
    return np.minimum(d, L - d)[()]


def _gamma(G: np.ndarray) -> np.ndarray:
    return 2.0 * np.asarray(G, dtype=float) - np.eye(len(G))


def czz(G: np.ndarray, i: int, j: int) -> float:
    if i == j:
        raise ValueError("czz needs two distinct sites")
    return float((G[i, i] - 0.5) * (G[j, j] - 0.5) - G[i, j] ** 2)


def cxx(G: np.ndarray, i: int, j: int) -> float:
    """String determinant by a fresh LU factorization (partial pivoting).

    Determinants smaller than ``UNDERFLOW`` in magnitude are returned as 0.
    """
    if not i < j:
        raise ValueError(f"cxx needs i < j, got ({i}, {j})")
    gamma = _gamma(G)
    M = gamma[i:j, i + 1 : j + 1]
    sign, logabs = np.linalg.slogdet(M)
    if sign == 0 or logabs < _LOG_UNDERFLOW:
        return 0.0
    return 0.25 * float(sign * math.exp(logabs))


@numba.njit(cache=True)
def _anchor_dets(gamma, i, rmax, dets, flags):
    """Leading r x r string determinants of anchor ``i`` for r = 1..rmax.

    ``A[k, l] = gamma[i + k, i + 1 + l]``.  ``A_r = Q_r R_r`` is grown by
    appending a column (``R[:r, r] = Q_r^T a``) and then a row, which is
    rotated into ``R`` by Givens rotations; rotations have unit determinant,
    so ``det A_r`` is the product of ``diag(R_r)``.
    """
    n = rmax
    R = np.zeros((n, n))
    Qt = np.zeros((n, n))  # Q transposed: row a is column a of Q
    w = np.zeros(n)
    for r in range(n):
        for a in range(r):
            s = 0.0
            for k in range(r):
                s += Qt[a, k] * gamma[i + k, i + 1 + r]
            R[a, r] = s
        for l in range(r + 1):
            w[l] = gamma[i + r, i + 1 + l]
        for k in range(r):
            Qt[k, r] = 0.0
            Qt[r, k] = 0.0
        Qt[r, r] = 1.0
        for a in range(r):
            y = w[a]
            if y == 0.0:
                continue
            x = R[a, a]
            rho = math.hypot(x, y)
            c = x / rho
            s = y / rho
            for l in range(a, r + 1):
                ra = R[a, l]
                wl = w[l]
                R[a, l] = c * ra + s * wl
                w[l] = -s * ra + c * wl
            for k in range(r + 1):
                qa = Qt[a, k]
                qr = Qt[r, k]
                Qt[a, k] = c * qa + s * qr
                Qt[r, k] = -s * qa + c * qr
        R[r, r] = w[r]
        for l in range(r):
            R[r, l] = 0.0

        logabs = 0.0
        prod = 1.0
        zero = False
        for a in range(r + 1):
            d = R[a, a]
            if d == 0.0:
                zero = True
                break
            logabs += math.log(abs(d))
            prod *= d
        if zero:
            dets[r] = 0.0
            flags[r] = 0
        elif logabs < _LOG_UNDERFLOW:
            dets[r] = 0.0
            flags[r] = 1
        else:
            dets[r] = prod
            flags[r] = 0


@numba.njit(cache=True)
def _all_pairs_kernel(G, gamma, max_sep):
    L = G.shape[0]
    half = L // 2
    count = 0
    for i in range(L - 1):
        for j in range(i + 1, L):
            d = j - i
            if L - d < d:
                d = L - d
            if d <= max_sep:
                count += 1
    ii = np.empty(count, np.int64)
    jj = np.empty(count, np.int64)
    sep = np.empty(count, np.int64)
    xx = np.empty(count)
    zz = np.empty(count)
    clamped = 0
    dets = np.empty(L)
    flags = np.empty(L, np.int64)
    p = 0
    for i in range(L - 1):
        # longest string needed: pairs near the far end may be close around the ring
        rmax = L - 1 - i
        if i + 1 > max_sep and max_sep < rmax:
            rmax = max_sep
        if rmax <= 0:
            continue
        _anchor_dets(gamma, i, rmax, dets, flags)
        for r in range(1, rmax + 1):
            j = i + r
            d = r
            if L - r < d:
                d = L - r
            if d > max_sep:
                continue
            ii[p] = i
            jj[p] = j
            sep[p] = d
            xx[p] = 0.25 * dets[r - 1]
            clamped += flags[r - 1]
            zz[p] = (G[i, i] - 0.5) * (G[j, j] - 0.5) - G[i, j] * G[i, j]
            p += 1
    return ii, jj, sep, xx, zz, clamped


@dataclass(frozen=True)
class PairObservables:
    i: int
    j: int
    separation: int
    cxx: float
    czz: float
    fidelity: float = math.nan
    concurrence: float = math.nan
    bell: float = math.nan
    nonlocal_: bool = False

    @property
    def linear_distance(self) -> int:
        return self.j - self.i


@dataclass
class PairTable:
    """Column store of per-pair observables for one realization.

    The measure columns stay ``None`` until
    :func:`xxbell.measures.evaluate_pairs` fills them.
    """

    L: int
    i: np.ndarray
    j: np.ndarray
    separation: np.ndarray
    cxx: np.ndarray
    czz: np.ndarray
    max_separation: int
    clamped: int = 0
    fidelity: np.ndarray | None = None
    concurrence: np.ndarray | None = None
    bell: np.ndarray | None = None
    nonlocal_: np.ndarray | None = None

    def __len__(self) -> int:
        return self.i.size

    @property
    def complete(self) -> bool:
        return self.max_separation >= self.L // 2

    @property
    def linear_distance(self) -> np.ndarray:
        return self.j - self.i

    def records(self) -> Iterator[PairObservables]:
        cols = [f.name for f in fields(PairObservables)]
        n = len(self)
        nan = np.full(n, math.nan)
        data = {
            "i": self.i,
            "j": self.j,
            "separation": self.separation,
            "cxx": self.cxx,
            "czz": self.czz,
            "fidelity": nan if self.fidelity is None else self.fidelity,
            "concurrence": nan if self.concurrence is None else self.concurrence,
            "bell": nan if self.bell is None else self.bell,
            "nonlocal_": np.zeros(n, bool) if self.nonlocal_ is None else self.nonlocal_,
        }
        for k in range(n):
            yield PairObservables(
                *(
                    (data[c][k].item() if hasattr(data[c][k], "item") else data[c][k])
                    for c in cols
                )
            )

    def select(self, mask: np.ndarray) -> "PairTable":
        def pick(a):
            return None if a is None else a[mask]

        return PairTable(
            self.L,
            self.i[mask],
            self.j[mask],
            self.separation[mask],
            self.cxx[mask],
            self.czz[mask],
            self.max_separation,
            self.clamped,
            pick(self.fidelity),
            pick(self.concurrence),
            pick(self.bell),
            pick(self.nonlocal_),
        )


def _max_sep(L: int, max_separation) -> int:
    if max_separation is None or max_separation == math.inf:
        return L // 2
    max_separation = int(max_separation)
    if max_separation < 1:
        raise ValueError("max_separation must be >= 1")
    return min(max_separation, L // 2)


def all_pairs(G: np.ndarray, max_separation=None) -> PairTable:
    """Correlators of every pair with ring distance ``<= max_separation``.

    ``None`` or ``math.inf`` means all ``L(L-1)/2`` pairs.  Pairs are ordered
    by anchor ``i`` then ``j``.  Cost is O(L**4) for the full set.
    """
    G = np.ascontiguousarray(G, dtype=float)
    L = G.shape[0]
    K = _max_sep(L, max_separation)
    ii, jj, sep, xx, zz, clamped = _all_pairs_kernel(G, _gamma(G), K)
    return PairTable(L, ii, jj, sep, xx, zz, K, int(clamped))


def naive_pairs(G: np.ndarray, max_separation=None) -> PairTable:
    """Same as :func:`all_pairs` with one LU determinant per pair (reference path)."""
    G = np.asarray(G, dtype=float)
    L = G.shape[0]
    K = _max_sep(L, max_separation)
    rows = [
        (i, j, ring_distance(i, j, L), cxx(G, i, j), czz(G, i, j))
        for i in range(L - 1)
        for j in range(i + 1, L)
        if ring_distance(i, j, L) <= K
    ]
    i, j, sep, xx, zz = (np.array(c) for c in zip(*rows))
    return PairTable(
        L, i.astype(np.int64), j.astype(np.int64), sep.astype(np.int64), xx, zz, K
    )


def write_pairs_csv(fh, table: PairTable, seed) -> None:
    for a, b, d, x, z in zip(table.i, table.j, table.separation, table.cxx, table.czz):
        fh.write(f"{seed},{a},{b},{d},{x:.12g},{z:.12g}\n")


PAIRS_CSV_HEADER = "realization_seed,i,j,separation,cxx,czz\n"
