"""Random XX ring realizations.

Couplings are drawn by inverse-CDF sampling from either the power-law
density ``P(J) = J**(1/D - 1) / D`` on (0, 1) or the box density on
(J_min, 1).  A realization is fully determined by ``(model, L, dist, seed)``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import IO, Iterable, Iterator, Union

import numpy as np

__all__ = [
    "DisorderKind",
    "DisorderSpec",
    "Model",
    "ChainSpec",
    "sample_powerlaw",
    "sample_box",
    "build_chain",
    "derive_seed",
    "write_chains_jsonl",
    "read_chains_jsonl",
]

Number = Union[str, int, float, Decimal]

_MASK64 = (1 << 64) - 1
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15


class DisorderKind(str, enum.Enum):
    POWERLAW = "powerlaw"
    BOX = "box"


class Model(str, enum.Enum):
    UNCORRELATED = "uncorrelated"
    CORRELATED = "correlated"
    UNIFORM = "uniform"


def _to_decimal(value: Number) -> Decimal:
    if isinstance(value, Decimal):
        return value
    if isinstance(value, bool):
        raise ValueError("disorder strength must be a number")
    try:
        # str() of a float is its shortest round-trip repr, so 0.015 stays 0.015
        return Decimal(str(value).strip())
    except InvalidOperation as exc:
        raise ValueError(f"not a decimal number: {value!r}") from exc


@dataclass(frozen=True)
class DisorderSpec:
    """Coupling distribution.

    ``strength`` is the exponent D for the power law and the lower cutoff
    J_min for the box.  It is kept as a :class:`~decimal.Decimal` so that
    reported thresholds print exactly as configured.
    """

    kind: DisorderKind
    strength: Decimal

    def __init__(self, kind: Union[DisorderKind, str], strength: Number):
        kind = DisorderKind(kind)
        strength = _to_decimal(strength)
        if not strength.is_finite():
            raise ValueError(f"disorder strength must be finite, got {strength}")
        if kind is DisorderKind.POWERLAW and strength < 0:
            raise ValueError(f"power-law D must be >= 0, got {strength}")
        if kind is DisorderKind.BOX and not (0 < strength <= 1):
            raise ValueError(f"box J_min must lie in (0, 1], got {strength}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "strength", strength)

    @classmethod
    def powerlaw(cls, d: Number) -> "DisorderSpec":
        return cls(DisorderKind.POWERLAW, d)

    @classmethod
    def box(cls, j_min: Number) -> "DisorderSpec":
        return cls(DisorderKind.BOX, j_min)

    @property
    def value(self) -> float:
        return float(self.strength)

    @property
    def is_clean(self) -> bool:
        if self.kind is DisorderKind.POWERLAW:
            return self.strength == 0
        return self.strength == 1

    def disorder_level(self) -> float:
        """Monotone disorder ordering: D for the power law, ``1 - J_min`` for the box."""
        if self.kind is DisorderKind.POWERLAW:
            return self.value
        return 1.0 - self.value

    def sample(self, u: np.ndarray) -> np.ndarray:
        if self.kind is DisorderKind.POWERLAW:
            return sample_powerlaw(self.value, u)
        return sample_box(self.value, u)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "strength": str(self.strength)}

    @classmethod
    def from_dict(cls, data: dict) -> "DisorderSpec":
        return cls(data["kind"], data["strength"])

    def __str__(self) -> str:
        name = "D" if self.kind is DisorderKind.POWERLAW else "J_min"
        return f"{self.kind.value}({name}={self.strength})"


def sample_powerlaw(d: float, u):
    """Inverse CDF of the power-law density: the CDF is ``J**(1/D)`` so ``J = u**D``."""
    u = np.asarray(u, dtype=float)
    if d == 0:
        return np.ones_like(u)[()]
    return (u ** d)[()]


def sample_box(j_min: float, u):
    u = np.asarray(u, dtype=float)
    return (j_min + (1.0 - j_min) * u)[()]


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN_GAMMA) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, index: int) -> int:
    """64-bit seed of realization ``index`` under ``master_seed``.

    The master seed is scrambled once, then ``index`` is added as an odd
    multiple (the SplitMix64 increment) before the SplitMix64 finalizer.
    Both steps are bijections on 64-bit words, so for a fixed master seed
    distinct indices below 2**64 always give distinct seeds.
    """
    if index < 0:
        raise ValueError("realization index must be non-negative")
    base = _splitmix64(master_seed & _MASK64)
    return _splitmix64((base + index * _GOLDEN_GAMMA) & _MASK64)


def derive_seeds(master_seed: int, indices) -> np.ndarray:
    """Vectorized :func:`derive_seed` over an integer array (uint64 result)."""
    idx = np.asarray(indices, dtype=np.uint64)
    base = np.uint64(_splitmix64(master_seed & _MASK64))
    with np.errstate(over="ignore"):
        x = base + idx * np.uint64(_GOLDEN_GAMMA) + np.uint64(_GOLDEN_GAMMA)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return x ^ (x >> np.uint64(31))


@dataclass(frozen=True, eq=False)
class ChainSpec:
    """One periodic XX ring: ``couplings[i]`` joins site ``i`` and ``i + 1 (mod L)``.

    A two-site ring has a single bond; its wrap-around bond coincides with
    bond 0 and is not counted.
    """

    couplings: np.ndarray
    model: Model = Model.UNCORRELATED
    dist: DisorderSpec | None = None
    seed: int | None = None
    length: int = field(init=False)

    def __post_init__(self):
        couplings = np.array(self.couplings, dtype=float)
        couplings.setflags(write=False)
        object.__setattr__(self, "couplings", couplings)
        object.__setattr__(self, "model", Model(self.model))
        L = couplings.size
        object.__setattr__(self, "length", L)
        if couplings.ndim != 1 or L < 2 or L % 2:
            raise ValueError(f"ring length must be an even integer >= 2, got {L}")
        if not np.all(np.isfinite(couplings)) or np.any(couplings <= 0):
            raise ValueError("couplings must be finite and strictly positive")
        if self.model is Model.CORRELATED and not np.array_equal(
            couplings[0::2], couplings[1::2]
        ):
            raise ValueError("correlated chain requires J_2i == J_2i-1")
        if self.model is Model.UNIFORM and np.any(couplings != couplings[0]):
            raise ValueError("uniform chain requires equal couplings")

    @property
    def L(self) -> int:
        return self.length

    def bonds(self) -> list[tuple[int, int, float]]:
        """``(i, j, J)`` for every distinct bond, zero-based."""
        L = self.length
        if L == 2:
            return [(0, 1, float(self.couplings[0]))]
        return [(i, (i + 1) % L, float(self.couplings[i])) for i in range(L)]

    def scaled(self, factor: float) -> "ChainSpec":
        return ChainSpec(self.couplings * factor, self.model, self.dist, self.seed)

    def __eq__(self, other):
        if not isinstance(other, ChainSpec):
            return NotImplemented
        return (
            self.model == other.model
            and self.dist == other.dist
            and self.seed == other.seed
            and np.array_equal(self.couplings, other.couplings)
        )

    __hash__ = None

    def to_record(self) -> dict:
        return {
            "seed": self.seed,
            "model": self.model.value,
            "L": self.length,
            "dist": None if self.dist is None else self.dist.to_dict(),
            "couplings": [float(j) for j in self.couplings],
        }

    @classmethod
    def from_record(cls, record: dict) -> "ChainSpec":
        dist = record.get("dist")
        chain = cls(
            np.asarray(record["couplings"], dtype=float),
            Model(record["model"]),
            None if dist is None else DisorderSpec.from_dict(dist),
            record.get("seed"),
        )
        if chain.length != record.get("L", chain.length):
            raise ValueError("record L does not match coupling count")
        return chain


def build_chain(
    model: Union[Model, str],
    L: int,
    dist: DisorderSpec | None,
    seed: int,
) -> ChainSpec:
    """Draw one ring realization.

    The uncorrelated model draws ``L`` independent couplings; the correlated
    model draws ``L/2`` and repeats each on two adjacent bonds; the uniform
    model sets every coupling to 1.  The generator is PCG64 seeded with
    ``seed`` alone, so equal arguments always give bit-identical rings.
    """
    model = Model(model)
    if not isinstance(L, (int, np.integer)) or L < 2 or L % 2:
        raise ValueError(f"L must be an even integer >= 2, got {L!r}")
    L = int(L)
    if model is Model.UNIFORM:
        return ChainSpec(np.ones(L), model, dist, seed)
    if dist is None:
        raise ValueError(f"{model.value} chain needs a disorder distribution")
    rng = np.random.default_rng(seed)
    n = L if model is Model.UNCORRELATED else L // 2
    # random() is on [0, 1); flip to (0, 1] so J = u**D never hits zero
    u = 1.0 - rng.random(n)
    j = np.atleast_1d(dist.sample(u))
    if model is Model.CORRELATED:
        j = np.repeat(j, 2)
    return ChainSpec(j, model, dist, seed)


def write_chains_jsonl(chains: Iterable[ChainSpec], fh: IO[str]) -> int:
    n = 0
    for chain in chains:
        fh.write(json.dumps(chain.to_record()) + "\n")
        n += 1
    return n


def read_chains_jsonl(fh: IO[str]) -> Iterator[ChainSpec]:
    for line in fh:
        line = line.strip()
        if line:
            yield ChainSpec.from_record(json.loads(line))
