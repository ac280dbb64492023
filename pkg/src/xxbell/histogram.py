"""Fixed-bin histograms with integer counts, so merging is exact."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["EDGE_TOL", "HistogramSpec", "HistogramCounts", "Histogram", "build_histogram"]

# samples this close outside [lo, hi] are roundoff at a physical bound
EDGE_TOL = 1e-9


@dataclass(frozen=True)
class HistogramSpec:
    observable: str
    bins: int = 100
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.bins < 1:
            raise ValueError("bins must be >= 1")
        if not self.hi > self.lo:
            raise ValueError(f"histogram range needs hi > lo, got [{self.lo}, {self.hi}]")

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.bins + 1)

    def to_dict(self) -> dict:
        return {"observable": self.observable, "bins": self.bins, "lo": self.lo, "hi": self.hi}

    def empty(self, tag: str = "all") -> "HistogramCounts":
        return HistogramCounts(self, tag)


@dataclass
class HistogramCounts:
    spec: HistogramSpec
    tag: str = "all"
    counts: np.ndarray = field(default=None)
    underflow: int = 0
    overflow: int = 0

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros(self.spec.bins, dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def out_of_range(self) -> int:
        return self.underflow + self.overflow

    def add(self, samples) -> None:
        x = np.asarray(samples, dtype=float).ravel()
        lo, hi, bins = self.spec.lo, self.spec.hi, self.spec.bins
        below = x < lo - EDGE_TOL
        above = x > hi + EDGE_TOL
        self.underflow += int(np.count_nonzero(below))
        self.overflow += int(np.count_nonzero(above))
        x = x[~(below | above)]
        idx = np.floor((x - lo) / (hi - lo) * bins).astype(np.int64)
        np.clip(idx, 0, bins - 1, out=idx)
        self.counts += np.bincount(idx, minlength=bins)

    def merge(self, other: "HistogramCounts") -> "HistogramCounts":
        if other.spec != self.spec or other.tag != self.tag:
            raise ValueError("cannot merge histograms with different specs")
        return HistogramCounts(
            self.spec,
            self.tag,
            self.counts + other.counts,
            self.underflow + other.underflow,
            self.overflow + other.overflow,
        )

    def normalized(self) -> "Histogram":
        width = (self.spec.hi - self.spec.lo) / self.spec.bins
        n = self.total
        density = self.counts / (n * width) if n else np.zeros(self.spec.bins)
        return Histogram(
            self.spec.observable, self.spec.edges, density, n, self.tag, self.out_of_range
        )

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "tag": self.tag,
            "counts": [int(c) for c in self.counts],
            "underflow": self.underflow,
            "overflow": self.overflow,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HistogramCounts":
        return cls(
            HistogramSpec(**data["spec"]),
            data["tag"],
            np.asarray(data["counts"], dtype=np.int64),
            int(data["underflow"]),
            int(data["overflow"]),
        )


@dataclass(frozen=True)
class Histogram:
    """Density-normalized histogram: ``sum(density * width) == 1`` when ``count > 0``."""

    observable: str
    edges: np.ndarray
    density: np.ndarray
    count: int
    separation_class: str = "all"
    out_of_range: int = 0

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    def to_csv(self) -> str:
        lines = ["bin_lo,bin_hi,density"]
        for a, b, d in zip(self.edges[:-1], self.edges[1:], self.density):
            lines.append(f"{a:.12g},{b:.12g},{d:.12g}")
        return "\n".join(lines) + "\n"


def build_histogram(samples, bins: int, range: tuple[float, float], observable: str = "x"):
    """Density histogram of ``samples`` on ``bins`` uniform bins over ``range``.

    Samples outside the range are left out of the densities and reported in
    ``out_of_range``; an empty sample set gives zero densities and count 0.
    """
    counts = HistogramSpec(observable, bins, float(range[0]), float(range[1])).empty()
    counts.add(samples)
    return counts.normalized()
