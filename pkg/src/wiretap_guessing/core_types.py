"""Finite-alphabet probability objects, information functionals and
distortion measures.

All logarithms are base 2, so entropies, divergences and rates are in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

PROB_TOL = 1e-12


class AlphabetMismatchError(ValueError):
    """Raised when two objects live on incompatible alphabets."""


def _frozen_array(values, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Alphabet:
    size: int
    labels: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("alphabet size must be >= 1")
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != self.size:
                raise ValueError("labels must have one entry per symbol")
            if len(set(labels)) != len(labels):
                raise ValueError("labels must be distinct")
            object.__setattr__(self, "labels", labels)


@dataclass(frozen=True, eq=False)
class Distribution:
    """Probability vector on a finite alphabet.

    Construction validates; use :meth:`normalize` to rescale arbitrary
    nonnegative weights.
    """

    probs: np.ndarray

    def __post_init__(self):
        p = _frozen_array(self.probs, 1, "probs")
        if p.size == 0:
            raise ValueError("empty distribution")
        if np.any(p < 0):
            raise ValueError("probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", p)

    @classmethod
    def normalize(cls, weights: Sequence[float]) -> "Distribution":
        w = np.asarray(weights, dtype=np.float64)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive sum")
        w = w / w.sum()
        # one more pass puts the sum within a couple of ulps of 1
        return cls(w / w.sum())

    @classmethod
    def uniform(cls, size: int) -> "Distribution":
        return cls(np.full(size, 1.0 / size))

    @property
    def size(self) -> int:
        return self.probs.size

    @property
    def support(self) -> np.ndarray:
        return self.probs > 0

    def __len__(self) -> int:
        return self.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, Distribution):
            return NotImplemented
        return self.size == other.size and bool(np.array_equal(self.probs, other.probs))

    def __hash__(self) -> int:
        return hash(self.probs.tobytes())

    def __repr__(self) -> str:
        return f"Distribution({np.array2string(self.probs, precision=6, separator=', ')})"


@dataclass(frozen=True, eq=False)
class ConditionalDistribution:
    """Stochastic matrix ``rows[x, xh] = Q(xh | x)``."""

    rows: np.ndarray

    def __post_init__(self):
        q = _frozen_array(self.rows, 2, "rows")
        if np.any(q < 0):
            raise ValueError("conditional probabilities must be nonnegative")
        bad = np.abs(q.sum(axis=1) - 1.0) > PROB_TOL
        if np.any(bad):
            raise ValueError(f"rows {np.flatnonzero(bad).tolist()} do not sum to 1")
        object.__setattr__(self, "rows", q)

    @classmethod
    def normalize(cls, weights) -> "ConditionalDistribution":
        w = np.asarray(weights, dtype=np.float64)
        w = w / w.sum(axis=1, keepdims=True)
        return cls(w / w.sum(axis=1, keepdims=True))

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.shape

    def marginal(self, p: Distribution) -> np.ndarray:
        """Output marginal ``PQ(xh) = sum_x P(x) Q(xh|x)``."""
        _check_pq(p, self)
        return p.probs @ self.rows


@dataclass(frozen=True, eq=False)
class DistortionMeasure:
    """Single-letter distortion ``d[x, xh] >= 0`` with a zero in every row."""

    d: np.ndarray
    repro_labels: Optional[tuple[str, ...]] = field(default=None)

    def __post_init__(self):
        d = _frozen_array(self.d, 2, "distortion")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError("distortion matrix must be non-empty")
        if np.any(d < 0):
            raise ValueError("distortion values must be nonnegative")
        missing = np.flatnonzero(~np.any(d == 0, axis=1))
        if missing.size:
            raise ValueError(f"rows {missing.tolist()} have no zero-distortion reproduction")
        object.__setattr__(self, "d", d)
        if self.repro_labels is not None:
            Alphabet(d.shape[1], self.repro_labels)
            object.__setattr__(self, "repro_labels", tuple(self.repro_labels))

    @classmethod
    def hamming(cls, size: int) -> "DistortionMeasure":
        return cls(1.0 - np.eye(size))

    @property
    def source_size(self) -> int:
        return self.d.shape[0]

    @property
    def repro_size(self) -> int:
        return self.d.shape[1]

    @property
    def zero_repro(self) -> np.ndarray:
        """For each source symbol, the first reproduction symbol at distortion 0."""
        return np.argmax(self.d == 0, axis=1)

    def is_hamming_like(self) -> bool:
        d = self.d
        if d.shape[0] != d.shape[1]:
            return False
        off = ~np.eye(d.shape[0], dtype=bool)
        return bool(np.all(np.diag(d) == 0) and np.all(d[off] > 0))


def _check_pq(p: Distribution, q: ConditionalDistribution) -> None:
    if q.rows.shape[0] != p.size:
        raise AlphabetMismatchError(
            f"source alphabet has {p.size} symbols but Q has {q.rows.shape[0]} rows"
        )


def _check_pd(p: Distribution, d: DistortionMeasure) -> None:
    if d.source_size != p.size:
        raise AlphabetMismatchError(
            f"source alphabet has {p.size} symbols but distortion has {d.source_size} rows"
        )


def entropy(p: Distribution) -> float:
    probs = p.probs[p.probs > 0]
    return float(max(0.0, -np.sum(probs * np.log2(probs))))


def divergence(p: Distribution, q: Distribution) -> float:
    """Kullback-Leibler divergence ``D(p||q)`` in bits; ``inf`` off-support."""
    if p.size != q.size:
        raise AlphabetMismatchError(f"alphabet sizes differ: {p.size} vs {q.size}")
    mask = p.probs > 0
    if np.any(q.probs[mask] == 0):
        return math.inf
    pm, qm = p.probs[mask], q.probs[mask]
    return float(max(0.0, np.sum(pm * (np.log2(pm) - np.log2(qm)))))


def mutual_information(p: Distribution, q: ConditionalDistribution) -> float:
    _check_pq(p, q)
    joint = p.probs[:, None] * q.rows
    marg = joint.sum(axis=0)
    mask = joint > 0
    ratio = q.rows[mask] / np.broadcast_to(marg, joint.shape)[mask]
    return float(max(0.0, np.sum(joint[mask] * np.log2(ratio))))


def expected_distortion(p: Distribution, q: ConditionalDistribution, d: DistortionMeasure) -> float:
    _check_pq(p, q)
    _check_pd(p, d)
    if q.rows.shape[1] != d.repro_size:
        raise AlphabetMismatchError("Q and distortion disagree on the reproduction alphabet")
    return float(np.sum(p.probs[:, None] * q.rows * d.d))


def vector_distortion(x: Sequence[int], xh: Sequence[int], d: DistortionMeasure) -> float:
    """Per-letter average distortion between a source and a reproduction vector."""
    x = np.asarray(x, dtype=np.intp)
    xh = np.asarray(xh, dtype=np.intp)
    if x.shape != xh.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: {x.shape} vs {xh.shape}")
    if x.size == 0:
        raise ValueError("vectors must be non-empty")
    if x.min() < 0 or x.max() >= d.source_size or xh.min() < 0 or xh.max() >= d.repro_size:
        raise ValueError("symbol index out of range")
    return float(d.d[x, xh].mean())


def binary_entropy(t: float) -> float:
    if t <= 0.0 or t >= 1.0:
        return 0.0
    return float(-t * math.log2(t) - (1 - t) * math.log2(1 - t))
