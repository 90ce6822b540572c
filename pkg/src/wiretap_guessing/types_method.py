"""Types of finite sequences and per-type covering codes."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Optional, Sequence

import numpy as np

from .core_types import DistortionMeasure, Distribution, divergence
from .rate_distortion import RdQuery, rate_distortion, ConvergenceError

ENUM_LIMIT = 2**26
MAX_TYPES = 10_000_000
FULL_SPACE_LIMIT = 2**16


class EnumerationGuardError(ValueError):
    """Refusing an enumeration that would be too large for desk-scale work."""


@dataclass(frozen=True)
class TypeClass:
    counts: tuple[int, ...]
    n: int

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise ValueError("counts must be nonnegative")
        if sum(counts) != self.n or self.n < 1:
            raise ValueError(f"counts {counts} do not sum to n={self.n}")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def of(cls, x: Sequence[int], alphabet_size: int) -> "TypeClass":
        counts = np.bincount(np.asarray(x, dtype=np.intp), minlength=alphabet_size)
        return cls(tuple(counts.tolist()), len(x))

    @property
    def alphabet_size(self) -> int:
        return len(self.counts)

    def distribution(self) -> Distribution:
        return Distribution(np.asarray(self.counts, dtype=np.float64) / self.n)

    def vectors(self) -> np.ndarray:
        """All members of the type class as rows, in lexicographic order."""
        return _multiset_permutations(self.counts)


def _multiset_permutations(counts: Sequence[int]) -> np.ndarray:
    """Distinct arrangements of a multiset of symbols, lexicographically."""
    n = sum(counts)
    rows = []
    prefix = []
    remaining = list(counts)

    def rec():
        if len(prefix) == n:
            rows.append(list(prefix))
            return
        for s, c in enumerate(remaining):
            if c:
                remaining[s] -= 1
                prefix.append(s)
                rec()
                prefix.pop()
                remaining[s] += 1

    rec()
    return np.asarray(rows, dtype=np.int64).reshape(len(rows), n)


def _multinomial(counts: Sequence[int]) -> int:
    result, total = 1, 0
    for c in counts:
        total += c
        result *= math.comb(total, c)
    return result


def enumerate_types(alphabet_size: int, n: int) -> list[TypeClass]:
    """Every composition of ``n`` into ``alphabet_size`` parts, lexicographically."""
    if alphabet_size < 1 or n < 1:
        raise ValueError("alphabet_size and n must be >= 1")
    count = math.comb(n + alphabet_size - 1, alphabet_size - 1)
    if count > MAX_TYPES:
        raise EnumerationGuardError(f"{count} types exceed the limit {MAX_TYPES}")
    out = []
    for bars in combinations(range(n + alphabet_size - 1), alphabet_size - 1):
        prev, parts = -1, []
        for b in bars:
            parts.append(b - prev - 1)
            prev = b
        parts.append(n + alphabet_size - 2 - prev)
        out.append(TypeClass(tuple(parts), n))
    return out


def type_class_size(t: TypeClass) -> int:
    return _multinomial(t.counts)


def type_class_log_probability(t: TypeClass, p: Distribution) -> float:
    """Exact ``log2`` of the probability that an i.i.d. ``p`` sequence has type ``t``."""
    if p.size != t.alphabet_size:
        raise ValueError("type and distribution disagree on the alphabet")
    logp = math.log2(type_class_size(t))
    for c, px in zip(t.counts, p.probs):
        if c == 0:
            continue
        if px == 0:
            return -math.inf
        logp += c * math.log2(px)
    return logp


# the operation is named for what it returns in the log domain
type_class_probability = type_class_log_probability


def type_probability_bounds(t: TypeClass, p: Distribution) -> tuple[float, float]:
    """Lower and upper ``log2`` bounds from the size-of-type-class estimates."""
    div = divergence(t.distribution(), p)
    upper = -t.n * div
    lower = -t.alphabet_size * math.log2(t.n + 1) - t.n * div
    return lower, upper


# ---------------------------------------------------------------------------
# covering codes
# ---------------------------------------------------------------------------


def all_vectors(alphabet_size: int, n: int) -> np.ndarray:
    """Every vector of length ``n``, row ``i`` being the radix expansion of ``i``."""
    if alphabet_size**n > ENUM_LIMIT:
        raise EnumerationGuardError(f"{alphabet_size}^{n} vectors exceed the limit {ENUM_LIMIT}")
    idx = np.arange(alphabet_size**n, dtype=np.int64)
    return index_digits(idx, alphabet_size, n)


def index_digits(idx: np.ndarray, base: int, n: int) -> np.ndarray:
    """Radix-``base`` digits of each index, most significant first."""
    idx = np.asarray(idx, dtype=np.int64)
    out = np.empty(idx.shape + (n,), dtype=np.int64)
    rem = idx.copy()
    for pos in range(n - 1, -1, -1):
        out[..., pos] = rem % base
        rem //= base
    return out


def digits_index(vecs: np.ndarray, base: int) -> np.ndarray:
    vecs = np.asarray(vecs, dtype=np.int64)
    idx = np.zeros(vecs.shape[:-1], dtype=np.int64)
    for pos in range(vecs.shape[-1]):
        idx = idx * base + vecs[..., pos]
    return idx


def coverage_matrix(members: np.ndarray, candidates: np.ndarray, d: DistortionMeasure, delta: float,
                    chunk: int = 4096) -> np.ndarray:
    """Boolean ``(len(candidates), len(members))``: candidate covers member within ``delta``."""
    n = members.shape[1]
    out = np.zeros((candidates.shape[0], members.shape[0]), dtype=bool)
    # integer distortion sums compare exactly against n*delta when d is integral
    for start in range(0, candidates.shape[0], chunk):
        cand = candidates[start:start + chunk]
        total = np.zeros((cand.shape[0], members.shape[0]))
        for pos in range(n):
            total += d.d[members[None, :, pos], cand[:, None, pos]]
        out[start:start + chunk] = total / n <= delta + 1e-12
    return out


@dataclass
class CoveringCode:
    codewords: np.ndarray  # (C, n) reproduction vectors
    type: TypeClass
    delta: float
    rd_rate: float
    source: str = "conditional-type"
    greedy_factor: float = 1.0
    stats: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return int(self.codewords.shape[0])

    @property
    def rate(self) -> float:
        return math.log2(self.size) / self.type.n if self.size else 0.0

    @property
    def gap(self) -> float:
        return self.rate - self.rd_rate


def quantize_conditional(counts: Sequence[int], q: np.ndarray) -> np.ndarray:
    """Integer joint counts ``N(x, xh)`` with row sums ``counts``, by largest remainder."""
    q = np.asarray(q, dtype=np.float64)
    joint = np.zeros(q.shape, dtype=np.int64)
    for x, c in enumerate(counts):
        target = c * q[x]
        base = np.floor(target).astype(np.int64)
        short = c - int(base.sum())
        if short > 0:
            order = np.lexsort((np.arange(q.shape[1]), -(target - base)))
            base[order[:short]] += 1
        joint[x] = base
    return joint


def _packed(rows: np.ndarray) -> list[int]:
    packed = np.packbits(rows, axis=1, bitorder="little")
    return [int.from_bytes(r.tobytes(), "little") for r in packed]


def greedy_cover(cover: np.ndarray, order: Optional[np.ndarray] = None,
                 initial_uncovered: Optional[int] = None) -> list[int]:
    """Lazy greedy set cover; returns chosen candidate row indices in selection order.

    Ties go to the earliest candidate in ``order``.
    """
    n_members = cover.shape[1]
    masks = _packed(cover)
    uncovered = (1 << n_members) - 1 if initial_uncovered is None else initial_uncovered
    if order is None:
        order = np.arange(cover.shape[0])
    rank = {int(c): i for i, c in enumerate(order)}
    heap = [(-(masks[c] & uncovered).bit_count(), rank[int(c)], int(c)) for c in order]
    heap = [h for h in heap if h[0] < 0]
    heapq.heapify(heap)
    chosen = []
    while uncovered and heap:
        neg, r, c = heapq.heappop(heap)
        gain = (masks[c] & uncovered).bit_count()
        if gain == 0:
            continue
        if heap and gain < -heap[0][0] or (heap and gain == -heap[0][0] and heap[0][1] < r):
            heapq.heappush(heap, (-gain, r, c))
            continue
        chosen.append(c)
        uncovered &= ~masks[c]
    return chosen


def build_covering(
    t: TypeClass,
    d: DistortionMeasure,
    delta: float,
    rng_seed: Optional[int] = None,
    force: bool = False,
) -> CoveringCode:
    """Greedy covering code for one type class.

    Candidates are the reproduction vectors whose type matches the output
    marginal of the optimal test channel, rounded to blocklength ``n``. If
    they leave part of the class uncovered, the remaining members are covered
    from the whole reproduction space. When the whole space has at most
    ``FULL_SPACE_LIMIT`` vectors a greedy cover over all of it is also built
    and the smaller of the two codes is kept.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if d.source_size != t.alphabet_size:
        raise ValueError("type and distortion measure disagree on the source alphabet")
    n, m = t.n, d.repro_size
    size = type_class_size(t)
    if not force and (size > ENUM_LIMIT or m**n > ENUM_LIMIT):
        raise EnumerationGuardError("type class or reproduction space too large to enumerate")

    P = t.distribution()
    try:
        sol = rate_distortion(RdQuery(P, d, delta))
    except ConvergenceError as exc:
        sol = exc.solution
    members = t.vectors()

    joint = quantize_conditional(t.counts, sol.q_opt.rows)
    out_counts = joint.sum(axis=0)
    candidates = _multiset_permutations(out_counts.tolist())
    rng = np.random.default_rng(rng_seed) if rng_seed is not None else None

    def order_for(k):
        return rng.permutation(k) if rng is not None else np.arange(k)

    cover = coverage_matrix(members, candidates, d, delta)
    chosen_rows = [candidates[c] for c in greedy_cover(cover, order_for(len(candidates)))]
    hit = np.zeros(members.shape[0], dtype=bool)
    if chosen_rows:
        hit = coverage_matrix(members, np.asarray(chosen_rows), d, delta).any(axis=0)
    source = "conditional-type"
    space = None
    if not hit.all():
        source = "conditional-type+full-space" if chosen_rows else "full-space"
        space = all_vectors(m, n)
        rest = members[~hit]
        extra_cover = coverage_matrix(rest, space, d, delta)
        chosen_rows += [space[c] for c in greedy_cover(extra_cover, order_for(len(space)))]
    if m**n <= FULL_SPACE_LIMIT:
        space = all_vectors(m, n) if space is None else space
        full = [space[c] for c in greedy_cover(coverage_matrix(members, space, d, delta),
                                               order_for(len(space)))]
        if len(full) < len(chosen_rows):
            chosen_rows, source = full, "full-space"
    codewords = np.asarray(chosen_rows, dtype=np.int64).reshape(-1, n)
    greedy_factor = 1.0 + math.log(size)
    return CoveringCode(
        codewords=codewords,
        type=t,
        delta=delta,
        rd_rate=sol.rate,
        source=source,
        greedy_factor=greedy_factor,
        stats={
            "class_size": size,
            "candidates": int(len(candidates)),
            "greedy_rate_penalty": math.log2(greedy_factor) / n,
        },
    )


def verify_covering(code: CoveringCode, d: DistortionMeasure) -> bool:
    """Exhaustive check that every member of the class has a codeword within delta."""
    members = code.type.vectors()
    if code.size == 0:
        return members.shape[0] == 0
    return bool(coverage_matrix(members, code.codewords, d, code.delta).any(axis=0).all())


def order_types_by_rate(types: Iterable[TypeClass], d: DistortionMeasure, delta: float,
                        tol: float = 1e-9) -> list[tuple[TypeClass, float]]:
    """Types with their rate-distortion values, by nondecreasing rate.

    Ties (rates within ``tol``) break on the lexicographic order of counts.
    """
    scored = []
    for t in types:
        try:
            r = rate_distortion(RdQuery(t.distribution(), d, delta)).rate
        except ConvergenceError as exc:
            r = exc.solution.rate
        scored.append((t, r))
    scored.sort(key=lambda item: (round(item[1] / tol) if tol > 0 else item[1], item[0].counts))
    return scored
