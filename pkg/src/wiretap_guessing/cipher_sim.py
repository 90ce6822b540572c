"""Shannon cipher system with a guessing wiretapper.

Messages are blocks of ``n`` source symbols, identified with their radix
``|X|`` index (most significant symbol first). The cipher adds the key,
read as a ``k``-bit integer, to the message index modulo ``|X|^n``.

A guessing strategy is an ordered list of reproduction vectors per
cryptogram, stored as radix ``|Xh|`` indices. The guess count of a message is
the position of the first guess within distortion ``delta``, or ``limit + 1``
when the list is exhausted.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core_types import DistortionMeasure, Distribution, divergence
from .types_method import (
    ENUM_LIMIT,
    EnumerationGuardError,
    build_covering,
    digits_index,
    enumerate_types,
    index_digits,
    order_types_by_rate,
)

KEY_SEARCH_MAX_BITS = 26
ORACLE_MAX_SPACE = 2**20
EXACT_MAX_PAIRS = 2**24
CHUNK_TRIALS = 8192


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("GUESS_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class CipherSystem:
    n: int
    k: int
    source: Distribution
    cipher_kind: str = "modular_add"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if self.cipher_kind != "modular_add":
            raise ValueError(f"unknown cipher kind {self.cipher_kind!r}")
        if self.n * math.log2(max(self.source.size, 2)) > 62:
            raise ValueError("message space too large for 64-bit indices")

    @property
    def alphabet_size(self) -> int:
        return self.source.size

    @property
    def message_count(self) -> int:
        return self.alphabet_size**self.n

    @property
    def key_count(self) -> int:
        return 1 << self.k

    @property
    def key_rate(self) -> float:
        return self.k / self.n

    def message_index(self, x: Sequence[int]) -> int:
        x = [int(s) for s in x]
        if len(x) != self.n or any(s < 0 or s >= self.alphabet_size for s in x):
            raise ValueError("source vector has the wrong length or symbols")
        idx = 0
        for s in x:
            idx = idx * self.alphabet_size + s
        return idx

    def message_vector(self, idx: int) -> np.ndarray:
        return index_digits(np.int64(idx), self.alphabet_size, self.n)

    def key_value(self, u: Sequence[int]) -> int:
        u = [int(b) for b in u]
        if len(u) != self.k or any(b not in (0, 1) for b in u):
            raise ValueError(f"key must be {self.k} bits")
        val = 0
        for b in u:
            val = (val << 1) | b
        return val

    def encrypt(self, x: Sequence[int], u: Sequence[int]) -> int:
        return (self.message_index(x) + self.key_value(u)) % self.message_count

    def decrypt(self, w: int, u: Sequence[int]) -> np.ndarray:
        return self.message_vector((int(w) - self.key_value(u)) % self.message_count)

    def encrypt_index(self, x_idx, key):
        return (np.asarray(x_idx, dtype=np.int64) + np.asarray(key, dtype=np.int64)) % self.message_count

    def decrypt_index(self, w, key):
        return (np.asarray(w, dtype=np.int64) - np.asarray(key, dtype=np.int64)) % self.message_count


def _distortion_to_list(x_vecs: np.ndarray, guesses: np.ndarray, d: DistortionMeasure) -> np.ndarray:
    """Per-letter distortion between each row of ``x_vecs`` and each guess row."""
    n = x_vecs.shape[1]
    total = np.zeros((x_vecs.shape[0], guesses.shape[0]))
    for pos in range(n):
        total += d.d[x_vecs[:, None, pos], guesses[None, :, pos]]
    return total / n


def _first_hit(ok: np.ndarray, limit: int) -> np.ndarray:
    hit = ok.any(axis=1)
    return np.where(hit, ok.argmax(axis=1) + 1, limit + 1)


class GuessingStrategy:
    """Base class: an ordered guess list per cryptogram, truncated at ``limit``."""

    kind = "abstract"
    limit: int
    n: int
    repro_size: int

    def guesses(self, w: int) -> np.ndarray:
        """Reproduction-vector indices tried for cryptogram ``w``, in order."""
        raise NotImplementedError

    def counts(self, x_idx: np.ndarray, w: np.ndarray, d: DistortionMeasure, delta: float,
               source_size: int) -> np.ndarray:
        """Vectorised guess counts for message indices ``x_idx`` and cryptograms ``w``."""
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind, "limit": int(self.limit)}


def guess_count(strategy: GuessingStrategy, x: Sequence[int], w: int, d: DistortionMeasure,
                delta: float) -> int:
    """Index of the first guess within ``delta`` of ``x``, or ``limit + 1``.

    Walks the explicit guess list; :meth:`GuessingStrategy.counts` is the fast path.
    """
    x = np.asarray(x, dtype=np.int64)
    guesses = strategy.guesses(int(w))[: strategy.limit]
    if guesses.size == 0:
        return strategy.limit + 1
    vecs = index_digits(guesses, strategy.repro_size, strategy.n)
    dist = _distortion_to_list(x[None], vecs, d)[0]
    ok = dist <= delta + 1e-12
    return int(np.argmax(ok) + 1) if ok.any() else strategy.limit + 1


class TypeOrderedStrategy(GuessingStrategy):
    """Concatenated per-type covering codebooks; the same list for every cryptogram."""

    kind = "type_ordered"

    def __init__(self, codewords: np.ndarray, n: int, repro_size: int, info: Optional[dict] = None):
        self.codewords = np.asarray(codewords, dtype=np.int64).reshape(-1, n)
        self.n = n
        self.repro_size = repro_size
        self.index_list = digits_index(self.codewords, repro_size) if len(self.codewords) else np.zeros(0, np.int64)
        self.limit = int(len(self.codewords))
        self.info = info or {}

    def guesses(self, w: int) -> np.ndarray:
        return self.index_list

    def counts(self, x_idx, w, d, delta, source_size):
        x_idx = np.asarray(x_idx, dtype=np.int64)
        uniq, inv = np.unique(x_idx, return_inverse=True)
        out = np.empty(uniq.size, dtype=np.int64)
        if self.limit == 0:
            return np.ones_like(x_idx)
        rows = max(1, 2**22 // self.limit)
        for start in range(0, uniq.size, rows):
            vecs = index_digits(uniq[start:start + rows], source_size, self.n)
            ok = _distortion_to_list(vecs, self.codewords, d) <= delta + 1e-12
            out[start:start + rows] = _first_hit(ok, self.limit)
        return out[inv]

    def describe(self):
        return {**super().describe(), **self.info}


class KeySearchStrategy(GuessingStrategy):
    """Decrypt under every key in ascending numeric order.

    Decryptions are mapped to reproduction vectors through a zero-distortion
    reproduction symbol per source symbol, so the true key always succeeds.
    """

    kind = "key_search"

    def __init__(self, system: CipherSystem, d: Optional[DistortionMeasure] = None):
        if system.k > KEY_SEARCH_MAX_BITS:
            raise EnumerationGuardError(f"key search over 2^{system.k} keys exceeds the 2^{KEY_SEARCH_MAX_BITS} guard")
        self.system = system
        self.n = system.n
        if d is None:
            self.zero_map = np.arange(system.alphabet_size)
            self.repro_size = system.alphabet_size
        else:
            self.zero_map = d.zero_repro
            self.repro_size = d.repro_size
        self.limit = system.key_count

    def _to_repro(self, msg_idx):
        vecs = index_digits(msg_idx, self.system.alphabet_size, self.n)
        return digits_index(self.zero_map[vecs], self.repro_size)

    def guesses(self, w: int) -> np.ndarray:
        keys = np.arange(self.system.key_count, dtype=np.int64)
        return self._to_repro(self.system.decrypt_index(w, keys))

    def counts(self, x_idx, w, d, delta, source_size):
        sysm = self.system
        x_idx = np.asarray(x_idx, dtype=np.int64)
        w = np.asarray(w, dtype=np.int64)
        # smallest key that decrypts w to x itself: always a success
        exact = (w - x_idx) % sysm.message_count
        out = exact + 1
        cross = d.d[:, self.zero_map]  # distortion between x and the guess built from y
        off = cross.copy()
        np.fill_diagonal(off, 0.0)
        if delta == 0 and np.all((cross == 0) == np.eye(len(cross), dtype=bool)):
            return out
        x_vecs = index_digits(x_idx, source_size, self.n)
        pending = np.flatnonzero(out > 1)
        chunk = 256
        rows = max(1, 2**21 // (chunk * self.n))
        start = 0
        while pending.size and start < sysm.key_count:
            keys = np.arange(start, min(start + chunk, sysm.key_count), dtype=np.int64)
            for lo in range(0, pending.size, rows):
                sel = pending[lo:lo + rows]
                dec = sysm.decrypt_index(w[sel, None], keys[None, :])
                y = index_digits(dec, source_size, self.n)
                dist = cross[x_vecs[sel][:, None, :], y].mean(axis=2)
                ok = dist <= delta + 1e-12
                hit = ok.any(axis=1)
                first = keys[ok.argmax(axis=1)] + 1
                better = hit & (first < out[sel])
                out[sel[better]] = first[better]
            start += chunk
            pending = pending[out[pending] > start]
        return out


class CombinedStrategy(GuessingStrategy):
    """Type-ordered list combined with key search.

    ``mode="interleave"`` alternates the two lists (type-ordered first), so a
    message is found within twice the smaller of its two counts.
    ``mode="budget"`` uses whichever sub-strategy has the smaller limit.
    """

    kind = "combined"

    def __init__(self, typed: TypeOrderedStrategy, keys: KeySearchStrategy, mode: str = "budget"):
        if mode not in ("interleave", "budget"):
            raise ValueError("mode must be 'interleave' or 'budget'")
        if typed.n != keys.n or typed.repro_size != keys.repro_size:
            raise ValueError("sub-strategies disagree on blocklength or reproduction alphabet")
        self.typed, self.keys, self.mode = typed, keys, mode
        self.n, self.repro_size = typed.n, typed.repro_size
        if mode == "budget":
            self.chosen = typed if typed.limit <= keys.limit else keys
            self.limit = self.chosen.limit
        else:
            self.chosen = None
            self.limit = typed.limit + keys.limit

    def guesses(self, w: int) -> np.ndarray:
        if self.chosen is not None:
            return self.chosen.guesses(w)
        a, b = self.typed.guesses(w), self.keys.guesses(w)
        m = min(len(a), len(b))
        head = np.empty(2 * m, dtype=np.int64)
        head[0::2], head[1::2] = a[:m], b[:m]
        return np.concatenate([head, a[m:], b[m:]])

    def counts(self, x_idx, w, d, delta, source_size):
        if self.chosen is not None:
            return self.chosen.counts(x_idx, w, d, delta, source_size)
        la, lb = self.typed.limit, self.keys.limit
        ca = self.typed.counts(x_idx, w, d, delta, source_size)
        cb = self.keys.counts(x_idx, w, d, delta, source_size)
        pos_a = np.where(ca <= lb, 2 * ca - 1, lb + ca)
        pos_b = np.where(cb <= la, 2 * cb, la + cb)
        pos_a = np.where(ca <= la, pos_a, self.limit + 1)
        pos_b = np.where(cb <= lb, pos_b, self.limit + 1)
        return np.minimum(pos_a, pos_b)

    def describe(self):
        out = {**super().describe(), "mode": self.mode,
               "typed_limit": self.typed.limit, "key_limit": self.keys.limit}
        if self.chosen is not None:
            out["selected"] = self.chosen.kind
        return out


class OracleStrategy(GuessingStrategy):
    """Per-cryptogram greedy ordering by posterior probability mass.

    For cryptogram ``w`` every message consistent with ``w`` under some key gets
    the weight ``P(x) * #{keys mapping x to w}``. Reproduction vectors are
    listed by the largest not-yet-covered weight within distortion ``delta``
    (ties to the smaller index); vectors covering nothing follow in index
    order. Without a limit the list is the whole reproduction space.
    """

    kind = "brute_optimal"

    def __init__(self, system: CipherSystem, d: DistortionMeasure, delta: float,
                 limit: Optional[int] = None):
        space = d.repro_size**system.n
        if space > ORACLE_MAX_SPACE:
            raise EnumerationGuardError(f"reproduction space {space} exceeds {ORACLE_MAX_SPACE}")
        if d.source_size != system.alphabet_size:
            raise ValueError("distortion measure and source disagree on the alphabet")
        self.system, self.d, self.delta = system, d, delta
        self.n, self.repro_size = system.n, d.repro_size
        self.space = space
        self.limit = space if limit is None else min(int(limit), space)
        self._cache: dict[int, tuple[np.ndarray, dict]] = {}
        self._exact_only = delta * system.n < _min_positive(d.d) and d.is_hamming_like()
        self._repro_vecs = None

    def _posterior(self, w: int):
        sysm = self.system
        keys = np.arange(sysm.key_count, dtype=np.int64)
        xs = sysm.decrypt_index(w, keys)
        xs, mult = np.unique(xs, return_counts=True)
        vecs = index_digits(xs, sysm.alphabet_size, self.n)
        probs = np.prod(sysm.source.probs[vecs], axis=1) * mult
        keep = probs > 0
        return xs[keep], vecs[keep], probs[keep]

    def _order(self, w: int):
        if w in self._cache:
            return self._cache[w]
        xs, vecs, weight = self._posterior(w)
        if self._exact_only:
            # each guess covers exactly one message: sort by weight, then index
            order = np.lexsort((xs, -weight))
            chosen = digits_index(vecs[order], self.repro_size)
            rank = {int(x): i + 1 for i, x in enumerate(xs[order])}
        else:
            if self._repro_vecs is None:
                self._repro_vecs = index_digits(np.arange(self.space, dtype=np.int64), self.repro_size, self.n)
            cover = _distortion_to_list(vecs, self._repro_vecs, self.d) <= self.delta + 1e-12  # (msgs, space)
            uncovered = np.ones(len(xs), dtype=bool)
            chosen_list = []
            rank = {}
            while uncovered.any():
                gains = weight[uncovered] @ cover[uncovered]
                j = int(np.argmax(gains))
                if gains[j] <= 0:
                    break
                chosen_list.append(j)
                newly = uncovered & cover[:, j]
                for x in xs[newly]:
                    rank[int(x)] = len(chosen_list)
                uncovered &= ~cover[:, j]
            chosen = np.asarray(chosen_list, dtype=np.int64)
        self._cache[w] = (chosen, rank)
        return chosen, rank

    def guesses(self, w: int) -> np.ndarray:
        chosen, _ = self._order(int(w))
        rest = np.setdiff1d(np.arange(self.space, dtype=np.int64), chosen, assume_unique=False)
        return np.concatenate([chosen, rest])[: self.limit]

    def counts(self, x_idx, w, d, delta, source_size):
        if d is not self.d and not np.array_equal(d.d, self.d.d) or delta != self.delta:
            raise ValueError("oracle was built for a different distortion level or measure")
        out = np.empty(len(x_idx), dtype=np.int64)
        for i, (x, ww) in enumerate(zip(np.asarray(x_idx).tolist(), np.asarray(w).tolist())):
            _, rank = self._order(ww)
            r = rank.get(x, self.space + 1)
            out[i] = r if r <= self.limit else self.limit + 1
        return out


def _min_positive(a: np.ndarray) -> float:
    pos = a[a > 0]
    return float(pos.min()) if pos.size else math.inf


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def build_type_ordered_strategy(
    source: Distribution,
    d: DistortionMeasure,
    delta: float,
    e: float,
    n: int,
    slack: float = 0.0,
) -> TypeOrderedStrategy:
    """Covering codebooks of all types in the ball ``D(P||source) <= e + slack``,
    concatenated in order of nondecreasing rate-distortion value.
    """
    if source.size != d.source_size:
        raise ValueError("source and distortion measure disagree on the alphabet")
    if source.size**n > ENUM_LIMIT:
        raise EnumerationGuardError(f"{source.size}^{n} messages exceed the enumeration guard")
    radius = e + slack
    inside = [t for t in enumerate_types(source.size, n) if divergence(t.distribution(), source) <= radius]
    ordered = order_types_by_rate(inside, d, delta)
    seen: set[int] = set()
    rows = []
    per_type = []
    for t, rate in ordered:
        code = build_covering(t, d, delta)
        added = 0
        for cw, idx in zip(code.codewords, digits_index(code.codewords, d.repro_size).tolist()):
            if idx not in seen:
                seen.add(idx)
                rows.append(cw)
                added += 1
        per_type.append({"counts": list(t.counts), "rd_rate": rate, "codebook": code.size, "new": added})
    codewords = np.asarray(rows, dtype=np.int64).reshape(-1, n)
    info = {"types": per_type, "radius": radius, "delta": delta}
    return TypeOrderedStrategy(codewords, n, d.repro_size, info)


def build_key_search_strategy(system: CipherSystem, d: Optional[DistortionMeasure] = None) -> KeySearchStrategy:
    return KeySearchStrategy(system, d)


def build_combined_strategy(typed: TypeOrderedStrategy, keys: KeySearchStrategy,
                            mode: str = "budget") -> CombinedStrategy:
    return CombinedStrategy(typed, keys, mode)


def brute_optimal_guesser(system: CipherSystem, d: DistortionMeasure, delta: float,
                          limit: Optional[int] = None) -> OracleStrategy:
    return OracleStrategy(system, d, delta, limit)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def exact_expected_guesses(system: CipherSystem, strategy: GuessingStrategy, d: DistortionMeasure,
                           delta: float) -> tuple[float, float]:
    """Exhaustive expected guess count and failure probability over all messages and keys."""
    M, K = system.message_count, system.key_count
    xs = np.flatnonzero(_message_probs(system) > 0)
    if xs.size * K > EXACT_MAX_PAIRS:
        raise EnumerationGuardError(f"{xs.size * K} (message, key) pairs exceed {EXACT_MAX_PAIRS}")
    px = _message_probs(system)[xs]
    x_all = np.repeat(xs, K)
    keys = np.tile(np.arange(K, dtype=np.int64), xs.size)
    w = system.encrypt_index(x_all, keys)
    counts = _truncated(strategy, strategy.counts(x_all, w, d, delta, system.alphabet_size)).reshape(xs.size, K)
    mean = float(px @ counts.mean(axis=1))
    err = float(px @ (counts == strategy.limit + 1).mean(axis=1))
    return mean, err


def _message_probs(system: CipherSystem) -> np.ndarray:
    vecs = index_digits(np.arange(system.message_count, dtype=np.int64), system.alphabet_size, system.n)
    return np.prod(system.source.probs[vecs], axis=1)


@dataclass
class SimReport:
    trials: int
    empirical_error: float
    mean_guesses: float
    log_mean_guesses_rate: float
    max_guesses_observed: int
    worst_cryptogram_error: float
    seed: int
    strategy: dict
    n: int
    k: int
    delta: float
    theory: Optional[object] = None
    guess_counts: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {
            "trials": self.trials,
            "empirical_error": self.empirical_error,
            "mean_guesses": self.mean_guesses,
            "log_mean_guesses_rate": self.log_mean_guesses_rate,
            "max_guesses_observed": self.max_guesses_observed,
            "worst_cryptogram_error": self.worst_cryptogram_error,
            "seed": self.seed,
            "n": self.n,
            "k": self.k,
            "key_rate": self.k / self.n,
            "delta": self.delta,
            "strategy": self.strategy,
        }
        return out


def _run_chunk(system, strategy, d, delta, seed, index, size):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))
    syms = rng.choice(system.alphabet_size, size=(size, system.n), p=system.source.probs)
    x_idx = digits_index(syms, system.alphabet_size)
    keys = rng.integers(0, system.key_count, size=size, dtype=np.int64) if system.k < 63 else None
    w = system.encrypt_index(x_idx, keys)
    return w, _truncated(strategy, strategy.counts(x_idx, w, d, delta, system.alphabet_size))


def _truncated(strategy, counts):
    # a lowered limit turns later successes into failures
    return np.where(counts > strategy.limit, strategy.limit + 1, counts)


def simulate(
    system: CipherSystem,
    strategy: GuessingStrategy,
    d: DistortionMeasure,
    delta: float,
    trials: int,
    rng_seed: int,
    keep_counts: bool = False,
) -> SimReport:
    """Monte Carlo run of i.i.d. (message, key) draws against ``strategy``.

    Trials are split into fixed-size chunks, each with its own child seed, so
    the report is the same however many worker threads are used.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    sizes = [min(CHUNK_TRIALS, trials - s) for s in range(0, trials, CHUNK_TRIALS)]
    jobs = [(system, strategy, d, delta, rng_seed, i, sz) for i, sz in enumerate(sizes)]
    workers = min(_threads(), len(jobs))
    if workers > 1 and not isinstance(strategy, OracleStrategy):
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _run_chunk(*a), jobs))
    else:
        parts = [_run_chunk(*a) for a in jobs]
    w = np.concatenate([p[0] for p in parts])
    counts = np.concatenate([p[1] for p in parts])
    failed = counts == strategy.limit + 1
    mean = float(counts.mean())
    uniq, inv = np.unique(w, return_inverse=True)
    fails_per_w = np.bincount(inv, weights=failed.astype(float))
    trials_per_w = np.bincount(inv)
    worst = float((fails_per_w / trials_per_w).max())
    return SimReport(
        trials=trials,
        empirical_error=float(failed.mean()),
        mean_guesses=mean,
        log_mean_guesses_rate=math.log2(mean) / system.n,
        max_guesses_observed=int(counts.max()),
        worst_cryptogram_error=worst,
        seed=rng_seed,
        strategy=strategy.describe(),
        n=system.n,
        k=system.k,
        delta=delta,
        guess_counts=counts if keep_counts else None,
    )
