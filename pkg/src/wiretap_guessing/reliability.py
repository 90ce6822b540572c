"""Rate-reliability-distortion function, guessing exponent and the achievable
region of guessing rates.

All three quantities are maxima over a divergence ball around the source
distribution. They are computed by evaluating a grid of candidate
distributions inside the ball (batched rate-distortion solves) and polishing
the best few with Nelder-Mead. Candidates that leave the ball are pulled back
along the segment toward the source distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from .core_types import DistortionMeasure, Distribution, divergence
from .rate_distortion import (
    DEFAULT_TOL,
    RdQuery,
    ConvergenceError,
    rate_distortion,
    simplex_grid,
    solve_batch,
)

INF = math.inf
SEED_TOL = 1e-7
SEED_MAX_ITER = 3000
DEFAULT_SEED = 20240601


def default_grid_steps(size: int) -> int:
    if size <= 3:
        return 200
    if size == 4:
        return 40
    return 0


def in_divergence_ball(p: Distribution, p_star: Distribution, e: float) -> bool:
    return divergence(p, p_star) <= e


def _divergence_rows(P: np.ndarray, p_star: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log2(P / p_star), 0.0)
    off = np.any((P > 0) & (p_star == 0), axis=1)
    out = np.maximum(terms.sum(axis=1), 0.0)
    out[off] = INF
    return out


@dataclass
class BallOptimum:
    value: float
    p: Distribution
    rate: float  # R(p, delta) at the maximiser
    meta: dict = field(default_factory=dict)


class _Evaluator:
    """Precise objective evaluations with a small cache."""

    def __init__(self, d, delta, tol):
        self.d, self.delta, self.tol = d, delta, tol
        self.cache: dict[bytes, tuple[float, float]] = {}
        self.calls = 0

    def rate(self, probs: np.ndarray) -> tuple[float, float]:
        key = probs.tobytes()
        if key in self.cache:
            return self.cache[key]
        self.calls += 1
        p = Distribution(probs)
        try:
            sol = rate_distortion(RdQuery(p, self.d, self.delta), self.tol)
        except ConvergenceError as exc:
            sol = exc.solution
        self.cache[key] = (sol.rate, sol.gap_bound)
        return sol.rate, sol.gap_bound


def _clamp(probs: np.ndarray, p_star: np.ndarray, e: float) -> np.ndarray:
    """Project onto the simplex, then pull back into the ball along the ray to ``p_star``."""
    probs = np.clip(probs, 0.0, None)
    probs = probs / probs.sum()
    probs = probs / probs.sum()
    if math.isinf(e) and not np.any((probs > 0) & (p_star == 0)):
        return probs
    div = _divergence_rows(probs[None], p_star)[0]
    if div <= e:
        return probs
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        cand = p_star + mid * (probs - p_star)
        if _divergence_rows(cand[None], p_star)[0] <= e:
            lo = mid
        else:
            hi = mid
    out = p_star + lo * (probs - p_star)
    out = np.clip(out, 0.0, None)
    return out / out.sum()


def maximize_over_ball(
    p_star: Distribution,
    d: DistortionMeasure,
    e: float,
    delta: float,
    objective: Callable[[np.ndarray, np.ndarray], np.ndarray],
    tol: float = DEFAULT_TOL,
    grid_steps: Optional[int] = None,
    n_starts: int = 3,
    seed: int = DEFAULT_SEED,
    random_seeds: int = 2000,
) -> BallOptimum:
    """Maximise ``objective(rates, divergences)`` over the ball ``D(P||p_star) <= e``.

    ``objective`` receives arrays of rate-distortion values and divergences
    for a batch of candidate distributions and returns the objective values.
    """
    if not e > 0:
        raise ValueError("e must be positive (use math.inf for the unconstrained case)")
    if d.source_size != p_star.size:
        raise ValueError("distribution and distortion measure disagree on the source alphabet")
    k = p_star.size
    ps = p_star.probs
    steps = default_grid_steps(k) if grid_steps is None else grid_steps
    heuristic = steps <= 0
    if heuristic:
        rng = np.random.default_rng(seed)
        support = np.flatnonzero(ps > 0) if math.isinf(e) else np.arange(k)
        cands = np.zeros((random_seeds, k))
        cands[:, support] = rng.dirichlet(np.ones(support.size), size=random_seeds)
        cands = np.vstack([ps[None], cands])
    else:
        cands = np.vstack([ps[None], simplex_grid(k, steps)])
    divs = _divergence_rows(cands, ps)
    inside = divs <= e
    cands, divs = cands[inside], divs[inside]

    seed_rates = np.empty(len(cands))
    chunk = 4096
    for start in range(0, len(cands), chunk):
        res = solve_batch(cands[start:start + chunk], d, delta, tol=SEED_TOL, max_iter=SEED_MAX_ITER)
        seed_rates[start:start + chunk] = res.rate
    seed_vals = objective(seed_rates, divs)
    # stable sort keeps grid order among ties
    order = np.argsort(-seed_vals, kind="stable")

    ev = _Evaluator(d, delta, tol)

    def value_of(probs):
        r, _ = ev.rate(probs)
        div = _divergence_rows(probs[None], ps)[0]
        return float(objective(np.array([r]), np.array([div]))[0]), r

    v0, r0 = value_of(ps.copy())
    best_val, best_p, best_r = v0, ps.copy(), r0

    starts = []
    for i in order:
        c = cands[i]
        if all(np.abs(c - s).max() > 1e-12 for s in starts):
            starts.append(c)
        if len(starts) >= n_starts:
            break

    # initial simplex scale: grid spacing, shrunk to the ball size
    radius = math.sqrt(2 * math.log(2) * e * max(ps.min(), 1e-12)) if not math.isinf(e) else 1.0
    step = min(1.0 / steps if steps > 0 else 0.05, radius, 0.05)
    step = max(step, 1e-9)
    free = np.flatnonzero(ps > 0) if math.isinf(e) else np.arange(k)
    for start in starts:
        v, r = value_of(start.copy())
        if v > best_val:
            best_val, best_p, best_r = v, start.copy(), r
        if k == 1 or len(free) <= 1:
            continue
        z_free = free[:-1]

        def raw(z):
            probs = np.zeros(k)
            probs[z_free] = z
            probs[free[-1]] = 1.0 - z.sum()
            return probs

        def embed(z):
            return _clamp(raw(z), ps, e)

        def neg(z):
            probs = raw(z)
            inside = _clamp(probs, ps, e)
            # clamping alone leaves the objective flat outside the ball, which stalls the simplex
            return -value_of(inside)[0] + np.abs(probs - inside).sum()

        z0 = start[z_free]
        simplex0 = np.vstack([z0] + [z0 + step * np.eye(len(z0))[j] for j in range(len(z0))])
        res = minimize(neg, z0, method="Nelder-Mead",
                       options={"initial_simplex": simplex0, "xatol": max(step * 1e-7, 1e-13),
                                "fatol": max(tol * 1e-2, 1e-13),
                                "maxiter": 4000, "maxfev": 4000})
        p_ref = embed(res.x)
        v, r = value_of(p_ref)
        if v > best_val:
            best_val, best_p, best_r = v, p_ref, r

    _, gap = ev.rate(best_p)
    meta = {
        "method": "random-multistart+nelder-mead" if heuristic else "grid+nelder-mead",
        "heuristic": heuristic,
        "grid_steps": int(steps),
        "candidates": int(len(cands)),
        "evaluations": ev.calls,
        "rd_gap_bound": gap,
    }
    if heuristic:
        meta["seed"] = seed
    return BallOptimum(best_val, Distribution(best_p), best_r, meta)


def rrd_function(
    p_star: Distribution,
    d: DistortionMeasure,
    e: float,
    delta: float,
    tol: float = DEFAULT_TOL,
    grid_steps: Optional[int] = None,
) -> float:
    """Largest rate-distortion value over the divergence ball of radius ``e``."""
    return rrd_optimum(p_star, d, e, delta, tol, grid_steps).value


def rrd_optimum(p_star, d, e, delta, tol=DEFAULT_TOL, grid_steps=None) -> BallOptimum:
    return maximize_over_ball(p_star, d, e, delta, lambda r, div: r, tol, grid_steps)


def exponent_optimum(p_star, d, r_k, e, delta, tol=DEFAULT_TOL, grid_steps=None) -> BallOptimum:
    if r_k < 0:
        raise ValueError("r_k must be >= 0")
    return maximize_over_ball(
        p_star, d, e, delta, lambda r, div: np.minimum(r_k, r) - div, tol, grid_steps
    )


def guessing_exponent(
    p_star: Distribution,
    d: DistortionMeasure,
    r_k: float,
    e: float,
    delta: float,
    tol: float = DEFAULT_TOL,
    grid_steps: Optional[int] = None,
) -> tuple[float, Distribution]:
    """Growth rate of the expected number of guesses and a maximising distribution."""
    opt = exponent_optimum(p_star, d, r_k, e, delta, tol, grid_steps)
    return opt.value, opt.p


@dataclass(frozen=True)
class RegionQuery:
    p_star: Distribution
    d: DistortionMeasure
    r_k: float
    e: float
    delta: float

    def __post_init__(self):
        if not self.r_k >= 0:
            raise ValueError("r_k must be >= 0")
        if not self.e > 0:
            raise ValueError("e must be > 0")
        if not self.delta >= 0:
            raise ValueError("delta must be >= 0")
        if self.d.source_size != self.p_star.size:
            raise ValueError("distribution and distortion measure disagree on the source alphabet")


@dataclass(frozen=True)
class RegionDescription:
    rl_min: float
    rl_max: float
    r_min: float
    attaining_p: Distribution
    rrd: float = math.nan
    meta: dict = field(default_factory=dict, compare=False)

    def contains(self, rl: float, r: float, tol: float = 0.0) -> bool:
        """Membership of the rate pair ``(rl, r)`` (maximum-guess rate, mean-guess rate)."""
        return (
            self.rl_min - tol <= rl <= self.rl_max + tol
            and self.r_min - tol <= r <= rl + tol
        )


def region(query: RegionQuery, tol: float = DEFAULT_TOL, grid_steps: Optional[int] = None) -> RegionDescription:
    q = query
    rrd = rrd_optimum(q.p_star, q.d, q.e, q.delta, tol, grid_steps)
    ge = exponent_optimum(q.p_star, q.d, q.r_k, q.e, q.delta, tol, grid_steps)
    # any evaluated point of the ball bounds the maximum from below
    rrd_value = max(rrd.value, ge.rate)
    meta = {
        "rrd": rrd.meta,
        "exponent": ge.meta,
        "heuristic": bool(rrd.meta["heuristic"] or ge.meta["heuristic"]),
    }
    return RegionDescription(
        rl_min=min(q.r_k, rrd_value),
        rl_max=math.log2(q.p_star.size),
        r_min=ge.value,
        attaining_p=ge.p,
        rrd=rrd_value,
        meta=meta,
    )


def corollary3_region(p_star: Distribution, d: DistortionMeasure, r_k: float, delta: float,
                      tol: float = DEFAULT_TOL) -> RegionDescription:
    """Limit of the region as the reliability requirement vanishes."""
    if r_k < 0:
        raise ValueError("r_k must be >= 0")
    try:
        r = rate_distortion(RdQuery(p_star, d, delta), tol).rate
    except ConvergenceError as exc:
        r = exc.solution.rate
    bound = min(r_k, r)
    return RegionDescription(
        rl_min=bound,
        rl_max=math.log2(p_star.size),
        r_min=bound,
        attaining_p=p_star,
        rrd=r,
        meta={"method": "closed"},
    )
