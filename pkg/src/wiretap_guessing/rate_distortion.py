"""Rate-distortion function of a finite source.

The solver alternates between the output marginal ``r`` and the test channel
``Q``. For fixed ``r`` the best channel meeting the distortion budget is the
exponential tilt ``Q(xh|x) ~ r(xh) exp(-beta d(x, xh))`` with the slope
``beta`` tuned so that the expected distortion equals the budget; for fixed
``Q`` the best ``r`` is the output marginal. Every iterate is feasible, so the
mutual information is an upper bound on ``R(P, delta)``. The dual function at
the current ``(beta, r)`` supplies a matching lower bound, and their
difference is the reported ``gap_bound``.

The independent check :func:`rd_oracle_grid` enumerates a grid of output
marginals and maximises the (concave, one-dimensional) dual in ``beta`` for
each of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Optional

import numpy as np

from .core_types import (
    ConditionalDistribution,
    DistortionMeasure,
    Distribution,
    binary_entropy,
    expected_distortion,
)

LN2 = math.log(2.0)
DEFAULT_TOL = 1e-9
MAX_ITER = 10_000
BETA_CAP = 1e5  # nats per unit distortion
_R_FLOOR = 1e-300
FEAS_SLACK = 1e-13


class ConvergenceError(RuntimeError):
    """The solver hit its iteration limit; ``solution`` holds the best iterate."""

    def __init__(self, message: str, solution: "RdSolution"):
        super().__init__(message)
        self.solution = solution


class GridTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class RdQuery:
    p: Distribution
    d: DistortionMeasure
    delta: float

    def __post_init__(self):
        if not self.delta >= 0:
            raise ValueError("delta must be >= 0")
        if self.d.source_size != self.p.size:
            raise ValueError("distribution and distortion measure disagree on the source alphabet")


@dataclass(frozen=True)
class RdSolution:
    rate: float
    q_opt: ConditionalDistribution
    achieved_distortion: float
    iterations: int
    gap_bound: float
    converged: bool = True


def feasible(p: Distribution, q: ConditionalDistribution, d: DistortionMeasure, delta: float) -> bool:
    return expected_distortion(p, q, d) <= delta


def delta_max(p: Distribution, d: DistortionMeasure) -> float:
    """Smallest distortion reachable with a constant reproduction symbol."""
    if d.source_size != p.size:
        raise ValueError("distribution and distortion measure disagree on the source alphabet")
    return float(np.min(p.probs @ d.d))


def binary_hamming_closed_form(p_one: float, delta: float) -> float:
    """``max(h(p) - h(delta), 0)`` for a Bernoulli(p) source under Hamming distortion."""
    if not 0.0 <= p_one <= 0.5:
        raise ValueError("p_one must lie in [0, 0.5]")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if delta >= p_one:
        return 0.0
    return max(binary_entropy(p_one) - binary_entropy(delta), 0.0)


# ---------------------------------------------------------------------------
# batched alternating minimisation
# ---------------------------------------------------------------------------


@dataclass
class BatchResult:
    rate: np.ndarray  # bits
    q: np.ndarray  # (B, nx, nxh)
    distortion: np.ndarray
    gap: np.ndarray  # bits
    iterations: int
    converged: np.ndarray


def _tilt(log_r, beta, d):
    """Row-normalised ``r * exp(-beta d)`` and the log partition per row."""
    logits = log_r[:, None, :] - beta[:, None, None] * d[None, :, :]
    top = logits.max(axis=2, keepdims=True)
    w = np.exp(logits - top)
    z = w.sum(axis=2, keepdims=True)
    return w / z, (np.log(z) + top)[:, :, 0]


def _masked(log_r, mask):
    logits = np.where(mask[None], log_r[:, None, :], -np.inf)
    top = logits.max(axis=2, keepdims=True)
    w = np.exp(logits - top)
    z = w.sum(axis=2, keepdims=True)
    return w / z, (np.log(z) + top)[:, :, 0]


def _dist(P, q, d):
    return np.einsum("bx,bxy,xy->b", P, q, d)


def _solve_beta(P, log_r, d, delta, beta0):
    """Per batch row, the slope at which the tilted channel meets ``delta``.

    Returns the largest-distortion feasible slope found by a bracketed
    Newton iteration (distortion is decreasing in beta).
    """
    B = P.shape[0]
    zero = np.zeros(B)
    q0, _ = _tilt(log_r, zero, d)
    d0 = _dist(P, q0, d)
    need = d0 > delta
    beta = np.zeros(B)
    if not np.any(need):
        return beta
    lo = np.zeros(B)
    hi = np.maximum(2.0 * beta0, 1.0)
    hi[~need] = 0.0
    for _ in range(64):
        q, _ = _tilt(log_r, hi, d)
        over = need & (_dist(P, q, d) > delta) & (hi < BETA_CAP)
        if not np.any(over):
            break
        lo = np.where(over, hi, lo)
        hi = np.where(over, np.minimum(hi * 4.0, BETA_CAP), hi)
    b = np.where(need, np.clip(beta0, lo, hi), 0.0)
    b = np.where(need & ((b <= lo) | (b >= hi)), 0.5 * (lo + hi), b)
    for _ in range(60):
        q, _ = _tilt(log_r, b, d)
        val = _dist(P, q, d) - delta
        mean = np.einsum("bxy,xy->bx", q, d)
        var = np.einsum("bxy,xy->bx", q, d * d) - mean**2
        slope = -np.einsum("bx,bx->b", P, np.maximum(var, 0.0))
        lo = np.where(need & (val > 0), b, lo)
        hi = np.where(need & (val <= 0), b, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            nb = b - val / slope
        bad = ~np.isfinite(nb) | (nb <= lo) | (nb >= hi)
        nb = np.where(bad, 0.5 * (lo + hi), nb)
        done = ~need | (np.abs(val) <= 1e-14 * max(delta, 1.0)) | (hi - lo <= 1e-13 * np.maximum(hi, 1.0))
        b = np.where(need & ~done, nb, np.where(need, b, 0.0))
        if np.all(done):
            break
    # tighten toward the root from the feasible side if Newton ended just above it
    q, _ = _tilt(log_r, b, d)
    infeasible = need & (_dist(P, q, d) > delta + FEAS_SLACK)
    if np.any(infeasible):
        lo = np.where(infeasible, b, lo)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            q, _ = _tilt(log_r, mid, d)
            over = _dist(P, q, d) > delta + FEAS_SLACK
            lo = np.where(infeasible & over, mid, lo)
            hi = np.where(infeasible & ~over, mid, hi)
            if np.all(~infeasible | (hi - lo <= 1e-15 * np.maximum(hi, 1.0))):
                break
        b = np.where(infeasible, hi, b)
    return b


def _mutual_info_nats(P, q):
    r = np.einsum("bx,bxy->by", P, q)
    joint = P[:, :, None] * q
    with np.errstate(divide="ignore", invalid="ignore"):
        term = joint * (np.log(q) - np.log(r)[:, None, :])
    term = np.where(joint > 0, term, 0.0)
    return np.maximum(term.sum(axis=(1, 2)), 0.0)


def solve_batch(
    P: np.ndarray,
    d: DistortionMeasure,
    delta: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = MAX_ITER,
) -> BatchResult:
    """Rate-distortion values for a batch of source distributions (rows of ``P``)."""
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    dm = d.d
    B, nx = P.shape
    nxh = dm.shape[1]
    if nx != dm.shape[0]:
        raise ValueError("batch and distortion measure disagree on the source alphabet")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    tol_nats = tol * LN2

    rate = np.zeros(B)
    gap = np.zeros(B)
    q_out = np.zeros((B, nx, nxh))
    dist_out = np.zeros(B)
    converged = np.ones(B, dtype=bool)

    col_cost = P @ dm
    best_col = np.argmin(col_cost, axis=1)
    trivial = col_cost[np.arange(B), best_col] <= delta
    q_out[trivial, :, best_col[trivial]] = 1.0
    dist_out[trivial] = col_cost[trivial, best_col[trivial]]

    act = np.flatnonzero(~trivial)
    if act.size == 0:
        return BatchResult(rate, q_out, dist_out, gap, 0, converged)

    Pa = P[act]
    n = act.size
    log_r = np.full((n, nxh), -math.log(nxh))
    beta = np.zeros(n)
    lossless = delta == 0.0
    mask = dm == 0
    done = np.zeros(n, dtype=bool)
    it = 0
    ub = np.full(n, np.inf)
    lb = np.full(n, -np.inf)
    q = np.zeros((n, nx, nxh))
    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(~done)
        Pi, lri = Pa[idx], log_r[idx]
        if lossless:
            qi, logz = _masked(lri, mask)
            lb_i = -np.einsum("bx,bx->b", Pi, logz)
            with np.errstate(divide="ignore"):
                c = np.einsum("bx,xy->by", Pi * np.exp(-logz), mask.astype(float))
        else:
            beta[idx] = _solve_beta(Pi, lri, dm, delta, beta[idx])
            qi, logz = _tilt(lri, beta[idx], dm)
            lb_i = -beta[idx] * delta - np.einsum("bx,bx->b", Pi, logz)
            c = np.einsum("bx,bxy->by", Pi * np.exp(-logz), np.exp(-beta[idx][:, None, None] * dm[None]))
        lb_i = lb_i - np.log(c.max(axis=1))
        ub_i = _mutual_info_nats(Pi, qi)
        q[idx] = qi
        ub[idx] = ub_i
        lb[idx] = np.maximum(lb[idx], lb_i)
        r_new = np.einsum("bx,bxy->by", Pi, qi)
        log_r[idx] = np.log(np.maximum(r_new, _R_FLOOR))
        done[idx] = (ub_i - lb[idx]) <= tol_nats
        if np.all(done):
            break

    q = np.where(Pa[:, :, None] > 0, q, 0.0)
    zero_rows = Pa <= 0
    if np.any(zero_rows):
        b_i, x_i = np.nonzero(zero_rows)
        q[b_i, x_i, d.zero_repro[x_i]] = 1.0
    q_out[act] = q
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = -np.sum(np.where(Pa > 0, Pa * np.log2(Pa), 0.0), axis=1)
    # I(P, Q) <= H(P); the clamp only removes rounding excess
    rate[act] = np.minimum(ub / LN2, ent)
    gap[act] = np.maximum(ub - lb, 0.0) / LN2
    dist_out[act] = _dist(Pa, q, dm)
    converged[act] = done
    return BatchResult(rate, q_out, dist_out, gap, it, converged)


def rate_distortion(
    query: RdQuery,
    tol: float = DEFAULT_TOL,
    max_iter: int = MAX_ITER,
) -> RdSolution:
    """``R(P, delta)`` in bits with a certified optimality gap.

    Raises:
        ConvergenceError: if the gap is still above ``tol`` after ``max_iter``
            iterations. The exception carries the best feasible iterate.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    p, d, delta = query.p, query.d, query.delta
    support = p.probs > 0
    sub_d = DistortionMeasure(d.d[support])
    res = solve_batch(p.probs[support][None, :], sub_d, delta, tol, max_iter)

    rows = np.zeros(d.d.shape)
    rows[support] = res.q[0]
    rows[~support, d.zero_repro[~support]] = 1.0
    q_opt = ConditionalDistribution(rows)
    sol = RdSolution(
        rate=float(res.rate[0]),
        q_opt=q_opt,
        achieved_distortion=expected_distortion(p, q_opt, d),
        iterations=res.iterations,
        gap_bound=float(res.gap[0]),
        converged=bool(res.converged[0]),
    )
    if not sol.converged:
        raise ConvergenceError(
            f"no convergence after {max_iter} iterations (gap {sol.gap_bound:.3g} bits)", sol
        )
    return sol


def rd_value(p: Distribution, d: DistortionMeasure, delta: float, tol: float = DEFAULT_TOL) -> float:
    """Rate value only, falling back to the best iterate when the gap is not closed."""
    try:
        return rate_distortion(RdQuery(p, d, delta), tol).rate
    except ConvergenceError as exc:
        return exc.solution.rate


# ---------------------------------------------------------------------------
# independent oracle
# ---------------------------------------------------------------------------


def simplex_grid(dim: int, steps: int) -> np.ndarray:
    """All points of the simplex in ``dim`` coordinates with denominators ``steps``.

    Rows come out in lexicographic order of their integer numerators.
    """
    if dim == 1:
        return np.ones((1, 1))
    rows = []
    for bars in combinations(range(steps + dim - 1), dim - 1):
        prev = -1
        parts = []
        for b in bars:
            parts.append(b - prev - 1)
            prev = b
        parts.append(steps + dim - 2 - prev)
        rows.append(parts)
    return np.array(rows, dtype=np.float64) / steps


def rd_oracle_grid(query: RdQuery, grid_steps: int = 200, max_points: int = 2_000_000) -> float:
    """Upper approximation of ``R(P, delta)`` by enumeration over output marginals.

    For every output marginal ``r`` on the grid, the smallest value of
    ``sum_x P(x) D(Q_x || r)`` over feasible channels is computed through its
    one-dimensional dual; the minimum over the grid is returned (in bits).
    """
    p, dm, delta = query.p.probs, query.d.d, query.delta
    m = dm.shape[1]
    count = math.comb(grid_steps + m - 1, m - 1)
    if count > max_points:
        raise GridTooLargeError(f"grid would hold {count} points (limit {max_points})")
    r = simplex_grid(m, grid_steps)
    keep = p > 0
    p, dm = p[keep], dm[keep]

    if delta == 0.0:
        with np.errstate(divide="ignore"):
            vals = -(np.log(r @ (dm == 0).T.astype(float)) @ p)
        return float(max(vals.min(), 0.0) / LN2)

    def slope(beta):
        w = r[:, None, :] * np.exp(-beta[:, None, None] * dm[None])
        z = w.sum(axis=2)
        with np.errstate(invalid="ignore", divide="ignore"):
            md = np.einsum("gxy,xy->gx", w, dm) / z
        md = np.where(z > 0, md, 0.0)
        return md @ p - delta

    def value(beta):
        logits = np.where(r[:, None, :] > 0, np.log(np.where(r > 0, r, 1.0))[:, None, :], -np.inf)
        logits = logits - beta[:, None, None] * dm[None]
        top = logits.max(axis=2, keepdims=True)
        logz = np.log(np.exp(logits - top).sum(axis=2)) + top[:, :, 0]
        return -beta * delta - logz @ p

    G = r.shape[0]
    lo = np.zeros(G)
    hi = np.ones(G)
    for _ in range(40):
        s = slope(hi)
        grow = (s > 0) & (hi < BETA_CAP)
        if not np.any(grow):
            break
        lo = np.where(grow, hi, lo)
        hi = np.where(grow, np.minimum(4 * hi, BETA_CAP), hi)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        s = slope(mid)
        lo = np.where(s > 0, mid, lo)
        hi = np.where(s > 0, hi, mid)
    start = slope(np.zeros(G)) <= 0
    beta = np.where(start, 0.0, 0.5 * (lo + hi))
    vals = value(beta)
    return float(max(vals.min(), 0.0) / LN2)
