import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dist_strategy, random_distortion
from wiretap_guessing.core_types import (
    ConditionalDistribution,
    DistortionMeasure,
    Distribution,
    binary_entropy,
    entropy,
    expected_distortion,
    mutual_information,
)
from wiretap_guessing.rate_distortion import (
    ConvergenceError,
    GridTooLargeError,
    RdQuery,
    binary_hamming_closed_form,
    delta_max,
    feasible,
    rate_distortion,
    rd_oracle_grid,
    rd_value,
    simplex_grid,
    solve_batch,
)

UNIFORM2 = Distribution([0.5, 0.5])
HAM2 = DistortionMeasure.hamming(2)


def test_feasible_examples():
    p = UNIFORM2
    assert feasible(p, ConditionalDistribution(np.eye(2)), HAM2, 0.0)
    assert not feasible(p, ConditionalDistribution([[0.8, 0.2], [0.2, 0.8]]), HAM2, 0.1)
    dm = delta_max(p, HAM2)
    assert feasible(p, ConditionalDistribution([[1.0, 0.0], [1.0, 0.0]]), HAM2, dm)


def test_delta_max_examples():
    assert delta_max(UNIFORM2, HAM2) == 0.5
    assert delta_max(Distribution([0.9, 0.1]), HAM2) == pytest.approx(0.1)
    d = DistortionMeasure([[0.0, 1.0, 2.0, 0.5], [3.0, 0.0, 1.0, 0.5], [1.0, 1.0, 0.0, 2.0]])
    p = Distribution([0.2, 0.5, 0.3])
    brute = min(sum(p.probs[x] * d.d[x, c] for x in range(3)) for c in range(4))
    assert delta_max(p, d) == pytest.approx(brute, abs=1e-15)


def test_rate_distortion_examples():
    assert rate_distortion(RdQuery(UNIFORM2, HAM2, 0.0)).rate == pytest.approx(1.0, abs=1e-9)
    assert rate_distortion(RdQuery(UNIFORM2, HAM2, 0.5)).rate == 0.0
    sol = rate_distortion(RdQuery(UNIFORM2, HAM2, 0.1))
    assert sol.rate == pytest.approx(1 - binary_entropy(0.1), abs=1e-9)
    assert sol.gap_bound <= 1e-9
    assert sol.achieved_distortion <= 0.1 + 1e-12
    # the reported channel attains the reported rate
    assert mutual_information(UNIFORM2, sol.q_opt) == pytest.approx(sol.rate, abs=1e-9)
    assert expected_distortion(UNIFORM2, sol.q_opt, HAM2) == pytest.approx(sol.achieved_distortion, abs=1e-12)


def test_closed_form_examples():
    assert binary_hamming_closed_form(0.5, 0.0) == 1.0
    assert binary_hamming_closed_form(0.5, 0.5) == 0.0
    assert binary_hamming_closed_form(0.3, 0.05) == pytest.approx(0.5948939421147365, abs=1e-12)


def test_oracle_examples():
    q = RdQuery(UNIFORM2, HAM2, 0.1)
    assert abs(rd_oracle_grid(q, 200) - 0.5310044064107188) <= 1e-3
    assert rd_oracle_grid(RdQuery(UNIFORM2, HAM2, 0.5), 50) == pytest.approx(0.0, abs=1e-12)
    p = Distribution([0.2, 0.3, 0.5])
    assert rd_oracle_grid(RdQuery(p, DistortionMeasure.hamming(3), 0.0), 50) == pytest.approx(entropy(p), abs=1e-12)


def test_oracle_grid_guard():
    p = Distribution.uniform(4)
    with pytest.raises(GridTooLargeError):
        rd_oracle_grid(RdQuery(p, DistortionMeasure.hamming(4), 0.1), 400, max_points=1000)


def test_query_validation():
    with pytest.raises(ValueError):
        RdQuery(UNIFORM2, HAM2, -0.1)
    with pytest.raises(ValueError):
        RdQuery(Distribution.uniform(3), HAM2, 0.1)


def test_zero_probability_symbols_dropped():
    p = Distribution([0.4, 0.0, 0.6])
    d = DistortionMeasure.hamming(3)
    sol = rate_distortion(RdQuery(p, d, 0.1))
    # collapses to the binary problem on the support
    assert sol.rate == pytest.approx(binary_hamming_closed_form(0.4, 0.1), abs=1e-8)
    assert sol.q_opt.rows[1, 1] == 1.0


def test_nonconvergence_reports_best_iterate():
    q = RdQuery(Distribution([0.2, 0.3, 0.5]), DistortionMeasure.hamming(3), 0.2)
    with pytest.raises(ConvergenceError) as info:
        rate_distortion(q, tol=1e-15, max_iter=2)
    sol = info.value.solution
    assert not sol.converged
    assert sol.rate >= rate_distortion(q).rate - 1e-12
    assert rd_value(q.p, q.d, q.delta) == pytest.approx(rate_distortion(q).rate)


def test_simplex_grid():
    g = simplex_grid(3, 4)
    assert g.shape == (math.comb(6, 2), 3)
    assert np.allclose(g.sum(axis=1), 1.0)
    assert len({tuple(r) for r in g.tolist()}) == len(g)


def test_batch_matches_single():
    rng = np.random.default_rng(0)
    P = rng.dirichlet(np.ones(3), size=6)
    d = DistortionMeasure.hamming(3)
    res = solve_batch(P, d, 0.15)
    for row, rate in zip(P, res.rate):
        assert rate == pytest.approx(rate_distortion(RdQuery(Distribution.normalize(row), d, 0.15)).rate, abs=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 0.5), st.floats(0.0, 0.6))
def test_binary_closed_form_agreement(p1, delta):
    sol = rate_distortion(RdQuery(Distribution([1 - p1, p1]), HAM2, delta))
    assert sol.rate == pytest.approx(binary_hamming_closed_form(p1, delta), abs=1e-6)


@settings(max_examples=20, deadline=None)
@given(dist_strategy(min_size=2, max_size=3, floor=0.01), st.integers(0, 2**32 - 1))
def test_monotone_convex_bounded(p, seed):
    rng = np.random.default_rng(seed)
    d = random_distortion(rng, p.size, 3)
    dm = delta_max(p, d)
    deltas = np.linspace(0, dm * 1.1, 9)
    rates = [rate_distortion(RdQuery(p, d, float(x))).rate for x in deltas]
    assert all(b <= a + 1e-9 for a, b in zip(rates, rates[1:]))
    assert rates[0] <= entropy(p) + 1e-9
    assert all(r >= 0 for r in rates)
    assert rate_distortion(RdQuery(p, d, dm)).rate == 0.0
    lam = float(rng.random())
    d1, d2 = float(deltas[1]), float(deltas[6])
    mid = rate_distortion(RdQuery(p, d, lam * d1 + (1 - lam) * d2)).rate
    assert mid <= lam * rates[1] + (1 - lam) * rates[6] + 1e-6


def test_oracle_agreement_fixtures():
    rng = np.random.default_rng(11)
    for _ in range(3):
        p = Distribution.normalize(rng.random(3) + 0.05)
        d = random_distortion(rng, 3, 3)
        delta = float(rng.uniform(0, delta_max(p, d)))
        q = RdQuery(p, d, delta)
        sol = rate_distortion(q)
        oracle = rd_oracle_grid(q, 100)
        # the oracle is an upper approximation
        assert oracle >= sol.rate - 1e-9
        assert oracle - sol.rate <= 5e-3
