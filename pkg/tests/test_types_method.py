import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wiretap_guessing.core_types import DistortionMeasure, Distribution, binary_entropy, divergence, entropy
from wiretap_guessing.types_method import (
    EnumerationGuardError,
    TypeClass,
    all_vectors,
    build_covering,
    coverage_matrix,
    digits_index,
    enumerate_types,
    index_digits,
    order_types_by_rate,
    quantize_conditional,
    type_class_probability,
    type_class_size,
    type_probability_bounds,
    verify_covering,
)

HAM2 = DistortionMeasure.hamming(2)


def test_enumerate_types_examples():
    assert [t.counts for t in enumerate_types(2, 3)] == [(0, 3), (1, 2), (2, 1), (3, 0)]
    assert len(enumerate_types(1, 7)) == 1
    assert len(enumerate_types(3, 4)) == 15


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 9))
def test_enumerate_types_count(size, n):
    types = enumerate_types(size, n)
    assert len(types) == math.comb(n + size - 1, size - 1)
    assert len(types) < (n + 1) ** size or size == 1
    assert len({t.counts for t in types}) == len(types)
    assert all(sum(t.counts) == n for t in types)


def test_type_class_size_examples():
    assert type_class_size(TypeClass((3, 0), 3)) == 1
    assert type_class_size(TypeClass((2, 1), 3)) == 3
    assert type_class_size(TypeClass((2, 2, 2), 6)) == 90
    big = TypeClass((10, 10, 10), 30)
    assert type_class_size(big) == math.factorial(30) // math.factorial(10) ** 3


def test_type_class_validation():
    with pytest.raises(ValueError):
        TypeClass((1, 2), 4)
    with pytest.raises(ValueError):
        TypeClass((-1, 2), 1)


def test_type_of_vector():
    t = TypeClass.of([0, 2, 2, 1], 3)
    assert t.counts == (1, 1, 2) and t.n == 4


def test_vectors_enumerate_class():
    t = TypeClass((2, 1, 1), 4)
    vecs = t.vectors()
    assert len(vecs) == type_class_size(t) == 12
    assert all(TypeClass.of(v, 3) == t for v in vecs)
    assert len({tuple(v) for v in vecs.tolist()}) == 12


def test_type_class_probability_examples():
    p = Distribution([0.5, 0.5])
    assert type_class_probability(TypeClass((2, 2), 4), p) == pytest.approx(math.log2(6 / 16), abs=1e-14)
    assert type_class_probability(TypeClass((0, 3), 3), Distribution([1.0, 0.0])) == -math.inf
    t = TypeClass((1, 3), 4)
    q = Distribution([0.3, 0.7])
    assert type_class_probability(t, q) <= -4 * divergence(t.distribution(), q) + 1e-12


@pytest.mark.parametrize("size,n", [(2, 9), (3, 6)])
def test_type_probabilities_partition(size, n):
    p = Distribution.normalize(np.arange(1, size + 1))
    total = sum(2.0 ** type_class_probability(t, p) for t in enumerate_types(size, n))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_type_probability_bounds_ordering():
    t = TypeClass((2, 3, 1), 6)
    p = Distribution([0.2, 0.5, 0.3])
    lo, hi = type_probability_bounds(t, p)
    assert lo < type_class_probability(t, p) <= hi


def test_index_roundtrip():
    vecs = all_vectors(3, 4)
    assert np.array_equal(digits_index(vecs, 3), np.arange(81))
    assert np.array_equal(index_digits(np.arange(81), 3, 4), vecs)
    assert index_digits(np.int64(5), 2, 3).tolist() == [1, 0, 1]


def test_quantize_conditional_row_sums():
    q = np.array([[0.7, 0.3], [0.15, 0.85]])
    joint = quantize_conditional((5, 3), q)
    assert joint.sum(axis=1).tolist() == [5, 3]
    assert np.all(joint >= 0)


def test_covering_examples():
    t = TypeClass((2, 2), 4)
    one = build_covering(t, HAM2, 1.0)
    assert one.size == 1 and verify_covering(one, HAM2)
    full = build_covering(t, HAM2, 0.0)
    assert full.size == type_class_size(t)
    assert {tuple(c) for c in full.codewords.tolist()} == {tuple(v) for v in t.vectors().tolist()}


def test_covering_n8_counting_bound():
    t = TypeClass((4, 4), 8)
    code = build_covering(t, HAM2, 0.25)
    assert verify_covering(code, HAM2)
    # a codeword covers at most 1 + 4*4 members of the class within two flips
    assert code.size >= math.ceil(70 / 17)
    sphere = 2**8 / sum(math.comb(8, k) for k in range(3))
    assert code.size <= 70 and sphere == pytest.approx(6.918918918918919)
    assert code.rd_rate == pytest.approx(1 - binary_entropy(0.25), abs=1e-9)
    assert code.gap == pytest.approx(code.rate - code.rd_rate)


def test_covering_guard():
    with pytest.raises(EnumerationGuardError):
        build_covering(TypeClass((14, 14), 28), HAM2, 0.1)


def test_covering_general_distortion():
    d = DistortionMeasure([[0.0, 1.0, 0.3], [1.0, 0.0, 0.3]])
    t = TypeClass((3, 2), 5)
    code = build_covering(t, d, 0.2)
    assert verify_covering(code, d)
    cover = coverage_matrix(t.vectors(), code.codewords, d, 0.2)
    assert cover.any(axis=0).all()


@settings(max_examples=15, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=2, max_size=3).filter(lambda c: 1 <= sum(c) <= 7),
       st.floats(0.0, 0.6))
def test_covering_always_valid(counts, delta):
    t = TypeClass(tuple(counts), sum(counts))
    d = DistortionMeasure.hamming(len(counts))
    code = build_covering(t, d, delta)
    assert verify_covering(code, d)
    assert 1 <= code.size <= type_class_size(t)


def test_order_types_examples():
    types = enumerate_types(3, 3)
    ordered = order_types_by_rate(types, DistortionMeasure.hamming(3), 0.0)
    ents = [entropy(t.distribution()) for t, _ in ordered]
    assert all(b >= a - 1e-9 for a, b in zip(ents, ents[1:]))
    assert ordered[0][1] == 0.0 and max(ordered[0][0].counts) == 3

    types6 = enumerate_types(2, 6)
    ordered = order_types_by_rate(types6, HAM2, 0.1)
    closed = [max(0.0, binary_entropy(min(t.counts) / 6) - binary_entropy(0.1)) for t, _ in ordered]
    assert [r for _, r in ordered] == pytest.approx(closed, abs=1e-8)
    assert closed == sorted(closed)
    # ties broken by lexicographic counts
    assert [t.counts for t, _ in ordered][:2] == [(0, 6), (6, 0)]
