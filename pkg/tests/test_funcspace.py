import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semac.funcspace import (FULL, SYMMETRIC_SHARED, CombinatorialOverflowError,
                             EmptyConstraintSetError, InputDomain, TargetFunction,
                             build_constraint_set, default_epsilon, enumerate_combinations,
                             selector_vector)


def make(kind, values, K, mode=FULL, table=None):
    dom = InputDomain(K, values)
    f = TargetFunction(kind, dom, table=table)
    return dom, f, enumerate_combinations(dom, f, mode)


class TestInputDomain:
    def test_bits_and_size(self):
        dom = InputDomain(3, [1, 2, 3, 4])
        assert (dom.Q, dom.b, dom.N) == (4, 2, 12)

    @pytest.mark.parametrize("values", [[1, 2, 3], [1], [1, 1, 2, 3]])
    def test_rejects_bad_alphabets(self, values):
        with pytest.raises(ValueError):
            InputDomain(2, values)

    def test_rejects_zero_nodes(self):
        with pytest.raises(ValueError):
            InputDomain(0, [0, 1])


class TestEnumeration:
    def test_full_count(self):
        _, _, cs = make("sum", [0, 1], 2)
        assert len(cs) == 4

    def test_shared_count_q4_k8(self):
        _, _, cs = make("sum", [1, 2, 3, 4], 8, SYMMETRIC_SHARED)
        assert len(cs) == 165 == math.comb(11, 3)

    def test_product_range_q4_k8(self):
        _, f, cs = make("product", [1, 2, 3, 4], 8, SYMMETRIC_SHARED)
        assert f.M == 81
        assert np.unique(cs.outputs).size == 81

    def test_sum_range_q4_k8(self):
        _, f, _ = make("sum", [1, 2, 3, 4], 8, SYMMETRIC_SHARED)
        assert f.M == 25 and (f.f_min, f.f_max) == (8, 32)

    def test_histograms_match_brute_force(self):
        _, _, cs = make("max", [1, 2, 3, 4], 3, SYMMETRIC_SHARED)
        brute = {tuple(np.bincount(t, minlength=4))
                 for t in itertools.product(range(4), repeat=3)}
        assert {tuple(h) for h in cs.histograms} == brute
        assert len(cs) == len(brute)

    def test_shared_rejects_custom(self):
        dom = InputDomain(2, [0, 1])
        f = TargetFunction("custom", dom, table=[0, 1, 3, 2])
        with pytest.raises(ValueError):
            enumerate_combinations(dom, f, SYMMETRIC_SHARED)

    def test_overflow(self):
        dom = InputDomain(6, [0, 1, 2, 3])
        f = TargetFunction("sum", dom)
        with pytest.raises(CombinatorialOverflowError):
            enumerate_combinations(dom, f, FULL, cap=1000)

    def test_combination_objects(self):
        _, _, cs = make("sum", [0, 1], 2)
        c = cs[2]
        assert c.indices == (1, 0)
        assert c.histogram == (1, 1)
        assert c.selector.tolist() == [0, 1, 1, 0]
        assert c.output == 1.0

    def test_selectors_one_hot_per_block(self):
        _, _, cs = make("sum", [1, 2, 3, 4], 3)
        A = cs.selector_matrix().reshape(len(cs), 3, 4)
        assert np.all(A.sum(axis=2) == 1)


class TestSelector:
    @pytest.mark.parametrize("indices,Q,expected", [
        ((1, 0), 2, [0, 1, 1, 0]),
        ((2,), 4, [0, 0, 1, 0]),
        ((0, 0, 1), 2, [1, 0, 1, 0, 0, 1]),
    ])
    def test_examples(self, indices, Q, expected):
        assert selector_vector(indices, Q).tolist() == expected

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            selector_vector((2,), 2)


class TestConstraints:
    def test_single_pair(self):
        dom = InputDomain(1, [8, 12])
        f = TargetFunction("sum", dom)
        cons = build_constraint_set(enumerate_combinations(dom, f), epsilon=0.5)
        assert cons.pairs == [(0, 1, 2.0)]

    def test_constant_function_is_empty(self):
        dom = InputDomain(2, [0, 1])
        f = TargetFunction("custom", dom, table=[3, 3, 3, 3])
        with pytest.raises(EmptyConstraintSetError):
            build_constraint_set(enumerate_combinations(dom, f), epsilon=1.0)
        with pytest.raises(EmptyConstraintSetError):
            default_epsilon(f)

    def test_default_epsilon(self):
        _, f, cs = make("sum", [1, 2, 3, 4], 2)
        cons = build_constraint_set(cs, function=f)
        assert cons.epsilon == pytest.approx(1 / 6)
        assert cons.delta_f.max() == pytest.approx(1.0)

    def test_shared_sum_k8(self):
        _, f, cs = make("sum", [1, 2, 3, 4], 8, SYMMETRIC_SHARED)
        cons = build_constraint_set(cs, function=f)
        sums = cs.outputs
        expected = sum(1 for a, b in itertools.combinations(sums, 2) if a != b)
        assert len(cons) == expected
        assert set(np.unique(sums)) == set(range(8, 33))

    def test_pairs_distinct_outputs_only(self):
        _, f, cs = make("max", [1, 2, 3, 4], 2)
        cons = build_constraint_set(cs, function=f)
        assert np.all(cs.outputs[cons.i] != cs.outputs[cons.j])
        assert np.all(cons.i < cons.j)
        assert len(set(zip(cons.i.tolist(), cons.j.tolist()))) == len(cons)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.01, 100.0))
    def test_epsilon_scaling(self, c):
        _, f, cs = make("product", [1, 2, 3, 4], 2)
        base = build_constraint_set(cs, epsilon=0.3)
        scaled = build_constraint_set(cs, epsilon=0.3 * c)
        np.testing.assert_allclose(scaled.delta_f, c * base.delta_f, rtol=1e-12)
        np.testing.assert_allclose(base.scaled(c).delta_f, scaled.delta_f, rtol=1e-12)

    def test_swap_symmetry(self):
        _, f, cs = make("sum", [1, 2, 3, 4], 2)
        cons = build_constraint_set(cs, epsilon=1.0)
        fwd = cons.epsilon * np.abs(cs.outputs[cons.i] - cs.outputs[cons.j])
        rev = cons.epsilon * np.abs(cs.outputs[cons.j] - cs.outputs[cons.i])
        np.testing.assert_array_equal(fwd, rev)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.sampled_from([2, 4]), st.sampled_from(["sum", "product", "max"]))
def test_counts_and_histogram_collapse(K, Q, kind):
    values = list(range(1, Q + 1))
    dom = InputDomain(K, values)
    f = TargetFunction(kind, dom)
    full = enumerate_combinations(dom, f, FULL)
    shared = enumerate_combinations(dom, f, SYMMETRIC_SHARED)
    assert len(full) == Q ** K
    assert len(shared) == math.comb(K + Q - 1, Q - 1)
    # block-wise collapse of the selector equals the histogram
    A = full.selector_matrix().reshape(len(full), K, Q).sum(axis=1)
    np.testing.assert_array_equal(A, full.histograms)
    # histogram outputs agree with tuple outputs
    np.testing.assert_allclose(f.of_histograms(full.histograms), full.outputs)
    assert f.M == np.unique(full.outputs).size
