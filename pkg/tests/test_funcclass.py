import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modbe import (AbstractionClass, FiniteClass, LinearClass, NestedSequence,
                   empirical_sq_loss, greedy_policy, load_sequence, save_sequence)
from modbe.funcclass import ABSTRACTION_QUANTUM, FunctionClassError, TableQ


def simple_finite(clip=None):
    zero = np.zeros((2, 2))
    one = np.ones((2, 2))
    return FiniteClass((zero, one), clip_high=clip)


def ident_features(dim):
    def fn(xs, as_):
        n = len(np.asarray(xs))
        out = np.ones((n, dim))
        for j in range(1, dim):
            out[:, j] = (np.asarray(xs) + 1.0) ** j
        return out
    return fn


class TestEvaluation:
    def test_zero_function_everywhere(self):
        f = simple_finite().zero()
        assert np.array_equal(f.values([0, 1], [0, 1]), [0.0, 0.0])

    def test_table_member_returns_stored_entry(self):
        t = np.array([[0.1, 0.2], [0.3, 0.4]])
        f = TableQ(t)
        assert f.values([1], [0])[0] == 0.3

    def test_linear_dot_product_before_clipping(self):
        from modbe.funcclass import LinearQ
        f = LinearQ(np.array([1.0, 2.0]), ident_features(2), 2, 1, clip_high=1.0)
        assert f.raw_values([1], [0])[0] == pytest.approx(5.0)
        assert f.values([1], [0])[0] == 1.0   # clipped

    def test_clipping_bounds(self):
        cls = FiniteClass((np.zeros((1, 1)), np.full((1, 1), 9.0)), clip_high=2.0)
        f = cls.erm([0, 0], [0, 0], [9.0, 9.0])
        assert f.values([0], [0])[0] == 2.0
        assert f.raw_values([0], [0])[0] == 9.0


class TestERM:
    def test_finite_all_targets_one(self):
        cls = simple_finite()
        f = cls.erm([0, 1], [0, 1], [1.0, 1.0])
        assert np.array_equal(f.table, np.ones((2, 2)))
        assert empirical_sq_loss(f, [0, 1], [0, 1], [1.0, 1.0]) == 0.0

    def test_finite_tie_breaks_to_lowest_index(self):
        # both members at distance 1 from the targets -> first member wins
        cls = FiniteClass((np.zeros((1, 1)), np.full((1, 1), 2.0)))
        f = cls.erm([0], [0], [1.0])
        assert np.array_equal(f.table, np.zeros((1, 1)))

    def test_linear_constant_feature_mean(self):
        # d=1, phi == 1: ridge with tiny lambda -> near the sample mean 3
        cls = LinearClass(ident_features(1), dim=1, num_actions=1)
        f = cls.erm([0, 0], [0, 0], [2.0, 4.0])
        assert f.weights[0] == pytest.approx(3.0, abs=1e-4)

    def test_abstraction_single_block_mean(self):
        cls = AbstractionClass(np.zeros(3, dtype=int), num_actions=1)
        f = cls.erm([0, 1, 2], [0, 0, 0], [0.0, 1.0, 2.0])
        assert f.block_values[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_abstraction_clip_applies(self):
        cls = AbstractionClass(np.zeros(2, dtype=int), num_actions=1, clip_high=1.0)
        f = cls.erm([0, 1], [0, 0], [3.0, 5.0])
        assert f.block_values[0, 0] == 1.0

    def test_empty_samples_rejected(self):
        with pytest.raises(FunctionClassError):
            simple_finite().erm([], [], [])
        with pytest.raises(FunctionClassError):
            empirical_sq_loss(simple_finite().zero(), [], [], [])

    def test_finite_minimality_exhaustive(self, rng):
        tables = [np.zeros((3, 2))] + [rng.random((3, 2)) for _ in range(6)]
        cls = FiniteClass(tuple(tables))
        xs = rng.integers(0, 3, 40)
        as_ = rng.integers(0, 2, 40)
        ys = rng.random(40)
        f = cls.erm(xs, as_, ys)
        best = empirical_sq_loss(f, xs, as_, ys)
        for t in tables:
            assert best <= empirical_sq_loss(TableQ(t), xs, as_, ys) + 1e-15

    def test_linear_minimality_against_perturbations(self, rng):
        cls = LinearClass(ident_features(4), dim=4, num_actions=1)
        xs = rng.integers(0, 5, 200)
        as_ = np.zeros(200, dtype=int)
        ys = rng.random(200)
        f = cls.erm(xs, as_, ys)
        phi = ident_features(4)(xs, as_)
        base = float(np.mean((phi @ f.weights - ys) ** 2))
        for _ in range(1000):
            w = f.weights + rng.normal(0, 1e-3, 4)
            assert base <= float(np.mean((phi @ w - ys) ** 2)) + 1e-12

    def test_abstraction_matches_quantized_grid_search(self, rng):
        # exact per-block mean beats every grid table at quantum resolution
        cls = AbstractionClass(np.array([0, 0, 1]), num_actions=1, clip_high=1.0)
        xs = rng.integers(0, 3, 30)
        as_ = np.zeros(30, dtype=int)
        ys = rng.random(30)
        f = cls.erm(xs, as_, ys)
        best = empirical_sq_loss(f, xs, as_, ys)
        grid = np.arange(0.0, 1.0 + ABSTRACTION_QUANTUM / 2, ABSTRACTION_QUANTUM)
        for v0, v1 in itertools.product(grid, repeat=2):
            g = TableQ(np.array([v0, v0, v1]).reshape(3, 1))
            assert best <= empirical_sq_loss(g, xs, as_, ys) + 1e-15

    def test_population_erm_weighted_mean(self):
        cls = AbstractionClass(np.zeros(2, dtype=int), num_actions=1)
        weights = np.array([[0.25], [0.75]])
        target = np.array([[0.0], [1.0]])
        f = cls.population_erm(weights, target)
        assert f.block_values[0, 0] == pytest.approx(0.75, abs=1e-12)


class TestComplexity:
    def test_finite_log_cardinality(self):
        assert simple_finite().complexity == pytest.approx(math.log(2))

    def test_abstraction_quantized_bridge(self):
        cls = AbstractionClass(np.array([0, 1, 1, 2]), num_actions=2)
        assert cls.complexity == pytest.approx(3 * 2 * math.log(16))

    def test_linear_dimension(self):
        cls = LinearClass(ident_features(5), dim=5, num_actions=1)
        assert cls.complexity == 5.0


class TestNestedSequence:
    def test_one_based_indexing(self):
        seq = NestedSequence((simple_finite(),))
        assert seq[1] is seq.classes[0]
        with pytest.raises(IndexError):
            seq[0]
        with pytest.raises(IndexError):
            seq[2]

    def test_missing_member_rejected(self):
        small = FiniteClass((np.zeros((1, 1)), np.ones((1, 1))))
        big = FiniteClass((np.zeros((1, 1)), np.full((1, 1), 2.0)))
        with pytest.raises(FunctionClassError):
            NestedSequence((small, big))

    def test_partition_refinement_required(self):
        coarse = AbstractionClass(np.array([0, 0, 1]), num_actions=1)
        fine = AbstractionClass(np.array([0, 1, 2]), num_actions=1)
        NestedSequence((coarse, fine))   # valid refinement
        bad = AbstractionClass(np.array([0, 1, 1]), num_actions=1)
        with pytest.raises(FunctionClassError):
            NestedSequence((fine, bad))

    def test_linear_prefix_monotone(self):
        fn = ident_features(3)
        a = LinearClass(fn, dim=2, num_actions=1)
        b = LinearClass(fn, dim=3, num_actions=1)
        NestedSequence((a, b))
        with pytest.raises(FunctionClassError):
            NestedSequence((b, a))

    def test_finite_zero_function_required(self):
        with pytest.raises(FunctionClassError):
            FiniteClass((np.ones((1, 1)),))

    def test_nested_erm_monotonicity(self, rng):
        zero = np.zeros((2, 2))
        small_tabs = (zero, rng.random((2, 2)))
        big_tabs = small_tabs + tuple(rng.random((2, 2)) for _ in range(3))
        seq = NestedSequence((FiniteClass(small_tabs), FiniteClass(big_tabs)))
        xs = rng.integers(0, 2, 50)
        as_ = rng.integers(0, 2, 50)
        ys = rng.random(50)
        small_loss = empirical_sq_loss(seq[1].erm(xs, as_, ys), xs, as_, ys)
        big_loss = empirical_sq_loss(seq[2].erm(xs, as_, ys), xs, as_, ys)
        assert big_loss <= small_loss + 1e-9


class TestGreedyPolicy:
    def test_tie_breaks_to_first_action(self):
        f = TableQ(np.zeros((2, 3)))
        pol = greedy_policy([f], 2, 3)
        assert np.array_equal(pol.probs[0, :, 0], [1.0, 1.0])

    @given(seed=st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_scale_invariance(self, seed):
        rng = np.random.default_rng(seed)
        t = rng.random((3, 2))
        a = greedy_policy([TableQ(t)], 3, 2)
        b = greedy_policy([TableQ(t * 7.25)], 3, 2)
        assert np.array_equal(a.probs, b.probs)


class TestLossAccumulation:
    def test_compensated_summation_agreement(self, rng):
        f = TableQ(rng.random((4, 2)))
        xs = rng.integers(0, 4, 5000)
        as_ = rng.integers(0, 2, 5000)
        ys = rng.random(5000)
        loss = empirical_sq_loss(f, xs, as_, ys)
        residuals = (f.values(xs, as_) - ys) ** 2
        assert loss == pytest.approx(math.fsum(residuals) / len(ys), abs=1e-12)

    def test_single_sample(self):
        f = TableQ(np.ones((1, 1)))
        assert empirical_sq_loss(f, [0], [0], [3.0]) == pytest.approx(4.0)


class TestPersistence:
    def test_finite_round_trip(self, rng, tmp_path):
        zero = np.zeros((2, 2))
        seq = NestedSequence((FiniteClass((zero, rng.random((2, 2)))),))
        path = str(tmp_path / "seq.txt")
        save_sequence(seq, path)
        loaded = load_sequence(path, clip_high=2.0)
        assert len(loaded) == 1
        assert all(np.array_equal(a, b)
                   for a, b in zip(loaded[1].tables, seq[1].tables))

    def test_abstraction_round_trip(self, tmp_path):
        seq = NestedSequence((
            AbstractionClass(np.array([0, 0, 1]), num_actions=2),
            AbstractionClass(np.array([0, 1, 2]), num_actions=2)))
        path = str(tmp_path / "seq.txt")
        save_sequence(seq, path)
        loaded = load_sequence(path, clip_high=3.0)
        assert np.array_equal(loaded[2].blocks, [0, 1, 2])
        assert loaded[1].clip_high == 3.0

    def test_linear_requires_bound_features(self, tmp_path):
        fn = ident_features(3)
        seq = NestedSequence((LinearClass(fn, dim=3, num_actions=1),))
        path = str(tmp_path / "seq.txt")
        save_sequence(seq, path)
        with pytest.raises(FunctionClassError):
            load_sequence(path)
        loaded = load_sequence(path, feature_fn=fn, num_actions=1)
        assert loaded[1].dim == 3

    def test_malformed_header_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("klasses 1\n")
        with pytest.raises(FunctionClassError):
            load_sequence(str(path))
