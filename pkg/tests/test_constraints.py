import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from certbound.constraints import (
    ActionKind, ActionSpec, ConstraintSet, Geometry, apply_action, candidate_pool,
    cost, decode, encode, flip_action, minimal_set, partial_order_leq, simplify,
    valid_action_mask,
)


def ring_pool(n=6, budget=10**6, max_body=3):
    return candidate_pool(n, budget, Geometry.RING, max_body)


class TestCandidatePool:
    def test_ring_window_counts(self):
        pool = ring_pool(6, max_body=3)
        assert pool.size == 12  # 6 two-site + 6 three-site windows

    def test_budget_below_cheapest_pair(self):
        with pytest.raises(ValueError):
            candidate_pool(6, 14, Geometry.RING, 3)

    def test_n4_ring_windows(self):
        pool = candidate_pool(4, 10**6, Geometry.RING, 3)
        expect = {(0, 1), (1, 2), (2, 3), (0, 3),
                  (0, 1, 2), (1, 2, 3), (0, 2, 3), (0, 1, 3)}
        assert set(pool.candidates) == expect

    def test_chain_has_no_wrap(self):
        pool = candidate_pool(4, 10**6, Geometry.CHAIN, 2)
        assert set(pool.candidates) == {(0, 1), (1, 2), (2, 3)}

    def test_solo_cost_filter(self):
        # budget 100 admits pairs (15) but not triples (63)? 63 <= 100, so both;
        # 4-body blocks cost 255 and are excluded
        pool = candidate_pool(6, 100, Geometry.RING, 4)
        assert max(len(c) for c in pool.candidates) == 3

    def test_ordering_by_size_then_lex(self):
        pool = ring_pool(5, max_body=3)
        sizes = [len(c) for c in pool.candidates]
        assert sizes == sorted(sizes)
        pairs = [c for c in pool.candidates if len(c) == 2]
        assert pairs == sorted(pairs)


class TestEncoding:
    def test_minimal_set_all_zeros(self):
        pool = ring_pool()
        bits = encode(minimal_set(6), pool)
        assert bits == (0,) * pool.size

    def test_unit_vector(self):
        pool = ring_pool()
        c = ConstraintSet(6, [pool.candidates[0]])
        bits = encode(c, pool)
        assert sum(bits) == 1 and bits[0] == 1

    def test_roundtrip_random(self):
        pool = ring_pool()
        rng = np.random.default_rng(5)
        for _ in range(20):
            bits = tuple(int(b) for b in rng.integers(0, 2, pool.size))
            assert encode(decode(bits, pool), pool) == bits

    def test_not_in_pool_raises(self):
        pool = ring_pool(6, max_body=2)
        with pytest.raises(KeyError):
            encode(ConstraintSet(6, [(0, 1, 2)]), pool)

    def test_bit_text_roundtrip(self):
        pool = ring_pool()
        bits = encode(ConstraintSet(6, [(0, 1), (2, 3, 4)]), pool)
        text = pool.bits_to_text(bits)
        assert set(text) <= {"0", "1"} and pool.bits_from_text(text) == bits


class TestSimplify:
    def test_absorbs_contained(self):
        c = ConstraintSet(3, [(0, 1), (0, 1, 2)])
        assert simplify(c) == ConstraintSet(3, [(0, 1, 2)])

    def test_antichain_unchanged(self):
        c = ConstraintSet(6, [(0, 1), (1, 2), (3, 4, 5)])
        assert simplify(c) == c

    def test_empty(self):
        assert simplify(minimal_set(4)) == minimal_set(4)


class TestCost:
    def test_single_pair_n2(self):
        assert cost(ConstraintSet(2, [(0, 1)])) == 15

    def test_simplification_before_counting(self):
        assert cost(ConstraintSet(3, [(0, 1), (0, 1, 2)])) == 63

    def test_minimal_n6(self):
        assert cost(minimal_set(6)) == 18

    def test_uncovered_mix(self):
        # one pair on 4 qubits: 15 + 2 uncovered * 3
        assert cost(ConstraintSet(4, [(0, 1)])) == 21

    def test_invariant_under_simplify(self):
        rng = np.random.default_rng(7)
        pool = ring_pool()
        for _ in range(25):
            bits = tuple(int(b) for b in rng.integers(0, 2, pool.size))
            c = decode(bits, pool)
            assert cost(simplify(c)) == cost(c)


class TestPartialOrder:
    def test_reflexive(self):
        c = ConstraintSet(6, [(0, 1), (2, 3, 4)])
        assert partial_order_leq(c, c)

    def test_minimal_below_everything(self):
        c = ConstraintSet(6, [(4, 5)])
        assert partial_order_leq(minimal_set(6), c)

    def test_incomparable(self):
        a = ConstraintSet(3, [(0, 1)])
        b = ConstraintSet(3, [(1, 2)])
        assert not partial_order_leq(a, b) and not partial_order_leq(b, a)

    @given(st.data())
    @settings(max_examples=60, deadline=None)
    def test_transitive_and_antisymmetric(self, data):
        n = 5
        subsets = list(itertools.combinations(range(n), 2)) \
            + list(itertools.combinations(range(n), 3))
        pick = st.lists(st.sampled_from(subsets), max_size=4)
        c1 = simplify(ConstraintSet(n, data.draw(pick)))
        c2 = simplify(ConstraintSet(n, data.draw(pick)))
        c3 = simplify(ConstraintSet(n, data.draw(pick)))
        if partial_order_leq(c1, c2) and partial_order_leq(c2, c3):
            assert partial_order_leq(c1, c3)
        if partial_order_leq(c1, c2) and partial_order_leq(c2, c1):
            assert c1 == c2  # antisymmetry on simplified sets


class TestActions:
    def test_remove_four_body_splits_into_windows(self):
        pool = candidate_pool(8, 10**6, Geometry.CHAIN, 4)
        c = ConstraintSet(8, [(0, 1, 2, 3)])
        a = ActionSpec(ActionKind.REMOVE, pool.index((0, 1, 2, 3)))
        out = apply_action(c, a, pool)
        assert out == ConstraintSet(8, [(0, 1, 2), (1, 2, 3)])

    def test_remove_pair_leaves_nothing(self):
        pool = ring_pool()
        c = ConstraintSet(6, [(0, 1)])
        out = apply_action(c, ActionSpec(ActionKind.REMOVE, pool.index((0, 1))), pool)
        assert out == minimal_set(6)

    def test_add_then_remove_three_body(self):
        pool = ring_pool()
        c0 = minimal_set(6)
        i = pool.index((1, 2, 3))
        c1 = apply_action(c0, ActionSpec(ActionKind.ADD, i), pool)
        c2 = apply_action(c1, ActionSpec(ActionKind.REMOVE, i), pool)
        assert c2 == ConstraintSet(6, [(1, 2), (2, 3)])

    def test_remove_keeps_absorbed_pieces_out(self):
        pool = ring_pool()
        c = ConstraintSet(6, [(0, 1, 2), (1, 2, 3)])
        out = apply_action(c, ActionSpec(ActionKind.REMOVE, pool.index((1, 2, 3))), pool)
        # (1,2) is inside the still-active (0,1,2); only (2,3) comes back
        assert out == ConstraintSet(6, [(0, 1, 2), (2, 3)])

    def test_add_over_budget_rejected(self):
        # state costs 4*15 + 3 = 63; the fifth pair would give 75 > 70
        pool = candidate_pool(6, 70, Geometry.RING, 3)
        c = ConstraintSet(6, [(0, 1), (1, 2), (2, 3), (3, 4)])
        with pytest.raises(ValueError):
            apply_action(c, ActionSpec(ActionKind.ADD, pool.index((4, 5))), pool)

    def test_stay_is_identity(self):
        pool = ring_pool()
        c = ConstraintSet(6, [(0, 1)])
        assert apply_action(c, ActionSpec(ActionKind.STAY), pool) is c

    def test_remove_inactive_rejected(self):
        pool = ring_pool()
        with pytest.raises(ValueError):
            apply_action(minimal_set(6), ActionSpec(ActionKind.REMOVE, 0), pool)

    def test_actions_never_exceed_budget(self):
        rng = np.random.default_rng(13)
        pool = candidate_pool(6, 189, Geometry.RING, 3)
        bits = (0,) * pool.size
        for _ in range(200):
            mask = valid_action_mask(bits, pool)
            choices = [i for i, ok in enumerate(mask) if ok]
            idx = int(rng.choice(choices))
            c = apply_action(decode(bits, pool), flip_action(bits, idx, pool), pool)
            assert cost(c) <= pool.budget
            bits = encode(c, pool)

    def test_all_states_reachable_by_adds(self):
        # weak reversibility: any budget-feasible subset is reachable from
        # the zero state through adds in increasing-size order
        pool = candidate_pool(4, 150, Geometry.RING, 3)
        rng = np.random.default_rng(3)
        for _ in range(30):
            bits = tuple(int(b) for b in rng.integers(0, 2, pool.size))
            target = decode(bits, pool)
            if cost(target) > pool.budget:
                continue
            c = minimal_set(4)
            for s in sorted(target.subsets, key=lambda s: (len(s), s)):
                c = apply_action(c, ActionSpec(ActionKind.ADD, pool.index(s)), pool)
                assert cost(c) <= pool.budget
            assert c == target


class TestSerialization:
    def test_text_roundtrip(self):
        c = ConstraintSet(6, [(0, 1, 2), (2, 3), (3, 4, 5)])
        text = c.to_text()
        assert ConstraintSet.from_text(6, text) == c

    def test_malformed_text(self):
        with pytest.raises(ValueError):
            ConstraintSet.from_text(6, "[[0,1],")
        with pytest.raises(ValueError):
            ConstraintSet.from_text(6, '{"a": 1}')
