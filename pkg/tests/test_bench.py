import json
import math

import numpy as np
import pytest

from certbound import bench
from certbound.bench import (
    BenchmarkRecord, analytic_reference, available_patterns, count_feasible_states,
    enumerate_feasible_states, exhaustive_reference, group_cover, pattern_a,
    pattern_b, pattern_c, pattern_d, preset_budget, reference_ledger, run_scan,
    score_visit_log, summarize_benchmark, triplet_model, write_scan_csv,
)
from certbound.constraints import ConstraintSet, Geometry, candidate_pool, cost
from certbound.environment import BoundCache, VisitRecord
from certbound.hamiltonian import exact_ground_energy


class TestBudgets:
    def test_presets(self):
        assert preset_budget("half_three_body", 6) == 189
        assert preset_budget("all_three_body", 6) == 378
        assert preset_budget("half_three_body", 9) == 315
        assert preset_budget(250, 6) == 250

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            preset_budget("everything", 6)

    def test_four_body_enters_pool_at_n10_half(self):
        # half budget at n=10 (315) admits a single 4-body block (255)
        pool = candidate_pool(10, preset_budget("half_three_body", 10),
                              Geometry.RING, 4)
        assert max(len(c) for c in pool.candidates) == 4
        pool8 = candidate_pool(8, preset_budget("half_three_body", 8),
                               Geometry.RING, 4)
        assert max(len(c) for c in pool8.candidates) == 3


class TestPatterns:
    def test_pattern_a_n6(self):
        assert pattern_a(6) == ConstraintSet(6, [(0, 1, 2), (2, 3, 4), (0, 4, 5)])

    def test_pattern_b_n6(self):
        assert pattern_b(6) == ConstraintSet(
            6, [(0, 1, 2), (2, 3, 4), (3, 4, 5), (0, 5)])

    def test_pattern_c_n6(self):
        assert pattern_c(6) == ConstraintSet(6, [(0, 1, 2), (2, 3), (3, 4, 5), (0, 5)])

    def test_pattern_d_n6(self):
        assert pattern_d(6) == ConstraintSet(6, [(i, (i + 1) % 6) for i in range(6)])

    def test_pattern_b_n12_matches_repetition(self):
        c = pattern_b(12)
        assert (5, 6) in c.subsets and (0, 11) in c.subsets
        assert len(c.subsets) == 8

    def test_pattern_costs_n6(self):
        assert cost(pattern_a(6)) == 189
        assert cost(pattern_b(6)) == 204
        assert cost(pattern_c(6)) == 156
        assert cost(pattern_d(6)) == 90

    def test_availability(self):
        assert set(available_patterns(6)) == {"a", "b", "c", "d"}
        assert "b" not in available_patterns(8)
        assert "c" not in available_patterns(8)

    def test_pattern_c_twenty_percent_cheaper(self):
        # the alternating pattern uses about 20% fewer free parameters than
        # the all-3-body spread, at every size where both exist
        for n in (6, 12):
            assert 1 - cost(pattern_c(n)) / cost(pattern_a(n)) == pytest.approx(
                0.1746, abs=1e-3)


class TestEnumeration:
    def test_small_pool_count(self):
        pool = candidate_pool(4, 150, Geometry.RING, 3)
        states = enumerate_feasible_states(pool)
        # every enumerated state is feasible and distinct
        assert len({tuple(s) for s in states}) == len(states)
        for bits in states:
            assert cost(pool.decode(bits)) <= pool.budget

    def test_count_none_above_limit(self):
        pool = candidate_pool(8, 10**6, Geometry.RING, 4)
        assert count_feasible_states(pool, 100) is None

    def test_zero_state_always_present(self):
        pool = candidate_pool(5, 100, Geometry.RING, 3)
        states = enumerate_feasible_states(pool)
        assert (0,) * pool.size in states


class TestTripletModel:
    def test_groups_by_size(self):
        # n=6: two triplets; n=7: two triplets and an isolated site;
        # n=8: two triplets and a pair
        assert sorted(map(len, bench._bond_groups(triplet_model(6)))) == [3, 3]
        assert sorted(map(len, bench._bond_groups(triplet_model(7)))) == [3, 3]
        assert sorted(map(len, bench._bond_groups(triplet_model(8)))) == [2, 3, 3]

    def test_cover_n6(self):
        pool = candidate_pool(6, 189, Geometry.RING, 3)
        cover = group_cover(triplet_model(6), pool)
        assert cover == ConstraintSet(6, [(1, 2, 3), (0, 4, 5)])

    def test_cover_reaches_exact_energy(self):
        h = triplet_model(6)
        pool = candidate_pool(6, 189, Geometry.RING, 3)
        from certbound.relaxation import solve_bound
        res = solve_bound(h, group_cover(h, pool))
        assert res.beta == pytest.approx(exact_ground_energy(h), abs=1e-7)


class TestReferenceLedgers:
    def test_exhaustive_n6(self):
        h = triplet_model(6)
        pool = candidate_pool(6, 189, Geometry.RING, 4)
        ref = exhaustive_reference(h, pool)
        assert ref.mode == "exhaustive"
        assert ref.ledger.beta_max == pytest.approx(exact_ground_energy(h), abs=1e-6)
        assert ref.ledger.p_best == 126
        # the cover is among the optimal states
        cover_key = BoundCache.key(group_cover(h, pool))
        assert cover_key in ref.optimal_keys

    def test_analytic_matches_exhaustive_on_small_model(self):
        h = triplet_model(6)
        pool = candidate_pool(6, 189, Geometry.RING, 4)
        ex = exhaustive_reference(h, pool)
        an = analytic_reference(h, pool)
        assert an.ledger.beta_max == pytest.approx(ex.ledger.beta_max, abs=1e-6)
        assert an.ledger.p_best == ex.ledger.p_best
        assert an.ledger.beta_min == pytest.approx(ex.ledger.beta_min, abs=1e-6)
        # the constructive p_worst is a lower bound on the true one
        assert an.ledger.p_worst <= ex.ledger.p_worst
        assert an.ledger.p_best / an.ledger.p_worst < bench.REWARD_TARGET

    def test_auto_choice(self):
        h = triplet_model(6)
        pool = candidate_pool(6, 189, Geometry.RING, 4)
        assert reference_ledger(h, pool).mode == "exhaustive"
        h10 = triplet_model(10)
        pool10 = candidate_pool(10, preset_budget("half", 10), Geometry.RING, 4)
        assert reference_ledger(h10, pool10).mode == "analytic"


class TestScoring:
    def test_score_ignores_repeats(self):
        h = triplet_model(6)
        pool = candidate_pool(6, 189, Geometry.RING, 4)
        ref = exhaustive_reference(h, pool)
        cover_bits = pool.encode(group_cover(h, pool))
        zero = (0,) * pool.size
        e0 = ref.ledger.beta_max
        log = [VisitRecord(zero, ref.ledger.beta_min, 18, True),
               VisitRecord(cover_bits, e0, 126, True)]
        base = score_visit_log(log, ref)
        padded = [log[0], log[0], log[0], log[1], log[1]]
        assert score_visit_log(padded, ref) == base == 2

    def test_score_none_without_target(self):
        h = triplet_model(6)
        pool = candidate_pool(6, 189, Geometry.RING, 4)
        ref = exhaustive_reference(h, pool)
        zero = (0,) * pool.size
        log = [VisitRecord(zero, ref.ledger.beta_min, 18, True)]
        assert score_visit_log(log, ref) is None

    def test_summary_mean_and_median(self):
        recs = [BenchmarkRecord("mc", 6, 189, s, c, 0.1, -10.9, "")
                for s, c in enumerate([10, 20, 60])]
        out = summarize_benchmark(recs)
        assert out[0]["mean_new_states"] == pytest.approx(30.0)
        assert out[0]["median_new_states"] == pytest.approx(20.0)
        assert out[0]["reached"] == 3


class TestScan:
    def test_scan_rows_structure(self, tmp_path):
        rows = run_scan(6, [3.0], include_search=False)
        names = {r["pattern"] for r in rows}
        assert names == {"a", "b", "c", "d"}
        for r in rows:
            assert r["beta"] <= r["exact_e0"] + 1e-6
        path = tmp_path / "scan.csv"
        write_scan_csv(rows, path)
        header = path.read_text().splitlines()[0]
        assert header.startswith("b_over_j,pattern,beta,p")

    def test_scan_saturated_phase_all_equal(self):
        rows = run_scan(6, [3.0], include_search=False)
        betas = {r["pattern"]: r["beta"] for r in rows}
        for name in "abcd":
            assert betas[name] == pytest.approx(-18.0, abs=1e-6)
