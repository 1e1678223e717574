import math

import numpy as np
import pytest
from scipy import stats

import ctmcpath as cp
from ctmcpath import errors
from ctmcpath.samplers import invert_waiting_time, series_cap
from ctmcpath.validation import chi_square_gof, jump_count_masses


class TestRandomStream:
    def test_same_seed_same_draws(self):
        a = cp.RandomStream(123)
        b = cp.RandomStream(123)
        assert [a.uniform() for _ in range(10)] == [b.uniform() for _ in range(10)]

    def test_split_deterministic(self):
        kids1 = [s.uniform() for s in cp.RandomStream(5).split(4)]
        kids2 = [s.uniform() for s in cp.RandomStream(5).split(4)]
        assert kids1 == kids2

    def test_split_children_differ(self):
        kids = cp.RandomStream(5).split(3)
        draws = [k.uniform() for k in kids]
        assert len(set(draws)) == 3

    def test_sequential_splits_distinct(self):
        rng = cp.RandomStream(5)
        first = rng.split(2)
        second = rng.split(2)
        assert [s.uniform() for s in first] != [s.uniform() for s in second]

    def test_uniform_range(self):
        rng = cp.RandomStream(0)
        us = [rng.uniform() for _ in range(1000)]
        assert all(0.0 <= u < 1.0 for u in us)

    def test_exponential_positive(self):
        rng = cp.RandomStream(1)
        assert all(rng.exponential(2.0) > 0.0 for _ in range(100))

    def test_discrete_skips_zero_weights(self):
        rng = cp.RandomStream(2)
        draws = {rng.discrete([0.0, 1.0, 0.0, 2.0]) for _ in range(200)}
        assert draws <= {1, 3}

    def test_discrete_rejects_zero_total(self):
        with pytest.raises(ValueError):
            cp.RandomStream(3).discrete([0.0, 0.0])


class TestConditionalFirstJumpTime:
    def test_closed_form_value(self):
        tau = cp.conditional_first_jump_time(1.0, 1.0, 0.5)
        assert abs(tau - 0.37989) < 5e-6
        assert tau == pytest.approx(-math.log(1 - 0.5 * (1 - math.exp(-1))))

    def test_limits(self):
        assert cp.conditional_first_jump_time(1.0, 1.0, 1e-12) < 1e-9
        assert cp.conditional_first_jump_time(1.0, 1.0, 1 - 1e-13) > 1.0 - 1e-9

    def test_strictly_inside(self):
        rng = cp.RandomStream(17)
        for _ in range(500):
            u = rng.open_uniform()
            tau = cp.conditional_first_jump_time(3.0, 0.7, u)
            assert 0.0 < tau < 0.7

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            cp.conditional_first_jump_time(1.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            cp.conditional_first_jump_time(0.0, 1.0, 0.5)


class TestForwardSample:
    def test_path_starts_at_a(self, hky):
        q, _ = hky
        path = cp.forward_sample(q, "C", 1.0, cp.RandomStream(3))
        assert path.start_state == 2
        assert path.horizon == 1.0

    def test_endpoint_marginal_matches_transition_matrix(self, two_state):
        d = cp.decompose_auto(two_state)
        p = cp.transition_probability(d, 1.0)
        n = 10_000
        ends = [cp.forward_sample(two_state, 0, 1.0, s).end_state for s in cp.RandomStream(11).split(n)]
        hits = sum(1 for e in ends if e == 1)
        target = p[0, 1]
        se = math.sqrt(target * (1 - target) / n)
        assert abs(hits / n - target) <= 3 * se

    def test_stationary_jump_rate_calibrated(self, hky):
        # started from pi, a calibrated chain averages one jump per unit time
        q, pi = hky
        T = 5.0
        n = 4_000
        rng = cp.RandomStream(23)
        total = 0
        for s in rng.split(n):
            a = s.discrete(pi.pi)
            total += cp.forward_sample(q, a, T, s).n_jumps
        mean = total / n
        se = math.sqrt(T / n)  # jump count is roughly Poisson(T)
        assert abs(mean - T) <= 3 * se

    def test_zero_horizon_rejected(self, two_state):
        with pytest.raises(ValueError):
            cp.forward_sample(two_state, 0, 0.0, cp.RandomStream(1))


class TestRejectionSample:
    def test_distinct_endpoints_have_a_jump(self, hky):
        q, _ = hky
        problem = cp.EndpointProblem(q, "A", "G", 0.5)
        for s in cp.RandomStream(7).split(300):
            rep = cp.rejection_sample(problem, None, s)
            assert rep.path.n_jumps >= 1
            assert rep.path.start_state == 0
            assert rep.path.end_state == 1

    def test_equal_endpoints(self, hky):
        q, _ = hky
        problem = cp.EndpointProblem(q, "A", "A", 1.0)
        for s in cp.RandomStream(8).split(200):
            rep = cp.rejection_sample(problem, None, s)
            assert rep.path.end_state == 0
            assert rep.recursion_steps >= rep.path.n_jumps

    def test_mean_attempts_match_acceptance_probability(self, hky):
        q, pi = hky
        d = cp.decompose_auto(q, pi)
        problem = cp.EndpointProblem(q, "A", "A", 2.0)
        p_acc = cp.acceptance_probability(d, q, "A", "A", 2.0)
        n = 10_000
        attempts = [cp.rejection_sample(problem, None, s).attempts for s in cp.RandomStream(9).split(n)]
        mean = float(np.mean(attempts))
        se = float(np.std(attempts, ddof=1)) / math.sqrt(n)
        assert abs(mean - 1.0 / p_acc) <= 3 * se
        assert abs(1.0 / p_acc - 3.94) < 0.08  # 1/0.254

    def test_budget_exceeded(self, gy):
        q, _ = gy
        problem = cp.EndpointProblem(q, "AAA", "TTT", 0.5)
        with pytest.raises(errors.RejectionBudgetExceeded):
            cp.rejection_sample(problem, cp.RejectionConfig(max_attempts=100), cp.RandomStream(10))

    def test_proposal_matches_modified_scheme(self, hky):
        q, _ = hky
        problem = cp.EndpointProblem(q, "A", "G", 1.0)
        path, steps = cp.rejection_proposal(problem, cp.RandomStream(12))
        assert path.n_jumps >= 1
        assert steps == path.n_jumps


class TestDirectFirstTransition:
    def test_two_state_constancy_closed_form(self, two_state):
        kernel = cp.build_direct_kernel(two_state)
        ft = cp.direct_first_transition(kernel, 0, 0, 1.0)
        expected = math.exp(-1.0) / ((1.0 + math.exp(-2.0)) / 2.0)
        assert ft.p_constant == pytest.approx(expected, abs=1e-12)
        assert abs(expected - 0.64805) < 5e-6

    def test_two_state_single_candidate(self, two_state):
        kernel = cp.build_direct_kernel(two_state)
        ft = cp.direct_first_transition(kernel, 0, 1, 1.0)
        assert ft.p_constant is None
        assert ft.p_next[1] == pytest.approx(1.0, abs=1e-12)

    def test_small_horizon_constancy_limit(self, two_state):
        kernel = cp.build_direct_kernel(two_state)
        ft = cp.direct_first_transition(kernel, 0, 0, 1e-8)
        assert ft.p_constant > 1.0 - 1e-7

    def test_masses_normalized(self, hky):
        q, pi = hky
        kernel = cp.build_direct_kernel(q)
        ft_eq = cp.direct_first_transition(kernel, 0, 0, 1.3)
        assert abs(ft_eq.p_constant + ft_eq.p_next.sum() - 1.0) < 1e-8
        ft_ne = cp.direct_first_transition(kernel, 0, 1, 1.3)
        assert abs(ft_ne.p_next.sum() - 1.0) < 1e-8

    def test_cdf_properties(self, hky):
        q, _ = hky
        kernel = cp.build_direct_kernel(q)
        ft = cp.direct_first_transition(kernel, 0, 1, 2.0)
        for i in range(1, 4):
            cdf = ft.cdf(i)
            assert cdf(0.0) == pytest.approx(0.0, abs=1e-12)
            assert cdf(2.0) == pytest.approx(1.0, abs=1e-9)
            grid = [cdf(t) for t in np.linspace(0.0, 2.0, 41)]
            assert all(b - a > -1e-12 for a, b in zip(grid, grid[1:]))

    def test_unreachable_endpoint(self, two_state):
        # synthetic decomposition with an exactly zero off-diagonal P(t)
        fake = cp.SpectralDecomposition(
            u=np.eye(2), eigenvalues=np.array([0.0, -1.0]), u_inv=np.eye(2), scale=1.0
        )
        kernel = cp.DirectKernel(q=two_state, decomposition=fake)
        with pytest.raises(errors.UnreachableEndpoint):
            cp.direct_first_transition(kernel, 0, 1, 1.0)
        problem = cp.EndpointProblem(two_state, 0, 1, 1.0)
        with pytest.raises(errors.UnreachableEndpoint):
            cp.direct_sample(kernel, problem, cp.RandomStream(1))

    def test_deep_tail_masses_breakdown(self, gy):
        # endpoints many substitutions apart at tiny T: the spectral sum
        # cannot resolve P_ab, and the mass check reports the breakdown
        q, _ = gy
        kernel = cp.build_direct_kernel(q)
        with pytest.raises((errors.NumericalBreakdown, errors.UnreachableEndpoint)):
            cp.direct_first_transition(kernel, "AAA", "TTT", 1e-9)

    def test_complex_spectrum_blocks_kernel(self):
        q = cp.validate_rate_matrix(
            [[-3.0, 1.0, 2.0], [2.0, -3.0, 1.0], [1.0, 2.0, -3.0]], ["a", "b", "c"]
        )
        with pytest.raises(errors.ComplexSpectrum):
            cp.build_direct_kernel(q)

    def test_inversion_roundtrip(self, hky, hky_cpg):
        # spec invariant: CDF(inverted time) = u within 1e-8
        for q, pi in (hky, hky_cpg):
            kernel = cp.build_direct_kernel(q)
            rng = cp.RandomStream(31)
            checked = 0
            while checked < 500:
                a = rng.discrete([1.0] * q.n)
                b = rng.discrete([1.0] * q.n)
                T = 0.2 + 1.8 * rng.uniform()
                ft = cp.direct_first_transition(kernel, a, b, T)
                candidates = [i for i in range(q.n) if ft.p_next[i] > 1e-6]
                i = candidates[rng.discrete([1.0] * len(candidates))]
                u = rng.open_uniform()
                t_star = invert_waiting_time(ft, i, u)
                assert 0.0 < t_star < T
                assert abs(ft.cdf(i)(t_star) - u) < 1e-8
                checked += 1


class TestDirectSample:
    def test_constant_path_when_bernoulli_accepts(self, two_state):
        kernel = cp.build_direct_kernel(two_state)
        problem = cp.EndpointProblem(two_state, 0, 0, 1.0)
        found = False
        for seed in range(20):
            rep = cp.direct_sample(kernel, problem, cp.RandomStream(seed))
            if rep.path.n_jumps == 0:
                assert rep.recursion_steps == 0
                found = True
                break
        assert found

    def test_constant_path_probability(self, two_state):
        kernel = cp.build_direct_kernel(two_state)
        problem = cp.EndpointProblem(two_state, 0, 0, 1.0)
        n = 10_000
        constant = sum(
            1
            for s in cp.RandomStream(33).split(n)
            if cp.direct_sample(kernel, problem, s).path.n_jumps == 0
        )
        target = math.exp(-1.0) / ((1.0 + math.exp(-2.0)) / 2.0)
        se = math.sqrt(target * (1 - target) / n)
        assert abs(constant / n - target) <= 3 * se

    def test_endpoints_respected(self, hky_cpg):
        q, _ = hky_cpg
        kernel = cp.build_direct_kernel(q)
        problem = cp.EndpointProblem(q, "T", "C", 1.0)
        for s in cp.RandomStream(34).split(100):
            rep = cp.direct_sample(kernel, problem, s)
            assert rep.path.start_state == 3
            assert rep.path.end_state == 2
            assert rep.recursion_steps == rep.path.n_jumps

    def test_mean_jumps_match_analytic(self, hky):
        q, pi = hky
        d = cp.decompose_auto(q, pi)
        kernel = cp.build_direct_kernel(q, d)
        problem = cp.EndpointProblem(q, "A", "G", 0.5)
        target = cp.expected_recursions_direct(d, q, 0, 1, 0.5)
        n = 10_000
        counts = [cp.direct_sample(kernel, problem, s).recursion_steps for s in cp.RandomStream(35).split(n)]
        mean = float(np.mean(counts))
        se = float(np.std(counts, ddof=1)) / math.sqrt(n)
        assert abs(mean - target) <= 3 * se

    def test_kernel_reuse_single_decomposition(self, hky):
        q, _ = hky
        cp.core.decomposition_counter.reset()
        kernel = cp.build_direct_kernel(q)
        problem = cp.EndpointProblem(q, "A", "G", 1.0)
        for s in cp.RandomStream(36).split(100):
            cp.direct_sample(kernel, problem, s)
        assert cp.core.decomposition_counter.value == 1


class TestUniformizationKernel:
    def test_two_state_kernel(self, two_state):
        k = cp.build_uniformization_kernel(two_state)
        assert k.mu == 1.0
        assert np.array_equal(k.r, [[0.0, 1.0], [1.0, 0.0]])
        assert np.all(k.r.sum(axis=1) == 1.0)

    def test_cpg_rate_bound(self, hky_cpg):
        q, _ = hky_cpg
        k = cp.build_uniformization_kernel(q)
        assert k.mu == pytest.approx(20.0)

    def test_row_sums(self, hky, gy):
        for q, _ in (hky, gy):
            k = cp.build_uniformization_kernel(q)
            assert np.abs(k.r.sum(axis=1) - 1.0).max() < 1e-12
            assert k.r.min() >= 0.0

    def test_power_cache_matches_matrix_power(self, hky):
        q, _ = hky
        k = cp.build_uniformization_kernel(q)
        block = k.powers(7)
        for m in (1, 3, 7):
            assert np.abs(block[m - 1] - np.linalg.matrix_power(k.r, m)).max() < 1e-10

    def test_cache_grows_monotonically(self, two_state):
        k = cp.build_uniformization_kernel(two_state)
        assert k.cached_power_count == 1
        k.powers(5)
        assert k.cached_power_count >= 5
        first = k.powers(3)
        assert first.shape[0] >= 5


class TestConditionalJumpCount:
    def test_distinct_endpoints_at_least_one(self, hky):
        q, _ = hky
        k = cp.build_uniformization_kernel(q)
        problem = cp.EndpointProblem(q, "A", "G", 1.0)
        rng = cp.RandomStream(41)
        assert all(cp.conditional_jump_count(k, problem, rng.uniform()) >= 1 for _ in range(500))

    def test_two_state_zero_count_equals_constancy_probability(self, two_state):
        # R has zero diagonal here, so P(N=0) must equal the direct sampler's p_a
        k = cp.build_uniformization_kernel(two_state)
        problem = cp.EndpointProblem(two_state, 0, 0, 1.0)
        masses = jump_count_masses(k, problem)
        expected = math.exp(-1.0) / ((1.0 + math.exp(-2.0)) / 2.0)
        assert masses[0] == pytest.approx(expected, abs=1e-10)

    def test_distribution_matches_masses(self, hky):
        q, _ = hky
        k = cp.build_uniformization_kernel(q)
        problem = cp.EndpointProblem(q, "A", "G", 1.0)
        rng = cp.RandomStream(42)
        draws = [cp.conditional_jump_count(k, problem, rng.uniform()) for _ in range(10_000)]
        masses = jump_count_masses(k, problem)
        _, p = chi_square_gof(draws, masses)
        assert p > 0.001

    def test_series_truncation_guard(self, two_state):
        k = cp.build_uniformization_kernel(two_state)
        problem = cp.EndpointProblem(two_state, 0, 1, 1.0)
        cap = series_cap(k.mu, 1.0)
        assert cap == math.ceil(1.0 + 10.0 + 100.0)
        # u = 1 - eps cannot be reached when pab is (wrongly) doubled
        bad = cp.build_uniformization_kernel(two_state, lambda t: np.full((2, 2), 2.0))
        with pytest.raises(errors.SeriesTruncation):
            cp.conditional_jump_count(bad, problem, 0.999999)


class TestUniformizationSample:
    def test_single_jump_case(self, hky):
        q, _ = hky
        k = cp.build_uniformization_kernel(q)
        problem = cp.EndpointProblem(q, "A", "G", 0.05)
        for s in cp.RandomStream(51).split(300):
            rep = cp.uniformization_sample(k, problem, s)
            if rep.recursion_steps == 1:
                assert rep.path.n_jumps == 1
                assert 0.0 < rep.path.times[1] < 0.05

    def test_no_self_transitions(self, hky_cpg):
        q, _ = hky_cpg
        k = cp.build_uniformization_kernel(q)
        problem = cp.EndpointProblem(q, "C", "C", 1.0)
        for s in cp.RandomStream(52).split(300):
            rep = cp.uniformization_sample(k, problem, s)
            states = rep.path.states
            assert np.all(states[1:] != states[:-1])
            assert rep.recursion_steps >= rep.path.n_jumps

    def test_dwell_mean_matches_direct(self, two_state):
        problem = cp.EndpointProblem(two_state, 0, 1, 1.0)
        uk = cp.build_uniformization_kernel(two_state)
        dk = cp.build_direct_kernel(two_state)
        n = 10_000

        def dwell_in_zero(path):
            return sum(d for s, d in zip(path.states, path.dwell_durations()) if s == 0)

        du = [dwell_in_zero(cp.uniformization_sample(uk, problem, s).path)
              for s in cp.RandomStream(53).split(n)]
        dd = [dwell_in_zero(cp.direct_sample(dk, problem, s).path)
              for s in cp.RandomStream(54).split(n)]
        se = math.sqrt(np.var(du, ddof=1) / n + np.var(dd, ddof=1) / n)
        assert abs(np.mean(du) - np.mean(dd)) <= 3 * se

    def test_mean_count_matches_analytic(self, hky):
        q, pi = hky
        d = cp.decompose_auto(q, pi)
        k = cp.build_uniformization_kernel(q, d)
        problem = cp.EndpointProblem(q, "A", "G", 1.0)
        target = cp.expected_recursions_uniformization(k, d, 0, 1, 1.0)
        n = 10_000
        counts = [cp.uniformization_sample(k, problem, s).recursion_steps
                  for s in cp.RandomStream(55).split(n)]
        mean = float(np.mean(counts))
        se = float(np.std(counts, ddof=1)) / math.sqrt(n)
        assert abs(mean - target) <= 3 * se


class TestSampleBatch:
    def test_k1_equals_first_substream(self, hky):
        q, _ = hky
        problem = cp.EndpointProblem(q, "A", "G", 1.0)
        batch = cp.sample_batch("direct", problem, 1, cp.RandomStream(61))
        single = cp.direct_sample(
            cp.build_direct_kernel(q), problem, cp.RandomStream(61).split(1)[0]
        )
        assert batch.reports[0][1].path == single.path

    def test_deterministic_across_runs(self, hky):
        q, _ = hky
        problem = cp.EndpointProblem(q, "A", "G", 1.0)
        runs = []
        for _ in range(2):
            batch = cp.sample_batch("uniformization", problem, 100, cp.RandomStream(62))
            runs.append([(r.path.states.tolist(), r.path.times.tolist()) for _, r in batch.reports])
        assert runs[0] == runs[1]

    def test_single_decomposition_for_batch(self, hky):
        q, _ = hky
        problem = cp.EndpointProblem(q, "A", "G", 1.0)
        cp.core.decomposition_counter.reset()
        cp.sample_batch("direct", problem, 500, cp.RandomStream(63))
        assert cp.core.decomposition_counter.value == 1

    def test_partial_failures_collected(self, hky_cpg):
        q, _ = hky_cpg
        problem = cp.EndpointProblem(q, "T", "C", 2.0)  # p_acc ~ 0.015
        batch = cp.sample_batch(
            "rejection", problem, 50, cp.RandomStream(64), cfg=cp.RejectionConfig(max_attempts=20)
        )
        assert batch.failures, "expected some budget failures at 20 attempts"
        assert batch.reports, "expected some successes too"
        indices = {i for i, _ in batch.reports} | {i for i, _ in batch.failures}
        assert indices == set(range(50))

    def test_all_failures_raise(self, gy):
        q, _ = gy
        problem = cp.EndpointProblem(q, "AAA", "TTT", 0.5)
        with pytest.raises(errors.RejectionBudgetExceeded):
            cp.sample_batch(
                "rejection", problem, 3, cp.RandomStream(65), cfg=cp.RejectionConfig(max_attempts=5)
            )

    def test_first_jump_distribution(self, hky):
        # direct sampler's first jump follows the first-transition masses
        q, _ = hky
        kernel = cp.build_direct_kernel(q)
        problem = cp.EndpointProblem(q, "A", "G", 1.0)
        ft = cp.direct_first_transition(kernel, 0, 1, 1.0)
        n = 10_000
        batch = cp.sample_batch("direct", problem, n, cp.RandomStream(66), kernel=kernel)
        firsts = [int(r.path.states[1]) for _, r in batch.reports]
        for i in range(1, 4):
            target = float(ft.p_next[i])
            hits = sum(1 for f in firsts if f == i)
            se = math.sqrt(target * (1 - target) / n)
            assert abs(hits / n - target) <= 3.5 * se
