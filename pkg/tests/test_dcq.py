import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bearlab.dcq import (
    DegenerateSupport,
    EmptySupport,
    PolicyClass,
    TabularDataset,
    build_support_class,
    check_marginal_ratio_bound,
    check_performance_bound,
    class_fixed_point,
    concentrability_estimate,
    data_marginal,
    dc_backup,
    dc_value_iteration,
    empirical_dc_value_iteration,
    f_epsilon,
    full_class,
    max_class_marginal,
    policy_concentrability,
    run_bound_sweep,
    sampled_class_marginal,
    suboptimality_constant,
    sweep_instance,
    sweep_pass_rates,
    tv_premise,
)
from bearlab.mdp import (
    TabularMDP,
    TabularPolicy,
    bellman_optimality_backup,
    evaluate_policy_exact,
    optimal_q,
    policy_evaluation_backup,
    random_mdp,
)

EPS_GRID = (0.0, 0.05, 0.1, 0.2, 0.3, 0.5)
seeds = st.integers(0, 2**31 - 1)


def two_action_example():
    """One state, self-loop, R = (0, 1), gamma = 0.5, so Q* = (1, 2)."""
    mdp = TabularMDP(np.ones((1, 2, 1)), np.array([[0.0, 1.0]]), 0.5, np.array([1.0]), (0.0, 1.0))
    pc = build_support_class(TabularPolicy(np.array([[1.0, 0.0]])), 0.5)
    return mdp, pc


def singleton(beta_actions, n_actions):
    beta = TabularPolicy.deterministic(beta_actions, n_actions)
    return beta, build_support_class(beta, 0.5)


class TestSupportClass:
    def test_uniform_keeps_everything(self):
        pc = build_support_class(TabularPolicy.uniform(3, 4), 0.1)
        assert pc.allowed.all()

    def test_threshold(self):
        pc = build_support_class(TabularPolicy(np.array([[0.9, 0.05, 0.05]])), 0.06)
        assert pc.allowed.tolist() == [[True, False, False]]

    def test_empty_support_names_state(self):
        beta = TabularPolicy(np.array([[1.0, 0.0], [0.5, 0.5]]))
        with pytest.raises(EmptySupport) as info:
            build_support_class(beta, 0.6)
        assert info.value.state == 1

    def test_epsilon_range(self):
        with pytest.raises(ValueError):
            build_support_class(TabularPolicy.uniform(1, 2), 1.0)

    @given(seeds, st.floats(0.0, 0.5))
    @settings(max_examples=50, deadline=None)
    def test_mask_matches_threshold(self, seed, eps):
        _, beta = sweep_instance(seed)
        pc = build_support_class(beta, eps)
        assert np.array_equal(pc.allowed, beta.probs >= eps)

    def test_enumerates_all_deterministic_members(self):
        pc = PolicyClass(np.array([[True, True, False], [False, True, True]]), TabularPolicy.uniform(2, 3), 0.0)
        pols = list(pc.deterministic_policies())
        assert pc.n_deterministic() == len(pols) == 4


class TestBackup:
    def test_full_class_is_optimality_backup(self, rng):
        mdp = random_mdp(5, 3, 0.9, rng)
        q = rng.normal(size=(5, 3))
        np.testing.assert_array_equal(dc_backup(mdp, full_class(5, 3), q), bellman_optimality_backup(mdp, q))

    def test_singleton_is_policy_evaluation(self, rng):
        mdp = random_mdp(5, 3, 0.9, rng)
        beta, pc = singleton(rng.integers(3, size=5), 3)
        q = rng.normal(size=(5, 3))
        np.testing.assert_allclose(dc_backup(mdp, pc, q), policy_evaluation_backup(mdp, beta, q), atol=1e-14)

    def test_hand_example(self):
        mdp, pc = two_action_example()
        np.testing.assert_allclose(dc_backup(mdp, pc, np.array([[1.0, 2.0]])), [[0.5, 1.5]], atol=1e-15)

    @given(seeds)
    @settings(max_examples=40, deadline=None)
    def test_contraction(self, seed):
        mdp, beta = sweep_instance(seed)
        rng = np.random.default_rng(seed)
        pc = build_support_class(beta, float(rng.uniform(0, 0.5)))
        q1 = rng.normal(scale=3, size=(mdp.n_states, mdp.n_actions))
        q2 = rng.normal(scale=3, size=q1.shape)
        lhs = np.max(np.abs(dc_backup(mdp, pc, q1) - dc_backup(mdp, pc, q2)))
        assert lhs <= mdp.discount * np.max(np.abs(q1 - q2)) + 1e-12

    @given(seeds)
    @settings(max_examples=25, deadline=None)
    def test_fixed_point_monotone_in_mask(self, seed):
        mdp, beta = sweep_instance(seed)
        fps = [class_fixed_point(mdp, build_support_class(beta, e)) for e in sorted(EPS_GRID, reverse=True)]
        for small, big in zip(fps, fps[1:]):
            assert np.all(big >= small - 1e-9)


class TestValueIteration:
    def test_full_class_reaches_q_star(self, rng):
        mdp = random_mdp(6, 3, 0.9, rng)
        res = dc_value_iteration(mdp, full_class(6, 3), tol=1e-12)
        assert res.converged
        assert np.max(np.abs(res.q - optimal_q(mdp))) <= 1e-8

    def test_singleton_reaches_linear_solve(self, rng):
        mdp = random_mdp(6, 3, 0.9, rng)
        beta, pc = singleton(rng.integers(3, size=6), 3)
        res = dc_value_iteration(mdp, pc, tol=1e-12)
        assert np.max(np.abs(res.q - evaluate_policy_exact(mdp, beta))) <= 1e-8

    def test_distance_to_fixed_point_shrinks(self, rng):
        mdp, beta = sweep_instance(5)
        pc = build_support_class(beta, 0.2)
        fp = class_fixed_point(mdp, pc)
        res = dc_value_iteration(mdp, pc, max_iter=40, tol=1e-300, reference=fp)
        zeta, delta = res.trace.as_arrays()
        assert np.all(delta == 0)
        gaps = np.concatenate([[np.max(np.abs(fp))], zeta.max(axis=(1, 2))])
        assert np.all(gaps[1:] <= mdp.discount * gaps[:-1] + 1e-12)

    def test_noise_is_bounded_and_fresh(self, rng):
        mdp, beta = sweep_instance(2)
        res = dc_value_iteration(mdp, build_support_class(beta, 0.1), max_iter=30, noise_level=0.05, seed=4)
        _, delta = res.trace.as_arrays()
        assert res.iterations == 30
        assert delta.max() <= 0.05
        assert not np.array_equal(delta[0], delta[1])

    def test_non_convergence_flagged(self, rng):
        res = dc_value_iteration(random_mdp(4, 2, 0.99, rng), full_class(4, 2), tol=1e-12, max_iter=3)
        assert not res.converged


class TestErrorRecursion:
    """zeta_k <= delta_k + gamma E_s' max_allowed zeta_{k-1} (+ alpha when measured against Q*)."""

    @staticmethod
    def run(seed, eps, noise, reference_kind):
        mdp, beta = sweep_instance(seed)
        pc = build_support_class(beta, eps)
        q_star = optimal_q(mdp)
        ref = q_star if reference_kind == "star" else class_fixed_point(mdp, pc)
        q0 = np.random.default_rng(seed).uniform(0, 10, size=q_star.shape)
        res = dc_value_iteration(mdp, pc, max_iter=25, noise_level=noise, seed=seed, q0=q0, reference=ref)
        zeta, delta = res.trace.as_arrays()
        zeta = np.concatenate([np.abs(q0 - ref)[None], zeta])
        return mdp, pc, zeta, delta, q_star

    @given(seeds, st.sampled_from([0.0, 0.05, 0.2]))
    @settings(max_examples=30, deadline=None)
    def test_full_class_against_q_star(self, seed, noise):
        mdp, beta = sweep_instance(seed)
        pc = full_class(mdp.n_states, mdp.n_actions)
        q0 = np.zeros((mdp.n_states, mdp.n_actions))
        res = dc_value_iteration(mdp, pc, max_iter=25, noise_level=noise, seed=seed, q0=q0)
        zeta, delta = res.trace.as_arrays()
        zeta = np.concatenate([np.abs(q0 - optimal_q(mdp))[None], zeta])
        for k in range(1, len(zeta)):
            bound = delta[k - 1] + mdp.discount * mdp.transition @ pc.values(zeta[k - 1])
            assert np.all(zeta[k] <= bound + 1e-9)

    @given(seeds, st.sampled_from([0.05, 0.2, 0.5]), st.sampled_from([0.0, 0.1]))
    @settings(max_examples=30, deadline=None)
    def test_restricted_class_against_class_fixed_point(self, seed, eps, noise):
        mdp, pc, zeta, delta, _ = self.run(seed, eps, noise, "class")
        for k in range(1, len(zeta)):
            bound = delta[k - 1] + mdp.discount * mdp.transition @ pc.values(zeta[k - 1])
            assert np.all(zeta[k] <= bound + 1e-9)

    @given(seeds, st.sampled_from([0.05, 0.2, 0.5]), st.sampled_from([0.0, 0.1]))
    @settings(max_examples=30, deadline=None)
    def test_restricted_class_against_q_star_with_alpha(self, seed, eps, noise):
        mdp, pc, zeta, delta, q_star = self.run(seed, eps, noise, "star")
        alpha = suboptimality_constant(mdp, pc, q_star)
        for k in range(1, len(zeta)):
            bound = delta[k - 1] + mdp.discount * mdp.transition @ pc.values(zeta[k - 1]) + alpha
            assert np.all(zeta[k] <= bound + 1e-9)


class TestEmpirical:
    def test_exact_coverage_reaches_class_fixed_point(self, rng):
        # deterministic transitions: one visit per pair recovers the model exactly
        S, A = 5, 3
        P = np.zeros((S, A, S))
        nxt = rng.integers(S, size=(S, A))
        P[np.arange(S)[:, None], np.arange(A)[None, :], nxt] = 1.0
        mdp = TabularMDP(P, rng.uniform(size=(S, A)), 0.9, np.full(S, 1 / S), (0.0, 1.0))
        s, a = np.meshgrid(np.arange(S), np.arange(A), indexing="ij")
        data = TabularDataset(s.ravel(), a.ravel(), mdp.reward.ravel(), nxt.ravel(), np.zeros(S * A, bool))
        pc = build_support_class(TabularPolicy(rng.dirichlet(np.ones(A), size=S)), 0.2)
        q, _ = empirical_dc_value_iteration(mdp, pc, data, 400)
        np.testing.assert_allclose(q, class_fixed_point(mdp, pc), atol=1e-10)

    def test_uncovered_optimal_action_leaves_error(self):
        # s0: a0 -> s2 (r=0), a1 -> s2 (r=1, never in data); s1 -> s0; s2 absorbing
        P = np.zeros((3, 2, 3))
        P[0, :, 2] = 1.0
        P[1, :, 0] = 1.0
        P[2, :, 2] = 1.0
        R = np.zeros((3, 2))
        R[0, 1] = 1.0
        g = 0.9
        mdp = TabularMDP(P, R, g, np.array([0, 1.0, 0]), (0.0, 1.0))
        data = TabularDataset(
            np.array([0, 1, 1, 2, 2]), np.array([0, 0, 1, 0, 1]), np.zeros(5), np.array([2, 0, 0, 2, 2]), np.zeros(5, bool)
        )
        q, trace = empirical_dc_value_iteration(mdp, full_class(3, 2), data, 50, q0=np.zeros((3, 2)))
        zeta, _ = trace.as_arrays()
        assert np.all(zeta[:, 1, :] >= g - 1e-12)
        assert np.all(zeta[:, 0, 1] == 1.0)

    def test_empirical_behavior_uniform_for_unvisited(self):
        data = TabularDataset(np.array([0, 0]), np.array([1, 1]), np.zeros(2), np.array([0, 0]), np.zeros(2, bool))
        beta = data.empirical_behavior(2, 2)
        assert beta.probs.tolist() == [[0.0, 1.0], [0.5, 0.5]]

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            TabularDataset(np.array([], int), np.array([], int), np.array([]), np.array([], int), np.array([], bool))


class TestConstants:
    def test_alpha_hand_example(self):
        mdp, pc = two_action_example()
        assert abs(suboptimality_constant(mdp, pc) - 0.5) <= 1e-12

    @given(seeds)
    @settings(max_examples=20, deadline=None)
    def test_alpha_zero_for_full_and_optimal_classes(self, seed):
        mdp, _ = sweep_instance(seed)
        assert suboptimality_constant(mdp, full_class(mdp.n_states, mdp.n_actions)) == 0.0
        q_star = optimal_q(mdp)
        mask = np.zeros(q_star.shape, bool)
        mask[np.arange(mdp.n_states), q_star.argmax(axis=1)] = True
        mask |= np.random.default_rng(seed).uniform(size=mask.shape) < 0.3
        pc = PolicyClass(mask, TabularPolicy.uniform(*mask.shape), 0.0)
        assert suboptimality_constant(mdp, pc, q_star) <= 1e-12

    @given(seeds)
    @settings(max_examples=20, deadline=None)
    def test_alpha_and_concentrability_monotone(self, seed):
        mdp, beta = sweep_instance(seed)
        alphas, concs = [], []
        for eps in sorted(EPS_GRID, reverse=True):
            pc = build_support_class(beta, eps)
            alphas.append(suboptimality_constant(mdp, pc))
            concs.append(concentrability_estimate(mdp, pc))
        assert all(b <= a + 1e-12 for a, b in zip(alphas, alphas[1:]))
        assert all(b >= a - 1e-12 for a, b in zip(concs, concs[1:]))

    def test_f_epsilon_symmetric_chain(self):
        mdp = TabularMDP(np.full((2, 2, 2), 0.5), np.zeros((2, 2)), 0.9, np.array([0.5, 0.5]))
        pc = build_support_class(TabularPolicy.uniform(2, 2), 0.1)
        assert abs(f_epsilon(mdp, pc) - 0.5) <= 1e-12

    def test_f_epsilon_singleton_is_min_of_supported_mu(self, rng):
        mdp = random_mdp(5, 2, 0.9, rng)
        beta, pc = singleton(rng.integers(2, size=5), 2)
        mu = data_marginal(mdp, beta)
        assert f_epsilon(mdp, pc) == pytest.approx(mu[mu > 1e-12].min(), abs=1e-12)

    @given(seeds)
    @settings(max_examples=20, deadline=None)
    def test_f_epsilon_monotone(self, seed):
        mdp, beta = sweep_instance(seed)
        fs = [f_epsilon(mdp, build_support_class(beta, e)) for e in sorted(EPS_GRID, reverse=True)]
        assert all(b <= a + 1e-12 for a, b in zip(fs, fs[1:]))

    def test_f_epsilon_degenerate(self, rng):
        mdp = random_mdp(3, 2, 0.9, rng)
        with pytest.raises(DegenerateSupport):
            f_epsilon(mdp, full_class(3, 2), class_marginal=np.zeros(3))

    def test_concentrability_one_at_stationarity(self, rng):
        mdp = random_mdp(4, 2, 0.9, rng)
        beta, pc = singleton(rng.integers(2, size=4), 2)
        P_b = beta.state_transition(mdp)
        w, v = np.linalg.eig(P_b.T)
        d = np.real(v[:, np.argmin(np.abs(w - 1))])
        stat = mdp.with_initial_dist(d / d.sum())
        assert concentrability_estimate(stat, pc) == pytest.approx(1.0, abs=1e-5)
        assert policy_concentrability(stat, beta) == pytest.approx(1.0, abs=1e-5)

    def test_concentrability_infinite_when_data_misses_state(self):
        P = np.zeros((2, 2, 2))
        P[:, 0, 0] = 1.0
        P[:, 1, 1] = 1.0
        mdp = TabularMDP(P, np.zeros((2, 2)), 0.9, np.array([1.0, 0.0]))
        beta = TabularPolicy(np.array([[1.0, 0.0], [1.0, 0.0]]))
        assert concentrability_estimate(mdp, build_support_class(beta, 0.0)) == np.inf

    @given(seeds, st.sampled_from(EPS_GRID[1:]))
    @settings(max_examples=20, deadline=None)
    def test_sampled_estimates_are_lower_bounds(self, seed, eps):
        mdp, beta = sweep_instance(seed)
        pc = build_support_class(beta, eps)
        exact = concentrability_estimate(mdp, pc)
        sampled = concentrability_estimate(mdp, pc, n_policy_samples=16, seed=seed, method="sampled")
        assert sampled <= exact + 1e-9
        np.testing.assert_array_less(sampled_class_marginal(mdp, pc, 16, seed), max_class_marginal(mdp, pc, 300) + 1e-9)

    def test_unknown_method(self, rng):
        with pytest.raises(ValueError):
            concentrability_estimate(random_mdp(2, 2, 0.9, rng), full_class(2, 2), method="magic")


class TestBoundChecks:
    def test_performance_full_class_noise_free(self, rng):
        mdp = random_mdp(5, 3, 0.9, rng)
        rep = check_performance_bound(mdp, full_class(5, 3), 0.0)
        assert rep.lhs <= 1e-9 and rep.rhs == 0.0 and rep.passed

    def test_performance_counterexample_to_uncorrected_form(self):
        # rho0 sits on a state whose optimal action is excluded
        rep = check_performance_bound(*self.instance(23, 0.5), 0.0)
        assert not rep.passed
        assert rep.details["passed_corrected"]

    @staticmethod
    def instance(seed, eps):
        mdp, beta = sweep_instance(seed)
        return mdp, build_support_class(beta, eps)

    @given(seeds, st.sampled_from([0.0, 0.05, 0.2]))
    @settings(max_examples=15, deadline=None)
    def test_performance_corrected_form_holds(self, seed, noise):
        rep = check_performance_bound(*self.instance(seed, 0.2), noise, seed=seed)
        assert rep.inconclusive or rep.details["passed_corrected"]

    def test_ratio_singleton_is_one(self, rng):
        mdp = random_mdp(4, 3, 0.9, rng)
        _, pc = singleton(rng.integers(3, size=4), 3)
        rep = check_marginal_ratio_bound(mdp, pc)
        assert rep.lhs == pytest.approx(1.0, abs=1e-9) and rep.passed

    def test_tv_premise(self):
        beta = TabularPolicy(np.array([[0.6, 0.3, 0.1]]))
        worst, ok = tv_premise(build_support_class(beta, 0.3))
        assert worst == pytest.approx(0.7) and ok

    @given(seeds, st.sampled_from(EPS_GRID[1:]))
    @settings(max_examples=30, deadline=None)
    def test_ratio_bound_and_cross_checks(self, seed, eps):
        mdp, pc = self.instance(seed, eps)
        rep = check_marginal_ratio_bound(mdp, pc, seed=seed)
        d = rep.details
        assert rep.passed and d["tv_ok"]
        assert d["sampled_ratio"] <= rep.lhs + 1e-9
        assert d["c_class"] <= d["c_behavior"] * rep.rhs + 1e-9

    def test_sweep_is_deterministic(self):
        a = run_bound_sweep(3, seed=5)
        b = run_bound_sweep(3, seed=5)
        assert [(r.lhs, r.rhs) for r in a] == [(r.lhs, r.rhs) for r in b]
        rates = sweep_pass_rates(a)
        assert set(rates) == {"marginal_ratio", "performance", "performance_corrected"}
