import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bearlab.mdp import (
    TabularMDP,
    TabularPolicy,
    bellman_optimality_backup,
    discounted_state_marginal,
    evaluate_policy_exact,
    greedy_policy,
    horizon_for,
    marginal_tail_bound,
    optimal_q,
    policy_evaluation_backup,
    q_iteration,
    random_mdp,
    sample_rollout,
)


def one_state(reward=1.0, gamma=0.5, n_actions=1):
    P = np.ones((1, n_actions, 1))
    R = np.full((1, n_actions), reward)
    return TabularMDP(P, R, gamma, np.array([1.0]))


def loop_backup(mdp, q):
    """Per-entry summation, kept deliberately naive."""
    S, A = q.shape
    out = np.zeros((S, A))
    for s in range(S):
        for a in range(A):
            tot = 0.0
            for s2 in range(S):
                tot += mdp.transition[s, a, s2] * max(q[s2])
            out[s, a] = mdp.reward[s, a] + mdp.discount * tot
    return out


seeds = st.integers(0, 2**31 - 1)


class TestConstruction:
    def test_rejects_bad_rows(self):
        P = np.array([[[0.5, 0.4]], [[1.0, 0.0]]])
        with pytest.raises(ValueError, match="sum to 1"):
            TabularMDP(P, np.zeros((2, 1)), 0.9, np.array([1.0, 0.0]))

    def test_rejects_discount(self):
        with pytest.raises(ValueError, match="discount"):
            TabularMDP(np.ones((1, 1, 1)), np.zeros((1, 1)), 1.0, np.array([1.0]))

    def test_rejects_reward_out_of_bounds(self):
        with pytest.raises(ValueError, match="within"):
            TabularMDP(np.ones((1, 1, 1)), np.full((1, 1), 2.0), 0.5, np.array([1.0]))

    def test_rejects_bad_initial_dist(self):
        with pytest.raises(ValueError, match="initial_dist"):
            TabularMDP(np.ones((1, 1, 1)), np.zeros((1, 1)), 0.5, np.array([0.5]))

    def test_arrays_are_frozen(self):
        mdp = one_state()
        with pytest.raises(ValueError):
            mdp.reward[0, 0] = 3.0

    def test_policy_rows_validated(self):
        with pytest.raises(ValueError):
            TabularPolicy(np.array([[0.7, 0.2]]))

    @given(seeds)
    @settings(max_examples=20, deadline=None)
    def test_text_round_trip_is_exact(self, seed):
        mdp = random_mdp(4, 3, 0.93, np.random.default_rng(seed))
        back = TabularMDP.loads(mdp.dumps(), mdp.reward_bounds)
        assert back.discount == mdp.discount
        assert np.array_equal(back.transition, mdp.transition)
        assert np.array_equal(back.reward, mdp.reward)
        assert np.array_equal(back.initial_dist, mdp.initial_dist)

    def test_loads_names_line(self):
        text = "mdp 1 1 0.5\nrho0 1.0\n0.0 1.0 2.0\n"
        with pytest.raises(ValueError, match="line 3"):
            TabularMDP.loads(text)


class TestBellmanBackup:
    def test_single_state_from_zero(self):
        assert bellman_optimality_backup(one_state(), np.zeros((1, 1)))[0, 0] == 1.0

    def test_single_state_fixed_point(self):
        assert bellman_optimality_backup(one_state(), np.full((1, 1), 2.0))[0, 0] == 2.0

    def test_matches_loop_oracle(self, rng):
        mdp = random_mdp(5, 3, 0.9, rng)
        q = rng.normal(size=(5, 3))
        np.testing.assert_allclose(bellman_optimality_backup(mdp, q), loop_backup(mdp, q), atol=1e-12)

    def test_input_unmodified(self, rng):
        mdp = random_mdp(3, 2, 0.9, rng)
        q = rng.normal(size=(3, 2))
        keep = q.copy()
        bellman_optimality_backup(mdp, q)
        assert np.array_equal(q, keep)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            bellman_optimality_backup(one_state(), np.array([[np.nan]]))

    @given(seeds)
    @settings(max_examples=50, deadline=None)
    def test_contraction(self, seed):
        rng = np.random.default_rng(seed)
        mdp = random_mdp(int(rng.integers(1, 8)), int(rng.integers(1, 5)), float(rng.uniform(0.1, 0.99)), rng)
        q1 = rng.normal(scale=5, size=(mdp.n_states, mdp.n_actions))
        q2 = rng.normal(scale=5, size=q1.shape)
        lhs = np.max(np.abs(bellman_optimality_backup(mdp, q1) - bellman_optimality_backup(mdp, q2)))
        assert lhs <= mdp.discount * np.max(np.abs(q1 - q2)) + 1e-12


class TestPolicyEvaluationBackup:
    def test_gamma_zero_returns_reward(self, rng):
        # gamma must be positive; use a tiny one with a deterministic chain
        P = np.zeros((2, 1, 2))
        P[0, 0, 1] = P[1, 0, 0] = 1.0
        mdp = TabularMDP(P, np.array([[0.3], [0.7]]), 1e-300, np.array([1.0, 0.0]))
        out = policy_evaluation_backup(mdp, TabularPolicy.deterministic([0, 0], 1), np.ones((2, 1)))
        np.testing.assert_allclose(out, mdp.reward)

    def test_uniform_expectation(self):
        mdp = TabularMDP(np.ones((1, 2, 1)), np.zeros((1, 2)), 0.5, np.array([1.0]))
        out = policy_evaluation_backup(mdp, TabularPolicy.uniform(1, 2), np.array([[0.0, 2.0]]))
        np.testing.assert_allclose(out, 0.5)

    @given(seeds)
    @settings(max_examples=50, deadline=None)
    def test_greedy_policy_matches_optimality_backup(self, seed):
        rng = np.random.default_rng(seed)
        mdp = random_mdp(5, 3, 0.9, rng)
        q = rng.normal(size=(5, 3))
        out = policy_evaluation_backup(mdp, greedy_policy(q), q)
        assert np.array_equal(out, bellman_optimality_backup(mdp, q))


class TestQIteration:
    def test_single_state(self):
        res = q_iteration(one_state(), tol=1e-8)
        assert res.converged
        assert abs(res.q[0, 0] - 2.0) <= 1e-8

    def test_contraction_rate(self, rng):
        mdp = random_mdp(6, 3, 0.8, rng)
        q_star = optimal_q(mdp)
        q = np.zeros_like(q_star)
        err0 = np.max(np.abs(q - q_star))
        for k in range(1, 30):
            q = bellman_optimality_backup(mdp, q)
            assert np.max(np.abs(q - q_star)) <= mdp.discount**k * err0 + 1e-10

    def test_matches_linear_solve_of_greedy(self, rng):
        mdp = random_mdp(7, 3, 0.9, rng)
        q_star = optimal_q(mdp)
        np.testing.assert_allclose(q_star, evaluate_policy_exact(mdp, greedy_policy(q_star)), atol=1e-9)

    def test_fixed_point_invariance(self, rng):
        mdp = random_mdp(5, 2, 0.95, rng)
        tol = 1e-9
        res = q_iteration(mdp, tol=tol)
        assert np.max(np.abs(bellman_optimality_backup(mdp, res.q) - res.q)) <= 10 * tol

    def test_non_convergence_flagged(self, rng):
        res = q_iteration(random_mdp(4, 2, 0.99, rng), tol=1e-12, max_iter=5)
        assert not res.converged
        assert res.iterations == 5

    def test_rejects_bad_tol(self):
        with pytest.raises(ValueError):
            q_iteration(one_state(), tol=0.0)


class TestGreedy:
    def test_tie_goes_to_lowest_index(self):
        assert greedy_policy(np.array([[0.0, 1.0, 1.0]])).probs[0].tolist() == [0, 1, 0]

    def test_simple(self):
        assert greedy_policy(np.array([[5.0, 2.0]])).probs[0, 0] == 1.0

    def test_matches_scan(self, rng):
        q = rng.integers(0, 3, size=(20, 4)).astype(float)
        pi = greedy_policy(q)
        for s in range(20):
            best = 0
            for a in range(4):
                if q[s, a] > q[s, best]:
                    best = a
            assert pi.probs[s, best] == 1.0


class TestMarginals:
    def test_tiny_gamma_gives_rho0(self, rng):
        mdp = random_mdp(4, 2, 1e-300, rng)
        mu = discounted_state_marginal(mdp, TabularPolicy.uniform(4, 2), 5)
        np.testing.assert_allclose(mu, mdp.initial_dist)

    def test_absorbing_state_geometric(self):
        mdp = one_state(gamma=0.9)
        H = horizon_for(0.9, 1e-12)
        mu = discounted_state_marginal(mdp, TabularPolicy.uniform(1, 1), H)
        assert abs(mu[0] - 10.0) <= marginal_tail_bound(0.9, H)

    def test_chain_matches_matrix_power(self, rng):
        mdp = random_mdp(3, 2, 0.7, rng)
        pi = TabularPolicy(rng.dirichlet(np.ones(2), size=3))
        P_pi = np.array([[sum(pi.probs[s, a] * mdp.transition[s, a, t] for a in range(2)) for t in range(3)] for s in range(3)])
        H = 25
        oracle = sum(0.7**t * mdp.initial_dist @ np.linalg.matrix_power(P_pi, t) for t in range(H + 1))
        np.testing.assert_allclose(discounted_state_marginal(mdp, pi, H), oracle, atol=1e-12)

    @given(seeds, st.integers(1, 60))
    @settings(max_examples=40, deadline=None)
    def test_mass_and_sign(self, seed, H):
        rng = np.random.default_rng(seed)
        g = float(rng.uniform(0.05, 0.99))
        mdp = random_mdp(5, 3, g, rng)
        mu = discounted_state_marginal(mdp, TabularPolicy(rng.dirichlet(np.ones(3), size=5)), H)
        assert np.all(mu >= 0)
        assert abs(mu.sum() - (1 - g ** (H + 1)) / (1 - g)) <= 1e-9

    def test_rejects_zero_horizon(self):
        with pytest.raises(ValueError):
            discounted_state_marginal(one_state(), TabularPolicy.uniform(1, 1), 0)


class TestRollout:
    def test_deterministic_mdp_ignores_seed(self):
        P = np.zeros((3, 1, 3))
        P[0, 0, 1] = P[1, 0, 2] = P[2, 0, 0] = 1.0
        mdp = TabularMDP(P, np.zeros((3, 1)), 0.9, np.array([1.0, 0, 0]))
        pi = TabularPolicy.uniform(3, 1)
        a = sample_rollout(mdp, pi, 10, 1)
        b = sample_rollout(mdp, pi, 10, 999)
        assert np.array_equal(a.states, b.states)

    def test_same_seed_same_trajectory(self, rng):
        mdp = random_mdp(5, 3, 0.9, rng)
        pi = TabularPolicy.uniform(5, 3)
        a, b = sample_rollout(mdp, pi, 50, 7), sample_rollout(mdp, pi, 50, 7)
        assert np.array_equal(a.states, b.states) and np.array_equal(a.actions, b.actions)

    def test_frequencies_within_binomial_bounds(self):
        rng = np.random.default_rng(3)
        mdp = random_mdp(3, 2, 0.9, rng)
        traj = sample_rollout(mdp, TabularPolicy.uniform(3, 2), 100_000, 11)
        counts = np.zeros((3, 2, 3))
        np.add.at(counts, (traj.states, traj.actions, traj.next_states), 1)
        n = counts.sum(axis=2, keepdims=True)
        p = mdp.transition
        sigma = np.sqrt(p * (1 - p) / n)
        assert np.all(np.abs(counts / n - p) <= 3 * sigma + 1e-12)

    def test_stop_state_ends_episode(self):
        P = np.zeros((2, 1, 2))
        P[0, 0, 1] = P[1, 0, 1] = 1.0
        mdp = TabularMDP(P, np.zeros((2, 1)), 0.9, np.array([1.0, 0.0]))
        traj = sample_rollout(mdp, TabularPolicy.uniform(2, 1), 10, 0, stop_states=(1,))
        assert len(traj) == 1 and traj.dones[-1]
