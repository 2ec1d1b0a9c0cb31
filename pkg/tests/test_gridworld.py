import csv

import numpy as np
import pytest

from bearlab.gridworld import (
    GridworldSpec,
    behavior_policy,
    build_gridworld,
    collect_dataset,
    final_error_grids,
    run_gridworld_experiment,
    write_trace_csv,
)
from bearlab.mdp import optimal_q
from bearlab.svg import heatmaps

SMALL = GridworldSpec(width=4, height=4, start=(0, 0), goal=(3, 0), behavior_route=(3, 3), episode_length=12)


class TestSpec:
    def test_start_equals_goal_rejected(self):
        with pytest.raises(ValueError):
            GridworldSpec(start=(0, 0), goal=(0, 0))

    def test_out_of_grid_rejected(self):
        with pytest.raises(ValueError, match="outside"):
            GridworldSpec(goal=(10, 0))

    @pytest.mark.parametrize("field", ["slip_prob", "explore_eps"])
    def test_probability_fields(self, field):
        with pytest.raises(ValueError):
            GridworldSpec(**{field: 1.5})


class TestDynamics:
    def test_rows_are_distributions_and_goal_absorbs(self):
        mdp = build_gridworld(GridworldSpec())
        goal = GridworldSpec().index(9, 0)
        assert np.allclose(mdp.transition.sum(axis=2), 1.0)
        assert np.all(mdp.transition[goal, :, goal] == 1.0)
        assert np.all(mdp.reward[goal] == 0.0)

    def test_reward_is_expected_goal_entry(self):
        spec = GridworldSpec(slip_prob=0.0)
        mdp = build_gridworld(spec)
        above_goal = spec.index(8, 0)
        assert mdp.reward[above_goal, 2] == 1.0
        assert mdp.reward[above_goal, 0] == 0.0

    def test_walls_keep_agent_in_place(self):
        spec = GridworldSpec(slip_prob=0.0)
        mdp = build_gridworld(spec)
        assert mdp.transition[spec.index(0, 0), 0, spec.index(0, 0)] == 1.0

    def test_optimal_value_from_start(self):
        # with no slip the goal is 9 moves down: V* = gamma^8
        spec = GridworldSpec(slip_prob=0.0)
        v = optimal_q(build_gridworld(spec)).max(axis=1)
        assert v[spec.index(0, 0)] == pytest.approx(0.9**8, abs=1e-10)

    def test_behavior_heads_for_route_corner(self):
        spec = GridworldSpec(explore_eps=0.0)
        pi = behavior_policy(spec)
        assert pi.probs[spec.index(0, 0)].tolist() == [0.0, 0.5, 0.5, 0.0]
        assert pi.probs[spec.index(9, 0)].tolist() == [0.0, 1.0, 0.0, 0.0]

    def test_exploration_floor(self):
        pi = behavior_policy(GridworldSpec(explore_eps=0.1))
        assert pi.probs.min() == pytest.approx(0.025)


class TestDataset:
    def test_deterministic_and_sized(self):
        mdp = build_gridworld(SMALL)
        a = collect_dataset(SMALL, mdp, 300, 5)
        b = collect_dataset(SMALL, mdp, 300, 5)
        assert len(a) == 300
        assert np.array_equal(a.states, b.states) and np.array_equal(a.actions, b.actions)

    def test_goal_entries_are_terminal_with_bonus(self):
        mdp = build_gridworld(SMALL)
        data = collect_dataset(SMALL, mdp, 2000, 1)
        goal = SMALL.index(*SMALL.goal)
        assert np.array_equal(data.dones, data.next_states == goal)
        assert np.all(data.rewards[data.dones] == 1.0)
        assert np.all(data.rewards[~data.dones] == 0.0)

    def test_size_validated(self):
        with pytest.raises(ValueError):
            collect_dataset(SMALL, build_gridworld(SMALL), 0, 0)


@pytest.fixture(scope="module")
def result():
    return run_gridworld_experiment(SMALL, 2000, seed=3, iterations=60)


class TestExperiment:
    def test_variants_present(self, result):
        names = [v.name for v in result.variants]
        assert names[0] == "unconstrained" and names[-1] == "behavior-eval"
        assert len(result.constrained()) == 5

    def test_traces_are_finite_and_nonnegative(self, result):
        for v in result.variants:
            assert v.zeta.shape == (60, SMALL.n_states, 4)
            assert np.all(np.isfinite(v.zeta)) and np.all(v.zeta >= 0)

    def test_rerun_identical(self, result):
        again = run_gridworld_experiment(SMALL, 2000, seed=3, iterations=60)
        for a, b in zip(result.variants, again.variants):
            assert np.array_equal(a.zeta, b.zeta)

    def test_behavior_eval_has_small_on_support_delta(self, result):
        v = result.variant("behavior-eval")
        # count-based model on visited pairs: backup error only from sampling
        assert v.delta[-1][result.support].mean() < 0.1

    def test_outputs(self, result, tmp_path):
        path = tmp_path / "trace.csv"
        write_trace_csv(result, path, every=20)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["iteration", "variant", "state", "action", "zeta", "delta"]
        assert {r[0] for r in rows[1:]} == {"20", "40", "60"}
        grids = final_error_grids(result)
        assert grids["unconstrained"].shape == (4, 4)
        svg = heatmaps(grids, "final error")
        assert svg.startswith("<svg") and svg.count("<rect") == 7 * 16
