"""Gridworld error-propagation experiment for constrained Q-iteration.

The agent must reach the goal cell while the data come from a controller
heading for a different corner with a little epsilon-greedy exploration.
Three families of backups are run on the same dataset: unconstrained,
support-constrained at each epsilon, and evaluation of the empirical
behavior policy.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .dcq import (
    TabularDataset,
    build_support_class,
    empirical_dc_value_iteration,
    empirical_policy_evaluation,
    full_class,
)
from .mdp import TabularMDP, TabularPolicy, optimal_q, sample_rollout

# up, right, down, left
MOVES = np.array([(-1, 0), (0, 1), (1, 0), (0, -1)])
ACTION_NAMES = ("up", "right", "down", "left")


@dataclass(frozen=True)
class GridworldSpec:
    width: int = 10
    height: int = 10
    start: tuple[int, int] = (0, 0)
    goal: tuple[int, int] = (9, 0)
    step_reward: float = 0.0
    goal_reward: float = 1.0
    slip_prob: float = 0.1
    behavior_route: tuple[int, int] = (9, 9)
    explore_eps: float = 0.1
    discount: float = 0.9
    episode_length: int = 40
    data_start: str = "uniform"

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        for name in ("start", "goal", "behavior_route"):
            r, c = getattr(self, name)
            if not (0 <= r < self.height and 0 <= c < self.width):
                raise ValueError(f"{name} {(r, c)} lies outside the grid")
        if tuple(self.start) == tuple(self.goal):
            raise ValueError("start and goal must differ")
        if not 0.0 <= self.slip_prob <= 1.0 or not 0.0 <= self.explore_eps <= 1.0:
            raise ValueError("slip_prob and explore_eps must lie in [0, 1]")
        if self.data_start not in ("start", "uniform"):
            raise ValueError("data_start must be 'start' or 'uniform'")

    def cell(self, state: int) -> tuple[int, int]:
        return divmod(state, self.width)

    def index(self, row: int, col: int) -> int:
        return row * self.width + col

    @property
    def n_states(self) -> int:
        return self.width * self.height

    def to_dict(self) -> dict:
        return asdict(self)


def build_gridworld(spec: GridworldSpec) -> TabularMDP:
    S, A = spec.n_states, len(MOVES)
    goal = spec.index(*spec.goal)
    P = np.zeros((S, A, S))
    for s in range(S):
        if s == goal:
            P[s, :, s] = 1.0
            continue
        r, c = spec.cell(s)
        dest = []
        for dr, dc in MOVES:
            rr, cc = r + dr, c + dc
            dest.append(spec.index(rr, cc) if 0 <= rr < spec.height and 0 <= cc < spec.width else s)
        for a in range(A):
            P[s, a, dest[a]] += 1.0 - spec.slip_prob
            for d in dest:
                P[s, a, d] += spec.slip_prob / A
    R = spec.step_reward + spec.goal_reward * P[:, :, goal]
    R[goal] = 0.0
    rho0 = np.zeros(S)
    rho0[spec.index(*spec.start)] = 1.0
    lo = min(0.0, spec.step_reward, spec.step_reward + spec.goal_reward)
    hi = max(0.0, spec.step_reward, spec.step_reward + spec.goal_reward)
    return TabularMDP(P, R, spec.discount, rho0, (lo, hi))


def behavior_policy(spec: GridworldSpec) -> TabularPolicy:
    """Shortest-path controller to ``behavior_route`` mixed with uniform exploration.

    Where both down/up and right/left moves shorten the path the
    controller splits its mass evenly; at the target it pushes into the
    wall.
    """
    S, A = spec.n_states, len(MOVES)
    tr, tc = spec.behavior_route
    probs = np.zeros((S, A))
    for s in range(S):
        r, c = spec.cell(s)
        good = []
        if r < tr:
            good.append(2)
        if r > tr:
            good.append(0)
        if c < tc:
            good.append(1)
        if c > tc:
            good.append(3)
        if not good:
            good = [2]
        probs[s, good] = 1.0 / len(good)
    probs = (1.0 - spec.explore_eps) * probs + spec.explore_eps / A
    return TabularPolicy(probs)


def collect_dataset(spec: GridworldSpec, mdp: TabularMDP, size: int, seed) -> TabularDataset:
    if size < 1:
        raise ValueError("dataset_size must be >= 1")
    rng = np.random.default_rng(seed)
    beta = behavior_policy(spec)
    goal = spec.index(*spec.goal)
    starts = [s for s in range(spec.n_states) if s != goal]
    cols: dict[str, list] = {k: [] for k in ("s", "a", "r", "s2", "d")}
    n = 0
    while n < size:
        start = int(rng.choice(starts)) if spec.data_start == "uniform" else spec.index(*spec.start)
        traj = sample_rollout(mdp, beta, spec.episode_length, rng, stop_states=(goal,), start_state=start)
        take = min(len(traj), size - n)
        # realised reward: goal bonus only on actually entering the goal
        rew = spec.step_reward + spec.goal_reward * (traj.next_states == goal)
        cols["s"].append(traj.states[:take])
        cols["a"].append(traj.actions[:take])
        cols["r"].append(rew[:take])
        cols["s2"].append(traj.next_states[:take])
        cols["d"].append(traj.dones[:take])
        n += take
    cat = {k: np.concatenate(v) for k, v in cols.items()}
    return TabularDataset(cat["s"], cat["a"], cat["r"].astype(np.float64), cat["s2"], cat["d"].astype(bool))


@dataclass
class VariantResult:
    name: str
    epsilon: float | None
    q: np.ndarray
    zeta: np.ndarray
    delta: np.ndarray
    value_error: float
    state_values: np.ndarray

    @property
    def final_zeta(self) -> np.ndarray:
        return self.zeta[-1]


@dataclass
class GridworldResult:
    spec: GridworldSpec
    q_star: np.ndarray
    support: np.ndarray
    variants: list[VariantResult] = field(default_factory=list)

    def variant(self, name: str) -> VariantResult:
        for v in self.variants:
            if v.name == name:
                return v
        raise KeyError(name)

    def constrained(self) -> list[VariantResult]:
        return [v for v in self.variants if v.epsilon is not None]

    def best_constrained(self) -> VariantResult:
        return min(self.constrained(), key=lambda v: v.value_error)

    def summary(self) -> list[tuple[str, float]]:
        return [(v.name, v.value_error) for v in self.variants]


def run_gridworld_experiment(
    spec: GridworldSpec,
    dataset_size: int,
    epsilon_grid=(0.005, 0.01, 0.02, 0.05, 0.1),
    seed: int = 0,
    iterations: int = 200,
) -> GridworldResult:
    """Run every backup variant on one dataset and record its error trace.

    Pairs absent from the data keep random initial values drawn uniformly
    from the feasible value range, standing in for arbitrary
    function-approximator outputs away from the data. The reported value
    error is E_rho0 |V_k - V*| at the final iterate, with V_k the variant's
    own state value (max over its allowed actions, or the behavior
    expectation).
    """
    mdp = build_gridworld(spec)
    rng = np.random.default_rng(seed)
    data = collect_dataset(spec, mdp, dataset_size, rng)
    q_star = optimal_q(mdp)
    v_star = q_star.max(axis=1)
    S, A = mdp.n_states, mdp.n_actions
    lo, hi = mdp.reward_bounds
    q0 = rng.uniform(min(0.0, lo / (1 - mdp.discount)), hi / (1 - mdp.discount), size=(S, A))
    q0[spec.index(*spec.goal)] = 0.0
    beta_hat = data.empirical_behavior(S, A)
    result = GridworldResult(spec, q_star, data.counts(S, A) > 0)

    def record(name, eps, q, trace, v):
        zeta, delta = trace.as_arrays()
        err = float(mdp.initial_dist @ np.abs(v - v_star))
        result.variants.append(VariantResult(name, eps, q, zeta, delta, err, v))

    pc = full_class(S, A)
    q, tr = empirical_dc_value_iteration(mdp, pc, data, iterations, q0, q_star)
    record("unconstrained", None, q, tr, pc.values(q))
    for eps in epsilon_grid:
        pc = build_support_class(beta_hat, eps)
        q, tr = empirical_dc_value_iteration(mdp, pc, data, iterations, q0, q_star)
        record(f"eps={eps:g}", float(eps), q, tr, pc.values(q))
    q, tr = empirical_policy_evaluation(mdp, beta_hat, data, iterations, q0, q_star)
    record("behavior-eval", None, q, tr, np.sum(beta_hat.probs * q, axis=1))
    return result


def write_trace_csv(result: GridworldResult, path, every: int = 1) -> None:
    """Long-format ``iteration,variant,state,action,zeta,delta`` rows."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "variant", "state", "action", "zeta", "delta"])
        for v in result.variants:
            n_iter = len(v.zeta)
            for k in sorted(set(range(every - 1, n_iter, every)) | {n_iter - 1}):
                for s, a in np.ndindex(v.zeta[k].shape):
                    w.writerow([k + 1, v.name, s, a, repr(float(v.zeta[k][s, a])), repr(float(v.delta[k][s, a]))])


def final_error_grids(result: GridworldResult) -> dict[str, np.ndarray]:
    """Per-variant |V_final - V*| laid out on the grid."""
    spec = result.spec
    v_star = result.q_star.max(axis=1)
    grids = {}
    for v in result.variants:
        grids[v.name] = np.abs(v.state_values - v_star).reshape(spec.height, spec.width)
    return grids
