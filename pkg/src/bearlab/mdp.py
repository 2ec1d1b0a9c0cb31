"""Finite tabular MDPs and exact dynamic-programming operators.

All arrays are float64. Transition tensors are indexed ``(s, a, s')`` and
reward tables ``(s, a)``. Q-tables are plain ``(n_states, n_actions)``
arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Collection

import numpy as np

ROW_TOL = 1e-9


def _check_finite(q: np.ndarray, name: str = "q") -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if not np.all(np.isfinite(q)):
        raise ValueError(f"{name} contains non-finite entries")
    return q


@dataclass(frozen=True, eq=False)
class TabularMDP:
    transition: np.ndarray
    reward: np.ndarray
    discount: float
    initial_dist: np.ndarray
    reward_bounds: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        P = np.array(self.transition, dtype=np.float64)
        R = np.array(self.reward, dtype=np.float64)
        rho = np.array(self.initial_dist, dtype=np.float64)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        if R.shape != P.shape[:2]:
            raise ValueError(f"reward shape {R.shape} does not match transition {P.shape}")
        if rho.shape != (P.shape[0],):
            raise ValueError(f"initial_dist shape {rho.shape} does not match {P.shape[0]} states")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=2) - 1.0) > ROW_TOL):
            raise ValueError("transition rows must be non-negative and sum to 1")
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > ROW_TOL:
            raise ValueError("initial_dist must be a probability vector")
        if not 0.0 < self.discount < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {self.discount}")
        lo, hi = self.reward_bounds
        if not np.all(np.isfinite(R)) or R.min() < lo or R.max() > hi:
            raise ValueError(f"rewards must be finite and within [{lo}, {hi}]")
        for arr in (P, R, rho):
            arr.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", R)
        object.__setattr__(self, "initial_dist", rho)
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def with_initial_dist(self, rho0) -> "TabularMDP":
        return TabularMDP(self.transition, self.reward, self.discount, rho0, self.reward_bounds)

    def dumps(self) -> str:
        """Serialize to the plain-text ``mdp`` format (exact round trip)."""
        lines = [f"mdp {self.n_states} {self.n_actions} {self.discount!r}"]
        lines.append("rho0 " + " ".join(repr(float(x)) for x in self.initial_dist))
        for s in range(self.n_states):
            for a in range(self.n_actions):
                row = [self.reward[s, a], *self.transition[s, a]]
                lines.append(" ".join(repr(float(x)) for x in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str, reward_bounds: tuple[float, float] = (-1.0, 1.0)) -> "TabularMDP":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty MDP text")
        head = lines[0].split()
        if len(head) != 4 or head[0] != "mdp":
            raise ValueError(f"line 1: expected 'mdp <n_states> <n_actions> <gamma>', got {lines[0]!r}")
        n_s, n_a, gamma = int(head[1]), int(head[2]), float(head[3])
        if len(lines) != 2 + n_s * n_a:
            raise ValueError(f"expected {2 + n_s * n_a} lines, got {len(lines)}")
        rho_tok = lines[1].split()
        if rho_tok[0] != "rho0" or len(rho_tok) != n_s + 1:
            raise ValueError(f"line 2: malformed rho0 line {lines[1]!r}")
        rho = np.array([float(x) for x in rho_tok[1:]])
        R = np.empty((n_s, n_a))
        P = np.empty((n_s, n_a, n_s))
        for i, ln in enumerate(lines[2:]):
            vals = [float(x) for x in ln.split()]
            if len(vals) != n_s + 1:
                raise ValueError(f"line {i + 3}: expected {n_s + 1} numbers, got {len(vals)}")
            s, a = divmod(i, n_a)
            R[s, a] = vals[0]
            P[s, a] = vals[1:]
        return cls(P, R, gamma, rho, reward_bounds)


@dataclass(frozen=True, eq=False)
class TabularPolicy:
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64)
        if p.ndim != 2:
            raise ValueError("policy table must be 2-D (states, actions)")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > ROW_TOL):
            raise ValueError("policy rows must be non-negative and sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def deterministic(cls, actions, n_actions: int) -> "TabularPolicy":
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.size, n_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "TabularPolicy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    def state_transition(self, mdp: TabularMDP) -> np.ndarray:
        """P^pi as an (S, S) matrix."""
        return np.einsum("sa,sat->st", self.probs, mdp.transition)


def bellman_optimality_backup(mdp: TabularMDP, q: np.ndarray) -> np.ndarray:
    q = _check_finite(q)
    v = q.max(axis=1)
    return mdp.reward + mdp.discount * mdp.transition @ v


def policy_evaluation_backup(mdp: TabularMDP, policy: TabularPolicy, q: np.ndarray) -> np.ndarray:
    q = _check_finite(q)
    v = np.sum(policy.probs * q, axis=1)
    return mdp.reward + mdp.discount * mdp.transition @ v


@dataclass
class QIterationResult:
    q: np.ndarray
    iterations: int
    converged: bool
    residuals: list[float] = field(default_factory=list)


def q_iteration(
    mdp: TabularMDP,
    backup: Callable[[np.ndarray], np.ndarray] | None = None,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    q0: np.ndarray | None = None,
) -> QIterationResult:
    """Apply ``backup`` until the sup-norm change drops to ``tol``.

    ``backup`` defaults to the Bellman optimality operator of ``mdp``.
    Hitting ``max_iter`` is reported through ``converged=False``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if backup is None:
        backup = lambda q: bellman_optimality_backup(mdp, q)  # noqa: E731
    q = np.zeros((mdp.n_states, mdp.n_actions)) if q0 is None else _check_finite(q0).copy()
    residuals = []
    for it in range(1, max_iter + 1):
        q_next = backup(q)
        res = float(np.max(np.abs(q_next - q)))
        residuals.append(res)
        q = q_next
        if res <= tol:
            return QIterationResult(q, it, True, residuals)
    return QIterationResult(q, max_iter, False, residuals)


def optimal_q(mdp: TabularMDP, tol: float = 1e-12) -> np.ndarray:
    res = q_iteration(mdp, tol=tol, max_iter=200_000)
    if not res.converged:
        raise RuntimeError("Q-iteration did not converge")
    return res.q


def greedy_policy(q: np.ndarray) -> TabularPolicy:
    # np.argmax returns the first maximiser, i.e. ties go to the lowest index.
    q = _check_finite(q)
    return TabularPolicy.deterministic(np.argmax(q, axis=1), q.shape[1])


def evaluate_policy_exact(mdp: TabularMDP, policy: TabularPolicy) -> np.ndarray:
    """Q^pi by solving (I - gamma P^pi) V = R^pi."""
    P_pi = policy.state_transition(mdp)
    r_pi = np.sum(policy.probs * mdp.reward, axis=1)
    v = np.linalg.solve(np.eye(mdp.n_states) - mdp.discount * P_pi, r_pi)
    return mdp.reward + mdp.discount * mdp.transition @ v


def discounted_state_marginal(mdp: TabularMDP, policy: TabularPolicy, horizon: int) -> np.ndarray:
    """Unnormalized sum_{t=0}^{horizon} gamma^t p_t(s) with p_0 = rho0.

    The omitted tail has total mass gamma^(horizon+1) / (1 - gamma); see
    :func:`marginal_tail_bound`.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    P_pi = policy.state_transition(mdp)
    p = mdp.initial_dist.copy()
    total = p.copy()
    weight = 1.0
    for _ in range(horizon):
        p = p @ P_pi
        weight *= mdp.discount
        total += weight * p
    return total


def marginal_tail_bound(discount: float, horizon: int) -> float:
    return discount ** (horizon + 1) / (1.0 - discount)


def normalized_state_marginal(mdp: TabularMDP, policy: TabularPolicy, horizon: int) -> np.ndarray:
    mu = discounted_state_marginal(mdp, policy, horizon)
    return mu / mu.sum()


def horizon_for(discount: float, rel_tol: float = 1e-6) -> int:
    """Smallest horizon whose geometric tail gamma^H / (1 - gamma) is below rel_tol."""
    h = int(np.ceil(np.log(rel_tol * (1.0 - discount)) / np.log(discount)))
    return max(h, 1)


@dataclass
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)


def sample_rollout(
    mdp: TabularMDP,
    policy: TabularPolicy,
    horizon: int,
    seed: int | np.random.Generator,
    stop_states: Collection[int] = (),
    start_state: int | None = None,
) -> Trajectory:
    """Sample one trajectory of at most ``horizon`` steps.

    Entering a state in ``stop_states`` ends the trajectory with ``done``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = np.random.default_rng(seed)
    P, probs = mdp.transition, policy.probs
    s = int(rng.choice(mdp.n_states, p=mdp.initial_dist)) if start_state is None else start_state
    S, A, Rw, S2, D = [], [], [], [], []
    stop = set(stop_states)
    for _ in range(horizon):
        a = int(rng.choice(mdp.n_actions, p=probs[s]))
        s2 = int(rng.choice(mdp.n_states, p=P[s, a]))
        done = s2 in stop
        S.append(s)
        A.append(a)
        Rw.append(mdp.reward[s, a])
        S2.append(s2)
        D.append(done)
        if done:
            break
        s = s2
    return Trajectory(np.array(S), np.array(A), np.array(Rw, dtype=np.float64), np.array(S2), np.array(D))


def random_mdp(
    n_states: int,
    n_actions: int,
    discount: float,
    rng: np.random.Generator,
    concentration: float = 1.0,
) -> TabularMDP:
    """Dirichlet transitions, U[0, 1] rewards, Dirichlet initial distribution."""
    P = rng.dirichlet(np.full(n_states, concentration), size=(n_states, n_actions))
    R = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    rho = rng.dirichlet(np.ones(n_states))
    return TabularMDP(P, R, discount, rho, (0.0, 1.0))
