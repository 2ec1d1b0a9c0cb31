"""Distribution-constrained backups over support-set policy classes.

A policy class is represented by a boolean ``allowed[s, a]`` mask: the
class contains every policy whose support lies inside the mask. The best
member for a linear objective is always a Dirac on an allowed action, so
maximisations over the class reduce to masked maxima.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .mdp import (
    TabularMDP,
    TabularPolicy,
    _check_finite,
    evaluate_policy_exact,
    horizon_for,
    normalized_state_marginal,
    optimal_q,
    q_iteration,
)

MAX_ENUMERATION = 4096


class EmptySupport(ValueError):
    def __init__(self, state: int):
        super().__init__(f"state {state} has no action with behavior probability >= epsilon")
        self.state = state


class DegenerateSupport(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PolicyClass:
    allowed: np.ndarray
    behavior: TabularPolicy
    epsilon: float

    def __post_init__(self):
        allowed = np.array(self.allowed, dtype=bool)
        if allowed.shape != self.behavior.probs.shape:
            raise ValueError("allowed mask shape must match the behavior table")
        empty = np.flatnonzero(~allowed.any(axis=1))
        if empty.size:
            raise EmptySupport(int(empty[0]))
        allowed.setflags(write=False)
        object.__setattr__(self, "allowed", allowed)

    @property
    def n_states(self) -> int:
        return self.allowed.shape[0]

    def values(self, q: np.ndarray) -> np.ndarray:
        """V(s) = max over allowed actions of q(s, a)."""
        return np.where(self.allowed, q, -np.inf).max(axis=1)

    def greedy(self, q: np.ndarray) -> TabularPolicy:
        """Deterministic in-class policy, ties to the lowest action index."""
        return TabularPolicy.deterministic(
            np.argmax(np.where(self.allowed, q, -np.inf), axis=1), q.shape[1]
        )

    def n_deterministic(self) -> int:
        return int(np.prod(self.allowed.sum(axis=1), dtype=float))

    def deterministic_policies(self):
        choices = [np.flatnonzero(row) for row in self.allowed]
        n_a = self.allowed.shape[1]
        for combo in itertools.product(*choices):
            yield TabularPolicy.deterministic(combo, n_a)

    def sample_policy(self, rng: np.random.Generator) -> TabularPolicy:
        """Random stochastic policy supported on the allowed mask."""
        w = rng.exponential(size=self.allowed.shape) * self.allowed
        return TabularPolicy(w / w.sum(axis=1, keepdims=True))


def build_support_class(behavior: TabularPolicy, epsilon: float) -> PolicyClass:
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"epsilon must lie in [0, 1), got {epsilon}")
    return PolicyClass(behavior.probs >= epsilon, behavior, float(epsilon))


def full_class(n_states: int, n_actions: int) -> PolicyClass:
    return build_support_class(TabularPolicy.uniform(n_states, n_actions), 0.0)


def dc_backup(mdp: TabularMDP, pc: PolicyClass, q: np.ndarray) -> np.ndarray:
    q = _check_finite(q)
    return mdp.reward + mdp.discount * mdp.transition @ pc.values(q)


@dataclass
class ErrorTrace:
    """Per-iteration |Q_k - Q_ref| (zeta) and |Q_k - T Q_{k-1}| (delta)."""

    zeta: list[np.ndarray] = field(default_factory=list)
    delta: list[np.ndarray] = field(default_factory=list)

    def append(self, zeta: np.ndarray, delta: np.ndarray) -> None:
        self.zeta.append(zeta)
        self.delta.append(delta)

    def __len__(self) -> int:
        return len(self.zeta)

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.zeta), np.array(self.delta)


@dataclass
class DCResult:
    q: np.ndarray
    trace: ErrorTrace
    iterations: int
    converged: bool


def dc_value_iteration(
    mdp: TabularMDP,
    pc: PolicyClass,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    noise_level: float = 0.0,
    seed: int | np.random.Generator | None = None,
    q0: np.ndarray | None = None,
    reference: np.ndarray | None = None,
) -> DCResult:
    """Iterate the constrained backup, optionally with injected noise.

    With ``noise_level > 0`` each entry of each backup is perturbed by
    U[-noise_level, noise_level], drawn afresh per iteration, and exactly
    ``max_iter`` iterations are run. ``reference`` is the table errors are
    measured against (default: Q* of ``mdp``).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if noise_level < 0:
        raise ValueError("noise_level must be non-negative")
    ref = optimal_q(mdp) if reference is None else reference
    rng = np.random.default_rng(seed)
    q = np.zeros((mdp.n_states, mdp.n_actions)) if q0 is None else _check_finite(q0).copy()
    trace = ErrorTrace()
    for it in range(1, max_iter + 1):
        exact = dc_backup(mdp, pc, q)
        if noise_level > 0:
            q_next = exact + rng.uniform(-noise_level, noise_level, size=exact.shape)
        else:
            q_next = exact
        trace.append(np.abs(q_next - ref), np.abs(q_next - exact))
        change = float(np.max(np.abs(q_next - q)))
        q = q_next
        if noise_level == 0 and change <= tol:
            return DCResult(q, trace, it, True)
    return DCResult(q, trace, max_iter, noise_level > 0)


def class_fixed_point(mdp: TabularMDP, pc: PolicyClass, tol: float = 1e-12) -> np.ndarray:
    res = q_iteration(mdp, lambda q: dc_backup(mdp, pc, q), tol=tol, max_iter=200_000)
    if not res.converged:
        raise RuntimeError("constrained Q-iteration did not converge")
    return res.q


# ---------------------------------------------------------------------------
# empirical (dataset-driven) iteration


@dataclass
class TabularDataset:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __post_init__(self):
        if len(self.states) == 0:
            raise ValueError("dataset is empty")

    def __len__(self) -> int:
        return len(self.states)

    def counts(self, n_states: int, n_actions: int) -> np.ndarray:
        n = np.zeros((n_states, n_actions))
        np.add.at(n, (self.states, self.actions), 1.0)
        return n

    def empirical_model(self, n_states: int, n_actions: int):
        """Count-based (R_hat, P_hat, counts); P_hat only counts non-terminal successors."""
        n = self.counts(n_states, n_actions)
        r_sum = np.zeros((n_states, n_actions))
        np.add.at(r_sum, (self.states, self.actions), self.rewards)
        p_cnt = np.zeros((n_states, n_actions, n_states))
        live = ~np.asarray(self.dones, dtype=bool)
        np.add.at(p_cnt, (self.states[live], self.actions[live], self.next_states[live]), 1.0)
        safe = np.maximum(n, 1.0)
        return r_sum / safe, p_cnt / safe[:, :, None], n

    def empirical_behavior(self, n_states: int, n_actions: int) -> TabularPolicy:
        """Action frequencies per state; unvisited states get the uniform row."""
        n = self.counts(n_states, n_actions)
        tot = n.sum(axis=1, keepdims=True)
        probs = np.where(tot > 0, n / np.maximum(tot, 1.0), 1.0 / n_actions)
        return TabularPolicy(probs)


def _empirical_iteration(mdp, dataset, iterations, next_value, exact_backup, q0, reference):
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    R_hat, P_hat, n = dataset.empirical_model(mdp.n_states, mdp.n_actions)
    covered = n > 0
    ref = optimal_q(mdp) if reference is None else reference
    q = np.zeros((mdp.n_states, mdp.n_actions)) if q0 is None else np.array(q0, dtype=np.float64)
    trace = ErrorTrace()
    for _ in range(iterations):
        target = R_hat + mdp.discount * P_hat @ next_value(q)
        q_next = np.where(covered, target, q)
        trace.append(np.abs(q_next - ref), np.abs(q_next - exact_backup(q)))
        q = q_next
    return q, trace


def empirical_dc_value_iteration(
    mdp: TabularMDP,
    pc: PolicyClass,
    dataset: TabularDataset,
    iterations: int,
    q0: np.ndarray | None = None,
    reference: np.ndarray | None = None,
):
    """Constrained Q-iteration on the count-based model of ``dataset``.

    Pairs never seen in the data keep their value from ``q0``. Errors in
    the returned trace are against the exact Q* of ``mdp`` (or
    ``reference``) and against the exact constrained backup.
    """
    return _empirical_iteration(
        mdp, dataset, iterations, pc.values, lambda q: dc_backup(mdp, pc, q), q0, reference
    )


def empirical_policy_evaluation(
    mdp: TabularMDP,
    policy: TabularPolicy,
    dataset: TabularDataset,
    iterations: int,
    q0: np.ndarray | None = None,
    reference: np.ndarray | None = None,
):
    from .mdp import policy_evaluation_backup

    return _empirical_iteration(
        mdp,
        dataset,
        iterations,
        lambda q: np.sum(policy.probs * q, axis=1),
        lambda q: policy_evaluation_backup(mdp, policy, q),
        q0,
        reference,
    )


# ---------------------------------------------------------------------------
# constants


def suboptimality_constant(mdp: TabularMDP, pc: PolicyClass, q_star: np.ndarray | None = None) -> float:
    from .mdp import bellman_optimality_backup

    q_star = optimal_q(mdp) if q_star is None else q_star
    return float(np.max(np.abs(dc_backup(mdp, pc, q_star) - bellman_optimality_backup(mdp, q_star))))


def data_marginal(mdp: TabularMDP, behavior: TabularPolicy, horizon: int | None = None) -> np.ndarray:
    """Normalized discounted state marginal of the behavior policy (mu)."""
    horizon = horizon or horizon_for(mdp.discount)
    return normalized_state_marginal(mdp, behavior, horizon)


def max_class_marginal(mdp: TabularMDP, pc: PolicyClass, horizon: int) -> np.ndarray:
    """Highest normalized discounted visitation of each state over in-class policy sequences.

    For a fixed target state the maximum over (possibly non-stationary)
    sequences is a finite-horizon control problem, solved exactly by
    backward induction for all targets at once.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    S, g = mdp.n_states, mdp.discount
    eye = np.eye(S)
    # W[s, t]: best discounted visits to target t starting from s
    W = eye.copy()
    mask = pc.allowed[:, :, None]
    for _ in range(horizon):
        nxt = np.einsum("sap,pt->sat", mdp.transition, W)
        W = eye + g * np.where(mask, nxt, -np.inf).max(axis=1)
    norm = (1.0 - g) / (1.0 - g ** (horizon + 1))
    return norm * (mdp.initial_dist @ W)


def sampled_class_marginal(mdp: TabularMDP, pc: PolicyClass, n_policy_samples: int, seed) -> np.ndarray:
    """Lower approximation of :func:`max_class_marginal` from stationary policies.

    Uses every deterministic in-class policy when there are at most
    ``MAX_ENUMERATION`` of them, plus ``n_policy_samples`` random
    stochastic members. Marginals are infinite-horizon, solved in closed
    form with one batched linear solve.
    """
    rng = np.random.default_rng(seed)
    tables = []
    if pc.n_deterministic() <= MAX_ENUMERATION:
        tables.extend(pi.probs for pi in pc.deterministic_policies())
    tables.extend(pc.sample_policy(rng).probs for _ in range(n_policy_samples))
    if not tables:
        return np.zeros(mdp.n_states)
    pis = np.stack(tables)
    P_pi = np.einsum("nsa,sat->nst", pis, mdp.transition)
    S, g = mdp.n_states, mdp.discount
    lhs = np.eye(S)[None] - g * np.transpose(P_pi, (0, 2, 1))
    rho = np.broadcast_to(mdp.initial_dist, (len(pis), S))[..., None]
    d = np.linalg.solve(lhs, rho)[..., 0]
    d = d / d.sum(axis=1, keepdims=True)
    return d.max(axis=0)


def f_epsilon(
    mdp: TabularMDP,
    pc: PolicyClass,
    horizon: int | None = None,
    threshold: float = 0.0,
    class_marginal: np.ndarray | None = None,
) -> float:
    """min of mu(s) over states the class can reach (mu_Pi(s) > threshold)."""
    horizon = horizon or horizon_for(mdp.discount)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    mu = data_marginal(mdp, pc.behavior, horizon)
    mu_pi = max_class_marginal(mdp, pc, horizon) if class_marginal is None else class_marginal
    reach = mu_pi > threshold
    if not reach.any():
        raise DegenerateSupport("no state has positive class marginal")
    return float(mu[reach].min())


def concentration_profile(mdp: TabularMDP, pc: PolicyClass, horizon: int, mu: np.ndarray) -> np.ndarray:
    """c(k) for k = 1..horizon, maximised exactly over in-class sequences.

    c(k) = max_s max_{pi_1..pi_k} rho0 P^{pi_1}...P^{pi_k}(s) / mu(s); a
    reachable state with mu(s) = 0 gives +inf.
    """
    S = mdp.n_states
    G = np.eye(S)
    mask = pc.allowed[:, :, None]
    out = np.empty(horizon)
    for k in range(horizon):
        nxt = np.einsum("sap,pt->sat", mdp.transition, G)
        G = np.where(mask, nxt, -np.inf).max(axis=1)
        reach = mdp.initial_dist @ G
        out[k] = _ratio_max(reach, mu)
    return out


def _ratio_max(num: np.ndarray, den: np.ndarray) -> float:
    pos = num > 0
    if np.any(pos & (den <= 0)):
        return np.inf
    return float(np.max(np.where(pos, num / np.where(den > 0, den, 1.0), 0.0)))


def concentrability_estimate(
    mdp: TabularMDP,
    pc: PolicyClass,
    n_policy_samples: int = 64,
    horizon: int | None = None,
    seed=None,
    method: str = "exact",
) -> float:
    """C(Pi) = (1 - gamma)^2 sum_k k gamma^(k-1) c(k), truncated at ``horizon``.

    ``method="exact"`` maximises c(k) over all in-class policy sequences
    (backward induction); ``method="sampled"`` maximises over
    ``n_policy_samples`` random stationary members only, which gives a
    lower bound. Returns ``inf`` if the class reaches a state the data
    never visits.
    """
    if n_policy_samples < 1:
        raise ValueError("n_policy_samples must be >= 1")
    g = mdp.discount
    horizon = horizon or horizon_for(g)
    mu = data_marginal(mdp, pc.behavior, horizon_for(g, 1e-12))
    if method == "exact":
        c = concentration_profile(mdp, pc, horizon, mu)
    elif method == "sampled":
        rng = np.random.default_rng(seed)
        c = np.zeros(horizon)
        for _ in range(n_policy_samples):
            P_pi = pc.sample_policy(rng).state_transition(mdp)
            d = mdp.initial_dist
            for k in range(horizon):
                d = d @ P_pi
                c[k] = max(c[k], _ratio_max(d, mu))
    else:
        raise ValueError(f"unknown method {method!r}")
    if np.any(np.isinf(c)):
        return np.inf
    k = np.arange(1, horizon + 1)
    return float((1.0 - g) ** 2 * np.sum(k * g ** (k - 1) * c))


def policy_concentrability(
    mdp: TabularMDP,
    policy: TabularPolicy,
    horizon: int | None = None,
    behavior: TabularPolicy | None = None,
) -> float:
    """C({policy}) against the data marginal of ``behavior`` (default: the policy itself)."""
    g = mdp.discount
    horizon = horizon or horizon_for(g)
    mu = data_marginal(mdp, policy if behavior is None else behavior, horizon_for(g, 1e-12))
    P_pi = policy.state_transition(mdp)
    d = mdp.initial_dist
    c = np.empty(horizon)
    for k in range(horizon):
        d = d @ P_pi
        c[k] = _ratio_max(d, mu)
    if np.any(np.isinf(c)):
        return np.inf
    k = np.arange(1, horizon + 1)
    return float((1.0 - g) ** 2 * np.sum(k * g ** (k - 1) * c))


# ---------------------------------------------------------------------------
# bound checks

STATE_ACTION_NOTE = (
    "concentrability uses state marginals c(k) rho0 P...P(s) <= c(k) mu(s); "
    "the cited error-propagation results use state-action concentrability"
)


@dataclass
class BoundReport:
    lhs: float
    rhs: float
    passed: bool
    inconclusive: bool = False
    details: dict = field(default_factory=dict)
    note: str = ""


def check_performance_bound(
    mdp: TabularMDP,
    pc: PolicyClass,
    noise_level: float,
    seed=None,
    iterations: int | None = None,
    tol: float = 1e-6,
) -> BoundReport:
    """Approximate constrained value iteration against its performance bound.

    Runs noisy constrained iteration, takes the greedy in-class policy of
    the final iterate, evaluates it exactly and compares
    E_rho0 |V^pi_k - V*| to
    gamma/(1-gamma)^2 [C(Pi) E_mu[max_a delta(s, a)] + (1-gamma)/gamma alpha(Pi)],
    where delta is the largest realised per-entry Bellman error.

    ``details["rhs_corrected"]`` adds E_rho0[V* - max_allowed Q*], the
    in-class gap at the start states, which the stated right-hand side
    omits; without it the noise-free inequality can fail when rho0 sits on
    states whose optimal action is excluded.
    """
    if noise_level < 0:
        raise ValueError("noise_level must be non-negative")
    g = mdp.discount
    q_star = optimal_q(mdp)
    iterations = iterations or horizon_for(g, 1e-12)
    if noise_level > 0:
        run = dc_value_iteration(mdp, pc, max_iter=iterations, noise_level=noise_level, seed=seed, reference=q_star)
    else:
        run = dc_value_iteration(mdp, pc, tol=1e-13, max_iter=200_000, reference=q_star)
    _, delta = run.trace.as_arrays()
    delta_sa = delta.max(axis=0)
    pi_k = pc.greedy(run.q)
    v_pi = np.sum(pi_k.probs * evaluate_policy_exact(mdp, pi_k), axis=1)
    v_star = q_star.max(axis=1)
    lhs = float(mdp.initial_dist @ np.abs(v_pi - v_star))

    alpha = suboptimality_constant(mdp, pc, q_star)
    conc = concentrability_estimate(mdp, pc)
    mu = data_marginal(mdp, pc.behavior)
    delta_term = float(mu @ pc.values(delta_sa))
    # alpha only sees the in-class gap after one transition; the gap at
    # the start states themselves is added for the corrected bound
    start_gap = float(mdp.initial_dist @ (v_star - pc.values(q_star)))
    details = {
        "alpha": alpha,
        "concentrability": conc,
        "delta_term": delta_term,
        "start_gap": start_gap,
        "noise_level": noise_level,
        "iterations": run.iterations,
    }
    if np.isinf(conc) and delta_term > 0:
        details.update(rhs_corrected=np.inf, passed_corrected=True)
        return BoundReport(lhs, np.inf, True, True, details, STATE_ACTION_NOTE)
    conc_part = conc * delta_term if delta_term > 0 else 0.0
    rhs = g / (1 - g) ** 2 * conc_part + alpha / (1 - g)
    details.update(rhs_corrected=rhs + start_gap, passed_corrected=bool(lhs <= rhs + start_gap + tol))
    return BoundReport(lhs, rhs, bool(lhs <= rhs + tol), False, details, STATE_ACTION_NOTE)


def tv_premise(pc: PolicyClass) -> tuple[float, bool]:
    """Largest D_TV(beta(.|s), pi(.|s)) over in-class pi, against 1 - epsilon.

    TV to a fixed distribution is convex, so its maximum over the class is
    attained at a Dirac on an allowed action; all of them are enumerated.
    """
    beta = pc.behavior.probs
    worst = 0.0
    for s in range(pc.n_states):
        for a in np.flatnonzero(pc.allowed[s]):
            dirac = np.zeros(beta.shape[1])
            dirac[a] = 1.0
            worst = max(worst, 0.5 * float(np.abs(beta[s] - dirac).sum()))
    return worst, worst <= 1.0 - pc.epsilon + 1e-12


def check_marginal_ratio_bound(
    mdp: TabularMDP,
    pc: PolicyClass,
    horizon: int | None = None,
    seed=None,
    n_policy_samples: int = 32,
) -> BoundReport:
    """Marginal-ratio bound for support classes.

    lhs = sup_s mu_Pi(s) / mu_beta(s) with mu_Pi the highest in-class
    discounted marginal; rhs = 1 + gamma (1 - eps) / ((1 - gamma) f(eps)).
    Also records the total-variation premise and a sampled-policy spot
    check of the ratio.
    """
    g, eps = mdp.discount, pc.epsilon
    horizon = horizon or horizon_for(g, 1e-12)
    mu = data_marginal(mdp, pc.behavior, horizon)
    mu_pi = max_class_marginal(mdp, pc, horizon)
    tv_max, tv_ok = tv_premise(pc)
    details = {"tv_max": tv_max, "tv_ok": tv_ok, "epsilon": eps}
    try:
        f = f_epsilon(mdp, pc, horizon, class_marginal=mu_pi)
    except DegenerateSupport:
        return BoundReport(np.nan, np.nan, False, True, details)
    if f <= 0:
        return BoundReport(np.inf, np.inf, False, True, details)
    ratio = _ratio_max(mu_pi, mu)
    bound = 1.0 + g * (1.0 - eps) / ((1.0 - g) * f)
    sampled = sampled_class_marginal(mdp, pc, n_policy_samples, seed)
    details.update(
        f_epsilon=f,
        sampled_ratio=_ratio_max(sampled, mu),
        c_class=concentrability_estimate(mdp, pc, horizon=horizon),
        c_behavior=policy_concentrability(mdp, pc.behavior, horizon=horizon),
    )
    return BoundReport(ratio, bound, bool(ratio <= bound and tv_ok), False, details)


# ---------------------------------------------------------------------------
# random-instance sweep


def random_behavior_policy(n_states: int, n_actions: int, rng: np.random.Generator, anchor: float = 0.5) -> TabularPolicy:
    """Mix of a one-hot on a random action (weight ``anchor``) and a Dirichlet draw.

    Every state keeps one action with probability >= ``anchor``, so support
    classes stay non-empty for any epsilon <= anchor.
    """
    onehot = np.zeros((n_states, n_actions))
    onehot[np.arange(n_states), rng.integers(n_actions, size=n_states)] = 1.0
    mix = rng.dirichlet(np.ones(n_actions), size=n_states)
    return TabularPolicy(anchor * onehot + (1.0 - anchor) * mix)


def sweep_instance(seed: int, discount: float = 0.9, max_states: int = 10, max_actions: int = 4):
    """Random (mdp, behavior) pair with 2..max_states states and 2..max_actions actions."""
    from .mdp import random_mdp

    rng = np.random.default_rng(seed)
    S = int(rng.integers(2, max_states + 1))
    A = int(rng.integers(2, max_actions + 1))
    return random_mdp(S, A, discount, rng), random_behavior_policy(S, A, rng)


@dataclass
class SweepRecord:
    instance: int
    check: str
    epsilon: float
    noise_level: float
    lhs: float
    rhs: float
    passed: bool
    inconclusive: bool
    rhs_corrected: float = float("nan")
    passed_corrected: bool = True


def run_bound_sweep(
    n_instances: int = 100,
    noise_levels=(0.0, 0.05, 0.2),
    epsilons=(0.05, 0.1, 0.2, 0.3, 0.4, 0.5),
    seed: int = 0,
    discount: float = 0.9,
) -> list[SweepRecord]:
    """Both bound checks over random instances.

    The performance bound is checked at every noise level with the class
    at ``epsilons[i % len(epsilons)]`` for instance ``i``; the
    marginal-ratio bound is checked at every epsilon.
    """
    if n_instances < 1:
        raise ValueError("n_instances must be >= 1")
    out = []
    for i in range(n_instances):
        mdp, beta = sweep_instance(seed * 100_003 + i, discount)
        eps = epsilons[i % len(epsilons)]
        pc = build_support_class(beta, eps)
        for j, nl in enumerate(noise_levels):
            rep = check_performance_bound(mdp, pc, nl, seed=(seed, i, j))
            out.append(
                SweepRecord(
                    i, "performance", eps, nl, rep.lhs, rep.rhs, rep.passed, rep.inconclusive,
                    rep.details["rhs_corrected"], rep.details["passed_corrected"],
                )
            )
        for eps in epsilons:
            rep = check_marginal_ratio_bound(mdp, build_support_class(beta, eps), seed=(seed, i))
            out.append(SweepRecord(i, "marginal_ratio", eps, 0.0, rep.lhs, rep.rhs, rep.passed, rep.inconclusive))
    return out


def sweep_pass_rates(records: list[SweepRecord]) -> dict[str, float]:
    """Pass rate per check over conclusive records, plus the corrected performance bound."""
    rates = {}
    for check in sorted({r.check for r in records}):
        done = [r for r in records if r.check == check and not r.inconclusive]
        rates[check] = sum(r.passed for r in done) / len(done) if done else float("nan")
        if check == "performance" and done:
            rates["performance_corrected"] = sum(r.passed_corrected for r in done) / len(done)
    return rates
