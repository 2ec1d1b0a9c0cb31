"""Offline actor-critic with a support-matching policy constraint, plus baselines.

The learner keeps an ensemble of K critics with Polyak-averaged targets, a
tanh-Gaussian actor and a tanh-Gaussian behavior model fitted to the data
by maximum likelihood. Policy improvement maximizes the conservative
(min or mean) ensemble value subject to a sampled MMD bound between actor
and behavior samples, enforced with a Lagrange multiplier updated by dual
gradient ascent on log(alpha).

Every update function takes its random draws as explicit standard-normal
arrays, so a step is a pure function of (parameters, batch, noise).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .config import ConfigError, coerce, format_value
from .datasets import Dataset
from .envs import EnvSpec, env_reset, env_step
from .mmd import KernelSpec, batched_mmd2
from .nn import (
    AdamState,
    MLPSpec,
    ParamStore,
    adam_step,
    gaussian_squash_log_prob,
    init_params,
    load_checkpoint,
    mlp_backward,
    mlp_forward,
    policy_head,
    save_checkpoint,
    tanh_gaussian_log_prob,
    tanh_gaussian_sample,
    tanh_gaussian_sample_backward,
)

ACTION_CLIP = 1.0 - 1e-6
DIVERGENCE_LIMIT = 1e6
CONSTRAINTS = ("mmd", "kl", "none")
METRIC_FIELDS = ("step", "avg_return", "critic_loss", "policy_loss", "mmd", "log_alpha", "q_mean", "q_mc_gap")


@dataclass(frozen=True)
class BEARConfig:
    K: int = 2
    lambda_mix: float = 0.75
    p: int = 10
    m: int = 4
    n: int = 4
    mmd_threshold: float = 0.05
    tau: float = 0.02
    kernel: KernelSpec = field(default_factory=KernelSpec)
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    lr_lagrange: float = 1e-3
    log_alpha_bounds: tuple[float, float] = (-5.0, 10.0)
    log_alpha_init: float = 5.0
    batch_size: int = 64
    use_min_only: bool = True
    discount: float = 0.99
    hidden: tuple[int, ...] = (64, 64)
    constraint: str = "mmd"
    p_eval: int = 10
    behavior_epochs: int = 30
    lr_behavior: float = 1e-3

    def __post_init__(self):
        checks = [
            ("K", self.K >= 1, "must be >= 1"),
            ("lambda_mix", 0.0 <= self.lambda_mix <= 1.0, "must lie in [0, 1]"),
            ("p", self.p >= 1, "must be >= 1"),
            ("m", self.m >= 1, "must be >= 1"),
            ("n", self.n >= 1, "must be >= 1"),
            ("mmd_threshold", self.mmd_threshold > 0, "must be > 0"),
            ("tau", 0.0 <= self.tau <= 1.0, "must lie in [0, 1]"),
            ("batch_size", self.batch_size >= 1, "must be >= 1"),
            ("discount", 0.0 <= self.discount < 1.0, "must lie in [0, 1)"),
            ("constraint", self.constraint in CONSTRAINTS, f"must be one of {CONSTRAINTS}"),
            ("p_eval", self.p_eval >= 1, "must be >= 1"),
            ("behavior_epochs", self.behavior_epochs >= 0, "must be >= 0"),
        ]
        lo, hi = self.log_alpha_bounds
        checks.append(("log_alpha_bounds", lo <= hi, "lower bound exceeds upper bound"))
        checks.append(("log_alpha_init", lo <= self.log_alpha_init <= hi, "outside log_alpha_bounds"))
        for lr in ("lr_actor", "lr_critic", "lr_lagrange", "lr_behavior"):
            checks.append((lr, getattr(self, lr) > 0, "must be > 0"))
        for name, ok, why in checks:
            if not ok:
                raise ConfigError(f"{name}: {why} (got {getattr(self, name)!r})")

    def to_dict(self) -> dict[str, str]:
        """Flat string form used for key=value config files and checkpoint headers."""
        return {f.name: format_value(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "BEARConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        base = cls()
        kw = {}
        for k, raw in d.items():
            default = getattr(base, k)
            try:
                kw[k] = coerce(default, raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{k}: cannot parse {raw!r} ({exc})") from None
        return replace(base, **kw)


# ---------------------------------------------------------------------------
# agent


@dataclass
class AgentState:
    critics: list[ParamStore]
    target_critics: list[ParamStore]
    actor: ParamStore
    target_actor: ParamStore
    behavior: ParamStore | None
    log_alpha: float
    critic_opts: list[AdamState]
    actor_opt: AdamState
    state_dim: int
    action_dim: int
    step: int = 0

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)


def actor_spec(state_dim: int, action_dim: int, hidden) -> MLPSpec:
    return MLPSpec(state_dim, tuple(hidden), 2 * action_dim)


def critic_spec(state_dim: int, action_dim: int, hidden) -> MLPSpec:
    return MLPSpec(state_dim + action_dim, tuple(hidden), 1)


def make_agent(state_dim: int, action_dim: int, config: BEARConfig, seed: int) -> AgentState:
    """Fresh agent; targets start as exact copies of the online networks."""
    ss = np.random.SeedSequence(seed)
    seeds = [int(s.generate_state(1)[0]) for s in ss.spawn(config.K + 1)]
    cspec = critic_spec(state_dim, action_dim, config.hidden)
    critics = [init_params(cspec, seeds[i]) for i in range(config.K)]
    actor = init_params(actor_spec(state_dim, action_dim, config.hidden), seeds[-1], final_scale=0.01)
    return AgentState(
        critics=critics,
        target_critics=[c.copy() for c in critics],
        actor=actor,
        target_actor=actor.copy(),
        behavior=None,
        log_alpha=float(config.log_alpha_init),
        critic_opts=[AdamState(config.lr_critic, cspec.n_params) for _ in critics],
        actor_opt=AdamState(config.lr_actor, actor.spec.n_params),
        state_dim=state_dim,
        action_dim=action_dim,
    )


def clone_actor_from_behavior(agent: AgentState) -> None:
    if agent.behavior is None:
        raise ValueError("behavior model not fitted")
    if agent.behavior.spec != agent.actor.spec:
        raise ValueError("behavior model and actor architectures differ")
    agent.actor.assign(agent.behavior.data)
    agent.target_actor.assign(agent.behavior.data)


def critic_values(critics: list[ParamStore], states: np.ndarray, actions: np.ndarray, keep_cache: bool = False):
    """Values of every critic, shape (K, N); optionally with forward caches."""
    x = np.concatenate([states, actions], axis=1)
    outs, caches = [], []
    for c in critics:
        q, cache = mlp_forward(c, x)
        outs.append(q[:, 0])
        caches.append(cache)
    vals = np.stack(outs)
    return (vals, caches) if keep_cache else vals


# ---------------------------------------------------------------------------
# behavior model


@dataclass
class BehaviorFit:
    params: ParamStore
    log_likelihood: float
    n_clipped: int
    history: list[float]


def prepare_actions(actions: np.ndarray) -> tuple[np.ndarray, int]:
    """Clip to the open interval; return the clipped copy and how many entries moved."""
    a = np.asarray(actions, dtype=np.float64)
    clipped = np.clip(a, -ACTION_CLIP, ACTION_CLIP)
    return clipped, int(np.count_nonzero(clipped != a))


def fit_behavior_model(
    dataset: Dataset,
    epochs: int,
    seed: int,
    hidden=(64, 64),
    lr: float = 1e-3,
    batch_size: int = 256,
) -> BehaviorFit:
    """Maximum-likelihood tanh-Gaussian fit of the dataset's actions given states.

    ``log_likelihood`` is the final mean per-transition log-likelihood over
    the whole dataset; ``history`` holds it after every epoch.
    """
    states = dataset.states
    actions, n_clipped = prepare_actions(dataset.actions)
    rng = np.random.default_rng(seed)
    params = init_params(actor_spec(states.shape[1], actions.shape[1], hidden), int(rng.integers(2**31)), final_scale=0.01)
    opt = AdamState(lr, params.spec.n_params)
    n = len(states)
    history = []
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            _, grad = tanh_gaussian_log_prob(params, states[idx], actions[idx], with_grad=True)
            adam_step(opt, params, -grad / len(idx))
        history.append(float(tanh_gaussian_log_prob(params, states, actions).mean()))
    ll = history[-1] if history else float(tanh_gaussian_log_prob(params, states, actions).mean())
    return BehaviorFit(params, ll, n_clipped, history)


# ---------------------------------------------------------------------------
# critic


def q_target(
    agent: AgentState,
    config: BEARConfig,
    next_states: np.ndarray,
    rewards: np.ndarray,
    dones: np.ndarray,
    noise: np.ndarray,
) -> np.ndarray:
    """r + gamma (1 - done) max_i [lam min_j Q'_j(s', a_i) + (1 - lam) max_j Q'_j(s', a_i)].

    ``noise`` has shape (B, p, action_dim) and drives the p candidate
    actions drawn from the target actor at each next state.
    """
    B, p, d = noise.shape
    sample = tanh_gaussian_sample(agent.target_actor, next_states, noise)
    s_rep = np.repeat(next_states, p, axis=0)
    q = critic_values(agent.target_critics, s_rep, sample.action.reshape(B * p, d)).reshape(-1, B, p)
    mixed = config.lambda_mix * q.min(axis=0) + (1.0 - config.lambda_mix) * q.max(axis=0)
    y = mixed.max(axis=1)
    return rewards + config.discount * (1.0 - dones.astype(np.float64)) * y


@dataclass
class CriticUpdate:
    losses: np.ndarray
    q_mean: float
    q_abs_max: float


def critic_loss_and_grads(critics: list[ParamStore], states, actions, target):
    """Mean squared error of each critic against a constant target, with flat gradients."""
    vals, caches = critic_values(critics, states, actions, keep_cache=True)
    resid = vals - target[None, :]
    B = len(target)
    grads = [mlp_backward(c, cache, (2.0 / B) * r[:, None])[0] for c, cache, r in zip(critics, caches, resid)]
    return np.mean(resid**2, axis=1), grads, vals


def q_update(agent: AgentState, config: BEARConfig, batch: dict, noise: np.ndarray) -> CriticUpdate:
    """One Adam step per critic toward the shared ensemble target."""
    target = q_target(agent, config, batch["next_states"], batch["rewards"], batch["dones"], noise)
    losses, grads, vals = critic_loss_and_grads(agent.critics, batch["states"], batch["actions"], target)
    if not np.all(np.isfinite(losses)):
        raise FloatingPointError(f"non-finite critic loss {losses.tolist()} at step {agent.step}")
    for c, opt, g in zip(agent.critics, agent.critic_opts, grads):
        adam_step(opt, c, g)
    return CriticUpdate(losses, float(vals.mean()), float(np.abs(vals).max()))


# ---------------------------------------------------------------------------
# policy improvement


@dataclass
class PolicyUpdate:
    loss: float
    divergence: float
    log_alpha: float
    grad: np.ndarray = field(repr=False)


def _aggregate_q(vals: np.ndarray, use_min: bool):
    """Ensemble aggregate over axis 0 and its gradient weights per critic."""
    K = vals.shape[0]
    if use_min:
        pick = vals.argmin(axis=0)
        w = np.zeros_like(vals)
        w[pick, np.arange(vals.shape[1])] = 1.0
        return vals.min(axis=0), w
    return vals.mean(axis=0), np.full_like(vals, 1.0 / K)


def _q_term(agent: AgentState, config: BEARConfig, states: np.ndarray, sample):
    """-mean aggregated Q over actor samples, and its gradient w.r.t. the squashed actions."""
    B, k, d = sample.action.shape
    s_rep = np.repeat(states, k, axis=0)
    vals, caches = critic_values(agent.critics, s_rep, sample.action.reshape(B * k, d), keep_cache=True)
    agg, w = _aggregate_q(vals, config.use_min_only)
    g_action = np.zeros((B * k, d))
    for c, cache, wj in zip(agent.critics, caches, w):
        _, g_in = mlp_backward(c, cache, -(wj / (B * k))[:, None], param_grad=False)
        g_action += g_in[:, agent.state_dim :]
    return -float(agg.mean()), g_action.reshape(B, k, d)


def constraint_value(agent: AgentState, config: BEARConfig, states, actor_noise, behavior_noise=None, with_grad=False):
    """Mean over states of the divergence estimate between actor and behavior.

    ``mmd``: rooted sampled MMD on pre-tanh actions, MMD^2 floored at 0.
    ``kl``: E_{a~actor}[log actor(a|s) - log behavior(a|s)].
    With ``with_grad`` also returns the sample object and upstream
    gradients (pre-tanh, log-prob) of the mean for backpropagation.
    """
    if agent.behavior is None:
        raise ValueError("behavior model not fitted")
    sample = tanh_gaussian_sample(agent.actor, states, actor_noise)
    B, k, _ = sample.pre_tanh.shape
    if config.constraint == "mmd":
        ref = tanh_gaussian_sample(agent.behavior, states, behavior_noise).pre_tanh
        out = batched_mmd2(config.kernel, sample.pre_tanh, ref, with_grad=with_grad)
        mmd2, g2 = out if with_grad else (out, None)
        root = np.sqrt(np.maximum(mmd2, 0.0))
        value = float(root.mean())
        if not with_grad:
            return value
        scale = np.where(root > 0, 0.5 / np.where(root > 0, root, 1.0), 0.0) / B
        return value, sample, scale[:, None, None] * g2, None
    if config.constraint == "kl":
        head_b = policy_head(agent.behavior, states)
        lp_b, _, _, g_u_b = gaussian_squash_log_prob(head_b.mu[:, None, :], head_b.log_std[:, None, :], sample.pre_tanh)
        value = float((sample.log_prob - lp_b).mean())
        if not with_grad:
            return value
        return value, sample, -g_u_b / (B * k), np.full((B, k), 1.0 / (B * k))
    raise ValueError(f"constraint {config.constraint!r} has no divergence estimate")


def policy_objective(agent: AgentState, config: BEARConfig, states, actor_noise, behavior_noise=None):
    """Lagrangian -E[Q] + alpha (D - eps) and its gradient w.r.t. the actor parameters.

    Returns (loss, divergence estimate, flat gradient). With the ``none``
    constraint the divergence is reported as nan and alpha is ignored.
    """
    if config.constraint == "none":
        sample = tanh_gaussian_sample(agent.actor, states, actor_noise)
        q_loss, g_action = _q_term(agent, config, states, sample)
        grad, _ = tanh_gaussian_sample_backward(agent.actor, sample, g_action=g_action)
        return q_loss, math.nan, grad
    value, sample, g_pre, g_lp = constraint_value(agent, config, states, actor_noise, behavior_noise, with_grad=True)
    q_loss, g_action = _q_term(agent, config, states, sample)
    alpha = agent.alpha
    grad, _ = tanh_gaussian_sample_backward(
        agent.actor,
        sample,
        g_pre_tanh=alpha * g_pre,
        g_action=g_action,
        g_log_prob=None if g_lp is None else alpha * g_lp,
    )
    return q_loss + alpha * (value - config.mmd_threshold), value, grad


def policy_update(agent: AgentState, config: BEARConfig, states, actor_noise, behavior_noise=None) -> PolicyUpdate:
    """Simultaneous primal descent on the actor and dual ascent on log(alpha).

    The dual step is the plain gradient alpha (D - eps) of the Lagrangian
    with respect to log(alpha), so its sign is the sign of the constraint
    slack; the result is clamped to ``log_alpha_bounds``.
    """
    loss, value, grad = policy_objective(agent, config, states, actor_noise, behavior_noise)
    adam_step(agent.actor_opt, agent.actor, grad)
    if config.constraint != "none":
        lo, hi = config.log_alpha_bounds
        step = config.lr_lagrange * agent.alpha * (value - config.mmd_threshold)
        agent.log_alpha = float(np.clip(agent.log_alpha + step, lo, hi))
    return PolicyUpdate(loss, value, agent.log_alpha, grad)


def kl_ablation_update(agent: AgentState, config: BEARConfig, states, actor_noise) -> PolicyUpdate:
    """Same dual machinery with the sampled KL in place of the MMD."""
    return policy_update(agent, replace(config, constraint="kl"), states, actor_noise)


def target_update(agent: AgentState, config: BEARConfig) -> None:
    """Polyak averaging theta' <- tau theta + (1 - tau) theta' of all targets."""
    tau = config.tau
    for online, target in zip([*agent.critics, agent.actor], [*agent.target_critics, agent.target_actor]):
        target.assign(tau * online.data + (1.0 - tau) * target.data)


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalResult:
    average_return: float
    returns: np.ndarray
    q_first: np.ndarray
    mc_first: np.ndarray
    visited_states: np.ndarray = field(repr=False)

    @property
    def q_mc_gap(self) -> float:
        return float(np.mean(self.q_first - self.mc_first))


def select_actions(agent: AgentState, states: np.ndarray, p_eval: int, rng: np.random.Generator, deterministic: bool = False) -> np.ndarray:
    """Best of ``p_eval`` actor samples under the min-ensemble Q; plain sampling when p_eval=1.

    ``deterministic`` bypasses sampling and returns the actor's mode tanh(mu).
    """
    states = np.atleast_2d(states)
    B, d = len(states), agent.action_dim
    if deterministic:
        return np.tanh(policy_head(agent.actor, states).mu)
    sample = tanh_gaussian_sample(agent.actor, states, rng.standard_normal((B, p_eval, d)))
    if p_eval == 1:
        return sample.action[:, 0, :]
    vals = critic_values(agent.critics, np.repeat(states, p_eval, axis=0), sample.action.reshape(B * p_eval, d))
    best = vals.min(axis=0).reshape(B, p_eval).argmax(axis=1)
    return sample.action[np.arange(B), best]


def evaluate_policy(
    agent: AgentState, env: EnvSpec, episodes: int, p_eval: int, seed, discount: float = 0.99, deterministic: bool = False
) -> EvalResult:
    """Roll out ``episodes`` episodes in lockstep; deterministic given ``seed``.

    ``q_first`` holds the min-ensemble value of each episode's first
    state-action pair; ``mc_first`` the realized discounted return.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    rng = np.random.default_rng(seed)
    states = np.stack([env_reset(env, rng) for _ in range(episodes)])
    returns = np.zeros(episodes)
    disc = np.zeros(episodes)
    visited = []
    q_first = None
    for t in range(env.horizon):
        visited.append(states)
        actions = select_actions(agent, states, p_eval, rng, deterministic)
        if t == 0:
            q_first = critic_values(agent.critics, states, actions).min(axis=0)
        nxt = np.empty_like(states)
        for i in range(episodes):
            nxt[i], r, _ = env_step(env, states[i], actions[i])
            returns[i] += r
            disc[i] += discount**t * r
        states = nxt
    return EvalResult(float(returns.mean()), returns, q_first, disc, np.concatenate(visited))


def q_vs_mc_diagnostic(agent: AgentState, env: EnvSpec, episodes: int, seed, p_eval: int = 10, discount: float = 0.99) -> dict:
    """Mean and per-episode gap between min-ensemble Q(s0, a0) and the discounted return."""
    res = evaluate_policy(agent, env, episodes, p_eval, seed, discount)
    gaps = res.q_first - res.mc_first
    return {"mean_gap": float(gaps.mean()), "gaps": gaps, "q": res.q_first, "mc": res.mc_first}


def constraint_activity(agent: AgentState, config: BEARConfig, states: np.ndarray, seed, samples: int | None = None) -> float:
    """Average sampled MMD between actor and behavior model over ``states``.

    ``samples`` draws that many actions from each side; by default the
    training sizes (m, n) are used. The V-statistic is biased upward by
    roughly (1/m + 1/n), so larger ``samples`` gives a tighter reading of
    the population distance.
    """
    rng = np.random.default_rng(seed)
    B, d = len(states), agent.action_dim
    m, n = (config.m, config.n) if samples is None else (samples, samples)
    cfg = replace(config, constraint="mmd")
    return constraint_value(agent, cfg, states, rng.standard_normal((B, m, d)), rng.standard_normal((B, n, d)))


# ---------------------------------------------------------------------------
# training loops


@dataclass
class TrainResult:
    agent: AgentState
    metrics: list[dict]
    diverged: bool
    behavior_log_likelihood: float
    n_clipped: int
    message: str = ""

    @property
    def final_return(self) -> float:
        return self.metrics[-1]["avg_return"]


def batch_from(dataset: Dataset, idx: np.ndarray, actions: np.ndarray) -> dict:
    return {
        "states": dataset.states[idx],
        "actions": actions[idx],
        "rewards": dataset.rewards[idx],
        "next_states": dataset.next_states[idx],
        "dones": dataset.dones[idx],
    }


def _eval_row(agent, config, env, step, eval_episodes, seed, last) -> dict:
    res = evaluate_policy(agent, env, eval_episodes, config.p_eval, (seed, 7919), config.discount)
    return {
        "step": step,
        "avg_return": res.average_return,
        "critic_loss": last.get("critic_loss", math.nan),
        "policy_loss": last.get("policy_loss", math.nan),
        "mmd": last.get("mmd", math.nan),
        "log_alpha": agent.log_alpha,
        "q_mean": last.get("q_mean", math.nan),
        "q_mc_gap": res.q_mc_gap,
    }


def train(
    dataset: Dataset,
    env: EnvSpec,
    config: BEARConfig,
    steps: int,
    eval_every: int,
    seed: int,
    eval_episodes: int = 10,
    behavior: BehaviorFit | None = None,
) -> TrainResult:
    """Fit the behavior model, clone it into the actor, then run the actor-critic loop.

    With ``constraint="none"`` this is the unconstrained baseline. Evaluation
    rows are logged at step 0, every ``eval_every`` steps and at the end.
    Training stops early with ``diverged=True`` when any batch Q-value
    exceeds 1e6 in magnitude or a loss turns non-finite. A precomputed
    ``behavior`` fit (same dataset, seed and architecture) skips refitting.
    """
    if dataset.states.shape[1] != env.state_dim or dataset.actions.shape[1] != env.action_dim:
        raise ValueError(f"dataset dimensions do not match environment {env.name}")
    if steps < 0 or eval_every < 1:
        raise ValueError("steps must be >= 0 and eval_every >= 1")
    fit = behavior or fit_behavior_model(dataset, config.behavior_epochs, seed, config.hidden, config.lr_behavior)
    agent = make_agent(env.state_dim, env.action_dim, config, seed)
    agent.behavior = fit.params
    clone_actor_from_behavior(agent)
    actions, _ = prepare_actions(dataset.actions)
    rng = np.random.default_rng((seed, 1))
    metrics = [_eval_row(agent, config, env, 0, eval_episodes, seed, {})]
    last: dict = {}
    d = env.action_dim
    B = config.batch_size
    diverged, message = False, ""
    for step in range(1, steps + 1):
        idx = rng.integers(len(dataset), size=B)
        batch = batch_from(dataset, idx, actions)
        try:
            cu = q_update(agent, config, batch, rng.standard_normal((B, config.p, d)))
            pu = policy_update(agent, config, batch["states"], rng.standard_normal((B, config.m, d)), rng.standard_normal((B, config.n, d)))
        except FloatingPointError as exc:
            diverged, message = True, f"step {step}: {exc}"
            break
        target_update(agent, config)
        agent.step = step
        last = {"critic_loss": float(cu.losses.mean()), "policy_loss": pu.loss, "mmd": pu.divergence, "q_mean": cu.q_mean}
        if cu.q_abs_max > DIVERGENCE_LIMIT:
            diverged, message = True, f"step {step}: |Q| reached {cu.q_abs_max:.3g}"
            break
        if step % eval_every == 0 or step == steps:
            metrics.append(_eval_row(agent, config, env, step, eval_episodes, seed, last))
    if diverged:
        metrics.append(_eval_row(agent, config, env, agent.step, eval_episodes, seed, last))
    return TrainResult(agent, metrics, diverged, fit.log_likelihood, fit.n_clipped, message)


def train_naive(
    dataset: Dataset,
    env: EnvSpec,
    config: BEARConfig,
    steps: int,
    seed: int,
    eval_every: int | None = None,
    eval_episodes: int = 10,
    behavior: BehaviorFit | None = None,
) -> TrainResult:
    """Unconstrained actor-critic: clipped double-Q targets from one actor sample, alpha = 0."""
    cfg = naive_config(config)
    return train(dataset, env, cfg, steps, eval_every or max(steps, 1), seed, eval_episodes, behavior)


def naive_config(config: BEARConfig) -> BEARConfig:
    return replace(config, constraint="none", K=2, lambda_mix=1.0, p=1)


@dataclass
class BCResult:
    agent: AgentState
    losses: list[float]
    average_return: float


def train_bc(
    dataset: Dataset,
    env: EnvSpec,
    epochs: int,
    seed: int,
    hidden=(64, 64),
    lr: float = 1e-3,
    eval_episodes: int = 10,
    behavior: BehaviorFit | None = None,
) -> BCResult:
    """Behavior cloning: the MLE actor, evaluated by its mode tanh(mu(s)).

    An existing ``behavior`` fit (same data) is reused instead of refitting.
    """
    fit = behavior if behavior is not None else fit_behavior_model(dataset, epochs, seed, hidden, lr)
    hidden = fit.params.spec.layer_widths
    config = BEARConfig(hidden=tuple(hidden), p_eval=1, behavior_epochs=epochs)
    agent = make_agent(env.state_dim, env.action_dim, config, seed)
    agent.behavior = fit.params
    clone_actor_from_behavior(agent)
    res = evaluate_policy(agent, env, eval_episodes, 1, (seed, 7919), deterministic=True)
    return BCResult(agent, [-x for x in fit.history], res.average_return)


# ---------------------------------------------------------------------------
# persistence


def write_metrics_csv(metrics: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_FIELDS)
        for row in metrics:
            w.writerow([row["step"], *(repr(float(row[k])) for k in METRIC_FIELDS[1:])])


def save_agent(agent: AgentState, config: BEARConfig, path: str | Path, extra: dict | None = None) -> None:
    stores = {f"critic{i}": c for i, c in enumerate(agent.critics)}
    stores.update({f"target_critic{i}": c for i, c in enumerate(agent.target_critics)})
    stores.update({"actor": agent.actor, "target_actor": agent.target_actor})
    if agent.behavior is not None:
        stores["behavior"] = agent.behavior
    header = {f"config.{k}": v for k, v in config.to_dict().items()}
    header.update({"log_alpha": repr(agent.log_alpha), "step": agent.step, "state_dim": agent.state_dim, "action_dim": agent.action_dim})
    header.update(extra or {})
    save_checkpoint(path, stores, header)


def load_agent(path: str | Path) -> tuple[AgentState, BEARConfig, dict]:
    """Restore an agent from :func:`save_agent`; optimizer moments start fresh."""
    raw = Path(path).read_bytes()
    end = raw.find(b"\nend\n")
    if end < 0:
        raise ValueError("checkpoint header not terminated")
    header = {}
    for line in raw[:end].decode().splitlines()[1:]:
        if "=" in line and not line.startswith("param "):
            k, _, v = line.partition("=")
            header[k] = v
    config = BEARConfig.from_dict({k[7:]: v for k, v in header.items() if k.startswith("config.")})
    sd, ad = int(header["state_dim"]), int(header["action_dim"])
    cs, acs = critic_spec(sd, ad, config.hidden), actor_spec(sd, ad, config.hidden)
    specs = {f"critic{i}": cs for i in range(config.K)}
    specs.update({f"target_critic{i}": cs for i in range(config.K)})
    specs.update({"actor": acs, "target_actor": acs, "behavior": acs})
    header, stores = load_checkpoint(path, specs)
    agent = AgentState(
        critics=[stores[f"critic{i}"] for i in range(config.K)],
        target_critics=[stores[f"target_critic{i}"] for i in range(config.K)],
        actor=stores["actor"],
        target_actor=stores["target_actor"],
        behavior=stores.get("behavior"),
        log_alpha=float(header["log_alpha"]),
        critic_opts=[AdamState(config.lr_critic, cs.n_params) for _ in range(config.K)],
        actor_opt=AdamState(config.lr_actor, acs.n_params),
        state_dim=sd,
        action_dim=ad,
        step=int(header["step"]),
    )
    return agent, config, header
