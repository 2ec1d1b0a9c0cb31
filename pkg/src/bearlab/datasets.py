"""Behavior policies for the random / medium / expert regimes, dataset generation and CSV persistence."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .envs import EnvSpec, env_reset, env_step, pendulum_energy, wrap_angle

REGIMES = ("random", "medium", "expert")
META_KEYS = ("env", "regime", "seed", "size", "avg_return")

Policy = Callable[[np.ndarray, np.random.Generator], np.ndarray]


class DatasetFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = f"{path}:" if path else ""
        where += f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.path = path


# ---------------------------------------------------------------------------
# behavior policies


@dataclass(frozen=True)
class MediumNoise:
    """Degraded-controller settings for the medium regime, per environment."""

    gain_scale: float
    random_prob: float
    action_noise: float


MEDIUM = {
    "pointmass2d": MediumNoise(gain_scale=0.1, random_prob=0.3, action_noise=0.3),
    "pendulum": MediumNoise(gain_scale=0.3, random_prob=0.3, action_noise=0.3),
}

PD_GAINS = {"pointmass2d": (5.0, 3.0)}


def pointmass_expert(spec: EnvSpec, gain_scale: float = 1.0) -> Policy:
    kp, kd = PD_GAINS["pointmass2d"]
    kp *= gain_scale

    def act(state, rng=None):
        return np.clip(kp * (spec.goal - state[:2]) - kd * state[2:], -1.0, 1.0)

    return act


def pendulum_expert(spec: EnvSpec, gain_scale: float = 1.0) -> Policy:
    """Energy pumping far from upright, PD stabilization near it."""
    e_top = spec.mass * spec.gravity * spec.length

    def act(state, rng=None):
        theta, omega = float(wrap_angle(state[0])), float(state[1])
        if abs(theta) < 0.6:
            u = -(25.0 * theta + 5.0 * omega)
        else:
            e = pendulum_energy(spec, (theta, omega))
            u = 2.0 * (e_top - e) * (1.0 if omega >= 0 else -1.0)
        return np.clip(gain_scale * np.array([u / spec.max_torque]), -1.0, 1.0)

    return act


def make_behavior_policy(spec: EnvSpec, regime: str, seed: int = 0) -> Policy:
    """Policy closure ``policy(state, rng) -> action in [-1, 1]^d``.

    ``seed`` is accepted for interface stability; all randomness comes from
    the generator passed at call time.
    """
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}; choose from {REGIMES}")
    d = spec.action_dim
    if regime == "random":
        return lambda state, rng: rng.uniform(-1.0, 1.0, size=d)
    expert_factory = pointmass_expert if spec.name == "pointmass2d" else pendulum_expert
    if regime == "expert":
        return expert_factory(spec)
    cfg = MEDIUM[spec.name]
    base = expert_factory(spec, cfg.gain_scale)

    def medium(state, rng):
        if rng.uniform() < cfg.random_prob:
            return rng.uniform(-1.0, 1.0, size=d)
        return np.clip(base(state) + cfg.action_noise * rng.standard_normal(d), -1.0, 1.0)

    return medium


def rollout_returns(spec: EnvSpec, policy: Policy, episodes: int, seed) -> np.ndarray:
    """Undiscounted episode returns of ``policy`` from seeded start states."""
    rng = np.random.default_rng(seed)
    out = np.empty(episodes)
    for ep in range(episodes):
        s = env_reset(spec, rng)
        total = 0.0
        for _ in range(spec.horizon):
            s, r, term = env_step(spec, s, policy(s, rng))
            total += r
            if term:
                break
        out[ep] = total
    return out


# ---------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.rewards)
        if n < 1:
            raise ValueError("dataset must contain at least one transition")
        for name in ("states", "actions", "next_states", "dones"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has {len(getattr(self, name))} rows, expected {n}")
        if not np.all(np.isfinite(self.rewards)):
            raise ValueError("rewards must be finite")

    def __len__(self) -> int:
        return len(self.rewards)

    def episode_returns(self) -> np.ndarray:
        """Returns of complete episodes (closed by ``done``).

        A dataset with no complete episode reports the sum of its single
        partial episode.
        """
        ends = np.flatnonzero(self.dones)
        if ends.size == 0:
            return np.array([self.rewards.sum()])
        csum = np.concatenate([[0.0], np.cumsum(self.rewards)])
        starts = np.concatenate([[0], ends[:-1] + 1])
        return csum[ends + 1] - csum[starts]

    def average_return(self) -> float:
        return float(self.episode_returns().mean())

    def equals(self, other: "Dataset") -> bool:
        return (
            all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("states", "actions", "rewards", "next_states", "dones"))
            and self.meta == other.meta
        )


def generate_dataset(spec: EnvSpec, regime: str, n_transitions: int, seed: int) -> Dataset:
    """Roll episodes of the regime's behavior policy until ``n_transitions`` are collected.

    ``done`` marks the last step of each episode (the horizon). The final
    episode may be cut short by the size limit; it is then left open.
    """
    if n_transitions < 1:
        raise ValueError("n_transitions must be >= 1")
    policy = make_behavior_policy(spec, regime, seed)
    rng = np.random.default_rng(seed)
    ds, da = spec.state_dim, spec.action_dim
    S = np.empty((n_transitions, ds))
    A = np.empty((n_transitions, da))
    R = np.empty(n_transitions)
    S2 = np.empty((n_transitions, ds))
    D = np.zeros(n_transitions, dtype=bool)
    i = 0
    while i < n_transitions:
        s = env_reset(spec, rng)
        for t in range(spec.horizon):
            a = np.clip(policy(s, rng), -1.0, 1.0)
            s2, r, term = env_step(spec, s, a)
            S[i], A[i], R[i], S2[i] = s, a, r, s2
            D[i] = term or t == spec.horizon - 1
            i += 1
            if D[i - 1] or i == n_transitions:
                break
            s = s2
    data = Dataset(S, A, R, S2, D)
    data.meta = {
        "env": spec.name,
        "regime": regime,
        "seed": int(seed),
        "size": n_transitions,
        "avg_return": data.average_return(),
    }
    return data


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def csv_header(state_dim: int, action_dim: int) -> list[str]:
    return (
        [f"s{i}" for i in range(state_dim)]
        + [f"a{i}" for i in range(action_dim)]
        + ["reward"]
        + [f"ns{i}" for i in range(state_dim)]
        + ["done"]
    )


def meta_path(path: str | Path) -> Path:
    return Path(str(path) + ".meta")


def dataset_save(data: Dataset, path: str | Path) -> None:
    """CSV with 17-significant-digit floats plus a ``key=value`` sidecar at ``<path>.meta``."""
    ds, da = data.states.shape[1], data.actions.shape[1]
    lines = [",".join(csv_header(ds, da))]
    for s, a, r, s2, d in zip(data.states, data.actions, data.rewards, data.next_states, data.dones):
        row = [*map(_fmt, s), *map(_fmt, a), _fmt(r), *map(_fmt, s2), "1" if d else "0"]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")
    meta = dict(data.meta)
    meta.setdefault("size", len(data))
    out = []
    for k in META_KEYS:
        if k in meta:
            v = meta[k]
            out.append(f"{k}={_fmt(v) if isinstance(v, float) else v}")
    for k in sorted(set(meta) - set(META_KEYS)):
        out.append(f"{k}={meta[k]}")
    meta_path(path).write_text("\n".join(out) + "\n")


def _parse_meta(path: Path) -> dict:
    if not path.exists():
        raise DatasetFormatError("metadata sidecar missing", path=str(path))
    meta = {}
    for i, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        k, sep, v = line.partition("=")
        if not sep:
            raise DatasetFormatError(f"expected key=value, got {line!r}", i, str(path))
        meta[k.strip()] = v.strip()
    missing = [k for k in META_KEYS if k not in meta]
    if missing:
        raise DatasetFormatError(f"metadata missing keys {missing}", path=str(path))
    try:
        meta["seed"] = int(meta["seed"])
        meta["size"] = int(meta["size"])
        meta["avg_return"] = float(meta["avg_return"])
    except ValueError as exc:
        raise DatasetFormatError(f"bad metadata value: {exc}", path=str(path)) from None
    return meta


def dataset_load(path: str | Path) -> Dataset:
    path = Path(path)
    meta = _parse_meta(meta_path(path))
    text = path.read_text()
    if not text.endswith("\n"):
        raise DatasetFormatError("file does not end with a newline (truncated?)", text.count("\n") + 1, str(path))
    lines = text.splitlines()
    if not lines:
        raise DatasetFormatError("empty file", 1, str(path))
    header = lines[0].split(",")
    ds = sum(1 for h in header if h.startswith("s") and h[1:].isdigit())
    da = sum(1 for h in header if h.startswith("a") and h[1:].isdigit())
    if header != csv_header(ds, da):
        raise DatasetFormatError(f"unexpected header {lines[0]!r}", 1, str(path))
    width = len(header)
    rows = np.empty((len(lines) - 1, width))
    for i, line in enumerate(lines[1:], 2):
        parts = line.split(",")
        if len(parts) != width:
            raise DatasetFormatError(f"expected {width} fields, got {len(parts)}", i, str(path))
        try:
            rows[i - 2] = [float(p) for p in parts]
        except ValueError as exc:
            raise DatasetFormatError(str(exc), i, str(path)) from None
        if parts[-1] not in ("0", "1"):
            raise DatasetFormatError(f"done must be 0 or 1, got {parts[-1]!r}", i, str(path))
    if len(rows) != meta["size"]:
        raise DatasetFormatError(f"{len(rows)} rows but metadata size is {meta['size']}", path=str(path))
    data = Dataset(
        rows[:, :ds].copy(),
        rows[:, ds : ds + da].copy(),
        rows[:, ds + da].copy(),
        rows[:, ds + da + 1 : 2 * ds + da + 1].copy(),
        rows[:, -1] == 1.0,
        meta,
    )
    return data


def normalized_return(value: float, random_return: float, expert_return: float) -> float:
    """(value - random) / (expert - random); 0 is random-level, 1 is expert-level."""
    span = expert_return - random_return
    if not math.isfinite(span) or span == 0:
        raise ValueError("expert and random returns must differ")
    return (value - random_return) / span
