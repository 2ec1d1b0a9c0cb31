"""Two small continuous-control environments: a damped 2-D point mass and a torque-limited pendulum.

Both are deterministic given the start state; randomness enters only
through the start-state draw in :func:`env_reset`. Actions are clipped to
[-1, 1] per dimension before use.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

ENV_NAMES = ("pointmass2d", "pendulum")


@dataclass(frozen=True)
class EnvSpec:
    name: str
    horizon: int
    dt: float
    # pointmass2d
    gain: float = 1.0
    damping: float = 0.1
    box: float = 2.0
    goal_x: float = 0.0
    goal_y: float = 0.0
    # pendulum
    mass: float = 1.0
    length: float = 1.0
    gravity: float = 10.0
    max_torque: float = 2.0
    max_speed: float = 8.0
    substeps: int = 5
    # start-state noise scale (pendulum angle jitter around hanging)
    start_noise: float = 0.1

    def __post_init__(self):
        if self.name not in ENV_NAMES:
            raise ValueError(f"unknown environment {self.name!r}; choose from {ENV_NAMES}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    @property
    def state_dim(self) -> int:
        return 4 if self.name == "pointmass2d" else 2

    @property
    def action_dim(self) -> int:
        return 2 if self.name == "pointmass2d" else 1

    @property
    def goal(self) -> np.ndarray:
        return np.array([self.goal_x, self.goal_y])

    @property
    def reward_bounds(self) -> tuple[float, float]:
        if self.name == "pointmass2d":
            far = (self.box + abs(self.goal_x)) ** 2 + (self.box + abs(self.goal_y)) ** 2
            return (-far - 0.01 * self.action_dim, 0.0)
        return (-(math.pi**2 + 0.1 * self.max_speed**2 + 0.001 * self.max_torque**2), 0.0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EnvSpec":
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown environment keys: {sorted(unknown)}")
        base = make_env(d["name"]) if "name" in d else None
        if base is None:
            raise ValueError("environment config needs a 'name'")
        conv = {}
        for k, v in d.items():
            if k == "name":
                continue
            default = getattr(base, k)
            conv[k] = type(default)(v)
        return replace(base, **conv)


def make_env(name: str, **overrides) -> EnvSpec:
    if name == "pointmass2d":
        spec = EnvSpec("pointmass2d", horizon=50, dt=0.1)
    elif name == "pendulum":
        spec = EnvSpec("pendulum", horizon=200, dt=0.05, damping=0.05)
    else:
        raise ValueError(f"unknown environment {name!r}; choose from {ENV_NAMES}")
    return replace(spec, **overrides)


def wrap_angle(theta):
    return (np.asarray(theta) + np.pi) % (2 * np.pi) - np.pi


def env_reset(spec: EnvSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.name == "pointmass2d":
        pos = rng.uniform(-spec.box, spec.box, size=2)
        return np.array([pos[0], pos[1], 0.0, 0.0])
    theta = wrap_angle(np.pi + spec.start_noise * rng.standard_normal())
    return np.array([float(theta), spec.start_noise * rng.standard_normal()])


def _pendulum_accel(spec: EnvSpec, theta, omega, torque):
    inertia = spec.mass * spec.length**2
    return (spec.gravity / spec.length) * np.sin(theta) - spec.damping * omega / inertia + torque / inertia


def pendulum_energy(spec: EnvSpec, state) -> float:
    """Kinetic plus potential energy with theta = 0 upright."""
    theta, omega = state
    return 0.5 * spec.mass * spec.length**2 * omega**2 + spec.mass * spec.gravity * spec.length * math.cos(theta)


def reward(spec: EnvSpec, state: np.ndarray, action: np.ndarray) -> float:
    a = np.clip(action, -1.0, 1.0)
    if spec.name == "pointmass2d":
        d = state[:2] - spec.goal
        return float(-(d @ d) - 0.01 * (a @ a))
    theta, omega = float(wrap_angle(state[0])), state[1]
    u = spec.max_torque * a[0]
    return float(-(theta**2 + 0.1 * omega**2 + 0.001 * u**2))


def env_step(spec: EnvSpec, state, action, rng: np.random.Generator | None = None):
    """One step: returns (next_state, reward, terminal).

    The reward is R(s, a) at the current state. Neither environment has a
    terminal condition, so ``terminal`` is always False; episodes end at
    ``spec.horizon``. ``rng`` is accepted for interface symmetry.
    """
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (spec.state_dim,) or not np.all(np.isfinite(state)):
        raise ValueError(f"invalid state {state!r}")
    a = np.clip(np.asarray(action, dtype=np.float64).reshape(spec.action_dim), -1.0, 1.0)
    r = reward(spec, state, a)
    if spec.name == "pointmass2d":
        pos, vel = state[:2], state[2:]
        vel = vel + spec.dt * (spec.gain * a - spec.damping * vel)
        pos = pos + spec.dt * vel
        clipped = np.clip(pos, -spec.box, spec.box)
        vel = np.where(clipped != pos, 0.0, vel)  # inelastic walls
        return np.concatenate([clipped, vel]), r, False
    theta, omega = state
    u = spec.max_torque * a[0]
    h = spec.dt / spec.substeps
    for _ in range(spec.substeps):
        k1t, k1w = omega, _pendulum_accel(spec, theta, omega, u)
        k2t, k2w = omega + 0.5 * h * k1w, _pendulum_accel(spec, theta + 0.5 * h * k1t, omega + 0.5 * h * k1w, u)
        k3t, k3w = omega + 0.5 * h * k2w, _pendulum_accel(spec, theta + 0.5 * h * k2t, omega + 0.5 * h * k2w, u)
        k4t, k4w = omega + h * k3w, _pendulum_accel(spec, theta + h * k3t, omega + h * k3w, u)
        theta = theta + h / 6 * (k1t + 2 * k2t + 2 * k3t + k4t)
        omega = omega + h / 6 * (k1w + 2 * k2w + 2 * k3w + k4w)
    omega = float(np.clip(omega, -spec.max_speed, spec.max_speed))
    return np.array([float(wrap_angle(theta)), omega]), r, False
