"""Dense networks in float64 numpy with hand-written reverse mode.

Parameters of one network live in a single flat vector (:class:`ParamStore`)
with per-layer weight and bias views. Forward passes return a cache that
records the store's version, so a backward pass against parameters that
have since been modified is detected instead of silently producing wrong
gradients.
"""

from __future__ import annotations

import functools
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
LOG2 = math.log(2.0)


class StaleCache(RuntimeError):
    pass


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass(frozen=True)
class MLPSpec:
    input_dim: int
    layer_widths: tuple[int, ...] = (256, 256)
    output_dim: int = 1
    activation: str = "relu"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if not widths:
            raise ValueError("an MLP needs at least one hidden layer")
        if min(widths) < 1 or self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("layer widths and dimensions must be >= 1")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "layer_widths", widths)

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.layer_widths, self.output_dim)

    @property
    def n_params(self) -> int:
        s = self.sizes
        return sum(s[i] * s[i + 1] + s[i + 1] for i in range(len(s) - 1))

    def digest(self) -> str:
        text = f"mlp in={self.input_dim} hidden={self.layer_widths} out={self.output_dim} act={self.activation}"
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@functools.lru_cache(maxsize=None)
def _layout(spec: MLPSpec) -> tuple:
    """Per layer: (weight slice, weight shape, bias slice) into the flat vector."""
    out, off, s = [], 0, spec.sizes
    for i in range(len(s) - 1):
        w = s[i] * s[i + 1]
        out.append((slice(off, off + w), (s[i], s[i + 1]), slice(off + w, off + w + s[i + 1])))
        off += w + s[i + 1]
    return tuple(out)


class ParamStore:
    """Flat float64 parameter vector with named ``W{i}`` / ``b{i}`` views."""

    def __init__(self, spec: MLPSpec, data: np.ndarray | None = None, seed: int | None = None):
        self.spec = spec
        n = spec.n_params
        self.data = np.zeros(n) if data is None else np.array(data, dtype=np.float64)
        if self.data.shape != (n,):
            raise ValueError(f"expected {n} parameters, got {self.data.shape}")
        self.seed = seed
        self.version = 0
        self.Ws = [self.data[w].reshape(shape) for w, shape, _ in _layout(spec)]
        self.bs = [self.data[b] for _, _, b in _layout(spec)]
        self.views: dict[str, np.ndarray] = {}
        for i, (W, b) in enumerate(zip(self.Ws, self.bs)):
            self.views[f"W{i}"], self.views[f"b{i}"] = W, b

    @property
    def n_layers(self) -> int:
        return len(self.spec.sizes) - 1

    def __getitem__(self, name: str) -> np.ndarray:
        return self.views[name]

    def touch(self) -> None:
        """Mark the parameters as modified; outstanding caches become stale."""
        self.version += 1

    def assign(self, flat: np.ndarray) -> None:
        self.data[:] = flat
        self.touch()

    def add_(self, delta: np.ndarray) -> None:
        self.data += delta
        self.touch()

    def copy(self) -> "ParamStore":
        return ParamStore(self.spec, self.data.copy(), self.seed)


def init_params(spec: MLPSpec, seed, final_scale: float = 1.0) -> ParamStore:
    """Uniform fan-in init U(-1/sqrt(fan_in), 1/sqrt(fan_in)); last layer scaled by ``final_scale``."""
    rng = np.random.default_rng(seed)
    store = ParamStore(spec, seed=seed if isinstance(seed, int) else None)
    for i in range(store.n_layers):
        W, b = store[f"W{i}"], store[f"b{i}"]
        bound = 1.0 / math.sqrt(W.shape[0])
        scale = final_scale if i == store.n_layers - 1 else 1.0
        W[:] = scale * rng.uniform(-bound, bound, size=W.shape)
        b[:] = scale * rng.uniform(-bound, bound, size=b.shape)
    return store


@dataclass
class MLPCache:
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    version: int
    owner: int


def mlp_forward(params: ParamStore, x: np.ndarray) -> tuple[np.ndarray, MLPCache]:
    spec = params.spec
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(f"input shape {x.shape} does not match input_dim {spec.input_dim}")
    inputs, pre = [], []
    h = x
    relu = spec.activation == "relu"
    last = len(params.Ws) - 1
    for i, (W, b) in enumerate(zip(params.Ws, params.bs)):
        inputs.append(h)
        z = h @ W + b
        pre.append(z)
        if i < last:
            h = np.maximum(z, 0.0) if relu else np.tanh(z)
        else:
            h = z
    return h, MLPCache(inputs, pre, params.version, id(params))


def mlp_backward(
    params: ParamStore, cache: MLPCache, grad_out: np.ndarray, param_grad: bool = True
) -> tuple[np.ndarray | None, np.ndarray]:
    """Returns (flat parameter gradient, input gradient).

    With ``param_grad=False`` only the input gradient is computed and the
    first element is None.
    """
    if cache.owner != id(params) or cache.version != params.version:
        raise StaleCache("parameters changed since the forward pass that produced this cache")
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != cache.pre[-1].shape:
        raise ValueError(f"upstream gradient shape {g.shape} != output shape {cache.pre[-1].shape}")
    flat = np.empty(params.data.size) if param_grad else None
    relu = params.spec.activation == "relu"
    layout = _layout(params.spec)
    last = len(layout) - 1
    for i in range(last, -1, -1):
        if i < last:
            z = cache.pre[i]
            g = g * (z > 0) if relu else g * (1.0 - np.tanh(z) ** 2)
        if param_grad:
            w_sl, shape, b_sl = layout[i]
            np.matmul(cache.inputs[i].T, g, out=flat[w_sl].reshape(shape))
            flat[b_sl] = g.sum(axis=0)
        g = g @ params.Ws[i].T
    return flat, g


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    lr: float
    n: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)
    t: int = 0

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.n)
        if self.v is None:
            self.v = np.zeros(self.n)
        if self.m.shape != (self.n,) or self.v.shape != (self.n,):
            raise ValueError("moment vectors must match the parameter count")


def adam_step(state: AdamState, params: ParamStore | np.ndarray, grads: np.ndarray) -> None:
    """Bias-corrected Adam update in place (descent on ``grads``)."""
    grads = np.asarray(grads, dtype=np.float64)
    data = params.data if isinstance(params, ParamStore) else params
    if grads.shape != data.shape or grads.shape != state.m.shape:
        raise ValueError(f"gradient length {grads.shape} does not match parameters {data.shape}")
    bad = np.flatnonzero(~np.isfinite(grads))
    if bad.size:
        raise NonFiniteGradient(f"{bad.size} non-finite gradient entries, first at index {bad[0]}")
    state.t += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1 - state.beta2) * grads**2
    m_hat = state.m / (1 - state.beta1**state.t)
    v_hat = state.v / (1 - state.beta2**state.t)
    step = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    if isinstance(params, ParamStore):
        params.add_(-step)
    else:
        params -= step


# ---------------------------------------------------------------------------
# tanh-Gaussian policy head


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def tanh_log_det(u: np.ndarray) -> np.ndarray:
    """log(1 - tanh(u)^2) in the stable form 2 (log 2 - u - softplus(-2u))."""
    return 2.0 * (LOG2 - u - softplus(-2.0 * u))


@dataclass
class PolicyHead:
    mu: np.ndarray
    log_std: np.ndarray
    clamp_mask: np.ndarray
    cache: MLPCache


def policy_head(params: ParamStore, states: np.ndarray) -> PolicyHead:
    """Mean and clamped log-std from a network whose output is [mu, log_std]."""
    out, cache = mlp_forward(params, states)
    d = params.spec.output_dim // 2
    raw = out[:, d:]
    mask = (raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)
    return PolicyHead(out[:, :d], np.clip(raw, LOG_STD_MIN, LOG_STD_MAX), mask, cache)


def policy_head_backward(params: ParamStore, head: PolicyHead, g_mu: np.ndarray, g_log_std: np.ndarray):
    """Gradients flow to the raw log-std only where the clamp is inactive."""
    g = np.concatenate([g_mu, g_log_std * head.clamp_mask], axis=1)
    return mlp_backward(params, head.cache, g)


def gaussian_squash_log_prob(mu: np.ndarray, log_std: np.ndarray, u: np.ndarray):
    """log pi(tanh(u)) for pi = tanh N(mu, exp(log_std)^2), summed over the last axis.

    Returns (log_prob, d/dmu, d/dlog_std, d/du) with the partials holding
    the other arguments fixed. ``mu`` and ``log_std`` broadcast against ``u``.
    """
    std = np.exp(log_std)
    z = (u - mu) / std
    lp = np.sum(-0.5 * z**2 - log_std - HALF_LOG_2PI - tanh_log_det(u), axis=-1)
    g_mu = z / std
    g_log_std = z**2 - 1.0
    g_u = -z / std + 2.0 * np.tanh(u)
    return lp, np.broadcast_to(g_mu, u.shape), np.broadcast_to(g_log_std, u.shape), g_u


@dataclass
class TanhGaussianSample:
    pre_tanh: np.ndarray
    action: np.ndarray
    log_prob: np.ndarray
    head: PolicyHead
    noise: np.ndarray


def tanh_gaussian_sample(params: ParamStore, states: np.ndarray, noise: np.ndarray) -> TanhGaussianSample:
    """Reparameterized samples; ``noise`` has shape (batch, k, action_dim)."""
    head = policy_head(params, states)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.ndim != 3 or noise.shape[0] != head.mu.shape[0] or noise.shape[2] != head.mu.shape[1]:
        raise ValueError(f"noise shape {noise.shape} incompatible with batch {head.mu.shape}")
    mu, ls = head.mu[:, None, :], head.log_std[:, None, :]
    u = mu + np.exp(ls) * noise
    # with u = mu + std * noise the Gaussian term is -noise^2/2 - log_std
    lp = np.sum(-0.5 * noise**2 - ls - HALF_LOG_2PI - tanh_log_det(u), axis=-1)
    return TanhGaussianSample(u, np.tanh(u), lp, head, noise)


def tanh_gaussian_sample_backward(
    params: ParamStore,
    sample: TanhGaussianSample,
    g_pre_tanh: np.ndarray | None = None,
    g_action: np.ndarray | None = None,
    g_log_prob: np.ndarray | None = None,
):
    """Backpropagate through a reparameterized sample to the actor parameters.

    Upstream gradients are with respect to the pre-tanh sample (B, k, d),
    the squashed action (B, k, d) and the log-probability (B, k); any of
    them may be omitted. Returns (flat parameter gradient, state gradient).
    """
    u = sample.pre_tanh
    g_u = np.zeros_like(u) if g_pre_tanh is None else np.array(g_pre_tanh, dtype=np.float64)
    if g_action is not None:
        g_u = g_u + g_action * (1.0 - sample.action**2)
    std = np.exp(sample.head.log_std)[:, None, :]
    g_ls = g_u * std * sample.noise
    if g_log_prob is not None:
        glp = np.asarray(g_log_prob, dtype=np.float64)[..., None]
        # d lp / d u = 2 tanh(u) (through the squash correction); d lp / d log_std = -1 directly
        g_u_lp = glp * 2.0 * np.tanh(u)
        g_u = g_u + g_u_lp
        g_ls = g_ls + g_u_lp * std * sample.noise - glp
    return policy_head_backward(params, sample.head, g_u.sum(axis=1), g_ls.sum(axis=1))


def tanh_gaussian_log_prob(params: ParamStore, states: np.ndarray, actions: np.ndarray, with_grad: bool = False):
    """log pi(a|s) of given squashed actions; optional gradient of the sum over the batch."""
    actions = np.asarray(actions, dtype=np.float64)
    if np.any(np.abs(actions) >= 1.0):
        raise ValueError("actions must lie strictly inside (-1, 1)")
    head = policy_head(params, states)
    u = np.arctanh(actions)
    lp, g_mu, g_ls, _ = gaussian_squash_log_prob(head.mu, head.log_std, u)
    if not with_grad:
        return lp
    grad, _ = policy_head_backward(params, head, g_mu, g_ls)
    return lp, grad


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    coords: np.ndarray
    analytic: np.ndarray
    numeric: np.ndarray


def grad_check(
    loss: Callable[[np.ndarray], float],
    params: np.ndarray,
    analytic: np.ndarray,
    tolerance: float = 1e-4,
    n_coords: int = 40,
    h: float = 1e-5,
    seed: int = 0,
    abs_floor: float = 1e-6,
) -> GradCheckReport:
    """Central differences on a random coordinate subset.

    Relative error is |a - n| / max(|a|, |n|, abs_floor); ``params`` is
    restored after probing.
    """
    x = np.array(params, dtype=np.float64)
    analytic = np.asarray(analytic, dtype=np.float64)
    rng = np.random.default_rng(seed)
    coords = np.sort(rng.choice(x.size, size=min(n_coords, x.size), replace=False))
    numeric = np.empty(coords.size)
    for j, i in enumerate(coords):
        old = x[i]
        x[i] = old + h
        up = loss(x.copy())
        x[i] = old - h
        dn = loss(x.copy())
        x[i] = old
        numeric[j] = (up - dn) / (2 * h)
    a = analytic[coords]
    rel = np.abs(a - numeric) / np.maximum(np.maximum(np.abs(a), np.abs(numeric)), abs_floor)
    worst = float(rel.max()) if rel.size else 0.0
    return GradCheckReport(worst, worst < tolerance, coords, a, numeric)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path: str | Path, stores: dict[str, ParamStore], header: dict) -> None:
    """Plain-text header then raw little-endian float64 parameters.

    Header lines are ``key=value``; each store adds a ``param <name> <spec
    digest> <length>`` line; the line ``end`` closes the header.
    """
    lines = ["bearlab-checkpoint 1"]
    for k in sorted(header):
        v = str(header[k])
        if "\n" in v or "=" in k:
            raise ValueError(f"header entry {k!r} cannot be encoded")
        lines.append(f"{k}={v}")
    for name, st in stores.items():
        lines.append(f"param {name} {st.spec.digest()} {st.data.size}")
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode())
        for st in stores.values():
            fh.write(st.data.astype("<f8").tobytes())


def load_checkpoint(path: str | Path, specs: dict[str, MLPSpec]) -> tuple[dict, dict[str, ParamStore]]:
    raw = Path(path).read_bytes()
    header, entries = {}, []
    pos = 0
    lineno = 0
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise ValueError(f"checkpoint header not terminated (line {lineno + 1})")
        line = raw[pos:nl].decode()
        pos = nl + 1
        lineno += 1
        if lineno == 1:
            if line != "bearlab-checkpoint 1":
                raise ValueError(f"line 1: not a checkpoint file: {line!r}")
            continue
        if line == "end":
            break
        if line.startswith("param "):
            _, name, digest, n = line.split()
            entries.append((name, digest, int(n)))
        else:
            k, sep, v = line.partition("=")
            if not sep:
                raise ValueError(f"line {lineno}: malformed header entry {line!r}")
            header[k] = v
    stores = {}
    for name, digest, n in entries:
        if name not in specs:
            raise ValueError(f"no spec supplied for stored parameters {name!r}")
        if specs[name].digest() != digest:
            raise ValueError(f"spec digest mismatch for {name!r}")
        need = 8 * n
        if len(raw) - pos < need:
            raise ValueError(f"checkpoint truncated in {name!r} at byte offset {pos}")
        stores[name] = ParamStore(specs[name], np.frombuffer(raw[pos : pos + need], dtype="<f8").astype(np.float64))
        pos += need
    if pos != len(raw):
        raise ValueError(f"{len(raw) - pos} trailing bytes after parameters")
    return header, stores
