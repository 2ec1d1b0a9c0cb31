"""Kernels, the biased sampled MMD^2 estimator, and support simulations."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtri

FAMILIES = ("laplacian", "gaussian", "mixture")


@dataclass(frozen=True)
class KernelSpec:
    """Radial kernel on Euclidean distance.

    ``mixture`` averages Laplacian kernels over the given bandwidths with
    equal weights.
    """

    family: str = "laplacian"
    bandwidths: tuple[float, ...] = (20.0,)

    def __post_init__(self):
        bw = tuple(float(b) for b in np.atleast_1d(self.bandwidths))
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not bw or any(b <= 0 for b in bw):
            raise ValueError("bandwidths must be non-empty and positive")
        if self.family == "mixture" and len(bw) < 2:
            raise ValueError("mixture kernel needs at least two bandwidths")
        if self.family != "mixture" and len(bw) != 1:
            raise ValueError(f"{self.family} kernel takes exactly one bandwidth")
        object.__setattr__(self, "bandwidths", bw)

    @classmethod
    def parse(cls, text: str) -> "KernelSpec":
        """``laplacian:20`` / ``gaussian:1`` / ``mixture:1,10,50``."""
        fam, _, bws = text.partition(":")
        return cls(fam.strip(), tuple(float(b) for b in bws.split(",")) if bws else (20.0,))

    def __str__(self) -> str:
        return f"{self.family}:{','.join(f'{b:g}' for b in self.bandwidths)}"

    def from_sq_dist(self, d2: np.ndarray) -> np.ndarray:
        if self.family == "gaussian":
            (s,) = self.bandwidths
            return np.exp(-d2 / (2.0 * s * s))
        r = np.sqrt(d2)
        return np.mean([np.exp(-r / s) for s in self.bandwidths], axis=0)

    def grad_factor(self, d2: np.ndarray) -> np.ndarray:
        """g with d k(x, y) / d x = g * (x - y); zero where x == y for Laplacian terms."""
        if self.family == "gaussian":
            (s,) = self.bandwidths
            return -np.exp(-d2 / (2.0 * s * s)) / (s * s)
        r = np.sqrt(d2)
        inv_r = np.divide(1.0, r, out=np.zeros_like(r), where=r > 0)
        return np.mean([-np.exp(-r / s) / s for s in self.bandwidths], axis=0) * inv_r


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[:, None] if x.ndim == 1 else x


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(spec.from_sq_dist(np.sum((x - y) ** 2)))


def kernel_matrix(spec: KernelSpec, xs, ys) -> np.ndarray:
    xs, ys = _as_points(xs), _as_points(ys)
    if xs.shape[1] != ys.shape[1]:
        raise ValueError("dimension mismatch between sample sets")
    d2 = np.sum((xs[:, None, :] - ys[None, :, :]) ** 2, axis=-1)
    return spec.from_sq_dist(d2)


def mmd2_sampled(spec: KernelSpec, xs, ys) -> float:
    """Biased (V-statistic) MMD^2, diagonal self-terms included."""
    xs, ys = _as_points(xs), _as_points(ys)
    if len(xs) == 0 or len(ys) == 0:
        raise ValueError("sample sets must be non-empty")
    return float(
        kernel_matrix(spec, xs, xs).mean()
        - 2.0 * kernel_matrix(spec, xs, ys).mean()
        + kernel_matrix(spec, ys, ys).mean()
    )


def batched_mmd2(spec: KernelSpec, xs: np.ndarray, ys: np.ndarray, with_grad: bool = False):
    """Per-row MMD^2 for xs (B, m, d) against ys (B, n, d).

    With ``with_grad`` also returns d MMD^2 / d xs, shape (B, m, d); ys is
    treated as constant.
    """
    m, n = xs.shape[1], ys.shape[1]
    dxx = xs[:, :, None, :] - xs[:, None, :, :]
    dxy = xs[:, :, None, :] - ys[:, None, :, :]
    dyy = ys[:, :, None, :] - ys[:, None, :, :]
    d2xx, d2xy, d2yy = (np.sum(d * d, axis=-1) for d in (dxx, dxy, dyy))
    val = (
        spec.from_sq_dist(d2xx).sum(axis=(1, 2)) / (m * m)
        - 2.0 * spec.from_sq_dist(d2xy).sum(axis=(1, 2)) / (m * n)
        + spec.from_sq_dist(d2yy).sum(axis=(1, 2)) / (n * n)
    )
    if not with_grad:
        return val
    gxx = spec.grad_factor(d2xx)[..., None] * dxx
    gxy = spec.grad_factor(d2xy)[..., None] * dxy
    # x_i appears as both arguments of k(x_i, x_i') -> factor 2 by symmetry
    grad = 2.0 * gxx.sum(axis=2) / (m * m) - 2.0 * gxy.sum(axis=2) / (m * n)
    return val, grad


# ---------------------------------------------------------------------------
# support simulation


@dataclass
class SupportCurves:
    n_grid: list[int]
    self_mean: np.ndarray
    self_stderr: np.ndarray
    uniform_mean: np.ndarray
    uniform_stderr: np.ndarray
    diff_mean: np.ndarray
    diff_stderr: np.ndarray
    params: dict = field(default_factory=dict)

    def rows(self):
        """CSV rows; ``difference`` is the paired Uniform - Self estimate."""
        for i, n in enumerate(self.n_grid):
            yield n, "self", self.self_mean[i], self.self_stderr[i]
            yield n, "uniform", self.uniform_mean[i], self.uniform_stderr[i]
            yield n, "difference", self.diff_mean[i], self.diff_stderr[i]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "variant", "mean_mmd", "stderr"])
            for n, var, m, se in self.rows():
                w.writerow([n, var, repr(float(m)), repr(float(se))])


def run_support_simulation(
    p_mean: float,
    p_std: float,
    alpha: float,
    n_grid,
    trials: int,
    spec: KernelSpec,
    seed: int = 0,
) -> SupportCurves:
    """Compare MMD^2(P, P) with MMD^2(U_alpha(P), P) at small sample sizes.

    P = N(p_mean, p_std^2), U_alpha(P) = Uniform[p_mean -+ alpha p_std].
    Each trial draws one reference set from P and a single set of uniform
    quantiles shared by the two compared sets (P via the inverse normal
    CDF, U_alpha linearly). The common random numbers cancel most of the
    trial-to-trial noise in the Self-vs-Uniform difference.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    n_grid = [int(n) for n in n_grid]
    keys = ("sm", "ss", "um", "us", "dm", "ds")
    out = {k: [] for k in keys}
    for n in n_grid:
        ref = p_mean + p_std * rng.standard_normal((trials, n, 1))
        v = rng.uniform(size=(trials, n, 1))
        p_draw = p_mean + p_std * ndtri(v)
        u_draw = p_mean + alpha * p_std * (2.0 * v - 1.0)
        s_vals = batched_mmd2(spec, p_draw, ref)
        u_vals = batched_mmd2(spec, u_draw, ref)
        for prefix, vals in (("s", s_vals), ("u", u_vals), ("d", u_vals - s_vals)):
            out[prefix + "m"].append(vals.mean())
            out[prefix + "s"].append(vals.std(ddof=1) / np.sqrt(trials) if trials > 1 else 0.0)
    params = dict(p_mean=p_mean, p_std=p_std, alpha=alpha, trials=trials, kernel=str(spec), seed=seed)
    return SupportCurves(n_grid, *(np.array(out[k]) for k in keys), params=params)
