import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bearlab.mmd import KernelSpec, batched_mmd2, kernel_eval, kernel_matrix, mmd2_sampled, run_support_simulation

SPECS = [KernelSpec("laplacian", (20.0,)), KernelSpec("gaussian", (0.7,)), KernelSpec("mixture", (1.0, 10.0, 50.0))]
finite = st.floats(-5, 5, allow_nan=False)


def naive_kernel(spec, x, y):
    d = math.sqrt(sum((a - b) ** 2 for a, b in zip(x, y)))
    if spec.family == "gaussian":
        return math.exp(-d * d / (2 * spec.bandwidths[0] ** 2))
    return sum(math.exp(-d / s) for s in spec.bandwidths) / len(spec.bandwidths)


def naive_mmd2(spec, xs, ys):
    n, m = len(xs), len(ys)
    kxx = sum(naive_kernel(spec, a, b) for a in xs for b in xs)
    kxy = sum(naive_kernel(spec, a, b) for a in xs for b in ys)
    kyy = sum(naive_kernel(spec, a, b) for a in ys for b in ys)
    return kxx / n**2 - 2 * kxy / (n * m) + kyy / m**2


def point_sets(d=2):
    return st.tuples(
        arrays(np.float64, st.tuples(st.integers(1, 8), st.just(d)), elements=finite),
        arrays(np.float64, st.tuples(st.integers(1, 8), st.just(d)), elements=finite),
    )


class TestKernelSpec:
    def test_defaults(self):
        assert KernelSpec() == KernelSpec("laplacian", (20.0,))

    @pytest.mark.parametrize(
        "family,bws",
        [("laplacian", ()), ("gaussian", (-1.0,)), ("mixture", (1.0,)), ("cauchy", (1.0,)), ("laplacian", (1.0, 2.0))],
    )
    def test_invalid(self, family, bws):
        with pytest.raises(ValueError):
            KernelSpec(family, bws)

    def test_parse_round_trip(self):
        spec = KernelSpec("mixture", (1.0, 10.0, 50.0))
        assert KernelSpec.parse(str(spec)) == spec


class TestKernelEval:
    def test_laplacian_hand_value(self):
        assert kernel_eval(KernelSpec("laplacian", (10.0,)), [0.0], [10.0]) == pytest.approx(math.exp(-1), abs=1e-15)

    def test_gaussian_hand_value(self):
        spec = KernelSpec("gaussian", (1 / math.sqrt(2),))
        assert kernel_eval(spec, [0.0, 0.0], [0.6, 0.8]) == pytest.approx(math.exp(-1), abs=1e-15)

    @pytest.mark.parametrize("spec", SPECS)
    def test_identity_is_one(self, spec):
        assert kernel_eval(spec, [0.3, -2.0], [0.3, -2.0]) == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            kernel_eval(KernelSpec(), [0.0], [0.0, 1.0])

    @pytest.mark.parametrize("spec", SPECS)
    @given(x=arrays(np.float64, 3, elements=finite), y=arrays(np.float64, 3, elements=finite))
    @settings(max_examples=30, deadline=None)
    def test_range_and_symmetry(self, spec, x, y):
        k = kernel_eval(spec, x, y)
        assert 0 < k <= 1
        assert k == kernel_eval(spec, y, x)

    @pytest.mark.parametrize("spec", SPECS)
    def test_psd_on_random_sets(self, spec):
        rng = np.random.default_rng(0)
        for _ in range(20):
            pts = rng.normal(scale=3, size=(10, 2))
            K = kernel_matrix(spec, pts, pts)
            assert np.linalg.eigvalsh(K).min() >= -1e-8


class TestMMD:
    def test_single_point_zero(self):
        assert mmd2_sampled(KernelSpec(), [[1.5]], [[1.5]]) == 0.0

    def test_two_point_gaussian(self):
        spec = KernelSpec("gaussian", (1 / math.sqrt(2),))
        assert abs(mmd2_sampled(spec, [0.0], [1.0]) - (2 - 2 * math.exp(-1))) <= 1e-12

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mmd2_sampled(KernelSpec(), np.zeros((0, 1)), [[1.0]])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mmd2_sampled(KernelSpec(), [[0.0, 1.0]], [[1.0]])

    @pytest.mark.parametrize("spec", SPECS)
    @given(sets=point_sets())
    @settings(max_examples=30, deadline=None)
    def test_matches_double_loop(self, spec, sets):
        xs, ys = sets
        assert abs(mmd2_sampled(spec, xs, ys) - naive_mmd2(spec, xs.tolist(), ys.tolist())) <= 1e-12

    @pytest.mark.parametrize("spec", SPECS)
    @given(sets=point_sets())
    @settings(max_examples=30, deadline=None)
    def test_symmetric_and_self_zero(self, spec, sets):
        xs, ys = sets
        assert abs(mmd2_sampled(spec, xs, ys) - mmd2_sampled(spec, ys, xs)) <= 1e-12
        assert abs(mmd2_sampled(spec, xs, xs)) <= 1e-12

    @given(sets=point_sets(), seed=st.integers(0, 1000))
    @settings(max_examples=30, deadline=None)
    def test_permutation_invariant(self, sets, seed):
        xs, ys = sets
        rng = np.random.default_rng(seed)
        a = mmd2_sampled(SPECS[0], xs, ys)
        b = mmd2_sampled(SPECS[0], rng.permutation(xs), rng.permutation(ys))
        assert abs(a - b) <= 1e-12


class TestBatched:
    @pytest.mark.parametrize("spec", SPECS)
    def test_matches_unbatched(self, spec, rng):
        xs, ys = rng.normal(size=(4, 5, 2)), rng.normal(size=(4, 3, 2))
        vals = batched_mmd2(spec, xs, ys)
        for b in range(4):
            assert abs(vals[b] - mmd2_sampled(spec, xs[b], ys[b])) <= 1e-12

    @pytest.mark.parametrize("spec", SPECS)
    def test_gradient_matches_finite_differences(self, spec, rng):
        xs, ys = rng.normal(size=(2, 4, 3)), rng.normal(size=(2, 4, 3))
        _, grad = batched_mmd2(spec, xs, ys, with_grad=True)
        h = 1e-5
        fd = np.zeros_like(xs)
        for idx in np.ndindex(xs.shape):
            up, dn = xs.copy(), xs.copy()
            up[idx] += h
            dn[idx] -= h
            fd[idx] = (batched_mmd2(spec, up, ys)[idx[0]] - batched_mmd2(spec, dn, ys)[idx[0]]) / (2 * h)
        rel = np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-8)
        assert rel.max() < 1e-4

    def test_laplacian_gradient_zero_on_coincident_points(self):
        xs = np.zeros((1, 2, 1))
        _, grad = batched_mmd2(KernelSpec(), xs, xs.copy(), with_grad=True)
        assert np.all(np.isfinite(grad))


class TestSupportSimulation:
    def test_deterministic(self):
        a = run_support_simulation(0, 1, 1.5, [2, 3], 50, KernelSpec(), seed=3)
        b = run_support_simulation(0, 1, 1.5, [2, 3], 50, KernelSpec(), seed=3)
        assert list(a.rows()) == list(b.rows())

    def test_rejects_zero_trials(self):
        with pytest.raises(ValueError):
            run_support_simulation(0, 1, 1.5, [2], 0, KernelSpec())

    def test_single_trial_has_zero_stderr(self):
        c = run_support_simulation(0, 1, 1.5, [2], 1, KernelSpec())
        assert c.self_stderr[0] == 0.0

    def test_csv(self, tmp_path):
        c = run_support_simulation(0, 1, 4.0, [2, 5], 20, KernelSpec(), seed=0)
        path = tmp_path / "sim.csv"
        c.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "n,variant,mean_mmd,stderr"
        assert len(lines) == 1 + 3 * 2
