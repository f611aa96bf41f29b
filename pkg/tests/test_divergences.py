import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distclust.distributions import DimensionMismatchError, DistributionSet, DiscreteDistribution
from distclust.divergences import (
    BandwidthNotResolvedError,
    KernelSpec,
    NonPositiveEpsilonError,
    NotConvergedError,
    TooFewSamplesError,
    cost_matrix,
    mmd2,
    resolve_bandwidth,
    sinkhorn,
    wasserstein2_exact,
)


def naive_sq_costs(X, Y):
    out = np.zeros((len(X), len(Y)))
    for i, x in enumerate(X):
        for j, y in enumerate(Y):
            out[i, j] = ((x - y) ** 2).sum()
    return out


class TestCostMatrix:
    def test_scalar_case(self):
        assert cost_matrix(np.array([[0.0]]), np.array([[3.0]]))[0, 0] == pytest.approx(9.0)

    def test_zero_diagonal_on_identical_inputs(self):
        X = np.random.default_rng(0).normal(size=(6, 3))
        assert np.all(np.diag(cost_matrix(X, X)) == 0.0)

    def test_matches_naive_double_loop(self):
        rng = np.random.default_rng(1)
        X, Y = rng.normal(size=(3, 2)), rng.normal(size=(4, 2))
        assert np.allclose(cost_matrix(X, Y), naive_sq_costs(X, Y), atol=1e-12)

    def test_exact_transpose_symmetry(self):
        rng = np.random.default_rng(2)
        X, Y = rng.normal(size=(5, 2)), rng.normal(size=(7, 2))
        assert np.array_equal(cost_matrix(X, Y), cost_matrix(Y, X).T)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            cost_matrix(np.zeros((2, 2)), np.zeros((2, 3)))


def naive_mmd2(X, wX, Y, wY, sigma):
    """Direct double-sum evaluation of the weighted unbiased estimator."""
    def k(a, b):
        return math.exp(-((a - b) ** 2).sum() / (2 * sigma * sigma))

    def self_term(Z, w):
        num = sum(w[i] * w[j] * k(Z[i], Z[j])
                  for i in range(len(Z)) for j in range(len(Z)) if i != j)
        return num / (1.0 - (w ** 2).sum())

    cross = sum(wX[i] * wY[j] * k(X[i], Y[j])
                for i in range(len(X)) for j in range(len(Y)))
    return self_term(X, wX) + self_term(Y, wY) - 2.0 * cross


class TestMmd:
    def test_same_point_twice_is_zero(self):
        X = np.array([[1.0], [1.0]])
        w = np.array([0.5, 0.5])
        assert mmd2(X, w, X, w, KernelSpec(bandwidth=1.0)) == pytest.approx(0.0, abs=1e-15)

    def test_two_point_closed_form(self):
        # uniform {0, 1} against itself: exp(-1/2) - 1
        X = np.array([[0.0], [1.0]])
        w = np.array([0.5, 0.5])
        value = mmd2(X, w, X, w, KernelSpec(bandwidth=1.0))
        assert value == pytest.approx(math.exp(-0.5) - 1.0, abs=1e-12)

    def test_symmetry(self, rng):
        X, Y = rng.normal(size=(5, 2)), rng.normal(size=(7, 2))
        wX, wY = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(7))
        k = KernelSpec(bandwidth=1.3)
        assert mmd2(X, wX, Y, wY, k) == pytest.approx(mmd2(Y, wY, X, wX, k), abs=1e-12)

    def test_matches_double_sum_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            m, n = int(rng.integers(2, 7)), int(rng.integers(2, 7))
            X, Y = rng.normal(size=(m, 2)), rng.normal(size=(n, 2))
            wX, wY = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(n))
            sigma = float(rng.uniform(0.5, 2.0))
            got = mmd2(X, wX, Y, wY, KernelSpec(bandwidth=sigma))
            assert got == pytest.approx(naive_mmd2(X, wX, Y, wY, sigma), abs=1e-12)

    def test_uniform_weights_match_classic_estimator(self, rng):
        # Eq-style unbiased two-sample estimator with 1/(m(m-1)) and 2/(m n)
        m, n = 6, 5
        X, Y = rng.normal(size=(m, 2)), rng.normal(size=(n, 2))
        sigma = 1.1

        def k(a, b):
            return math.exp(-((a - b) ** 2).sum() / (2 * sigma * sigma))

        xx = sum(k(X[i], X[j]) for i in range(m) for j in range(m) if i != j) / (m * (m - 1))
        yy = sum(k(Y[i], Y[j]) for i in range(n) for j in range(n) if i != j) / (n * (n - 1))
        xy = 2.0 * sum(k(x, y) for x in X for y in Y) / (m * n)
        got = mmd2(X, np.full(m, 1 / m), Y, np.full(n, 1 / n), KernelSpec(bandwidth=sigma))
        assert got == pytest.approx(xx + yy - xy, abs=1e-12)

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamplesError):
            mmd2(np.array([[0.0]]), np.array([1.0]),
                 np.array([[0.0], [1.0]]), np.array([0.5, 0.5]),
                 KernelSpec(bandwidth=1.0))

    def test_unresolved_bandwidth(self):
        X = np.array([[0.0], [1.0]])
        w = np.array([0.5, 0.5])
        with pytest.raises(BandwidthNotResolvedError):
            mmd2(X, w, X, w, KernelSpec())

    def test_unbiased_against_quadrature_oracle(self):
        """Mean over resamples of two discretized 1-D Gaussians within 3
        standard errors of the population value from numerical integration."""
        sigma_k, s, delta, m = 1.0, 0.7, 1.2, 50
        # population E[k] terms by Gauss-Hermite quadrature
        nodes, weights = np.polynomial.hermite_e.hermegauss(80)

        def mean_kernel(mu_a, mu_b):
            xs = mu_a + s * nodes
            ys = mu_b + s * nodes
            kmat = np.exp(-((xs[:, None] - ys[None, :]) ** 2) / (2 * sigma_k ** 2))
            w2 = weights[:, None] * weights[None, :]
            return float((kmat * w2).sum() / w2.sum())

        population = mean_kernel(0, 0) + mean_kernel(delta, delta) - 2 * mean_kernel(0, delta)
        rng = np.random.default_rng(4)
        uniform = np.full(m, 1.0 / m)
        spec = KernelSpec(bandwidth=sigma_k)
        estimates = []
        for _ in range(200):
            X = rng.normal(0.0, s, size=(m, 1))
            Y = rng.normal(delta, s, size=(m, 1))
            estimates.append(mmd2(X, uniform, Y, uniform, spec))
        estimates = np.array(estimates)
        stderr = estimates.std(ddof=1) / math.sqrt(len(estimates))
        assert abs(estimates.mean() - population) <= 3.0 * stderr


class TestBandwidth:
    def test_two_points_distance_two(self):
        dset = DistributionSet([
            DiscreteDistribution("a", np.array([[0.0, 0.0]]), np.array([1.0])),
            DiscreteDistribution("b", np.array([[2.0, 0.0]]), np.array([1.0])),
        ])
        assert resolve_bandwidth(dset, seed=0) == pytest.approx(2.0)

    def test_identical_points_fall_back_to_one(self):
        dset = DistributionSet([
            DiscreteDistribution("a", np.zeros((3, 2)), np.full(3, 1 / 3)),
            DiscreteDistribution("b", np.zeros((2, 2)), np.full(2, 1 / 2)),
        ])
        assert resolve_bandwidth(dset, seed=0) == 1.0

    def test_deterministic_given_seed(self, default_set):
        assert resolve_bandwidth(default_set, seed=9) == resolve_bandwidth(default_set, seed=9)


class TestWasserstein:
    def test_dirac_pair(self):
        a = np.array([[0.0, 0.0]])
        b = np.array([[3.0, 4.0]])
        dist, plan = wasserstein2_exact(a, np.array([1.0]), b, np.array([1.0]))
        assert dist == pytest.approx(5.0)
        assert np.allclose(plan.plan, [[1.0]])

    def test_identical_inputs_zero(self, rng):
        X = rng.normal(size=(8, 2))
        w = np.full(8, 1 / 8)
        dist, plan = wasserstein2_exact(X, w, X, w)
        assert dist == 0.0
        assert np.trace(plan.plan) == pytest.approx(1.0)

    def test_symmetry(self, rng):
        X, Y = rng.normal(size=(6, 2)), rng.normal(size=(7, 2))
        wX, wY = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(7))
        d1, _ = wasserstein2_exact(X, wX, Y, wY)
        d2, _ = wasserstein2_exact(Y, wY, X, wX)
        assert d1 == pytest.approx(d2, abs=1e-10)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(6)
        for _ in range(40):
            m = int(rng.integers(2, 6))
            w = np.full(m, 1.0 / m)
            A, B, C = (rng.uniform(size=(m, 2)) for _ in range(3))
            dab, _ = wasserstein2_exact(A, w, B, w)
            dbc, _ = wasserstein2_exact(B, w, C, w)
            dac, _ = wasserstein2_exact(A, w, C, w)
            assert dac <= dab + dbc + 1e-8

    def test_translation_distance(self, rng):
        X = rng.normal(size=(10, 2))
        w = np.full(10, 0.1)
        shift = np.array([0.6, -0.2])
        dist, _ = wasserstein2_exact(X, w, X + shift, w)
        assert dist == pytest.approx(np.linalg.norm(shift), abs=1e-10)


class TestSinkhorn:
    def test_dirac_pair_value_is_cost(self):
        value, plan = sinkhorn(np.array([[0.0, 0.0]]), np.array([1.0]),
                               np.array([[3.0, 4.0]]), np.array([1.0]), epsilon=0.7)
        assert value == pytest.approx(25.0)
        assert np.allclose(plan.plan, [[1.0]])

    def test_symmetry(self, rng):
        X, Y = rng.uniform(size=(6, 2)), rng.uniform(size=(6, 2))
        w = np.full(6, 1 / 6)
        v1, _ = sinkhorn(X, w, Y, w, epsilon=0.05, tol=1e-12, max_iter=200_000)
        v2, _ = sinkhorn(Y, w, X, w, epsilon=0.05, tol=1e-12, max_iter=200_000)
        assert v1 == pytest.approx(v2, abs=1e-9)

    def test_value_monotone_in_epsilon(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            X, Y = rng.uniform(size=(6, 2)), rng.uniform(size=(6, 2))
            w = np.full(6, 1 / 6)
            values = [sinkhorn(X, w, Y, w, epsilon=e, tol=1e-10, max_iter=200_000)[0]
                      for e in (0.02, 0.1, 0.5, 2.0, 10.0)]
            assert all(b >= a - 1e-10 for a, b in zip(values, values[1:]))

    def test_transport_cost_approaches_exact(self, rng):
        X, Y = rng.uniform(size=(4, 2)), rng.uniform(size=(4, 2))
        w = np.full(4, 0.25)
        exact_dist, exact_plan = wasserstein2_exact(X, w, Y, w)
        gaps = []
        for eps in (1.0, 0.1, 0.01):
            _, plan = sinkhorn(X, w, Y, w, epsilon=eps, tol=1e-9, max_iter=300_000)
            gaps.append(abs(math.sqrt(plan.objective) - exact_dist))
        assert gaps[0] >= gaps[1] >= gaps[2]
        assert plan.objective <= exact_plan.objective * 1.01

    def test_marginal_residuals_on_return(self, rng):
        X, Y = rng.uniform(size=(5, 2)), rng.uniform(size=(7, 2))
        wX, wY = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(7))
        _, plan = sinkhorn(X, wX, Y, wY, epsilon=0.3, tol=1e-9)
        r1, r2 = plan.marginal_residuals()
        assert max(r1, r2) <= 1e-9

    def test_not_converged_carries_partial_result(self, rng):
        X, Y = rng.uniform(size=(6, 2)), rng.uniform(size=(6, 2))
        w = np.full(6, 1 / 6)
        with pytest.raises(NotConvergedError) as err:
            sinkhorn(X, w, Y, w, epsilon=0.001, tol=1e-12, max_iter=5, anneal=False)
        assert err.value.iterations == 5
        value, plan = err.value.result
        assert np.isfinite(value)
        assert plan.plan.shape == (6, 6)

    def test_nonpositive_epsilon(self):
        X = np.array([[0.0], [1.0]])
        w = np.array([0.5, 0.5])
        with pytest.raises(NonPositiveEpsilonError):
            sinkhorn(X, w, X, w, epsilon=0.0)

    def test_zero_weight_points_excluded_cleanly(self, rng):
        X, Y = rng.uniform(size=(5, 2)), rng.uniform(size=(4, 2))
        wX = np.array([0.4, 0.0, 0.3, 0.3, 0.0])
        wY = np.array([0.25, 0.25, 0.5, 0.0])
        value, plan = sinkhorn(X, wX, Y, wY, epsilon=0.3)
        assert np.isfinite(value)
        assert not np.isnan(plan.plan).any()
        assert plan.plan[1].sum() == 0.0
        assert plan.plan[:, 3].sum() == 0.0
        assert max(plan.marginal_residuals()) <= 1e-9

    @settings(deadline=None, max_examples=20)
    @given(seed=st.integers(0, 10_000))
    def test_plan_nonnegative_and_feasible(self, seed):
        rng = np.random.default_rng(seed)
        m, n = int(rng.integers(2, 7)), int(rng.integers(2, 7))
        X, Y = rng.uniform(size=(m, 2)), rng.uniform(size=(n, 2))
        wX, wY = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(n))
        _, plan = sinkhorn(X, wX, Y, wY, epsilon=0.5, tol=1e-9)
        assert plan.plan.min() >= 0.0
        r1, r2 = plan.marginal_residuals()
        assert max(r1, r2) <= 1e-9
