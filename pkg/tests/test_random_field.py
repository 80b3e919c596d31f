import numpy as np
import pytest

from darcy_moments import (CapacityError, CovarianceKernel, MomentEvaluator,
                           SyntheticKlSampler, build_sampler,
                           covariance_matrix, cov_eval, moment_eval,
                           sample_field)
from darcy_moments.random_field import _pairings


class TestKernel:
    def test_variance_at_coincidence(self):
        k = CovarianceKernel("exponential", 1.0, 1.0)
        assert cov_eval(k, 0.3, 0.3) == 1.0

    def test_exponential_formula(self):
        k = CovarianceKernel("exponential", 2.0, 0.5)
        assert abs(cov_eval(k, 0.0, 0.5) - 4.0 * np.exp(-1.0)) < 1e-14

    def test_squared_exponential_formula(self):
        k = CovarianceKernel("squared-exponential", 1.5, 0.25)
        d = 0.1
        assert abs(cov_eval(k, 0.2, 0.2 + d)
                   - 1.5 ** 2 * np.exp(-((d / 0.25) ** 2))) < 1e-14

    def test_symmetry_random_pairs(self):
        rng = np.random.default_rng(1)
        k = CovarianceKernel("exponential", 1.3, 0.7)
        a, b = rng.random(100), rng.random(100)
        assert np.abs(cov_eval(k, a, b) - cov_eval(k, b, a)).max() <= 1e-15

    def test_default_gamma_metadata(self):
        assert CovarianceKernel("exponential").gamma == 0.5
        assert CovarianceKernel("squared-exponential").gamma == 1.0

    @pytest.mark.parametrize("kwargs", [
        dict(kind="matern"), dict(sigma=-1.0), dict(corr_length=0.0),
        dict(gamma=1.5),
    ])
    def test_invalid_parameters(self, kwargs):
        with pytest.raises(ValueError):
            CovarianceKernel(**kwargs)


class TestMoments:
    def setup_method(self):
        self.kernel = CovarianceKernel("exponential", 0.8, 0.6)
        self.ev = MomentEvaluator(self.kernel)

    def test_order_zero(self):
        assert moment_eval(self.ev, ()) == 1.0

    def test_odd_orders_vanish(self):
        assert moment_eval(self.ev, (0.4,)) == 0.0
        assert moment_eval(self.ev, (0.1, 0.5, 0.9)) == 0.0

    def test_pair_is_covariance(self):
        got = moment_eval(self.ev, (0.2, 0.7))
        assert abs(got - cov_eval(self.kernel, 0.2, 0.7)) < 1e-15

    def test_order_four_pairing_sum(self):
        y = (0.1, 0.35, 0.6, 0.95)
        c = lambda i, j: cov_eval(self.kernel, y[i], y[j])
        expect = c(0, 1) * c(2, 3) + c(0, 2) * c(1, 3) + c(0, 3) * c(1, 2)
        assert abs(moment_eval(self.ev, y) - expect) < 1e-15

    def test_pairing_count_m6(self):
        assert len(_pairings(6)) == 15

    def test_permutation_invariance(self):
        rng = np.random.default_rng(7)
        y = tuple(rng.random(6))
        base = moment_eval(self.ev, y)
        for _ in range(20):
            perm = tuple(rng.permutation(y))
            assert abs(moment_eval(self.ev, perm) - base) <= 1e-13 * abs(base)

    def test_sigma_homogeneity(self):
        rng = np.random.default_rng(8)
        y = tuple(rng.random(4))
        base = moment_eval(self.ev, y)
        for c in (0.5, 1.9, 3.0):
            scaled = MomentEvaluator(self.kernel.with_sigma(self.kernel.sigma * c))
            got = moment_eval(scaled, y)
            assert abs(got - c ** 4 * base) <= 1e-13 * abs(c ** 4 * base)

    def test_order_cap(self):
        with pytest.raises(CapacityError):
            moment_eval(self.ev, tuple(np.linspace(0, 1, 10)))

    def test_order_four_vs_monte_carlo(self):
        y = np.array([0.15, 0.4, 0.65, 0.9])
        cov = covariance_matrix(self.kernel, y)
        rng = np.random.default_rng(123)
        z = rng.standard_normal((100_000, 4)) @ np.linalg.cholesky(cov).T
        prods = z.prod(axis=1)
        mc, se = prods.mean(), prods.std(ddof=1) / np.sqrt(len(prods))
        assert abs(moment_eval(self.ev, tuple(y)) - mc) <= 5.0 * se


class TestSampler:
    def test_single_location_factor(self):
        k = CovarianceKernel("exponential", 2.0, 1.0)
        s = build_sampler(k, [0.5], jitter=1e-10, seed=0)
        assert abs(s.factor[0, 0] - 2.0 * np.sqrt(1.0 + 1e-10)) < 1e-12

    def test_near_coincident_needs_jitter(self):
        k = CovarianceKernel("exponential", 1.0, 1.0)
        s = build_sampler(k, [0.5, 0.5 + 1e-12], jitter=1e-10, seed=0)
        cov = covariance_matrix(k, np.array([0.5, 0.5 + 1e-12]))
        resid = np.abs(s.factor @ s.factor.T - cov).max()
        assert resid <= 10.0 * s.jitter * k.sigma ** 2

    def test_coincident_locations_rejected(self):
        k = CovarianceKernel("exponential", 1.0, 1.0)
        with pytest.raises(ValueError):
            build_sampler(k, [0.5, 0.5], seed=0)

    def test_zero_sigma_gives_zero_fields(self):
        k = CovarianceKernel("exponential", 0.0, 1.0)
        s = build_sampler(k, np.linspace(0, 1, 9), seed=3)
        assert np.abs(sample_field(s)).max() == 0.0

    def test_seed_determinism(self):
        k = CovarianceKernel("exponential", 1.0, 0.4)
        a = build_sampler(k, np.linspace(0, 1, 17), seed=42)
        b = build_sampler(k, np.linspace(0, 1, 17), seed=42)
        for _ in range(3):
            assert np.array_equal(sample_field(a), sample_field(b))

    def test_stream_advances(self):
        k = CovarianceKernel("exponential", 1.0, 0.4)
        s = build_sampler(k, np.linspace(0, 1, 9), seed=1)
        assert not np.array_equal(sample_field(s), sample_field(s))

    def test_empirical_variance_at_midpoint(self):
        k = CovarianceKernel("exponential", 1.0, 0.8)
        locs = np.linspace(0, 1, 65)
        s = build_sampler(k, locs, seed=11)
        draws = np.array([sample_field(s) for _ in range(100_000)])
        assert abs(draws[:, 32].var(ddof=1) - 1.0) <= 0.02

    def test_empirical_covariance_pairs(self):
        k = CovarianceKernel("squared-exponential", 0.9, 0.5)
        locs = np.linspace(0, 1, 33)
        s = build_sampler(k, locs, seed=5)
        draws = np.array([sample_field(s) for _ in range(100_000)])
        rng = np.random.default_rng(17)
        n = draws.shape[0]
        for _ in range(10):
            i, j = rng.integers(0, 33, size=2)
            prods = draws[:, i] * draws[:, j]
            se = prods.std(ddof=1) / np.sqrt(n)
            assert abs(prods.mean() - cov_eval(k, locs[i], locs[j])) <= 5.0 * se


class TestSyntheticKl:
    def test_finite_rank_field(self):
        locs = np.linspace(0, 1, 33)
        modes = [lambda x: np.sin(np.pi * x), lambda x: 0.5 * np.cos(np.pi * x)]
        a = SyntheticKlSampler(modes, locs, seed=2)
        b = SyntheticKlSampler(modes, locs, seed=2)
        ya, yb = a.sample(), b.sample()
        assert np.array_equal(ya, yb)
        # every draw lies in the span of the two modes
        basis = np.column_stack([m(locs) for m in modes])
        resid = ya - basis @ np.linalg.lstsq(basis, ya, rcond=None)[0]
        assert np.abs(resid).max() < 1e-12
