import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from polyzeros.ensemble import make_scheme
from polyzeros.gaussian_oracle import (complex_intensity_01, integrate_against,
                                       integrate_real_intensity, rho10, variance_fn)
from polyzeros.rootfind import RootSet, classify_real, find_roots
from polyzeros.spectral_stats import (Disk, FixedPolynomial, Interval, StatEstimate, TestKernel,
                                      concentration_deviation, count_observable, distinct_index_sum,
                                      ensemble_config, estimate_correlation_k, estimate_counts,
                                      estimate_mixed_correlation, estimate_observable, exact_mean,
                                      linear_statistic, log_abs_observable, mixed_statistic,
                                      monte_carlo_integral, summarize, uniform_disk_sampler,
                                      uniform_interval_sampler, universality_gap, variance_estimate)


def direct_distinct_sum(values):
    k = len(values)
    m = len(values[0])
    return sum(math.prod(values[j][idx[j]] for j in range(k))
               for idx in itertools.permutations(range(m), k))


class TestKernels:
    @pytest.mark.parametrize("kernel", [TestKernel.gaussian_bump(0.5, 0.3),
                                        TestKernel.cosine_bump(1j, 0.7),
                                        TestKernel.indicator_soft(-2.0, 1.0, 0.25)])
    def test_compact_support(self, kernel):
        r = kernel.support_radius
        assert kernel(kernel.center + r) == 0.0
        assert kernel(kernel.center + 1.01j * r) == 0.0
        assert kernel(kernel.center) > 0.0

    def test_indicator_is_one_inside(self):
        k = TestKernel.indicator_soft(0.0, 2.0, 0.5)
        np.testing.assert_array_equal(k(np.linspace(-2, 2, 41)), 1.0)
        assert 0.0 < float(k(2.25)) < 1.0

    def test_cosine_bump_mass(self):
        # ∫_{-R}^{R} (1 + cos(π x / R)) / 2 dx = R
        assert TestKernel.cosine_bump(0.0, 0.7).mass(1) == pytest.approx(0.7, rel=1e-10)

    @pytest.mark.parametrize("dim", [1, 2])
    def test_unit_mass(self, dim):
        k = TestKernel.gaussian_bump(3.0, 0.5).unit_mass(dim)
        assert k.mass(dim) == pytest.approx(1.0, rel=1e-10)

    def test_gaussian_mass_against_explicit_profile(self):
        h = 0.4
        R = 4 * h
        k = TestKernel.gaussian_bump(0.0, h)

        def g(r):
            t = r / R
            cutoff = math.exp(1 - 1 / (1 - t * t)) if t < 1 else 0.0
            return math.exp(-0.5 * (r / h) ** 2) * cutoff

        m1 = 2 * integrate.quad(g, 0, R, epsabs=1e-14, epsrel=1e-12)[0]
        m2 = 2 * math.pi * integrate.quad(lambda r: g(r) * r, 0, R, epsabs=1e-14, epsrel=1e-12)[0]
        assert k.mass(1) == pytest.approx(m1, rel=1e-10)
        assert k.mass(2) == pytest.approx(m2, rel=1e-10)
        assert m1 < math.sqrt(2 * math.pi) * h

    def test_reflected(self):
        k = TestKernel.cosine_bump(1 - 2j, 0.5)
        assert k.reflected().center == 1 + 2j
        assert k.reflected()(1 + 2.1j) == k(1 - 2.1j)

    def test_invalid(self):
        with pytest.raises(ValueError):
            TestKernel("box", 0j, 1.0, 1.0)
        with pytest.raises(ValueError):
            TestKernel.gaussian_bump(0, 0.0)
        with pytest.raises(ValueError):
            TestKernel("indicator_soft", 0j, 2.0, 1.0)
        with pytest.raises(ValueError):
            TestKernel.cosine_bump(0, 1.0).mass(3)


class TestRegions:
    def test_interval_and_disk(self):
        rs = classify_real(find_roots([-1, 0, 1]))
        assert Interval(0, 2).count(rs) == 1
        assert Disk(0, 2).count(rs) == 2
        with pytest.raises(ValueError):
            Interval(1, 0)
        with pytest.raises(ValueError):
            Disk(0, -1)


class TestDistinctSums:
    def test_k_zero_and_too_large(self):
        assert distinct_index_sum([]) == 1.0
        with pytest.raises(ValueError):
            distinct_index_sum([np.ones(3)] * 5)

    def test_pairs(self):
        a = np.array([1.0, 2.0, 3.0])
        b = np.array([5.0, 7.0, 11.0])
        assert distinct_index_sum([a, b]) == direct_distinct_sum([a, b])

    def test_fewer_points_than_order(self):
        assert distinct_index_sum([np.ones(2)] * 3) == 0.0

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_direct_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(1, 5))
        m = int(rng.integers(0, 8))
        vals = [rng.normal(size=m) for _ in range(k)]
        expected = direct_distinct_sum(vals) if m else 0.0
        assert distinct_index_sum(vals) == pytest.approx(expected, rel=1e-10, abs=1e-10)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 4), st.lists(st.integers(-3, 3), min_size=0, max_size=7))
    def test_integer_values_exact(self, k, xs):
        vals = [np.array(xs, dtype=float) * (j + 1) for j in range(k)]
        expected = direct_distinct_sum(vals) if xs else 0.0
        assert distinct_index_sum(vals) == expected


class TestLinearStatistic:
    def test_double_root_at_origin(self):
        rs = find_roots([0, 0, 1])
        g = TestKernel.gaussian_bump(0.0, 1.0)
        z = 0.8 - 0.3j
        assert linear_statistic(rs, z, g) == pytest.approx(2 * float(g(-z)), rel=1e-15)

    def test_far_kernel_gives_zero(self):
        rs = find_roots([-1, 0, 1])
        assert linear_statistic(rs, 0.0, TestKernel.cosine_bump(10.0, 1.0)) == 0

    def test_infinite_roots_contribute_nothing(self):
        rs = find_roots([1.0, 0.0, 0.0])
        assert linear_statistic(rs, 0.0, TestKernel.gaussian_bump(0.0, 1.0)) == 0


class TestDeterministicExactness:
    def test_monomial_first_correlation(self):
        n = 7
        phi = TestKernel.gaussian_bump(0.1, 0.5)
        cfg = FixedPolynomial([0] * n + [1])
        est = estimate_correlation_k(cfg, [phi], 3, 0)
        assert est.value == pytest.approx(n * float(phi(0.0)), rel=1e-14)
        assert est.stderr == 0.0

    def test_square_second_correlation(self):
        phi = TestKernel.gaussian_bump(0.0, 1.0)
        psi = TestKernel.cosine_bump(0.2, 0.9)
        est = estimate_correlation_k(FixedPolynomial([0, 0, 1]), [phi, psi], 2, 0)
        assert est.value == pytest.approx(2 * float(phi(0.0)) * float(psi(0.0)), rel=1e-14)

    def test_counts_of_difference_of_squares(self):
        mean, var = estimate_counts(FixedPolynomial([-1, 0, 1]), Interval(-2, 2), 4, 0)
        assert (mean.value, mean.stderr, var.value, var.stderr) == (2.0, 0.0, 0.0, 0.0)

    def test_mixed_real_indicator(self):
        ind = TestKernel.indicator_soft(0.0, 2.0, 0.5)
        est = estimate_mixed_correlation(FixedPolynomial([-1, 0, 1]), [ind], [], 2, 0)
        assert est.value == 2.0

    def test_mixed_complex_kernel(self):
        g = TestKernel.gaussian_bump(1j, 0.5)
        est = estimate_mixed_correlation(FixedPolynomial([1, 0, 1]), [], [g], 2, 0)
        assert est.value == pytest.approx(float(g(1j)), rel=1e-12)

    def test_mixed_needs_real_coefficients(self):
        with pytest.raises(ValueError):
            estimate_mixed_correlation(FixedPolynomial([1j, 0, 1]), [], [TestKernel.cosine_bump(1j, 1)],
                                       2, 0)
        with pytest.raises(ValueError):
            estimate_mixed_correlation(FixedPolynomial([1, 0, 1]), [], [], 2, 0)

    def test_correlation_order_checked(self):
        with pytest.raises(ValueError):
            estimate_correlation_k(FixedPolynomial([0, 1]), [], 2, 0)


class TestMixedReflection:
    def _roots(self, seed):
        cfg = ensemble_config("kac", 30)
        return classify_real(find_roots(cfg.polynomial(seed, 0)))

    @pytest.mark.parametrize("seed", range(5))
    def test_conjugate_centers_agree(self, seed):
        rs = self._roots(seed)
        up = TestKernel.gaussian_bump(0.8 + 0.3j, 0.4)
        a = mixed_statistic(rs, [], [up])
        b = mixed_statistic(rs, [], [up.reflected()])
        assert a == b

    @pytest.mark.parametrize("seed", range(5))
    def test_conjugated_roots_agree(self, seed):
        rs = self._roots(seed)
        conj = classify_real(RootSet(np.conj(rs.finite_roots)[::-1], rs.roots_at_infinity, rs.n,
                                     rs.residual_bound))
        ks = [TestKernel.cosine_bump(0.9, 0.5)]
        cs = [TestKernel.gaussian_bump(0.7 + 0.6j, 0.3), TestKernel.cosine_bump(-0.5 + 0.8j, 0.6)]
        assert mixed_statistic(rs, ks, cs) == pytest.approx(mixed_statistic(conj, ks, cs), rel=1e-12)


class TestEstimates:
    def test_summarize(self):
        est = summarize([1.0, 2.0, 3.0, 4.0], "d", "x")
        assert est.value == 2.5
        assert est.stderr == pytest.approx(math.sqrt(5 / 3) / 2)
        assert est.within(2.5 + 3 * est.stderr) and not est.within(2.5 + 3.01 * est.stderr)
        assert est.to_row()["trials"] == 4

    def test_summarize_needs_two(self):
        with pytest.raises(ValueError):
            summarize([1.0], "d", "x")

    def test_exact_mean_is_order_independent(self):
        vals = [1e16, 1.0, -1e16, 1.0]
        assert exact_mean(vals) == exact_mean(vals[::-1]) == 0.5

    def test_variance_estimate(self):
        est = variance_estimate([0.0, 1.0, 0.0, 1.0], "d", "v")
        assert est.value == pytest.approx(1 / 3)
        with pytest.raises(ValueError):
            variance_estimate([1.0, 2.0, 3.0], "d", "v")

    def test_variance_of_gaussian_sample(self):
        rng = np.random.default_rng(3)
        est = variance_estimate(rng.normal(size=20_000) * 2.0, "d", "v")
        assert est.stderr == pytest.approx(4.0 * math.sqrt(2 / 20_000), rel=0.1)
        assert est.within(4.0, 4.0)


class TestTrialEngine:
    def test_thread_count_does_not_change_results(self):
        cfg = ensemble_config("kac", 40, "bernoulli")
        ks = [TestKernel.gaussian_bump(1.0, 0.3), TestKernel.cosine_bump(-1.0, 0.5)]
        a = estimate_correlation_k(cfg, ks, 40, 11, threads=1)
        b = estimate_correlation_k(cfg, ks, 40, 11, threads=4)
        assert repr(a) == repr(b)

    def test_stderr_shrinks_with_trials(self):
        cfg = ensemble_config("kac", 20)
        obs = count_observable(Disk(0.0, 0.9))
        ratios = []
        for seed in range(5):
            small = estimate_observable(cfg, obs, 300, seed)
            large = estimate_observable(cfg, obs, 600, seed + 100)
            ratios.append(small.stderr / large.stderr)
        assert np.mean(ratios) == pytest.approx(math.sqrt(2), rel=0.2)

    def test_interval_counts_need_real_coefficients(self):
        with pytest.raises(ValueError):
            estimate_counts(ensemble_config("kac", 5, "gaussian_complex"), Interval(0, 1), 4, 0)


class TestAgainstOracle:
    def test_elliptic_real_kernel(self):
        scheme = make_scheme("elliptic", 100)
        phi = TestKernel.gaussian_bump(0.5, 0.2).unit_mass(1)
        oracle = integrate_against(lambda x: rho10(scheme, x), lambda x: float(phi(x)), -0.3, 1.3)
        est = estimate_mixed_correlation(ensemble_config("elliptic", 100), [phi], [], 800, 17)
        assert est.within(oracle)

    def test_elliptic_complex_kernel(self):
        scheme = make_scheme("elliptic", 100)
        c, R = 0.3 + 0.4j, 0.2
        phi = TestKernel.cosine_bump(c, R)

        def integrand(r, t):
            z = c + r * complex(math.cos(t), math.sin(t))
            return float(phi(z)) * complex_intensity_01(scheme, z).value * r

        oracle = integrate.dblquad(integrand, 0, 2 * math.pi, 0, R, epsabs=1e-8, epsrel=1e-7)[0]
        est = estimate_mixed_correlation(ensemble_config("elliptic", 100), [], [phi], 800, 19)
        assert est.within(oracle)

    @pytest.mark.slow
    def test_flat_bulk_interval_count(self):
        scheme = make_scheme("flat", 400)
        oracle = integrate_real_intensity(scheme, 5.0, 15.0)
        assert oracle == pytest.approx(10 / math.pi, rel=1e-3)
        mean, var = estimate_counts(ensemble_config("flat", 400), Interval(5.0, 15.0), 600, 23)
        assert mean.within(oracle)
        assert var.value > 0


class TestConcentration:
    @pytest.mark.parametrize("n", [5, 50, 500])
    def test_all_ones_kac(self, n):
        scheme = make_scheme("kac", n)
        cfg = FixedPolynomial(np.ones(n + 1), scheme=scheme)
        s = concentration_deviation(cfg, 0.5, 3, 0)
        log_v = math.log1p(-0.25 ** (n + 1)) - math.log(0.75)
        oracle = math.log(2.0) + math.log1p(-0.5 ** (n + 1)) - 0.5 * log_v
        np.testing.assert_allclose(s.values, oracle, rtol=0, atol=1e-12)
        assert s.median == s.values[0] and s.zero_fraction == 0.0

    def test_needs_scheme(self):
        with pytest.raises(ValueError):
            concentration_deviation(FixedPolynomial([1, 1]), 0.5, 3, 0)

    def test_flat_tail_fraction_small(self):
        s = concentration_deviation(ensemble_config("flat", 400), 10.0, 1000, 5)
        assert s.exceed_fraction < 0.01
        assert s.q01 < s.median < s.q99

    def test_exact_zero_counts(self):
        # 1 - z vanishes at z = 1 for every trial
        cfg = FixedPolynomial([1, -1], scheme=make_scheme("kac", 1))
        s = concentration_deviation(cfg, 1.0, 4, 0)
        assert s.zero_fraction == 1.0 and s.exceed_fraction == 1.0

    def test_bernoulli_kac_hits_zero_at_one(self):
        # odd n means an even number of ±1 terms; the chance they cancel decays like n^{-1/2}
        n = 101
        s = concentration_deviation(ensemble_config("kac", n, "bernoulli"), 1.0, 20_000, 3)
        exact = math.comb(n + 1, (n + 1) // 2) / 2 ** (n + 1)
        assert s.zero_fraction == pytest.approx(exact, abs=4 * math.sqrt(exact / 20_000))
        assert variance_fn(make_scheme("kac", n), 1.0) == pytest.approx(math.log(n + 1))


class TestUniversalityGap:
    def test_identical_configs_give_zero(self):
        cfg = ensemble_config("kac", 30)
        gap = universality_gap(cfg, cfg, count_observable(Disk(0.0, 0.8)), 20, 4)
        assert gap.value == 0.0 and gap.within(0.0)

    def test_scheme_mismatch_raises(self):
        with pytest.raises(ValueError):
            universality_gap(ensemble_config("kac", 30), ensemble_config("kac", 31),
                             log_abs_observable(0.5), 4, 0)

    def test_moment_mismatch_warns(self):
        with pytest.warns(UserWarning):
            universality_gap(ensemble_config("kac", 10), ensemble_config("kac", 10, "gaussian_complex"),
                             log_abs_observable(0.5), 4, 0)

    def test_matching_atoms_do_not_warn(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            gap = universality_gap(ensemble_config("kac", 200), ensemble_config("kac", 200, "bernoulli"),
                                   log_abs_observable(0.5), 400, 1)
        assert gap.within(0.0, 4.0)


class TestMonteCarloIntegral:
    def test_constant(self):
        res = monte_carlo_integral(uniform_interval_sampler(0, 1), lambda x: np.full(x.shape, 3.0),
                                   100, 0)
        assert res.value == 3.0 and res.bound(0.5) == 0.0

    def test_half_indicator(self):
        res = monte_carlo_integral(uniform_interval_sampler(0, 1), lambda x: (x < 0.5) * 1.0,
                                   10_000, 1)
        assert abs(res.value - 0.5) <= 3 * 0.5 / 100
        assert res.bound(0.01) == pytest.approx(0.05, rel=0.01)

    def test_disk_second_moment(self):
        res = monte_carlo_integral(uniform_disk_sampler(), lambda z: np.abs(z) ** 2, 20_000, 2)
        assert abs(res.value - 0.5) <= res.bound(0.05)

    def test_shifted_disk(self):
        draw = uniform_disk_sampler(3 + 1j, 2.0)(np.random.default_rng(0), 5000)
        assert np.all(np.abs(draw - (3 + 1j)) <= 2.0)

    def test_parameter_checks(self):
        with pytest.raises(ValueError):
            monte_carlo_integral(uniform_interval_sampler(0, 1), np.sin, 0, 0)
        res = monte_carlo_integral(uniform_interval_sampler(0, 1), np.sin, 10, 0)
        for delta in (0.0, 1.5):
            with pytest.raises(ValueError):
                res.bound(delta)


def test_stat_estimate_is_frozen():
    est = StatEstimate(1.0, 0.1, 10, "d")
    with pytest.raises(AttributeError):
        est.value = 2.0
